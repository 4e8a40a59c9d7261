import numpy as np
import pytest

from esg_regmv.errors import (
    AlignmentError,
    DegenerateUniverseError,
    PanelFormatError,
    ParameterError,
    ZeroVarianceError,
)
from esg_regmv.market_data import EsgPanel, ReturnPanel, load_panels, standardize_esg

from conftest import write_wide_csv

DATES = ["2020-01", "2020-02", "2020-03", "2020-04"]


def make_files(tmp_path, ret_cols, esg_cols, rf=None, ret_dates=DATES, esg_dates=DATES):
    rf = rf if rf is not None else [0.0] * len(ret_dates)
    ret = write_wide_csv(tmp_path / "ret.csv", ret_dates, ret_cols)
    esg = write_wide_csv(tmp_path / "esg.csv", esg_dates, esg_cols)
    rfp = write_wide_csv(tmp_path / "rf.csv", ret_dates, {"rf": rf})
    return ret, esg, rfp


def test_drop_policy_removes_incomplete_asset(tmp_path):
    ret, esg, rf = make_files(
        tmp_path,
        {"A": [0.01, 0.02, 0.0, 0.01], "B": [0.0, None, 0.01, 0.0], "C": [0.01, 0.0, 0.0, 0.02]},
        {"A": [0.5] * 4, "B": [0.6] * 4, "C": [0.7] * 4},
    )
    bundle = load_panels(ret, esg, rf)
    assert bundle.returns.asset_ids == ("A", "C")
    assert bundle.n_periods == 4


def test_disjoint_dates_is_alignment_error(tmp_path):
    ret, _, rf = make_files(
        tmp_path, {"A": [0.01] * 4, "B": [0.02] * 4}, {"A": [0.5] * 4, "B": [0.6] * 4}
    )
    other_dates = ["2021-01", "2021-02", "2021-03", "2021-04"]
    esg = write_wide_csv(
        tmp_path / "esg2.csv", other_dates, {"A": [0.5] * 4, "B": [0.6] * 4}
    )
    with pytest.raises(AlignmentError):
        load_panels(ret, esg, rf)


def test_excess_return_subtraction(tmp_path):
    ret, esg, rf = make_files(
        tmp_path,
        {"A": [0.010, 0.02, 0.0, 0.01], "B": [0.0, 0.01, 0.01, 0.0]},
        {"A": [0.5] * 4, "B": [0.6] * 4},
        rf=[0.002, 0.001, 0.0, 0.0],
    )
    bundle = load_panels(ret, esg, rf)
    assert bundle.returns.values[0, 0] == pytest.approx(0.008, abs=1e-15)
    assert bundle.returns.values[1, 0] == pytest.approx(0.019, abs=1e-15)


def test_unknown_policy_rejected(tmp_path):
    ret, esg, rf = make_files(
        tmp_path, {"A": [0.01] * 4, "B": [0.0] * 4}, {"A": [0.5] * 4, "B": [0.6] * 4}
    )
    with pytest.raises(ParameterError):
        load_panels(ret, esg, rf, policy="impute")


def test_fewer_than_two_assets_is_degenerate(tmp_path):
    ret, esg, rf = make_files(
        tmp_path,
        {"A": [0.01] * 4, "B": [None] * 4},
        {"A": [0.5] * 4, "B": [0.6] * 4},
    )
    with pytest.raises(DegenerateUniverseError):
        load_panels(ret, esg, rf)


def test_unparseable_file_is_format_error(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("just one column\nno commas\n")
    ret, esg, rf = make_files(
        tmp_path, {"A": [0.01] * 4, "B": [0.0] * 4}, {"A": [0.5] * 4, "B": [0.6] * 4}
    )
    with pytest.raises(PanelFormatError):
        load_panels(bad, esg, rf)


def test_load_is_deterministic(tmp_path, rng):
    cols = {f"A{i}": list(rng.normal(0.01, 0.02, 4)) for i in range(4)}
    esg_cols = {f"A{i}": list(rng.uniform(0, 1, 4)) for i in range(4)}
    ret, esg, rf = make_files(tmp_path, cols, esg_cols, rf=[0.001] * 4)
    b1 = load_panels(ret, esg, rf)
    b2 = load_panels(ret, esg, rf)
    assert np.array_equal(b1.returns.values, b2.returns.values)
    assert np.array_equal(b1.esg.values, b2.esg.values)
    assert b1.returns.asset_ids == b2.returns.asset_ids


def test_column_shuffle_gives_permuted_panels(tmp_path, rng):
    names = ["A", "B", "C", "D"]
    ret_cols = {n: list(rng.normal(0.01, 0.02, 4)) for n in names}
    esg_cols = {n: list(rng.uniform(0, 1, 4)) for n in names}
    ret1, esg1, rf = make_files(tmp_path, ret_cols, esg_cols)
    b1 = load_panels(ret1, esg1, rf)

    shuffled = ["C", "A", "D", "B"]
    ret2 = write_wide_csv(tmp_path / "ret_s.csv", DATES, {n: ret_cols[n] for n in shuffled})
    esg2 = write_wide_csv(tmp_path / "esg_s.csv", DATES, {n: esg_cols[n] for n in shuffled})
    b2 = load_panels(ret2, esg2, rf)

    assert set(b2.returns.asset_ids) == set(b1.returns.asset_ids)
    perm = [b2.returns.asset_ids.index(a) for a in b1.returns.asset_ids]
    assert np.array_equal(b2.returns.values[:, perm], b1.returns.values)
    assert np.array_equal(b2.esg.values[:, perm], b1.esg.values)


def test_panel_invariants_rejected():
    with pytest.raises(PanelFormatError):
        ReturnPanel(np.array([[0.1, np.nan], [0.0, 0.1]]), ("A", "B"), ("1", "2"))
    with pytest.raises(PanelFormatError):
        ReturnPanel(np.zeros((2, 2)), ("A", "A"), ("1", "2"))
    with pytest.raises(PanelFormatError):
        ReturnPanel(np.zeros((2, 2)), ("A", "B"), ("2", "1"))
    with pytest.raises(DegenerateUniverseError):
        ReturnPanel(np.zeros((1, 2)), ("A", "B"), ("1",))


def test_standardize_unit_columns_unchanged():
    col = np.array([-1.0, 0.0, 1.0])  # mean 0, sd 1 with divisor T-1
    panel = EsgPanel(np.column_stack([col, col[::-1]]), ("A", "B"), ("1", "2", "3"))
    out = standardize_esg(panel)
    assert np.allclose(out.values, panel.values, atol=1e-12)


def test_standardize_zscore_values():
    panel = EsgPanel(
        np.column_stack([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]), ("A", "B"), ("1", "2", "3")
    )
    out = standardize_esg(panel)
    expected = np.array([-1.0, 0.0, 1.0])
    assert np.allclose(out.values[:, 0], expected, atol=1e-15)
    assert np.allclose(out.values[:, 1], expected, atol=1e-15)


def test_standardize_constant_column_errors():
    panel = EsgPanel(
        np.column_stack([[5.0, 5.0, 5.0], [1.0, 2.0, 3.0]]), ("A", "B"), ("1", "2", "3")
    )
    with pytest.raises(ZeroVarianceError, match="A"):
        standardize_esg(panel)


def test_standardize_idempotent(rng):
    values = rng.normal(0.5, 0.2, size=(12, 5))
    panel = EsgPanel(values, tuple("ABCDE"), tuple(f"{i:02d}" for i in range(12)))
    once = standardize_esg(panel)
    twice = standardize_esg(once)
    assert np.allclose(once.values, twice.values, atol=1e-12)


def test_bundle_alignment_invariants(rng):
    values = rng.normal(0, 0.02, size=(4, 2))
    esg = rng.uniform(0, 1, size=(4, 2))
    from esg_regmv.market_data import PanelBundle

    returns = ReturnPanel(values, ("A", "B"), ("1", "2", "3", "4"))
    with pytest.raises(AlignmentError):
        PanelBundle(
            returns=returns,
            esg=EsgPanel(esg, ("A", "B"), ("1", "2", "3", "5")),
        )
    with pytest.raises(AlignmentError):
        PanelBundle(
            returns=returns,
            esg=EsgPanel(esg, ("A", "C"), ("1", "2", "3", "4")),
        )
    with pytest.raises(AlignmentError):
        PanelBundle(
            returns=returns,
            esg=EsgPanel(esg, ("A", "B"), ("1", "2", "3", "4")),
            risk_free=np.zeros(3),
        )


def test_bundle_window_slices_all_parts(rng):
    from esg_regmv.market_data import PanelBundle

    values = rng.normal(0, 0.02, size=(6, 2))
    esg = rng.uniform(0, 1, size=(6, 2))
    rf = rng.uniform(0, 0.001, 6)
    bundle = PanelBundle(
        returns=ReturnPanel(values, ("A", "B"), tuple("123456")),
        esg=EsgPanel(esg, ("A", "B"), tuple("123456")),
        risk_free=rf,
    )
    window = bundle.window(1, 4)
    assert window.n_periods == 3
    assert np.array_equal(window.returns.values, values[1:4])
    assert np.array_equal(window.risk_free, rf[1:4])
    assert window.returns.dates == ("2", "3", "4")
