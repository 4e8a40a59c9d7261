import numpy as np
import pytest

from esg_regmv.simulation import subset_population, synthetic_population


def rand_spd(rng, p, scale=1.0):
    """Well-conditioned random SPD matrix."""
    a = rng.standard_normal((p, 2 * p))
    return scale * (a @ a.T / (2 * p) + 0.1 * np.eye(p))


def write_wide_csv(path, dates, columns):
    """Write a wide CSV (date column + one column per asset); None = empty cell."""
    names = list(columns)
    lines = ["date," + ",".join(names)]
    for i, d in enumerate(dates):
        cells = []
        for name in names:
            v = columns[name][i]
            cells.append("" if v is None else repr(float(v)))
        lines.append(f"{d}," + ",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def pop180():
    """Calibrated-style synthetic population shared by the heavier tests."""
    return synthetic_population(180, seed=3)


@pytest.fixture(scope="session")
def pop60(pop180):
    return subset_population(pop180, 60)
