import numpy as np
import pytest

from esg_regmv.errors import DegenerateRiskError
from esg_regmv.estimators import EsgMoments, MomentModel
from esg_regmv.oracle import (
    PopulationModel,
    oos_sharpe,
    population_metrics,
    theta_max,
)
from esg_regmv.solvers import PortfolioWeights, solve_constrained, solve_mv

from conftest import rand_spd


def make_pop(mu, sigma, s, omega, s_bar=0.8):
    return PopulationModel(
        returns=MomentModel(mu=np.asarray(mu, float), sigma=np.asarray(sigma, float)),
        esg=EsgMoments(s=np.asarray(s, float), omega=np.asarray(omega, float), s_bar=s_bar),
    )


class TestOosSharpe:
    def test_unit_case(self):
        model = MomentModel(mu=np.array([1.0, 0.0]), sigma=np.eye(2))
        assert oos_sharpe(PortfolioWeights(np.array([1.0, 0.0]), 1.0), model) == 1.0

    def test_scale_invariance(self, rng):
        model = MomentModel(mu=rng.normal(0, 1, 4), sigma=rand_spd(rng, 4))
        w = rng.normal(0, 1, 4)
        a = oos_sharpe(PortfolioWeights(w, 1.0), model)
        b = oos_sharpe(PortfolioWeights(3.0 * w, 1.0), model)
        assert b == pytest.approx(a, rel=1e-14)

    def test_tangency_identity(self, rng):
        sigma = rand_spd(rng, 5)
        mu = rng.normal(0, 1, 5)
        model = MomentModel(mu=mu, sigma=sigma)
        w = solve_mv(mu, sigma, 1.0)
        assert oos_sharpe(w, model) == pytest.approx(
            np.sqrt(mu @ np.linalg.inv(sigma) @ mu), rel=1e-12
        )

    def test_zero_variance_errors(self):
        model = MomentModel(mu=np.array([0.1, 0.1]), sigma=np.zeros((2, 2)))
        with pytest.raises(DegenerateRiskError):
            oos_sharpe(PortfolioWeights(np.array([1.0, 0.0]), 1.0), model)


class TestThetaMax:
    def test_orthogonal_case(self):
        pop = make_pop([1.0, 0.0], np.eye(2), [0.8, 1.8], np.eye(2) * 0.01, s_bar=0.8)
        # s_tilde = (0, 1) is orthogonal to mu under the identity
        assert theta_max(pop) == pytest.approx(1.0, rel=1e-14)

    def test_fully_binding_constraint(self):
        pop = make_pop([1.0, 0.0], np.eye(2), [1.8, 0.8], np.eye(2) * 0.01, s_bar=0.8)
        # s_tilde = (1, 0) is parallel to mu: nothing is left
        assert theta_max(pop) == pytest.approx(0.0, abs=1e-12)

    def test_consistent_with_constrained_solver(self, rng):
        sigma = rand_spd(rng, 6)
        mu = rng.normal(0, 1, 6)
        s = rng.uniform(0, 1, 6)
        pop = make_pop(mu, sigma, s, rand_spd(rng, 6), s_bar=0.8)
        w, _ = solve_constrained(mu, sigma, pop.esg.s_tilde, 1.0)
        assert theta_max(pop) == pytest.approx(oos_sharpe(w, pop.returns), rel=1e-12)


class TestPopulationMetrics:
    def test_equal_weight_hand_values(self):
        pop = make_pop(
            [0.01, 0.03], 0.04 * np.eye(2), [0.6, 1.0], 0.01 * np.eye(2), s_bar=0.8
        )
        row = population_metrics(PortfolioWeights(np.array([0.5, 0.5]), 1.0), pop)
        assert row.am == pytest.approx(0.02)
        assert row.sd == pytest.approx(np.sqrt(0.02))
        assert row.sr == pytest.approx(0.02 / np.sqrt(0.02))
        assert row.am_esg == pytest.approx(0.8)
        assert row.sd_esg == pytest.approx(np.sqrt(0.005))

    def test_single_asset_selector(self):
        pop = make_pop(
            [0.01, 0.03], np.diag([0.04, 0.09]), [0.6, 1.0], np.diag([0.01, 0.04])
        )
        row = population_metrics(PortfolioWeights(np.array([1.0, 0.0]), 1.0), pop)
        assert row.am == pytest.approx(0.01)
        assert row.sd == pytest.approx(0.2)
        assert row.am_esg == pytest.approx(0.6)
        assert row.sd_esg == pytest.approx(0.1)

    def test_oracle_tops_random_weights(self, rng):
        sigma = rand_spd(rng, 6, scale=0.01)
        mu = rng.normal(0.01, 0.02, 6)
        pop = make_pop(mu, sigma, rng.uniform(0, 1, 6), rand_spd(rng, 6, 0.01))
        oracle_sr = oos_sharpe(solve_mv(mu, sigma, 5.0), pop.returns)
        for _ in range(200):
            w = rng.normal(0, 1, 6)
            assert oos_sharpe(PortfolioWeights(w, 1.0), pop.returns) <= oracle_sr + 1e-12

    def test_metrics_scale_invariant_sr(self, rng):
        sigma = rand_spd(rng, 4)
        pop = make_pop(rng.normal(0, 1, 4), sigma, rng.uniform(0, 1, 4), rand_spd(rng, 4))
        w = rng.normal(0, 1, 4)
        r1 = population_metrics(PortfolioWeights(w, 1.0), pop)
        r2 = population_metrics(PortfolioWeights(5.0 * w, 1.0), pop)
        assert r2.sr == pytest.approx(r1.sr, rel=1e-12)


def test_theta_max_upper_bounds_constrained_weights(rng):
    sigma = rand_spd(rng, 6)
    mu = rng.normal(0, 1, 6)
    s = rng.uniform(0, 1, 6)
    pop = make_pop(mu, sigma, s, rand_spd(rng, 6), s_bar=0.8)
    s_tilde = pop.esg.s_tilde
    bound = theta_max(pop)
    for _ in range(1000):
        w = rng.normal(0, 1, 6)
        w = w - (w @ s_tilde) / (s_tilde @ s_tilde) * s_tilde  # project onto constraint
        assert oos_sharpe(PortfolioWeights(w, 1.0), pop.returns) <= bound + 1e-10


def test_constraint_cannot_raise_oracle_sr(rng):
    sigma = rand_spd(rng, 5)
    mu = rng.normal(0, 1, 5)
    pop = make_pop(mu, sigma, rng.uniform(0, 1, 5), rand_spd(rng, 5))
    unconstrained = oos_sharpe(solve_mv(mu, sigma, 1.0), pop.returns)
    assert unconstrained >= theta_max(pop) - 1e-12
