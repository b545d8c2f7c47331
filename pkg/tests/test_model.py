import numpy as np
import pytest

from ordcic.copulas import CopulaSpec, calibrate_theta
from ordcic.errors import DomainError, InputError
from ordcic.fitting import central_gradient
from ordcic.model import (
    CellParams,
    ObservationSet,
    Thresholds,
    cell_upper_tail,
    neg_log_likelihood,
    outcome_pmf,
    simulate_cell,
)
from ordcic.montecarlo import DESIGN_CASES, simulate_design
from ordcic.stats import std_normal_cdf

FRANK_HALF = calibrate_theta("frank", -0.5)


class TestUpperTail:
    def test_extremes(self):
        p = CellParams(eta_bar=[0.2], lam=1.0, pi_bar=[0.1], zeta=1.0)
        assert cell_upper_tail(p, None, None, 0, "independence") == 1.0
        assert cell_upper_tail(p, None, None, 3, "independence") == 0.0

    def test_independence_product(self):
        p = CellParams(eta_bar=[0.4, 0.2], lam=1.5, pi_bar=[0.7], zeta=0.8)
        x = np.array([0.3])
        expected = std_normal_cdf((0.4 + 0.2 * 0.3 - 1.0) / 1.5) * std_normal_cdf(
            (0.7 - 1.0) / 0.8
        )
        assert cell_upper_tail(p, x, None, 2, "independence") == pytest.approx(
            expected, abs=1e-14
        )

    def test_symmetric_quarter(self):
        p = CellParams(eta_bar=[0.0], lam=1.0, pi_bar=[0.0], zeta=1.0)
        assert cell_upper_tail(p, None, None, 1, "independence") == pytest.approx(0.25)

    def test_monotone_tail_random_draws(self):
        rng = np.random.default_rng(2)
        for _ in range(10_000):
            p = CellParams(
                eta_bar=rng.normal(0, 2, 1),
                lam=float(rng.uniform(0.2, 4)),
                pi_bar=rng.normal(0, 2, 1),
                zeta=float(rng.uniform(0.2, 4)),
                theta=float(rng.uniform(-8, 8)) or 0.5,
            )
            s1 = cell_upper_tail(p, None, None, 1, "frank")
            s2 = cell_upper_tail(p, None, None, 2, "frank")
            assert 1.0 >= s1 >= s2 >= 0.0


class TestPmf:
    def test_sums_to_one(self):
        p = CellParams(eta_bar=[0.0], lam=1.0, pi_bar=[0.0], zeta=1.0)
        pmf = outcome_pmf(p, None, None, "independence")
        assert pmf[0] == pytest.approx(0.75)
        assert pmf.sum() == pytest.approx(1.0, abs=1e-12)

    def test_reporting_never_binds_reduces_to_probit(self):
        p = CellParams(eta_bar=[0.3], lam=1.2, pi_bar=[40.0], zeta=1.0)
        pmf = outcome_pmf(p, None, None, "independence")
        s1 = std_normal_cdf((0.3 - 0.0) / 1.2)
        s2 = std_normal_cdf((0.3 - 1.0) / 1.2)
        assert pmf[0] == pytest.approx(1 - s1, abs=1e-12)
        assert pmf[1] == pytest.approx(s1 - s2, abs=1e-12)

    def test_case2a_simulation_oracle(self):
        # Case 2-a indices at x = z = w = 0 against a large simulated sample
        p = CellParams(
            eta_bar=[-1.0], lam=2.0, pi_bar=[1.5], zeta=2.0, theta=FRANK_HALF.theta
        )
        pmf = outcome_pmf(p, None, None, "frank")
        rng = np.random.default_rng(123)
        obs = simulate_cell(p, "frank", 10_000_000, rng)
        emp = np.bincount(obs.outcomes, minlength=3) / obs.n
        assert np.max(np.abs(emp - pmf)) < 1e-3


class TestSimulator:
    def test_c_below_y_pointwise(self):
        p = CellParams(
            eta_bar=[-0.5], lam=1.5, pi_bar=[0.8], zeta=1.2, theta=FRANK_HALF.theta
        )
        rng = np.random.default_rng(4)
        obs, y, r = simulate_cell(p, "frank", 20_000, rng, return_latent=True)
        assert np.all(obs.outcomes <= y)
        assert np.all(obs.outcomes == np.minimum(y, r))

    def test_no_misreporting_matches_probit_margin(self):
        p = CellParams(eta_bar=[0.2], lam=1.3, pi_bar=[25.0], zeta=1.0)
        rng = np.random.default_rng(8)
        obs = simulate_cell(p, "independence", 100_000, rng)
        emp = np.bincount(obs.outcomes, minlength=3) / obs.n
        s1 = std_normal_cdf(0.2 / 1.3)
        s2 = std_normal_cdf((0.2 - 1.0) / 1.3)
        expected = np.array([1 - s1, s1 - s2, s2])
        se = np.sqrt(expected * (1 - expected) / obs.n)
        assert np.all(np.abs(emp - expected) <= 3 * se + 1e-12)

    @pytest.mark.parametrize("family", ["frank", "clayton"])
    @pytest.mark.parametrize("case_name", sorted(DESIGN_CASES))
    def test_design_case_agreement(self, family, case_name):
        # empirical level shares vs the model PMF averaged over covariates
        spec = calibrate_theta(family, -0.5)
        case = DESIGN_CASES[case_name]
        rng = np.random.default_rng(500 + hash(case_name + family) % 1000)
        obs = simulate_design(case, spec, 100_000, rng)
        params = CellParams(
            eta_bar=np.asarray(case.beta),
            lam=case.lam,
            pi_bar=np.asarray(case.pi),
            zeta=case.zeta,
            theta=spec.theta,
        )
        from ordcic.model import pmf_matrix

        model_avg = pmf_matrix(params, obs.x, obs.z, family).mean(axis=0)
        emp = np.bincount(obs.outcomes, minlength=3) / obs.n
        se = np.sqrt(model_avg * (1 - model_avg) / obs.n)
        assert np.all(np.abs(emp - model_avg) <= 4 * se + 1e-12)


class TestNll:
    def test_single_observation(self):
        p = CellParams(eta_bar=[0.3], lam=1.0, pi_bar=[2.0], zeta=1.0)
        data = ObservationSet(outcomes=[1], x=None, z=None)
        pmf = outcome_pmf(p, None, None, "independence")
        assert neg_log_likelihood(p, data, "independence") == pytest.approx(
            -np.log(pmf[1])
        )

    def test_additivity(self):
        p = CellParams(
            eta_bar=[-0.2], lam=1.1, pi_bar=[0.9], zeta=1.4, theta=FRANK_HALF.theta
        )
        rng = np.random.default_rng(31)
        a = simulate_cell(p, "frank", 500, rng)
        b = simulate_cell(p, "frank", 700, rng)
        both = ObservationSet(
            outcomes=np.concatenate([a.outcomes, b.outcomes]), x=None, z=None
        )
        total = neg_log_likelihood(p, both, "frank")
        assert total == pytest.approx(
            neg_log_likelihood(p, a, "frank") + neg_log_likelihood(p, b, "frank"),
            rel=1e-12,
        )

    def test_true_beats_perturbed_on_average(self):
        p = CellParams(
            eta_bar=[-0.6], lam=1.5, pi_bar=[1.0], zeta=1.5, theta=FRANK_HALF.theta
        )
        p_wrong = CellParams(
            eta_bar=[-0.2], lam=1.9, pi_bar=[0.6], zeta=1.1, theta=FRANK_HALF.theta
        )
        diffs = []
        for i in range(100):
            rng = np.random.default_rng(1000 + i)
            obs = simulate_cell(p, "frank", 5000, rng)
            diffs.append(
                neg_log_likelihood(p_wrong, obs, "frank")
                - neg_log_likelihood(p, obs, "frank")
            )
        assert np.mean(diffs) > 0

    def test_dimension_mismatch(self):
        p = CellParams(eta_bar=[0.0, 1.0], lam=1.0, pi_bar=[0.0], zeta=1.0)
        data = ObservationSet(outcomes=[0, 1, 2], x=None, z=None)
        with pytest.raises(InputError):
            neg_log_likelihood(p, data, "independence")

    def test_gradient_step_consistency(self):
        # central differences at two step sizes agree to relative 1e-3
        p = CellParams(
            eta_bar=[-0.5, 0.7], lam=1.4, pi_bar=[0.9, -0.5], zeta=1.6,
            theta=FRANK_HALF.theta,
        )
        rng = np.random.default_rng(77)
        obs = simulate_cell(
            p,
            "frank",
            2000,
            rng,
            draw_covariates=lambda r, m: (
                r.normal(size=(m, 1)),
                r.normal(size=(m, 1)),
            ),
        )
        from ordcic.fitting import ParamTransform

        tr = ParamTransform(1, 1, "frank")

        def nll_at(t):
            return neg_log_likelihood(tr.unpack(t), obs, "frank")

        for k in range(3):
            point = tr.pack(p) + rng.normal(0, 0.15, tr.n_params)
            g5 = central_gradient(nll_at, point, step=1e-5)
            g7 = central_gradient(nll_at, point, step=1e-7)
            rel = np.abs(g5 - g7) / np.maximum(np.abs(g7), 1.0)
            assert np.max(rel) < 1e-3


class TestValidation:
    def test_thresholds_normalized(self):
        with pytest.raises(InputError):
            Thresholds(kappa=(-np.inf, 0.5, 1.0, np.inf))

    def test_scales_positive(self):
        with pytest.raises(DomainError):
            CellParams(eta_bar=[0.0], lam=-1.0, pi_bar=[0.0], zeta=1.0)

    def test_outcome_levels_checked(self):
        with pytest.raises(InputError):
            ObservationSet(outcomes=[0, 3], x=None, z=None)

    def test_row_count_mismatch(self):
        with pytest.raises(InputError):
            ObservationSet(outcomes=[0, 1], x=np.zeros((3, 1)), z=None)
