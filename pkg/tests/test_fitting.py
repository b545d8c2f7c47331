import numpy as np
import pytest

from ordcic.copulas import calibrate_theta
from ordcic.errors import InputError
from ordcic.fitting import (
    FitOptions,
    ParamTransform,
    fit_cell,
    fit_cells_restricted,
    fit_ordered_probit,
)
from ordcic.model import CellParams, ObservationSet, simulate_cell

FRANK_HALF = calibrate_theta("frank", -0.5)


def case2a_like_cell(n, seed, theta=None):
    sq2 = np.sqrt(2.0)
    params = CellParams(
        eta_bar=[-1.0, sq2, sq2],
        lam=2.0,
        pi_bar=[1.5, -sq2, -sq2],
        zeta=2.0,
        theta=FRANK_HALF.theta if theta is None else theta,
    )

    def draw(rng, m):
        w = rng.standard_normal(m)
        x = rng.uniform(-np.sqrt(3), np.sqrt(3), m)
        z = rng.uniform(-np.sqrt(3), np.sqrt(3), m)
        return np.column_stack([x, w]), np.column_stack([z, w])

    rng = np.random.default_rng(seed)
    return params, simulate_cell(params, "frank", n, rng, draw_covariates=draw)


class TestTransform:
    def test_pack_unpack_round_trip(self):
        tr = ParamTransform(2, 1, "frank")
        p = CellParams(
            eta_bar=[0.1, -0.4, 1.2], lam=2.2, pi_bar=[0.3, 0.8], zeta=0.7, theta=-3.1
        )
        q = tr.unpack(tr.pack(p))
        assert np.allclose(q.eta_bar, p.eta_bar)
        assert q.lam == pytest.approx(p.lam)
        assert q.zeta == pytest.approx(p.zeta)
        assert q.theta == pytest.approx(p.theta)

    @pytest.mark.parametrize("branch,theta", [(1, 1.7), (-1, -0.53)])
    def test_clayton_branches(self, branch, theta):
        tr = ParamTransform(0, 0, "clayton", clayton_branch=branch)
        s = tr._s_from_theta(theta)
        assert tr._theta_from_s(s) == pytest.approx(theta, rel=1e-12)

    def test_frank_punctured_origin(self):
        tr = ParamTransform(0, 0, "frank")
        assert tr._theta_from_s(0.0) == 1e-8
        assert tr._theta_from_s(-1e-12) == -1e-8


class TestOrderedProbit:
    def test_matches_statsmodels(self):
        statsmodels = pytest.importorskip("statsmodels.api")
        from statsmodels.miscmodels.ordinal_model import OrderedModel

        params = CellParams(
            eta_bar=[-0.4, 0.8], lam=1.6, pi_bar=[30.0], zeta=1.0
        )
        rng = np.random.default_rng(44)
        obs = simulate_cell(
            params,
            "independence",
            4000,
            rng,
            draw_covariates=lambda r, m: (r.normal(size=(m, 1)), np.empty((m, 0))),
        )
        coef, lam = fit_ordered_probit(obs.outcomes, obs.x)

        sm_fit = OrderedModel(obs.outcomes, obs.x, distr="probit").fit(
            method="bfgs", disp=False, gtol=1e-10
        )
        beta_sm = sm_fit.params[0]
        cut0 = sm_fit.params[1]
        cut1 = cut0 + np.exp(sm_fit.params[2])
        # map free-cutpoint parameterization to fixed cutoffs (0, 1) + scale
        lam_sm = 1.0 / (cut1 - cut0)
        b0_sm = -lam_sm * cut0
        slope_sm = lam_sm * beta_sm
        assert lam == pytest.approx(lam_sm, abs=1e-4)
        assert coef[0] == pytest.approx(b0_sm, abs=1e-4)
        assert coef[1] == pytest.approx(slope_sm, abs=1e-4)


class TestFitCell:
    def test_recovers_truth_roughly(self):
        params, obs = case2a_like_cell(10_000, seed=7)
        fit = fit_cell(obs, "frank", FitOptions(seed=1, compute_covariance=True))
        se = fit.se_natural()
        est = np.concatenate(
            [fit.params.eta_bar, [fit.params.lam], fit.params.pi_bar,
             [fit.params.zeta], [fit.params.theta]]
        )
        truth = np.concatenate(
            [params.eta_bar, [params.lam], params.pi_bar, [params.zeta], [params.theta]]
        )
        assert np.all(np.abs(est - truth) <= 4 * se)

    def test_no_misreporting_matches_probit_reference(self):
        params = CellParams(eta_bar=[-0.4, 0.8], lam=1.6, pi_bar=[30.0], zeta=1.0)
        rng = np.random.default_rng(64)
        obs = simulate_cell(
            params,
            "independence",
            3000,
            rng,
            draw_covariates=lambda r, m: (r.normal(size=(m, 1)), np.empty((m, 0))),
        )
        fit = fit_cell(obs, "independence", FitOptions(seed=0), no_misreporting=True)
        coef, lam = fit_ordered_probit(obs.outcomes, obs.x)
        assert np.allclose(fit.params.eta_bar, coef, atol=1e-4)
        assert fit.params.lam == pytest.approx(lam, abs=1e-4)

    def test_duplicated_data_halves_covariance(self):
        _, obs = case2a_like_cell(2000, seed=3)
        doubled = ObservationSet(
            outcomes=np.concatenate([obs.outcomes, obs.outcomes]),
            x=np.vstack([obs.x, obs.x]),
            z=np.vstack([obs.z, obs.z]),
        )
        opts = FitOptions(seed=5)
        fit1 = fit_cell(obs, "frank", opts)
        fit2 = fit_cell(doubled, "frank", opts)
        assert np.allclose(fit2.t_opt, fit1.t_opt, atol=2e-5)
        ratio = np.diag(fit2.covariance) / np.diag(fit1.covariance)
        assert np.allclose(ratio, 0.5, atol=0.01)

    def test_deterministic_given_seed(self):
        _, obs = case2a_like_cell(1500, seed=9)
        opts = FitOptions(seed=12, compute_covariance=False)
        fit1 = fit_cell(obs, "frank", opts)
        fit2 = fit_cell(obs, "frank", opts)
        assert np.array_equal(fit1.t_opt, fit2.t_opt)
        assert fit1.nll == fit2.nll

    def test_minimum_size_and_levels(self):
        with pytest.raises(InputError):
            fit_cell(
                ObservationSet(outcomes=np.array([0, 1, 2] * 10), x=None, z=None),
                "frank",
            )
        bad = ObservationSet(outcomes=np.array([0, 1] * 50), x=None, z=None)
        with pytest.raises(InputError):
            fit_cell(bad, "frank")

    def test_clayton_fit_runs_both_branches(self):
        spec = calibrate_theta("clayton", -0.5)
        params, obs = case2a_like_cell(4000, seed=15, theta=spec.theta)
        # regenerate under clayton errors
        sq2 = np.sqrt(2.0)
        truth = CellParams(
            eta_bar=[-1.0, sq2, sq2], lam=2.0, pi_bar=[1.5, -sq2, -sq2], zeta=2.0,
            theta=spec.theta,
        )

        def draw(rng, m):
            w = rng.standard_normal(m)
            x = rng.uniform(-np.sqrt(3), np.sqrt(3), m)
            z = rng.uniform(-np.sqrt(3), np.sqrt(3), m)
            return np.column_stack([x, w]), np.column_stack([z, w])

        rng = np.random.default_rng(16)
        obs = simulate_cell(truth, "clayton", 4000, rng, draw_covariates=draw)
        fit = fit_cell(obs, "clayton", FitOptions(seed=2, compute_covariance=False))
        assert fit.restarts_used >= 2  # both branch starts tried
        assert -1.0 < fit.params.theta < 1e6


class TestRestrictedFit:
    def test_statistic_nonnegative_and_nested(self):
        from tests.helpers import separable_consumption, separable_reporting
        from ordcic.montecarlo import make_cic_cells

        cells, _ = make_cic_cells(
            separable_consumption(), separable_reporting(), "frank",
            FRANK_HALF.theta, 1500, seed=21,
        )
        opts = FitOptions(seed=3, compute_covariance=False)
        fitted = {tag: fit_cell(cells[tag], "frank", opts) for tag in cells}
        res = fit_cells_restricted(cells, "frank", fitted, opts)
        nll_u = sum(f.nll for f in fitted.values())
        assert res["nll"] >= nll_u - 1e-6
        p11 = res["params"][(1, 1)]
        p = res["params"]
        implied = p[(0, 1)].eta_bar + (p[(1, 0)].eta_bar - p[(0, 0)].eta_bar) * (
            p[(0, 1)].lam / p[(0, 0)].lam
        )
        assert np.allclose(p11.eta_bar, implied, atol=1e-10)
        assert p11.lam == pytest.approx(
            p[(0, 1)].lam * p[(1, 0)].lam / p[(0, 0)].lam, rel=1e-10
        )
