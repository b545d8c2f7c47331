import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as scipy_stats

from ordcic.copulas import (
    CopulaSpec,
    calibrate_theta,
    copula_cdf,
    sample,
    sample_pair,
    spearman_rho,
)
from ordcic.errors import DomainError

FAMILY_THETAS = [
    ("frank", -8.0),
    ("frank", -3.445988),
    ("frank", -0.5),
    ("frank", 2.0),
    ("frank", 12.0),
    ("clayton", -0.9),
    ("clayton", -0.5),
    ("clayton", 0.7),
    ("clayton", 3.0),
]


def spec_of(family, theta):
    return CopulaSpec(family, theta) if family != "independence" else CopulaSpec.independence()


class TestCdf:
    def test_clayton_example(self):
        # direct evaluation of the generator (u^-t + v^-t - 1)^(-1/t)
        assert copula_cdf(CopulaSpec("clayton", 2.0), 0.5, 0.5) == pytest.approx(
            7 ** -0.5, abs=1e-14
        )

    def test_frank_small_theta_is_independence(self):
        u, v = 0.37, 0.81
        assert copula_cdf(CopulaSpec("frank", 1e-9), u, v) == pytest.approx(
            u * v, abs=1e-9
        )

    @pytest.mark.parametrize("family,theta", FAMILY_THETAS)
    def test_uniform_margins(self, family, theta):
        spec = spec_of(family, theta)
        grid = np.linspace(0, 1, 41)
        assert np.max(np.abs(copula_cdf(spec, grid, np.ones_like(grid)) - grid)) < 1e-12
        assert np.max(np.abs(copula_cdf(spec, np.ones_like(grid), grid) - grid)) < 1e-12
        assert np.max(np.abs(copula_cdf(spec, grid, np.zeros_like(grid)))) < 1e-12

    @pytest.mark.parametrize("family,theta", FAMILY_THETAS)
    def test_frechet_bounds_dense_grid(self, family, theta):
        spec = spec_of(family, theta)
        g = np.linspace(0, 1, 200)
        uu, vv = np.meshgrid(g, g)
        c = copula_cdf(spec, uu.ravel(), vv.ravel())
        lo = np.maximum(uu.ravel() + vv.ravel() - 1, 0)
        hi = np.minimum(uu.ravel(), vv.ravel())
        assert np.all(c >= lo - 1e-12)
        assert np.all(c <= hi + 1e-12)

    def test_frechet_random_thetas(self):
        rng = np.random.default_rng(3)
        g = np.linspace(0, 1, 200)
        uu, vv = np.meshgrid(g, g)
        for _ in range(10):
            frank = CopulaSpec("frank", float(rng.uniform(-12, 12)) or 0.1)
            clay = CopulaSpec(
                "clayton", float(rng.uniform(-0.95, 5)) or 0.5
            )
            for spec in (frank, clay):
                c = copula_cdf(spec, uu.ravel(), vv.ravel())
                assert np.all(c >= np.maximum(uu.ravel() + vv.ravel() - 1, 0) - 1e-12)
                assert np.all(c <= np.minimum(uu.ravel(), vv.ravel()) + 1e-12)

    @pytest.mark.parametrize("family,theta", FAMILY_THETAS)
    def test_two_increasing_random_rectangles(self, family, theta):
        spec = spec_of(family, theta)
        rng = np.random.default_rng(17)
        a = rng.random((4000, 2))
        b = rng.random((4000, 2))
        u1, u2 = np.minimum(a[:, 0], b[:, 0]), np.maximum(a[:, 0], b[:, 0])
        v1, v2 = np.minimum(a[:, 1], b[:, 1]), np.maximum(a[:, 1], b[:, 1])
        inc = (
            copula_cdf(spec, u2, v2)
            - copula_cdf(spec, u1, v2)
            - copula_cdf(spec, u2, v1)
            + copula_cdf(spec, u1, v1)
        )
        assert np.min(inc) >= -1e-12

    @given(
        st.floats(min_value=0, max_value=1),
        st.floats(min_value=0, max_value=1),
        st.floats(min_value=-12, max_value=12).filter(lambda t: abs(t) > 1e-6),
    )
    @settings(max_examples=200, deadline=None)
    def test_frank_within_bounds_hypothesis(self, u, v, theta):
        c = copula_cdf(CopulaSpec("frank", theta), u, v)
        assert max(u + v - 1, 0) - 1e-12 <= c <= min(u, v) + 1e-12

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            CopulaSpec("frank", 0.0)
        with pytest.raises(DomainError):
            CopulaSpec("clayton", -1.5)
        with pytest.raises(DomainError):
            CopulaSpec("gauss", 0.3)
        with pytest.raises(DomainError):
            copula_cdf(CopulaSpec("frank", 1.0), 1.2, 0.5)


class TestSpearman:
    def test_independence_zero(self):
        assert abs(spearman_rho(CopulaSpec.independence())) < 1e-10

    def test_frank_monotone_in_theta(self):
        thetas = [-8, -4, -1, -0.2, 0.3, 1.5, 5, 10]
        vals = [spearman_rho(CopulaSpec("frank", t)) for t in thetas]
        assert np.all(np.diff(vals) > 0)

    def test_quadrature_against_debye_form(self):
        # independent oracle for Frank: rho_S = 1 - 12(D1 - D2)/theta with
        # Debye functions computed by 1-d quadrature
        from scipy import integrate

        def debye(k, x):
            val, _ = integrate.quad(
                lambda t: t**k / np.expm1(t), 0, x, epsabs=1e-13, epsrel=1e-13
            )
            return (k / x**k) * val

        for theta in (2.0, -3.445988, 7.5):
            expected = 1 - 12.0 * (debye(1, theta) - debye(2, theta)) / theta
            assert spearman_rho(CopulaSpec("frank", theta)) == pytest.approx(
                expected, abs=1e-8
            )

    def test_clayton_negative_against_dblquad(self):
        from scipy import integrate

        spec = CopulaSpec("clayton", -0.55)
        ref, _ = integrate.dblquad(
            lambda v, u: copula_cdf(spec, u, v), 0, 1, 0, 1, epsabs=1e-11, epsrel=1e-11
        )
        assert spearman_rho(spec) == pytest.approx(12 * ref - 3, abs=1e-8)


class TestCalibration:
    @pytest.mark.parametrize("family", ["frank", "clayton"])
    @pytest.mark.parametrize("target", [-0.5, -0.25, 0.25, 0.5])
    def test_round_trip(self, family, target):
        spec = calibrate_theta(family, target)
        assert abs(spearman_rho(spec) - target) <= 1e-6

    def test_zero_maps_to_independence(self):
        assert calibrate_theta("frank", 0.0).family == "independence"
        assert calibrate_theta("clayton", 0.0).family == "independence"

    def test_clayton_negative_branch(self):
        spec = calibrate_theta("clayton", -0.5)
        assert -1.0 < spec.theta < 0.0

    def test_unattainable(self):
        with pytest.raises(DomainError):
            calibrate_theta("frank", 1.5)
        with pytest.raises(DomainError):
            calibrate_theta("independence", 0.3)


class TestSampling:
    @pytest.mark.parametrize(
        "family,target", [("frank", -0.5), ("clayton", -0.5), ("clayton", 0.5)]
    )
    def test_empirical_spearman(self, family, target):
        spec = calibrate_theta(family, target)
        rng = np.random.default_rng(99)
        uv = sample(spec, 100_000, rng)
        emp = scipy_stats.spearmanr(uv[:, 0], uv[:, 1]).statistic
        assert abs(emp - target) < 0.02

    def test_independence_spearman(self):
        rng = np.random.default_rng(7)
        uv = sample(CopulaSpec.independence(), 100_000, rng)
        emp = scipy_stats.spearmanr(uv[:, 0], uv[:, 1]).statistic
        assert abs(emp) < 0.02

    def test_margins_kolmogorov(self):
        spec = calibrate_theta("frank", -0.5)
        rng = np.random.default_rng(21)
        uv = sample(spec, 100_000, rng)
        for col in (0, 1):
            ks = scipy_stats.kstest(uv[:, col], "uniform").statistic
            assert ks <= 0.01

    def test_sample_pair(self):
        rng = np.random.default_rng(0)
        u, v = sample_pair(calibrate_theta("clayton", -0.5), rng)
        assert 0.0 <= u <= 1.0 and 0.0 <= v <= 1.0

    def test_joint_law_matches_cdf(self):
        # empirical joint CDF at a few points vs the analytic copula
        spec = calibrate_theta("frank", -0.5)
        rng = np.random.default_rng(13)
        uv = sample(spec, 200_000, rng)
        for (a, b) in [(0.3, 0.4), (0.7, 0.2), (0.5, 0.8)]:
            emp = np.mean((uv[:, 0] <= a) & (uv[:, 1] <= b))
            assert emp == pytest.approx(copula_cdf(spec, a, b), abs=0.005)
