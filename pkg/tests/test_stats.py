import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ordcic.errors import DomainError, InputError
from ordcic.stats import (
    DiscreteCdf,
    cdf_at,
    empirical_cdf,
    gen_inverse_left,
    gen_inverse_right,
    std_normal_cdf,
    std_normal_quantile,
)


def random_cdf(rng, max_levels=6):
    n_levels = rng.integers(2, max_levels + 1)
    masses = rng.dirichlet(np.full(n_levels, 0.5))
    # force occasional zero-mass levels to exercise support handling
    if n_levels > 2 and rng.random() < 0.4:
        k = rng.integers(0, n_levels)
        masses[k] = 0.0
        masses /= masses.sum()
    cum = np.cumsum(masses)
    cum[-1] = 1.0
    return DiscreteCdf(np.arange(n_levels), cum)


class TestNormal:
    def test_symmetry_and_limits(self):
        assert std_normal_cdf(0.0) == 0.5
        assert std_normal_cdf(np.inf) == 1.0
        assert std_normal_cdf(-np.inf) == 0.0

    def test_against_quadrature(self):
        # independent oracle: integrate the density up to the point
        density = lambda t: np.exp(-t * t / 2) / np.sqrt(2 * np.pi)
        val, _ = integrate.quad(density, -12, 1.959964)
        assert abs(std_normal_cdf(1.959964) - val) < 1e-12
        assert abs(std_normal_cdf(1.959964) - 0.975) < 1e-6

    def test_quantile_examples(self):
        assert std_normal_quantile(0.5) == 0.0
        assert abs(std_normal_quantile(0.975) - 1.959964) < 1e-5

    def test_round_trip(self):
        x = np.linspace(-6, 6, 4001)
        back = std_normal_quantile(std_normal_cdf(x))
        assert np.max(np.abs(back - x)) < 1e-8
        p = np.linspace(1e-8, 1 - 1e-8, 20001)
        assert np.max(np.abs(std_normal_cdf(std_normal_quantile(p)) - p)) < 1e-8

    def test_monotone_dense_grid(self):
        x = np.linspace(-10, 10, 100_000)
        vals = std_normal_cdf(x)
        assert np.all(np.diff(vals) >= 0)

    def test_quantile_domain(self):
        for bad in (0.0, 1.0, -0.2, 1.3):
            with pytest.raises(DomainError):
                std_normal_quantile(bad)


class TestGeneralizedInverses:
    def setup_method(self):
        self.cdf = DiscreteCdf(np.arange(3), np.array([0.3, 0.7, 1.0]))

    def test_left_example(self):
        assert gen_inverse_left(self.cdf, 0.7) == 1

    def test_left_scan_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            cdf = random_cdf(rng)
            q = rng.random()
            mask = cdf.support_mask()
            candidates = [
                int(lev)
                for lev, val in zip(cdf.levels[mask], cdf.cum_probs[mask])
                if val >= q
            ]
            expected = min(candidates) if candidates else np.inf
            assert gen_inverse_left(cdf, q) == expected

    def test_left_at_zero(self):
        cdf = DiscreteCdf(np.arange(3), np.array([0.0, 0.5, 1.0]))
        assert gen_inverse_left(cdf, 0.0) == 1  # smallest *support* level

    def test_right_example(self):
        assert gen_inverse_right(self.cdf, 0.5) == 0

    def test_right_at_one(self):
        assert gen_inverse_right(self.cdf, 1.0) == 2

    def test_right_empty(self):
        assert gen_inverse_right(self.cdf, 0.2) == -np.inf

    def test_sentinel_evaluation(self):
        assert cdf_at(self.cdf, -np.inf) == 0.0
        assert cdf_at(self.cdf, np.inf) == 1.0
        assert cdf_at(self.cdf, 1) == 0.7

    def test_inverse_lemma_properties(self):
        # nondecreasing inverse; F^{-1}(F(y)) <= y on the support;
        # F(F^{-1}(u)) >= u; idempotence of F at the composed point;
        # identity at support points
        rng = np.random.default_rng(11)
        for _ in range(300):
            cdf = random_cdf(rng)
            q1, q2 = sorted(rng.random(2))
            left1, left2 = gen_inverse_left(cdf, q1), gen_inverse_left(cdf, q2)
            assert left1 <= left2
            support = cdf.levels[cdf.support_mask()]
            for y in support:
                fy = cdf.value_at(y)
                assert gen_inverse_left(cdf, fy) <= y
                if 0.0 < fy < 1.0:
                    inv = gen_inverse_left(cdf, fy)
                    assert cdf.value_at(inv) == pytest.approx(fy, abs=1e-14)
            u = rng.uniform(1e-9, 1 - 1e-9)
            inv = gen_inverse_left(cdf, u)
            assert cdf_at(cdf, inv) >= u
            for y in support:
                assert gen_inverse_left(cdf, cdf.value_at(y)) == y

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_left_right_bracket(self, seed):
        rng = np.random.default_rng(seed)
        cdf = random_cdf(rng)
        q = rng.uniform(1e-9, 1 - 1e-9)
        left = gen_inverse_left(cdf, q)
        right = gen_inverse_right(cdf, q)
        # right inverse never exceeds the left inverse by construction on
        # strictly increasing support values, except at flat ties
        if right != -np.inf and left != np.inf:
            assert cdf_at(cdf, right) <= q <= cdf_at(cdf, left)


class TestEmpiricalCdf:
    def test_hand_count(self):
        cdf = empirical_cdf([0, 0, 1, 2], 3)
        assert np.allclose(cdf.cum_probs, [0.5, 0.75, 1.0])

    def test_degenerate_zero(self):
        cdf = empirical_cdf([0, 0, 0], 3)
        assert np.allclose(cdf.cum_probs, [1.0, 1.0, 1.0])

    def test_point_mass_at_top(self):
        cdf = empirical_cdf([2], 3)
        assert np.allclose(cdf.cum_probs, [0.0, 0.0, 1.0])

    def test_errors(self):
        with pytest.raises(InputError):
            empirical_cdf([], 3)
        with pytest.raises(InputError):
            empirical_cdf([0, 3], 3)


class TestDiscreteCdfValidation:
    def test_decreasing_rejected(self):
        with pytest.raises(InputError):
            DiscreteCdf(np.arange(3), np.array([0.5, 0.4, 1.0]))

    def test_last_must_be_one(self):
        with pytest.raises(InputError):
            DiscreteCdf(np.arange(3), np.array([0.2, 0.5, 0.9]))

    def test_levels_strictly_increasing(self):
        with pytest.raises(InputError):
            DiscreteCdf(np.array([0, 0, 1]), np.array([0.2, 0.5, 1.0]))
