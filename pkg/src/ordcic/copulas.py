"""Bivariate copula families: Frank, Clayton and the independence copula.

The copula couples the consumption and reporting unobservables. By
convention it is specified directly on the pair of sign-flipped errors, so
the upper-tail probability of the cell model evaluates the same family used
for sampling. Dependence strength is calibrated through Spearman's rho,
``12 * double-integral of C - 3``, computed by Gauss-Legendre quadrature.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "FRANK",
    "CLAYTON",
    "INDEPENDENCE",
    "CopulaSpec",
    "copula_cdf",
    "spearman_rho",
    "calibrate_theta",
    "sample",
    "sample_pair",
]

FRANK = "frank"
CLAYTON = "clayton"
INDEPENDENCE = "independence"
_FAMILIES = (FRANK, CLAYTON, INDEPENDENCE)

# |theta| below this is evaluated by the near-independence series.
_FRANK_SERIES_EPS = 1e-4
# beyond this the direct expm1 formula loses precision (the log1p argument
# approaches -1); switch to the exact factored branch, with reflection
# (U, 1-V) handling theta < 0.
_FRANK_LARGE = 8.0


@dataclass(frozen=True)
class CopulaSpec:
    """Copula family plus dependence parameter.

    theta is None for the independence family, nonzero real for Frank, and
    in [-1, inf) excluding 0 for Clayton.
    """

    family: str
    theta: float | None = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise DomainError(f"unknown copula family {self.family!r}")
        if self.family == INDEPENDENCE:
            if self.theta is not None:
                raise DomainError("independence copula takes no theta")
            return
        if self.theta is None or not math.isfinite(self.theta):
            raise DomainError(f"{self.family} copula needs a finite theta")
        if self.family == FRANK and self.theta == 0.0:
            raise DomainError("frank theta must be nonzero; use independence")
        if self.family == CLAYTON and (self.theta < -1.0 or self.theta == 0.0):
            raise DomainError(
                f"clayton theta must lie in [-1, inf) without 0, got {self.theta}"
            )

    @staticmethod
    def independence():
        return CopulaSpec(INDEPENDENCE, None)


def _frank_direct(u, v, theta):
    num = np.expm1(-theta * u) * np.expm1(-theta * v)
    den = np.expm1(-theta)
    return -np.log1p(num / den) / theta


def _frank_large_pos(u, v, theta):
    # C = min - (1/theta) * log[(1 + e^{-t(M-m)} - e^{-t(1-m)} - e^{-tM}) / (1-e^{-t})]
    # with all exponents nonpositive; exact for any large positive theta.
    m = np.minimum(u, v)
    big = np.maximum(u, v)
    inner = (
        1.0
        + np.exp(-theta * (big - m))
        - np.exp(-theta * (1.0 - m))
        - np.exp(-theta * big)
    )
    return m - (np.log(inner) - np.log1p(-np.exp(-theta))) / theta


def _frank_cdf(u, v, theta):
    if abs(theta) < _FRANK_SERIES_EPS:
        return u * v * (1.0 + 0.5 * theta * (1.0 - u) * (1.0 - v))
    if theta > _FRANK_LARGE:
        return _frank_large_pos(u, v, theta)
    if theta < -_FRANK_LARGE:
        # reflection (U, 1-V) flips the sign of theta
        return u - _frank_large_pos(u, 1.0 - v, -theta)
    return _frank_direct(u, v, theta)


def _clayton_cdf(u, v, theta):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if theta > 0:
        # s = m^-t + M^-t - 1 = m^-t * (1 + (m/M)^t - m^t); factoring out the
        # dominant term keeps large theta finite.
        m = np.minimum(u, v)
        big = np.maximum(u, v)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            log_m = np.log(m, out=np.full_like(m, -np.inf), where=m > 0)
            log_big = np.log(big, out=np.full_like(big, -np.inf), where=big > 0)
            inner = np.exp(theta * (log_m - log_big)) - np.exp(theta * log_m)
            out = np.where(m > 0, m * np.exp(-np.log1p(inner) / theta), 0.0)
        return out
    # theta in [-1, 0): exponents are in (0, 1], plain powers are stable
    a = -theta
    s = u**a + v**a - 1.0
    return np.where(s > 0.0, np.maximum(s, 0.0) ** (1.0 / a), 0.0)


def copula_cdf(spec, u, v):
    """Copula CDF C(u, v) evaluated elementwise.

    Inputs must lie in [0, 1]; the output respects the Frechet-Hoeffding
    bounds and has uniform margins.
    """
    scalar = np.isscalar(u) and np.isscalar(v)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any((u < -1e-12) | (u > 1 + 1e-12) | (v < -1e-12) | (v > 1 + 1e-12)):
        raise DomainError("copula arguments must lie in [0, 1]")
    u = np.clip(u, 0.0, 1.0)
    v = np.clip(v, 0.0, 1.0)
    if spec.family == INDEPENDENCE:
        out = u * v
    elif spec.family == FRANK:
        out = _frank_cdf(u, v, spec.theta)
    else:
        out = _clayton_cdf(u, v, spec.theta)
    out = np.clip(out, np.maximum(u + v - 1.0, 0.0), np.minimum(u, v))
    return float(out) if scalar else out


def cdf_grid(family, theta_vec, u, v):
    """Copula CDF for (n, B) grids of arguments with per-column theta.

    Used by batched likelihood evaluation: column b of ``u``/``v`` is
    evaluated at ``theta_vec[b]``. Columns whose theta falls outside the
    vectorizable window fall back to the scalar path.
    """
    theta_vec = np.asarray(theta_vec, dtype=float)
    if family == INDEPENDENCE:
        return u * v
    out = np.empty_like(u)
    if family == FRANK:
        direct = (np.abs(theta_vec) >= _FRANK_SERIES_EPS) & (
            np.abs(theta_vec) <= _FRANK_LARGE
        )
        if np.any(direct):
            th = theta_vec[direct]
            num = np.expm1(-th * u[:, direct]) * np.expm1(-th * v[:, direct])
            den = np.expm1(-th)
            out[:, direct] = -np.log1p(num / den) / th
        for b in np.nonzero(~direct)[0]:
            out[:, b] = _frank_cdf(u[:, b], v[:, b], theta_vec[b])
    else:
        pos = theta_vec > 0
        if np.any(pos):
            for b in np.nonzero(pos)[0]:
                out[:, b] = _clayton_cdf(u[:, b], v[:, b], theta_vec[b])
        if np.any(~pos):
            a = -theta_vec[~pos]
            s = u[:, ~pos] ** a + v[:, ~pos] ** a - 1.0
            out[:, ~pos] = np.where(s > 0.0, np.maximum(s, 0.0) ** (1.0 / a), 0.0)
    lo = np.maximum(u + v - 1.0, 0.0)
    hi = np.minimum(u, v)
    return np.clip(out, lo, hi)


@lru_cache(maxsize=8)
def _gauss_legendre_01(n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return (nodes + 1.0) / 2.0, weights / 2.0


def spearman_rho(spec, n_nodes=256):
    """Spearman's rho of the copula, 12 * integral of C over the unit square - 3.

    Uses tensor-product Gauss-Legendre quadrature with ``n_nodes`` per axis.
    For Clayton with negative theta the inner integral is mapped onto the
    region where the copula is positive, so the zero set does not degrade
    the quadrature.
    """
    if spec.family == INDEPENDENCE:
        return 0.0
    x, w = _gauss_legendre_01(n_nodes)
    if spec.family == CLAYTON and spec.theta < 0:
        a = -spec.theta
        v0 = (1.0 - x**a) ** (1.0 / a)  # boundary of the zero region per u node
        # inner nodes mapped to [v0(u), 1] for each outer node
        inner = v0[:, None] + (1.0 - v0)[:, None] * x[None, :]
        c_vals = _clayton_cdf(np.broadcast_to(x[:, None], inner.shape), inner, spec.theta)
        integral = float(np.sum(w[:, None] * (1.0 - v0)[:, None] * w[None, :] * c_vals))
    else:
        uu, vv = np.meshgrid(x, x, indexing="ij")
        c_vals = copula_cdf(spec, uu.ravel(), vv.ravel()).reshape(n_nodes, n_nodes)
        integral = float(w @ c_vals @ w)
    return 12.0 * integral - 3.0


def _attainable(family, target):
    if family == FRANK:
        return -1.0 < target < 1.0
    if family == CLAYTON:
        return -1.0 < target < 1.0
    return target == 0.0


@lru_cache(maxsize=64)
def _calibrate_cached(family, target):
    if family == FRANK:
        lo, hi = -80.0, 80.0
    elif target > 0:
        lo, hi = 1e-8, 500.0
    else:
        lo, hi = -1.0 + 1e-10, -1e-8
    f = lambda t: spearman_rho(CopulaSpec(family, t)) - target
    flo, fhi = f(lo), f(hi)
    if flo > 0 or fhi < 0:
        raise DomainError(
            f"target Spearman rho {target} not attainable for {family} copula"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == 0.0:  # keep off the punctured origin of the Frank family
            mid = 1e-9 if target > 0 else -1e-9
        fm = f(mid)
        if abs(fm) <= 5e-7:
            return mid
        if fm < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_theta(family, target_rho):
    """Solve for the dependence parameter matching a target Spearman's rho.

    A zero target returns the independence spec. Raises DomainError when the
    target is outside the family's attainable range.
    """
    if family not in _FAMILIES:
        raise DomainError(f"unknown copula family {family!r}")
    if abs(target_rho) < 1e-12 or family == INDEPENDENCE:
        if abs(target_rho) >= 1e-12:
            raise DomainError("independence copula only attains Spearman rho 0")
        return CopulaSpec.independence()
    if not _attainable(family, target_rho):
        raise DomainError(
            f"target Spearman rho {target_rho} outside (-1, 1) for {family}"
        )
    theta = _calibrate_cached(family, float(target_rho))
    return CopulaSpec(family, theta)


def _frank_conditional_inverse(u, w, theta):
    # solve dC/du(u, v) = w for v; closed form via B = e^{-theta v}
    a = np.exp(-theta * u)
    b = 1.0 + w * np.expm1(-theta) / (w + a * (1.0 - w))
    return -np.log(b) / theta


def _clayton_conditional_cdf(u, v, theta):
    # dC/du for fixed u, as a function of v
    a = -theta
    if theta > 0:
        s = u ** (-theta) + v ** (-theta) - 1.0
        return u ** (-theta - 1.0) * s ** (-1.0 / theta - 1.0)
    s = u**a + v**a - 1.0
    out = np.zeros_like(v)
    pos = s > 0.0
    if np.any(pos):
        out[pos] = u[pos] ** (a - 1.0) * s[pos] ** (1.0 / a - 1.0)
    return np.clip(out, 0.0, 1.0)


def _bisect_conditional(u, w, cond_cdf, tol=1e-12, max_iter=60):
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = cond_cdf(u, mid) < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < tol:
            break
    return 0.5 * (lo + hi)


def sample(spec, n, rng):
    """Draw ``n`` pairs from the copula via the conditional-distribution method.

    Returns an (n, 2) array with uniform margins and the joint law of the
    copula. ``rng`` is a numpy Generator.
    """
    u = rng.random(n)
    w = rng.random(n)
    if spec.family == INDEPENDENCE:
        v = w
    elif spec.family == FRANK:
        if abs(spec.theta) < _FRANK_SERIES_EPS:
            v = w
        else:
            v = _frank_conditional_inverse(u, w, spec.theta)
            bad = ~np.isfinite(v) | (v < 0.0) | (v > 1.0)
            if np.any(bad):
                cond = lambda uu, vv: np.clip(
                    np.exp(-spec.theta * uu)
                    * np.expm1(-spec.theta * vv)
                    / (
                        np.expm1(-spec.theta)
                        + np.expm1(-spec.theta * uu) * np.expm1(-spec.theta * vv)
                    ),
                    0.0,
                    1.0,
                )
                v[bad] = _bisect_conditional(u[bad], w[bad], cond)
            v = np.clip(v, 0.0, 1.0)
    else:
        if spec.theta > 0:
            v = (
                (w ** (-spec.theta / (1.0 + spec.theta)) - 1.0) * u ** (-spec.theta)
                + 1.0
            ) ** (-1.0 / spec.theta)
            v = np.clip(v, 0.0, 1.0)
        else:
            # negative-dependence Clayton has no stable closed form
            v = _bisect_conditional(
                u, w, lambda uu, vv: _clayton_conditional_cdf(uu, vv, spec.theta)
            )
    return np.column_stack([u, v])


def sample_pair(spec, rng):
    """Draw a single (u, v) pair from the copula."""
    out = sample(spec, 1, rng)
    return float(out[0, 0]), float(out[0, 1])
