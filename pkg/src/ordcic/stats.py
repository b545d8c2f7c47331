"""Scalar distribution utilities and generalized inverses of discrete CDFs.

The two generalized inverses defined here are the composition primitives of
the nonparametric bounds: the left inverse ``inf{y : q <= F(y)}`` and the
right inverse ``sup{y : q >= F(y)}``, both restricted to the support of the
distribution and returning ``+inf`` / ``-inf`` sentinels on empty sets.
Sentinels never enter arithmetic; callers map them back to CDF values 0 and 1
through :func:`cdf_at`.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, InputError

__all__ = [
    "DiscreteCdf",
    "std_normal_cdf",
    "std_normal_quantile",
    "gen_inverse_left",
    "gen_inverse_right",
    "empirical_cdf",
    "cdf_at",
]


def std_normal_cdf(x):
    """Standard normal CDF, accurate to ~1e-16 (scipy's erfc-based ndtr)."""
    return special.ndtr(x)


def std_normal_quantile(p):
    """Inverse standard normal CDF for p in the open unit interval.

    Raises
    ------
    DomainError
        If ``p`` is outside (0, 1).
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise DomainError(f"quantile argument must lie in (0, 1), got {p!r}")
    out = special.ndtri(p_arr)
    return float(out) if np.isscalar(p) or p_arr.ndim == 0 else out


@dataclass(frozen=True)
class DiscreteCdf:
    """Cumulative distribution on ordered integer levels 0..J.

    Parameters
    ----------
    levels : array of int
        Strictly increasing outcome levels.
    cum_probs : array of float
        Nondecreasing cumulative probabilities; the last entry must be 1
        within 1e-12.
    """

    levels: np.ndarray
    cum_probs: np.ndarray

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=int)
        cum = np.asarray(self.cum_probs, dtype=float)
        if levels.ndim != 1 or cum.ndim != 1 or len(levels) != len(cum):
            raise InputError("levels and cum_probs must be 1-d of equal length")
        if len(levels) == 0:
            raise InputError("DiscreteCdf needs at least one level")
        if np.any(np.diff(levels) <= 0):
            raise InputError("levels must be strictly increasing")
        if np.any(np.diff(cum) < -1e-12):
            raise InputError("cum_probs must be nondecreasing")
        if abs(cum[-1] - 1.0) > 1e-12:
            raise InputError(f"last cumulative probability must be 1, got {cum[-1]!r}")
        if cum[0] < -1e-12:
            raise InputError("cumulative probabilities must be nonnegative")
        levels.setflags(write=False)
        cum.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "cum_probs", cum)

    @property
    def point_masses(self):
        return np.diff(self.cum_probs, prepend=0.0)

    def support_mask(self):
        """Boolean mask of levels carrying strictly positive mass."""
        return self.point_masses > 0.0

    def value_at(self, level):
        """F(level) by step-function evaluation; 0 below the lowest level."""
        idx = np.searchsorted(self.levels, level, side="right") - 1
        if idx < 0:
            return 0.0
        return float(self.cum_probs[idx])


def gen_inverse_left(cdf, q):
    """Smallest support level y with q <= F(y); +inf if none exists."""
    if q < 0.0 or q > 1.0:
        raise DomainError(f"q must lie in [0, 1], got {q!r}")
    mask = cdf.support_mask()
    levels = cdf.levels[mask]
    values = cdf.cum_probs[mask]
    hit = np.nonzero(values >= q)[0]
    if hit.size == 0:
        return np.inf
    return int(levels[hit[0]])


def gen_inverse_right(cdf, q):
    """Largest support level y with F(y) <= q; -inf if none exists."""
    if q < 0.0 or q > 1.0:
        raise DomainError(f"q must lie in [0, 1], got {q!r}")
    mask = cdf.support_mask()
    levels = cdf.levels[mask]
    values = cdf.cum_probs[mask]
    hit = np.nonzero(values <= q)[0]
    if hit.size == 0:
        return -np.inf
    return int(levels[hit[-1]])


def cdf_at(cdf, level):
    """Evaluate a DiscreteCdf at an extended level.

    The sentinels follow the convention used when composing bounds:
    ``-inf`` maps to 0 and ``+inf`` maps to 1.
    """
    if level == -np.inf:
        return 0.0
    if level == np.inf:
        return 1.0
    return cdf.value_at(int(level))


def empirical_cdf(sample, n_levels):
    """Empirical CDF of integer outcomes on levels 0..n_levels-1.

    Parameters
    ----------
    sample : array of int
        Observed outcome levels; must be nonempty and within range.
    n_levels : int
        Number of levels J+1 (support is 0..J).
    """
    arr = np.asarray(sample)
    if arr.size == 0:
        raise InputError("empirical_cdf requires a nonempty sample")
    if arr.ndim != 1:
        arr = arr.ravel()
    if np.any(arr != arr.astype(int)):
        raise InputError("sample contains non-integer outcome levels")
    arr = arr.astype(int)
    if arr.min() < 0 or arr.max() >= n_levels:
        bad = arr[(arr < 0) | (arr >= n_levels)]
        raise InputError(
            f"outcome levels outside 0..{n_levels - 1}: {np.unique(bad).tolist()}"
        )
    counts = np.bincount(arr, minlength=n_levels).astype(float)
    cum = np.cumsum(counts) / arr.size
    cum[-1] = 1.0
    return DiscreteCdf(levels=np.arange(n_levels), cum_probs=cum)
