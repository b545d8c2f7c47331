"""Bivariate threshold-crossing model for one group-time cell.

Latent consumption and reporting indices cross fixed cutoffs (0 and 1 by
normalization); the observed outcome is the minimum of the two ordered
variables, so misreporting is one-sided. Upper-tail probabilities couple the
two equations through a copula evaluated at standard normal marginals.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .copulas import FRANK, CLAYTON, INDEPENDENCE, CopulaSpec, copula_cdf, sample
from .errors import DomainError, InputError, OrdCicError

__all__ = [
    "Thresholds",
    "DEFAULT_THRESHOLDS",
    "CellParams",
    "ObservationSet",
    "cell_upper_tail",
    "outcome_pmf",
    "pmf_matrix",
    "neg_log_likelihood",
    "simulate_cell",
]

N_LEVELS = 3
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class Thresholds:
    """Fixed cutoffs for the latent consumption and reporting indices.

    The interior cutoffs are pinned to 0 and 1 by the location/scale
    normalization and are never estimated.
    """

    kappa: tuple = (-np.inf, 0.0, 1.0, np.inf)
    iota: tuple = (-np.inf, 0.0, 1.0, np.inf)

    def __post_init__(self):
        for name, cuts in (("kappa", self.kappa), ("iota", self.iota)):
            arr = np.asarray(cuts, dtype=float)
            if arr.shape != (4,) or np.any(np.diff(arr) <= 0):
                raise InputError(f"{name} must be 4 strictly increasing cutoffs")
            if not (arr[0] == -np.inf and arr[3] == np.inf):
                raise InputError(f"{name} must start at -inf and end at +inf")
            if arr[1] != 0.0 or arr[2] != 1.0:
                raise InputError(f"{name} interior cutoffs are normalized to 0 and 1")


DEFAULT_THRESHOLDS = Thresholds()


@dataclass(frozen=True)
class CellParams:
    """Parameters of one cell: intercept-first coefficient vectors plus scales.

    ``eta_bar`` and ``pi_bar`` hold (intercept, slopes...) for the consumption
    and reporting indices; ``lam`` and ``zeta`` are the positive scale
    parameters; ``theta`` is the copula dependence parameter (None under
    independence).
    """

    eta_bar: np.ndarray
    lam: float
    pi_bar: np.ndarray
    zeta: float
    theta: float | None = None

    def __post_init__(self):
        eta = np.atleast_1d(np.asarray(self.eta_bar, dtype=float))
        pi = np.atleast_1d(np.asarray(self.pi_bar, dtype=float))
        if not (self.lam > 0 and self.zeta > 0):
            raise DomainError("scale parameters lam and zeta must be positive")
        eta.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "eta_bar", eta)
        object.__setattr__(self, "pi_bar", pi)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "zeta", float(self.zeta))

    @property
    def dim_x(self):
        return len(self.eta_bar) - 1

    @property
    def dim_z(self):
        return len(self.pi_bar) - 1

    def copula_spec(self, family):
        if family == INDEPENDENCE:
            return CopulaSpec.independence()
        return CopulaSpec(family, self.theta)


def _as_matrix(rows, n, name):
    if rows is None:
        return np.empty((n, 0))
    arr = np.asarray(rows, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(n, -1) if arr.size != n else arr.reshape(n, 1)
    if arr.shape[0] != n:
        raise InputError(f"{name} has {arr.shape[0]} rows, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class ObservationSet:
    """One cell's sample: outcomes in {0,1,2} plus the two covariate blocks."""

    outcomes: np.ndarray
    x: np.ndarray
    z: np.ndarray
    tag: tuple = (0, 0)

    def __post_init__(self):
        y = np.asarray(self.outcomes)
        if y.ndim != 1 or y.size == 0:
            raise InputError("outcomes must be a nonempty 1-d array")
        if not np.all(np.isin(y, np.arange(N_LEVELS))):
            raise InputError("outcomes must take values in {0, 1, 2}")
        y = y.astype(int)
        n = y.size
        x = _as_matrix(self.x, n, "x")
        z = _as_matrix(self.z, n, "z")
        for arr in (y, x, z):
            arr.setflags(write=False)
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @property
    def n(self):
        return self.outcomes.size


def _indices(params, x, z):
    """Latent indices for raw covariate matrices (intercept added here).

    einsum keeps the reduction order independent of the BLAS thread count,
    which makes likelihoods bit-reproducible across worker configurations.
    """
    idx_c = params.eta_bar[0] + np.einsum("nk,k->n", x, params.eta_bar[1:])
    idx_r = params.pi_bar[0] + np.einsum("nk,k->n", z, params.pi_bar[1:])
    return idx_c, idx_r


def _upper_tails(params, idx_c, idx_r, family, thresholds):
    """S(1), S(2): P(C >= j | x, z) at the two interior cutoffs."""
    spec = params.copula_spec(family)
    kap = thresholds.kappa
    iot = thresholds.iota
    s = []
    for j in (1, 2):
        u = special.ndtr((idx_c - kap[j]) / params.lam)
        v = special.ndtr((idx_r - iot[j]) / params.zeta)
        s.append(copula_cdf(spec, u, v))
    return s[0], s[1]


def cell_upper_tail(params, x_row, z_row, j, family, thresholds=DEFAULT_THRESHOLDS):
    """P(C >= j | x, z) for j in {0,1,2,3}; S(0)=1 and S(3)=0 by convention."""
    if j not in (0, 1, 2, 3):
        raise DomainError(f"level index must be in 0..3, got {j}")
    if j == 0:
        return 1.0
    if j == 3:
        return 0.0
    x = _as_matrix(x_row, 1, "x_row")
    z = _as_matrix(z_row, 1, "z_row")
    idx_c, idx_r = _indices(params, x, z)
    s1, s2 = _upper_tails(params, idx_c, idx_r, family, thresholds)
    return float(np.asarray(s1 if j == 1 else s2).reshape(-1)[0])


def _pmf_matrix(params, x, z, family, thresholds):
    idx_c, idx_r = _indices(params, x, z)
    s1, s2 = _upper_tails(params, idx_c, idx_r, family, thresholds)
    return np.column_stack([1.0 - s1, s1 - s2, s2])


def pmf_matrix(params, x, z, family, thresholds=DEFAULT_THRESHOLDS):
    """Outcome PMF row per observation for raw covariate matrices."""
    n = len(x) if x is not None and np.ndim(x) > 0 else len(z)
    x = _as_matrix(x, n, "x")
    z = _as_matrix(z, n, "z")
    return _pmf_matrix(params, x, z, family, thresholds)


def outcome_pmf(params, x_row, z_row, family, thresholds=DEFAULT_THRESHOLDS):
    """Probability of each outcome level (0, 1, 2) at one covariate point.

    The three probabilities telescope from the upper tails; a negative entry
    below -1e-10 signals a 2-increasingness violation and raises.
    """
    x = _as_matrix(x_row, 1, "x_row")
    z = _as_matrix(z_row, 1, "z_row")
    pmf = _pmf_matrix(params, x, z, family, thresholds)[0]
    if np.any(pmf < -1e-10):
        raise OrdCicError(f"outcome pmf has negative entries: {pmf}")
    return np.clip(pmf, 0.0, 1.0)


def neg_log_likelihood(
    params, data, family, thresholds=DEFAULT_THRESHOLDS, return_floored=False
):
    """Negative log-likelihood of an ObservationSet under the cell model.

    Probabilities are floored at 1e-12 inside the log so optimizer
    excursions stay finite; ``return_floored`` additionally reports how many
    observations hit the floor.
    """
    if params.dim_x != data.x.shape[1] or params.dim_z != data.z.shape[1]:
        raise InputError(
            "parameter dimensions do not match the covariate blocks: "
            f"eta expects {params.dim_x} x-columns, pi expects {params.dim_z} z-columns"
        )
    pmf = _pmf_matrix(params, data.x, data.z, family, thresholds)
    probs = pmf[np.arange(data.n), data.outcomes]
    floored = int(np.count_nonzero(probs < PROB_FLOOR))
    nll = -float(np.sum(np.log(np.maximum(probs, PROB_FLOOR))))
    if return_floored:
        return nll, floored
    return nll


def simulate_cell(
    params,
    family,
    n,
    rng,
    draw_covariates=None,
    thresholds=DEFAULT_THRESHOLDS,
    tag=(0, 0),
    return_latent=False,
):
    """Simulate one cell: thresholded latent indices with C = min(Y, R).

    ``draw_covariates(rng, n) -> (x, z)`` supplies the covariate blocks; by
    default both are empty (intercept-only cell). The sign-flipped errors are
    drawn from the copula with standard normal marginals, so the simulated
    outcome frequencies match ``outcome_pmf`` at the same parameters.
    With ``return_latent`` the true consumption and reporting levels are
    returned alongside the observations.
    """
    if n < 1:
        raise InputError("n must be at least 1")
    if draw_covariates is None:
        x = np.empty((n, 0))
        z = np.empty((n, 0))
    else:
        x, z = draw_covariates(rng, n)
        x = _as_matrix(x, n, "x")
        z = _as_matrix(z, n, "z")
    uv = sample(params.copula_spec(family), n, rng)
    # shocks enter the latent indices with a minus sign, so the copula drawn
    # here is exactly the one evaluated by cell_upper_tail
    e_c = special.ndtri(np.clip(uv[:, 0], 1e-15, 1 - 1e-15))
    e_r = special.ndtri(np.clip(uv[:, 1], 1e-15, 1 - 1e-15))
    idx_c, idx_r = _indices(params, x, z)
    latent_c = idx_c - params.lam * e_c
    latent_r = idx_r - params.zeta * e_r
    kap = np.asarray(thresholds.kappa)
    iot = np.asarray(thresholds.iota)
    y = (latent_c > kap[1]).astype(int) + (latent_c > kap[2]).astype(int)
    r = (latent_r > iot[1]).astype(int) + (latent_r > iot[2]).astype(int)
    c = np.minimum(y, r)
    obs = ObservationSet(outcomes=c, x=x, z=z, tag=tag)
    if return_latent:
        return obs, y, r
    return obs
