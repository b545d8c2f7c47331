"""Nonparametric partial identification of the counterfactual distribution.

Per-cell bounds combine the marginal outcome CDF (lower bound, driven by the
cap ``alpha`` on the cumulative underreporting probability) with the
instrument-conditional CDFs (upper bound, a minimum over instrument values).
The counterfactual interval composes the three untreated cells' bounds
through generalized inverses. Smooth envelopes replace min/max by
differentiable approximations so an i.i.d. bootstrap delivers valid, if
conservative, one-sided bands.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCellError, DomainError, InfeasibleAlphaError, InputError
from .stats import DiscreteCdf, empirical_cdf

__all__ = [
    "CellBoundInputs",
    "BoundsResult",
    "FeasibilityResult",
    "cell_bounds",
    "counterfactual_bounds",
    "cic_interval",
    "feasibility_check",
    "smooth_minmax",
    "smooth_envelope_bounds",
    "bootstrap_bound_ci",
]

LEVELS = (0, 1, 2)
CELL_TAGS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class CellBoundInputs:
    """Marginal and instrument-conditional outcome CDFs for one cell.

    The non-degeneracy condition requires every conditional CDF to lie
    strictly inside (0, 1) at levels 0 and 1; violations raise
    DegenerateCellError (bootstrap replicates catch and count these).
    """

    marginal: DiscreteCdf
    conditionals: dict
    tag: tuple = (0, 0)

    def __post_init__(self):
        if len(self.conditionals) == 0:
            raise InputError("instrument support must be nonempty")
        for z, cdf in self.conditionals.items():
            for j in (0, 1):
                v = cdf.cum_probs[j]
                if not 0.0 < v < 1.0:
                    raise DegenerateCellError(
                        f"cell {self.tag}: conditional CDF at z={z!r} is "
                        f"degenerate at level {j} (value {v})"
                    )
        for j in (0, 1):
            v = self.marginal.cum_probs[j]
            if not 0.0 < v < 1.0:
                raise DegenerateCellError(
                    f"cell {self.tag}: marginal CDF degenerate at level {j}"
                )

    @classmethod
    def from_sample(cls, outcomes, instrument, tag=(0, 0)):
        outcomes = np.asarray(outcomes)
        instrument = np.asarray(instrument)
        if outcomes.shape != instrument.shape:
            raise InputError("outcomes and instrument must have equal length")
        marginal = empirical_cdf(outcomes, len(LEVELS))
        conditionals = {}
        for z in np.unique(instrument):
            sub = outcomes[instrument == z]
            conditionals[z.item() if hasattr(z, "item") else z] = empirical_cdf(
                sub, len(LEVELS)
            )
        return cls(marginal=marginal, conditionals=conditionals, tag=tag)

    def marginal_at(self, j):
        return float(self.marginal.cum_probs[j])

    def conditional_values(self, j):
        return np.array([cdf.cum_probs[j] for cdf in self.conditionals.values()])


def _lower_bound(f_c, alpha):
    m = min(f_c, alpha)
    if m >= 1.0:
        raise DegenerateCellError(
            "degenerate denominator: min(F_C(j), alpha) = 1 in the lower bound"
        )
    return (f_c - m) / (1.0 - m)


def cell_bounds(inputs, alpha):
    """Raw per-level bounds [L, U] on the true outcome CDF of one cell.

    Level 2 is pinned to (1, 1); below it the lower bound removes at most an
    ``alpha`` share of underreporting mass and the upper bound is the
    minimum of the instrument-conditional CDFs.
    """
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    lower = np.ones(3)
    upper = np.ones(3)
    for j in (0, 1):
        lower[j] = _lower_bound(inputs.marginal_at(j), alpha)
        upper[j] = float(np.min(inputs.conditional_values(j)))
    return lower, upper


def _left_inverse(values, q):
    """inf{j in {0,1,2} : values[j] >= q}, +inf on the empty set."""
    for j in LEVELS:
        if values[j] >= q:
            return j
    return np.inf


def _right_inverse(values, q):
    """sup{j in {0,1,2} : values[j] <= q}, -inf on the empty set."""
    out = -np.inf
    for j in LEVELS:
        if values[j] <= q:
            out = j
    return out


def _eval_step(values, level):
    """Evaluate a per-level bound function at an extended level."""
    if level == -np.inf:
        return 0.0
    if level == np.inf:
        return 1.0
    return float(values[int(level)])


def _compose(lower10, upper10, lower01, upper01, lower00, upper00):
    lower = np.ones(3)
    upper = np.ones(3)
    for j in (0, 1):
        lower[j] = _eval_step(lower10, _right_inverse(upper00, lower01[j]))
        upper[j] = _eval_step(upper10, _left_inverse(lower00, upper01[j]))
    return lower, upper


def counterfactual_bounds(bounds00, bounds01, bounds10, alpha=None):
    """Bounds on the counterfactual CDF of the treated-after cell.

    Arguments are the per-cell (lower, upper) pairs from
    :func:`cell_bounds` for cells (0,0), (0,1) and (1,0). The composition
    evaluates the treated-before bounds at generalized inverses of the
    control-before bounds, mapping the -inf sentinel to CDF value 0.
    """
    l00, u00 = bounds00
    l01, u01 = bounds01
    l10, u10 = bounds10
    return _compose(l10, u10, l01, u01, l00, u00)


def cic_interval(f00, f01, f10):
    """Discrete changes-in-changes interval with no misreporting.

    ``f00``, ``f01``, ``f10`` are per-level CDF value arrays of the observed
    outcome in the three untreated cells; the interval brackets the
    counterfactual CDF when the outcome is observed without error.
    """
    lower = np.ones(3)
    upper = np.ones(3)
    for j in (0, 1):
        lower[j] = _eval_step(f10, _right_inverse(f00, f01[j]))
        upper[j] = _eval_step(f10, _left_inverse(f00, f01[j]))
    return lower, upper


@dataclass(frozen=True)
class FeasibilityResult:
    ratio: float
    alpha: float
    feasible: bool
    binding: tuple | None = None


def feasibility_check(inputs_by_tag, alpha):
    """Largest admissible-model ratio across cells, levels and instrument values.

    The model set is empty when ``alpha`` falls below the returned ratio.
    """
    best = 0.0
    binding = None
    for tag, inputs in inputs_by_tag.items():
        for j in (0, 1):
            f_c = inputs.marginal_at(j)
            for z, cdf in inputs.conditionals.items():
                f_cz = float(cdf.cum_probs[j])
                ratio = (f_c - f_cz) / (1.0 - f_cz)
                if ratio > best:
                    best = ratio
                    binding = (tag, j, z)
    feasible = alpha >= best - 1e-12
    return FeasibilityResult(ratio=best, alpha=alpha, feasible=feasible, binding=binding)


def _pair_smooth(f, g, kappa, side, kind):
    half_sum = 0.5 * (f + g)
    d2 = (f - g) ** 2
    root = np.sqrt(d2 + 1.0 / kappa)
    if kind == "max":
        return half_sum + 0.5 * (root if side == "upper" else d2 / root)
    return half_sum - 0.5 * (d2 / root if side == "upper" else root)


def smooth_minmax(values, smooth_kappa, side, kind):
    """Smooth upper/lower approximation of min or max over finitely many values.

    A single value passes through unchanged; longer inputs fold the pairwise
    approximation left to right, so the gap to the exact min/max is at most
    0.5 * (count - 1) / sqrt(smooth_kappa).
    """
    if smooth_kappa <= 0:
        raise DomainError(f"smooth_kappa must be positive, got {smooth_kappa}")
    if side not in ("upper", "lower") or kind not in ("max", "min"):
        raise DomainError(f"unknown smooth approximation {side!r}/{kind!r}")
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if values.size == 0:
        raise DomainError("smooth_minmax needs at least one value")
    acc = values[0]
    for v in values[1:]:
        acc = _pair_smooth(acc, v, smooth_kappa, side, kind)
    return float(acc)


def _smooth_cell(inputs, alpha, kappa):
    """Smoothed envelope pair for one cell: lower-envelope L, upper-envelope U."""
    lower = np.ones(3)
    upper = np.ones(3)
    for j in (0, 1):
        f_c = inputs.marginal_at(j)
        num = f_c - smooth_minmax([f_c, alpha], kappa, "upper", "min")
        den = 1.0 - smooth_minmax([f_c, alpha], kappa, "lower", "min")
        lower[j] = num / den
        upper[j] = smooth_minmax(inputs.conditional_values(j), kappa, "upper", "min")
    return lower, upper


def smooth_envelope_bounds(inputs_by_tag, alpha, smooth_kappa):
    """Smoothed counterfactual bounds: envelopes below L and above U.

    Requires feasible ``alpha`` across all supplied cells; the envelopes
    tighten toward the raw bounds as ``smooth_kappa`` grows.
    """
    feas = feasibility_check(inputs_by_tag, alpha)
    if not feas.feasible:
        raise InfeasibleAlphaError(
            f"alpha={alpha} lies below the feasibility ratio {feas.ratio:.6g} "
            f"(binding at cell {feas.binding})",
            ratio=feas.ratio,
        )
    smoothed = {
        tag: _smooth_cell(inputs_by_tag[tag], alpha, smooth_kappa)
        for tag in ((0, 0), (0, 1), (1, 0))
    }
    l00, u00 = smoothed[(0, 0)]
    l01, u01 = smoothed[(0, 1)]
    l10, u10 = smoothed[(1, 0)]
    return _compose(l10, u10, l01, u01, l00, u00)


@dataclass
class BoundsResult:
    """Counterfactual bounds: raw, smoothed, and bootstrap band per level."""

    lower: np.ndarray
    upper: np.ndarray
    smooth_lower: np.ndarray
    smooth_upper: np.ndarray
    band_lower: np.ndarray | None
    band_upper: np.ndarray | None
    alpha: float
    smooth_kappa: float
    n_boot: int
    band_level: float | None = None
    band_k: float | None = None
    dropped_replicates: int = 0

    def __post_init__(self):
        for j in LEVELS:
            if self.lower[j] > self.upper[j] + 1e-12:
                raise InputError(
                    f"bounds cross at level {j}: L={self.lower[j]} > U={self.upper[j]}"
                )
        if np.any(np.diff(self.lower) < -1e-12) or np.any(np.diff(self.upper) < -1e-12):
            raise InputError("raw bounds must be nondecreasing in the level")
        if abs(self.lower[2] - 1.0) > 1e-12 or abs(self.upper[2] - 1.0) > 1e-12:
            raise InputError("level-2 bounds must equal 1")


def _resample_inputs(samples_by_tag, rng):
    out = {}
    for tag, (outcomes, instrument) in samples_by_tag.items():
        n = len(outcomes)
        idx = rng.integers(0, n, n)
        out[tag] = CellBoundInputs.from_sample(outcomes[idx], instrument[idx], tag=tag)
    return out


def bootstrap_bound_ci(
    samples_by_tag,
    alpha,
    smooth_kappa,
    n_boot,
    level,
    k,
    rng,
):
    """One-sided bootstrap bands around the smoothed counterfactual bounds.

    Each replicate resamples the four cells i.i.d. and recomputes the
    smoothed bounds; the band subtracts (adds) ``k`` times the ``level``
    quantile of the replicate-minus-point deviations from the lower (upper)
    envelope. Replicates that fail feasibility or degenerate are dropped and
    counted; more than 10 percent drops aborts.
    """
    if n_boot < 200:
        raise DomainError(f"bootstrap needs at least 200 replicates, got {n_boot}")
    if not 0.5 < level < 1.0:
        raise DomainError(f"band level must lie in (0.5, 1), got {level}")
    if k < 0:
        raise DomainError(f"band constant k must be nonnegative, got {k}")

    samples_by_tag = {
        tag: (np.asarray(c), np.asarray(z)) for tag, (c, z) in samples_by_tag.items()
    }
    point_inputs = {
        tag: CellBoundInputs.from_sample(c, z, tag=tag)
        for tag, (c, z) in samples_by_tag.items()
    }
    smooth_l, smooth_u = smooth_envelope_bounds(point_inputs, alpha, smooth_kappa)

    reps_l, reps_u = [], []
    dropped = 0
    for _ in range(n_boot):
        try:
            rep_inputs = _resample_inputs(samples_by_tag, rng)
            l_b, u_b = smooth_envelope_bounds(rep_inputs, alpha, smooth_kappa)
        except (DegenerateCellError, InfeasibleAlphaError):
            dropped += 1
            continue
        reps_l.append(l_b)
        reps_u.append(u_b)
    if dropped > 0.1 * n_boot:
        raise InfeasibleAlphaError(
            f"{dropped}/{n_boot} bootstrap replicates dropped (infeasible or "
            "degenerate); alpha is too close to the feasibility ratio"
        )
    reps_l = np.asarray(reps_l)
    reps_u = np.asarray(reps_u)
    dev_l = np.quantile(reps_l - smooth_l, level, axis=0)
    dev_u = np.quantile(reps_u - smooth_u, level, axis=0)
    band_lower = smooth_l - k * dev_l
    band_upper = smooth_u + k * dev_u
    return band_lower, band_upper, dropped
