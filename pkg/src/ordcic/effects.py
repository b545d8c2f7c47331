"""Counterfactual parameters, distributional treatment effects and tests.

The counterfactual cell (1,1) under no treatment is built from the three
untreated cells through the parallel-trends parameter relations; treatment
effects per outcome level are probability-mass differences between the
treated and counterfactual ordered models, marginalized over the treated
cell's empirical covariate distribution. Standard errors propagate the
block-diagonal cell covariances through the whole map by the delta method.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .copulas import CopulaSpec, copula_cdf
from .errors import DomainError, InputError
from .fitting import FitOptions, fit_cell, fit_cells_restricted
from .model import DEFAULT_THRESHOLDS, CellParams

__all__ = [
    "DttResult",
    "PretrendResult",
    "counterfactual_params",
    "dtt_consumption",
    "dtt_reporting",
    "marginalize_dtt",
    "dtt_standard_errors",
    "stacked_delta_se",
    "copula_decomposition",
    "pretrend_lr_test",
]

CELL_TAGS = ((0, 0), (0, 1), (1, 0), (1, 1))


def counterfactual_params(theta00, theta01, theta10, copula_source="treated-pre"):
    """Cell (1,1) parameters under no treatment.

    Location vectors and scales follow the identified relations
    ``eta11 = eta01 + (eta10 - eta00) * lam01/lam00`` and
    ``lam11 = lam01 * lam10 / lam00`` (reporting analogously). The
    counterfactual dependence parameter is not identified; it is copied from
    the treated-before cell by default, or from the control-after cell with
    ``copula_source='control-post'``.
    """
    if copula_source not in ("treated-pre", "control-post"):
        raise DomainError(f"unknown copula_source {copula_source!r}")
    eta11 = theta01.eta_bar + (theta10.eta_bar - theta00.eta_bar) * (
        theta01.lam / theta00.lam
    )
    lam11 = theta01.lam * theta10.lam / theta00.lam
    pi11 = theta01.pi_bar + (theta10.pi_bar - theta00.pi_bar) * (
        theta01.zeta / theta00.zeta
    )
    zeta11 = theta01.zeta * theta10.zeta / theta00.zeta
    donor = theta10 if copula_source == "treated-pre" else theta01
    return CellParams(
        eta_bar=eta11, lam=lam11, pi_bar=pi11, zeta=zeta11, theta=donor.theta
    )


def _marginal_pmf(intercept_coef, scale, rows, cuts):
    """Per-row PMF of a marginal ordered model with standard normal errors."""
    rows = np.empty((1, 0)) if rows is None else np.atleast_2d(np.asarray(rows, float))
    idx = intercept_coef[0] + rows @ intercept_coef[1:]
    tails = [np.ones_like(idx)]
    for j in (1, 2):
        tails.append(special.ndtr((idx - cuts[j]) / scale))
    tails.append(np.zeros_like(idx))
    return np.column_stack([tails[j] - tails[j + 1] for j in range(3)])


def dtt_consumption(treated, counterfactual, x_row, thresholds=DEFAULT_THRESHOLDS):
    """Consumption treatment effect per level at one covariate point.

    tau(j|x) is the difference of the two marginal ordered-model PMFs, so
    the three levels telescope to zero.
    """
    p1 = _marginal_pmf(treated.eta_bar, treated.lam, x_row, thresholds.kappa)
    p0 = _marginal_pmf(
        counterfactual.eta_bar, counterfactual.lam, x_row, thresholds.kappa
    )
    return (p1 - p0)[0]


def dtt_reporting(treated, counterfactual, z_row, thresholds=DEFAULT_THRESHOLDS):
    """Reporting-intention treatment effect per level at one covariate point."""
    p1 = _marginal_pmf(treated.pi_bar, treated.zeta, z_row, thresholds.iota)
    p0 = _marginal_pmf(
        counterfactual.pi_bar, counterfactual.zeta, z_row, thresholds.iota
    )
    return (p1 - p0)[0]


def marginalize_dtt(treated, counterfactual, rows, kind="consumption",
                    thresholds=DEFAULT_THRESHOLDS):
    """Average the conditional treatment effect over empirical covariate rows."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows.reshape(-1, 1)
    if rows.shape[0] == 0:
        raise InputError("marginalization needs at least one covariate row")
    if kind == "consumption":
        p1 = _marginal_pmf(treated.eta_bar, treated.lam, rows, thresholds.kappa)
        p0 = _marginal_pmf(
            counterfactual.eta_bar, counterfactual.lam, rows, thresholds.kappa
        )
    elif kind == "reporting":
        p1 = _marginal_pmf(treated.pi_bar, treated.zeta, rows, thresholds.iota)
        p0 = _marginal_pmf(
            counterfactual.pi_bar, counterfactual.zeta, rows, thresholds.iota
        )
    else:
        raise DomainError(f"kind must be 'consumption' or 'reporting', got {kind!r}")
    return (p1 - p0).mean(axis=0)


@dataclass
class DttResult:
    """Per-level treatment effects with delta-method standard errors."""

    tau: np.ndarray
    se: np.ndarray | None
    kind: str
    marginalized: bool


def stacked_delta_se(fitted_cells, func, step=1e-5):
    """Delta-method SEs of ``func`` over the stacked transformed parameters.

    ``func`` maps a dict of CellParams (keyed by cell tag) to a vector. The
    gradient is taken by central differences on the concatenated transformed
    parameter vectors; the covariance is block diagonal over cells because
    the four samples are independent.
    """
    tags = [tag for tag in CELL_TAGS if tag in fitted_cells]
    for tag in tags:
        if fitted_cells[tag].covariance is None:
            raise InputError(f"cell {tag} has no covariance available")
    transforms = {tag: fitted_cells[tag].transform for tag in tags}
    t_parts = [fitted_cells[tag].t_opt for tag in tags]
    sizes = [len(t) for t in t_parts]
    t_full = np.concatenate(t_parts)

    def eval_at(tvec):
        params = {}
        pos = 0
        for tag, size in zip(tags, sizes):
            params[tag] = transforms[tag].unpack(tvec[pos : pos + size])
            pos += size
        return np.atleast_1d(np.asarray(func(params), dtype=float))

    value = eval_at(t_full)
    grad = np.empty((value.size, t_full.size))
    for i in range(t_full.size):
        h = step * max(1.0, abs(t_full[i]))
        tp = t_full.copy()
        tm = t_full.copy()
        tp[i] += h
        tm[i] -= h
        grad[:, i] = (eval_at(tp) - eval_at(tm)) / (2.0 * h)

    variances = np.zeros(value.size)
    pos = 0
    for tag, size in zip(tags, sizes):
        g = grad[:, pos : pos + size]
        cov = fitted_cells[tag].covariance
        variances += np.einsum("ki,ij,kj->k", g, cov, g)
        pos += size
    return value, np.sqrt(np.maximum(variances, 0.0))


def dtt_standard_errors(
    fitted_cells,
    rows,
    kind="consumption",
    copula_source="treated-pre",
    thresholds=DEFAULT_THRESHOLDS,
    step=1e-5,
):
    """Marginalized treatment effects with delta-method standard errors.

    Composes the full map -- cell parameters, counterfactual construction,
    conditional effects, marginalization over ``rows`` -- and propagates the
    block-diagonal cell covariances through its numerical gradient.
    """

    def func(params):
        cf = counterfactual_params(
            params[(0, 0)], params[(0, 1)], params[(1, 0)], copula_source
        )
        return marginalize_dtt(params[(1, 1)], cf, rows, kind, thresholds)

    tau, se = stacked_delta_se(fitted_cells, func, step=step)
    return DttResult(tau=tau, se=se, kind=kind, marginalized=True)


def copula_decomposition(
    treated, counterfactual, family, x_row, z_row, j, thresholds=DEFAULT_THRESHOLDS
):
    """Split the upper-tail treatment effect at level j into three parts.

    The first term isolates the change in the dependence structure, the
    second the change in the consumption marginal, the third the change in
    the reporting marginal; they sum to the difference of the two regimes'
    upper-tail probabilities exactly.
    """
    if j == 0:
        return np.zeros(3)
    if j not in (1, 2):
        raise DomainError(f"level must be in {{0,1,2}}, got {j}")
    x = np.empty((1, 0)) if x_row is None else np.atleast_2d(np.asarray(x_row, float))
    z = np.empty((1, 0)) if z_row is None else np.atleast_2d(np.asarray(z_row, float))

    def tail_args(params):
        idx_c = params.eta_bar[0] + x @ params.eta_bar[1:]
        idx_r = params.pi_bar[0] + z @ params.pi_bar[1:]
        u = special.ndtr((idx_c - thresholds.kappa[j]) / params.lam)
        v = special.ndtr((idx_r - thresholds.iota[j]) / params.zeta)
        return float(u[0]), float(v[0])

    u1, v1 = tail_args(treated)
    u0, v0 = tail_args(counterfactual)
    spec1 = treated.copula_spec(family)
    spec0 = counterfactual.copula_spec(family)

    dependence = copula_cdf(spec1, u1, v1) - copula_cdf(spec0, u1, v1)
    consumption = copula_cdf(spec0, u1, v1) - copula_cdf(spec0, u0, v1)
    reporting = copula_cdf(spec0, u0, v1) - copula_cdf(spec0, u0, v0)
    return np.array([dependence, consumption, reporting])


@dataclass
class PretrendResult:
    """Likelihood-ratio pre-trend test output."""

    statistic: float
    df: int
    p_value: float
    nll_unrestricted: float
    nll_restricted: float
    restrict: str
    restricted_params: dict


def pretrend_lr_test(
    cells,
    family,
    options=FitOptions(),
    restrict="consumption",
    fitted=None,
):
    """Likelihood-ratio test of the parallel-trends parameter relations.

    ``cells`` holds four pre-treatment ObservationSets keyed by (group,
    period). The unrestricted likelihood fits each cell freely; the
    restricted one ties cell (1,1)'s consumption block (or both index
    blocks) to the other cells. Degrees of freedom count the imposed
    restrictions: dim(eta)+1 per restricted equation block.
    """
    for tag in CELL_TAGS:
        if tag not in cells:
            raise InputError(f"missing pre-period cell {tag}")
    if fitted is None:
        fitted = {
            tag: fit_cell(cells[tag], family, options) for tag in CELL_TAGS
        }
    nll_u = sum(fitted[tag].nll for tag in CELL_TAGS)
    restricted = fit_cells_restricted(cells, family, fitted, options, restrict)
    statistic = 2.0 * (restricted["nll"] - nll_u)
    statistic = max(statistic, 0.0)

    dim_eta = len(fitted[(1, 1)].params.eta_bar)
    dim_pi = len(fitted[(1, 1)].params.pi_bar)
    df = dim_eta + 1
    if restrict == "both":
        df += dim_pi + 1
    p_value = float(stats.chi2.sf(statistic, df))
    return PretrendResult(
        statistic=float(statistic),
        df=int(df),
        p_value=p_value,
        nll_unrestricted=float(nll_u),
        nll_restricted=float(restricted["nll"]),
        restrict=restrict,
        restricted_params=restricted["params"],
    )
