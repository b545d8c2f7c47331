"""Per-cell maximum likelihood fitting.

Positivity of the scale parameters is enforced by optimizing their logs; the
copula dependence parameter is optimized on an unconstrained transform
(identity for Frank, a two-branch bijection onto (-1, 0) or (0, inf) for
Clayton). Quasi-Newton steps use central-difference gradients, with a
Nelder-Mead polish as fallback, multi-started from ordered-probit marginal
fits plus random perturbations. The covariance is the inverse observed
information (numerical Hessian of the negative log-likelihood) on the
transformed parameters.

Gradient and Hessian stencils are evaluated in parameter batches: the
likelihood broadcasts over a batch axis, which keeps the numerical
differentiation affordable at the sample sizes of the simulation study.
"""

from dataclasses import dataclass
from functools import wraps

import numpy as np
from scipy import optimize, special
from threadpoolctl import threadpool_limits

from .copulas import CLAYTON, FRANK, INDEPENDENCE, cdf_grid
from .errors import ConvergenceError, DomainError, InputError
from .model import (
    DEFAULT_THRESHOLDS,
    PROB_FLOOR,
    CellParams,
    ObservationSet,
    neg_log_likelihood,
)

__all__ = [
    "FitOptions",
    "FittedCell",
    "ParamTransform",
    "fit_cell",
    "fit_ordered_probit",
    "fit_cells_restricted",
    "central_gradient",
    "central_hessian",
]

# reporting intercept that never binds: Phi((30-1)/1) == 1 in double precision
_NEVER_BINDING = 30.0


def _single_threaded_blas(func):
    """Pin the BLAS pool to one thread inside a fit.

    The optimizer's internal linear algebra must reduce in a fixed order for
    fits to be bit-reproducible across serial runs and parallel workers
    (which cap their BLAS pools); the matrices involved are tiny, so this
    costs nothing.
    """

    @wraps(func)
    def wrapper(*args, **kwargs):
        with threadpool_limits(limits=1, user_api="blas"):
            return func(*args, **kwargs)

    return wrapper

_GRAD_STEP = 6e-6
_HESS_STEP = 1e-4
_BATCH_COLS = 256


@dataclass(frozen=True)
class FitOptions:
    """Optimizer configuration shared by all fits."""

    restarts: int = 4
    seed: int = 0
    maxiter: int = 400
    perturb_scale: float = 0.3
    theta_start: float | None = None
    target_rho: float | None = None
    # projected-gradient tolerance per observation
    pgtol_per_obs: float = 1e-7
    ftol: float = 1e-11
    compute_covariance: bool = True


class ParamTransform:
    """Bijection between CellParams and the unconstrained optimizer vector.

    Layout: [eta_bar, log lam, pi_bar, log zeta, s_theta]; the reporting
    block and the dependence coordinate drop out when the reporting equation
    is pinned to never bind or under the independence copula.
    """

    def __init__(self, dim_x, dim_z, family, clayton_branch=None, no_misreporting=False):
        if family == CLAYTON and not no_misreporting and clayton_branch not in (-1, 1):
            raise DomainError("clayton transform needs a branch sign (-1 or +1)")
        self.dim_x = dim_x
        self.dim_z = dim_z
        self.family = family
        self.clayton_branch = clayton_branch
        self.no_misreporting = no_misreporting

    @property
    def has_theta(self):
        return self.family != INDEPENDENCE and not self.no_misreporting

    @property
    def n_params(self):
        if self.no_misreporting:
            return self.dim_x + 2
        return self.dim_x + self.dim_z + 4 + (1 if self.has_theta else 0)

    def labels(self):
        eta = ["eta0"] + [f"eta{i + 1}" for i in range(self.dim_x)]
        if self.no_misreporting:
            return eta + ["lambda"]
        pi = ["pi0"] + [f"pi{i + 1}" for i in range(self.dim_z)]
        out = eta + ["lambda"] + pi + ["zeta"]
        if self.has_theta:
            out.append("rho")
        return out

    def _theta_from_s(self, s):
        if self.family == FRANK:
            if abs(s) < 1e-8:  # keep off the punctured origin
                return 1e-8 if s >= 0 else -1e-8
            return float(s)
        if self.clayton_branch > 0:
            return float(np.logaddexp(0.0, s))  # softplus: (0, inf)
        return float(-special.expit(s))  # sigmoid branch: (-1, 0)

    def _s_from_theta(self, theta):
        if self.family == FRANK:
            return float(theta)
        if self.clayton_branch > 0:
            if theta <= 0:
                raise DomainError("positive-branch clayton needs theta > 0")
            return float(theta + np.log(-np.expm1(-theta)))
        if not -1.0 < theta < 0.0:
            raise DomainError("negative-branch clayton needs theta in (-1, 0)")
        return float(special.logit(-theta))

    def theta_jacobian(self, s):
        """d theta / d s at the transformed coordinate."""
        if self.family == FRANK:
            return 1.0
        if self.clayton_branch > 0:
            return float(special.expit(s))
        p = special.expit(s)
        return float(-p * (1.0 - p))

    def pack(self, params):
        t = list(params.eta_bar) + [np.log(params.lam)]
        if self.no_misreporting:
            return np.asarray(t, dtype=float)
        t += list(params.pi_bar) + [np.log(params.zeta)]
        if self.has_theta:
            t.append(self._s_from_theta(params.theta))
        return np.asarray(t, dtype=float)

    def unpack(self, t):
        dx = self.dim_x
        eta = t[: dx + 1]
        lam = float(np.exp(t[dx + 1]))
        if self.no_misreporting:
            pi = np.zeros(self.dim_z + 1)
            pi[0] = _NEVER_BINDING
            return CellParams(eta_bar=eta, lam=lam, pi_bar=pi, zeta=1.0, theta=None)
        dz = self.dim_z
        pi = t[dx + 2 : dx + 2 + dz + 1]
        zeta = float(np.exp(t[dx + 2 + dz + 1]))
        theta = self._theta_from_s(t[-1]) if self.has_theta else None
        return CellParams(eta_bar=eta, lam=lam, pi_bar=pi, zeta=zeta, theta=theta)

    def bounds(self):
        """Numerical guard rails for the optimizer, not statistical limits."""
        wide = (-1e6, 1e6)
        log_scale = (-20.0, 20.0)
        out = [wide] * (self.dim_x + 1) + [log_scale]
        if self.no_misreporting:
            return out
        out += [wide] * (self.dim_z + 1) + [log_scale]
        if self.has_theta:
            out.append((-300.0, 300.0) if self.family == FRANK else (-30.0, 30.0))
        return out

    def likelihood_family(self):
        return INDEPENDENCE if self.no_misreporting else self.family


class CellEvaluator:
    """Vectorized negative log-likelihood of one cell over parameter batches."""

    def __init__(self, data, thresholds=DEFAULT_THRESHOLDS):
        self.data = data
        self.thresholds = thresholds
        self.x = data.x
        self.z = data.z
        self.is0 = data.outcomes == 0
        self.is1 = data.outcomes == 1

    def nll_params_batch(self, params_seq, family):
        """NLL at each CellParams in the sequence, evaluated in one pass."""
        B = len(params_seq)
        out = np.empty(B)
        for start in range(0, B, _BATCH_COLS):
            chunk = params_seq[start : start + _BATCH_COLS]
            out[start : start + len(chunk)] = self._nll_chunk(chunk, family)
        return out

    def _nll_chunk(self, chunk, family):
        b = len(chunk)
        eta = np.stack([p.eta_bar for p in chunk])  # (b, 1+dx)
        lam = np.array([p.lam for p in chunk])
        pi = np.stack([p.pi_bar for p in chunk])
        zeta = np.array([p.zeta for p in chunk])
        theta = np.array(
            [0.0 if p.theta is None else p.theta for p in chunk]
        )
        # einsum keeps the reduction order fixed regardless of the BLAS
        # thread pool, so parallel workers reproduce serial runs bitwise
        idx_c = eta[:, 0][None, :] + np.einsum("nk,bk->nb", self.x, eta[:, 1:])
        idx_r = pi[:, 0][None, :] + np.einsum("nk,bk->nb", self.z, pi[:, 1:])
        kap = self.thresholds.kappa
        iot = self.thresholds.iota
        s = []
        for j in (1, 2):
            u = special.ndtr((idx_c - kap[j]) / lam[None, :])
            v = special.ndtr((idx_r - iot[j]) / zeta[None, :])
            s.append(cdf_grid(family, theta, u, v))
        probs = np.where(
            self.is0[:, None], 1.0 - s[0], np.where(self.is1[:, None], s[0] - s[1], s[1])
        )
        return -np.sum(np.log(np.maximum(probs, PROB_FLOOR)), axis=0)


class _TransformedObjective:
    """Single-cell objective on the transformed coordinates."""

    def __init__(self, evaluator, transform):
        self.evaluator = evaluator
        self.transform = transform
        self.family = transform.likelihood_family()

    def value(self, t):
        return float(
            self.evaluator.nll_params_batch([self.transform.unpack(t)], self.family)[0]
        )

    def value_and_grad(self, t, step=_GRAD_STEP):
        d = len(t)
        points = [self.transform.unpack(t)]
        h = step * np.maximum(1.0, np.abs(t))
        for i in range(d):
            tp = t.copy()
            tm = t.copy()
            tp[i] += h[i]
            tm[i] -= h[i]
            points.append(self.transform.unpack(tp))
            points.append(self.transform.unpack(tm))
        vals = self.evaluator.nll_params_batch(points, self.family)
        grad = (vals[1::2] - vals[2::2]) / (2.0 * h)
        return float(vals[0]), grad

    def diag_curvature(self, t, step=_HESS_STEP):
        """Second differences along each coordinate, for preconditioning."""
        d = len(t)
        h = step * np.maximum(1.0, np.abs(t))
        points = [self.transform.unpack(t)]
        for i in range(d):
            for sign in (2.0, -2.0):
                tp = t.copy()
                tp[i] += sign * h[i]
                points.append(self.transform.unpack(tp))
        vals = self.evaluator.nll_params_batch(points, self.family)
        return (vals[1::2] - 2 * vals[0] + vals[2::2]) / (4.0 * h**2)

    def hessian(self, t, step=_HESS_STEP):
        d = len(t)
        h = step * np.maximum(1.0, np.abs(t))
        points = [self.transform.unpack(t)]
        for i in range(d):
            for sign in (2.0, -2.0):
                tp = t.copy()
                tp[i] += sign * h[i]
                points.append(self.transform.unpack(tp))
        pair_index = {}
        for i in range(d):
            for j in range(i + 1, d):
                pair_index[(i, j)] = len(points)
                for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    tp = t.copy()
                    tp[i] += si * h[i]
                    tp[j] += sj * h[j]
                    points.append(self.transform.unpack(tp))
        vals = self.evaluator.nll_params_batch(points, self.family)
        hess = np.empty((d, d))
        f0 = vals[0]
        for i in range(d):
            fpp, fmm = vals[1 + 2 * i], vals[2 + 2 * i]
            hess[i, i] = (fpp - 2 * f0 + fmm) / (4.0 * h[i] ** 2)
        for (i, j), base in pair_index.items():
            fij = vals[base] - vals[base + 1] - vals[base + 2] + vals[base + 3]
            hess[i, j] = hess[j, i] = fij / (4.0 * h[i] * h[j])
        return hess


def central_gradient(f, x, step=_GRAD_STEP):
    """Central-difference gradient with per-coordinate relative steps."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def central_hessian(f, x, step=_HESS_STEP):
    """Symmetric central-difference Hessian of a scalar callable."""
    x = np.asarray(x, dtype=float)
    d = x.size
    h = step * np.maximum(1.0, np.abs(x))
    hess = np.empty((d, d))
    f0 = f(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        hess[i, i] = (f(x + 2 * ei) - 2 * f0 + f(x - 2 * ei)) / (4.0 * h[i] ** 2)
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h[j]
            fij = f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            hess[i, j] = hess[j, i] = fij / (4.0 * h[i] * h[j])
    return hess


@dataclass
class FittedCell:
    """Point estimates plus diagnostics for one fitted cell."""

    params: CellParams
    transform: ParamTransform
    t_opt: np.ndarray
    nll: float
    covariance: np.ndarray | None
    converged: bool
    n_iter: int
    restarts_used: int
    grad_norm: float
    floored: int
    n_obs: int
    family: str
    tag: tuple = (0, 0)

    def se_natural(self):
        """Delta-method standard errors in the natural parameterization."""
        if self.covariance is None:
            return None
        jac = np.ones(self.transform.n_params)
        dx = self.transform.dim_x
        jac[dx + 1] = self.params.lam
        if not self.transform.no_misreporting:
            jac[dx + 2 + self.transform.dim_z + 1] = self.params.zeta
            if self.transform.has_theta:
                jac[-1] = self.transform.theta_jacobian(self.t_opt[-1])
        return np.sqrt(np.maximum(np.diag(self.covariance), 0.0)) * np.abs(jac)


def _precondition_scale(objective, t0):
    """Diagonal curvature turned into coordinate scales for the optimizer."""
    try:
        diag = objective.diag_curvature(t0)
    except Exception:
        return np.ones_like(t0)
    if not np.all(np.isfinite(diag)) or np.max(diag) <= 0:
        return np.ones_like(t0)
    floor = 1e-6 * float(np.max(diag))
    return np.sqrt(np.clip(diag, floor, None))


class _ScaledObjective:
    """Coordinate change y = scale * t so the curvature is near-isotropic."""

    def __init__(self, objective, scale):
        self.objective = objective
        self.scale = scale

    def value(self, y):
        return self.objective.value(y / self.scale)

    def value_and_grad(self, y):
        f, g = self.objective.value_and_grad(y / self.scale)
        return f, g / self.scale


class _LinearScaledObjective:
    """Coordinate change y = S t for a block preconditioner S."""

    def __init__(self, objective, s_matrix):
        self.objective = objective
        self.s_inv = np.linalg.inv(s_matrix)

    def value(self, y):
        return self.objective.value(self.s_inv @ y)

    def value_and_grad(self, y):
        f, g = self.objective.value_and_grad(self.s_inv @ y)
        return f, self.s_inv.T @ g


def _minimize_preconditioned(objective, t0, options, gtol, s_matrix):
    """Unbounded L-BFGS in coordinates where the start Hessian is identity."""
    scaled = _LinearScaledObjective(objective, s_matrix)
    y0 = s_matrix @ t0
    # unit curvature: remaining suboptimality is about |g|^2/2, so a max-norm
    # of 0.02 over ~25 coordinates leaves the objective within 5e-3 of the
    # optimum, well inside the accuracy a likelihood-ratio statistic needs
    gtol_y = 1e-5
    accept = 2e-2
    res = optimize.minimize(
        scaled.value_and_grad,
        y0,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": options.maxiter, "ftol": options.ftol, "gtol": gtol_y},
    )
    grad_norm = float(np.max(np.abs(res.jac))) if res.jac is not None else np.inf
    ok = grad_norm <= accept
    if not ok:
        res2 = optimize.minimize(
            scaled.value_and_grad,
            res.x,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": options.maxiter, "ftol": options.ftol, "gtol": gtol_y},
        )
        if res2.fun <= res.fun:
            res = res2
            grad_norm = (
                float(np.max(np.abs(res.jac))) if res.jac is not None else np.inf
            )
        ok = grad_norm <= accept
    res.x = scaled.s_inv @ res.x
    return res, ok, grad_norm


def _minimize(objective, t0, bounds, options, gtol, scale=None):
    """L-BFGS-B on an objective exposing value / value_and_grad.

    Coordinates are rescaled by the square-root diagonal curvature when a
    scale is supplied. A small projected gradient (in the original
    coordinates) counts as converged even when the line search stalls; a
    Nelder-Mead polish only runs in low dimensions where it is effective.
    """
    t0 = np.asarray(t0, dtype=float)
    if scale is None:
        scale = np.ones_like(t0)
    scaled = _ScaledObjective(objective, scale)
    y0 = t0 * scale
    bounds_y = [(lo * s, hi * s) for (lo, hi), s in zip(bounds, scale)]
    gtol_y = gtol / float(np.median(scale))
    lbfgs_opts = {"maxiter": options.maxiter, "ftol": options.ftol, "gtol": gtol_y}

    def run_lbfgs(start_y):
        res = optimize.minimize(
            scaled.value_and_grad,
            start_y,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds_y,
            options=lbfgs_opts,
        )
        gn = (
            float(np.max(np.abs(res.jac * scale)))
            if res.jac is not None
            else np.inf
        )
        return res, gn

    res, grad_norm = run_lbfgs(y0)
    ok = grad_norm <= 100.0 * gtol
    if not ok:
        # restarting resets the Hessian memory and often clears a stall
        res2, gn2 = run_lbfgs(res.x)
        if res2.fun <= res.fun:
            res, grad_norm = res2, gn2
        ok = grad_norm <= 100.0 * gtol
    if not ok and len(t0) <= 12:
        polish = optimize.minimize(
            scaled.value,
            res.x,
            method="Nelder-Mead",
            options={"maxiter": 300 * len(t0), "fatol": 1e-10, "xatol": 1e-8},
        )
        if polish.fun < res.fun:
            res3, gn3 = run_lbfgs(polish.x)
            if res3.fun <= polish.fun:
                res, grad_norm = res3, gn3
            else:
                res = polish
                grad_norm = float(
                    np.max(np.abs(central_gradient(scaled.value, res.x) * scale))
                )
        ok = grad_norm <= 100.0 * gtol
    res.x = res.x / scale
    return res, ok, grad_norm


@_single_threaded_blas
def fit_ordered_probit(outcomes, x, options=FitOptions()):
    """Marginal ordered probit with fixed cutoffs 0, 1 and free scale.

    Returns (coefficients including intercept, scale). Used both for
    starting values and as the no-misreporting reference model.
    """
    outcomes = np.asarray(outcomes, dtype=int)
    x = np.empty((outcomes.size, 0)) if x is None else np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    data = ObservationSet(outcomes=outcomes, x=x, z=None)
    transform = ParamTransform(x.shape[1], 0, INDEPENDENCE, no_misreporting=True)

    shares = np.bincount(outcomes, minlength=3) / outcomes.size
    p0 = float(np.clip(shares[0], 1e-4, 1 - 2e-4))
    p01 = float(np.clip(shares[0] + shares[1], p0 + 1e-4, 1 - 1e-4))
    z0, z1 = special.ndtri(p0), special.ndtri(p01)
    lam0 = 1.0 / max(z1 - z0, 1e-3)
    t0 = np.zeros(transform.n_params)
    t0[0] = -lam0 * z0
    t0[x.shape[1] + 1] = np.log(lam0)

    objective = _TransformedObjective(CellEvaluator(data), transform)
    gtol = options.pgtol_per_obs * data.n
    scale = _precondition_scale(objective, t0)
    res, ok, _ = _minimize(objective, t0, transform.bounds(), options, gtol, scale)
    params = transform.unpack(res.x)
    return params.eta_bar, params.lam


def _resolve_theta_starts(family, options):
    """Starting transformed theta coordinates; Clayton may try both branches."""
    if family == INDEPENDENCE:
        return [(None, None)]
    theta0 = options.theta_start
    if theta0 is None and options.target_rho is not None:
        from .copulas import calibrate_theta

        spec = calibrate_theta(family, options.target_rho)
        theta0 = spec.theta
    if family == FRANK:
        return [(None, float(theta0) if theta0 is not None else 0.0)]
    if theta0 is not None:
        branch = 1 if theta0 > 0 else -1
        return [(branch, float(theta0))]
    # no initial dependence information: try both branches deterministically
    return [(-1, -0.3), (1, 0.5)]


def _validate_cell(data):
    if data.n < 50:
        raise InputError(f"cell needs at least 50 observations, got {data.n}")
    present = np.unique(data.outcomes)
    if len(present) < 3:
        raise InputError(
            f"all three outcome levels must be present, found {present.tolist()}"
        )


@_single_threaded_blas
def fit_cell(data, family, options=FitOptions(), no_misreporting=False):
    """Maximum likelihood fit of one cell.

    Starts from ordered-probit marginal fits (consumption on x, reporting on
    z) with the dependence coordinate at its configured start, accepts early
    when the quasi-Newton run converges cleanly, and otherwise adds random
    perturbation restarts. Raises ConvergenceError (carrying the best
    candidate) when no start converges.
    """
    _validate_cell(data)
    dim_x = data.x.shape[1]
    dim_z = data.z.shape[1]
    evaluator = CellEvaluator(data)

    eta0, lam0 = fit_ordered_probit(data.outcomes, data.x, options)
    if no_misreporting:
        transform = ParamTransform(dim_x, dim_z, family, no_misreporting=True)
        starts = [(transform, np.concatenate([eta0, [np.log(lam0)]]))]
    else:
        pi0, zeta0 = fit_ordered_probit(data.outcomes, data.z, options)
        starts = []
        for branch, theta0 in _resolve_theta_starts(family, options):
            transform = ParamTransform(dim_x, dim_z, family, clayton_branch=branch)
            t = np.concatenate([eta0, [np.log(lam0)], pi0, [np.log(zeta0)]])
            if transform.has_theta:
                t = np.concatenate([t, [transform._s_from_theta(theta0)]])
            starts.append((transform, t))

    rng = np.random.default_rng(
        np.random.SeedSequence((int(options.seed) & 0xFFFFFFFF, 0x5EED))
    )
    noise = rng.normal(
        0.0, options.perturb_scale, size=(options.restarts, len(starts[0][1]))
    )

    gtol = options.pgtol_per_obs * data.n
    best = None
    restarts_used = 0
    candidates = list(starts) + [
        (starts[k % len(starts)][0], starts[k % len(starts)][1] + noise[k])
        for k in range(options.restarts)
    ]
    scales = {
        id(tr): _precondition_scale(_TransformedObjective(evaluator, tr), t_start)
        for tr, t_start in starts
    }
    for transform, t0 in candidates:
        objective = _TransformedObjective(evaluator, transform)
        res, ok, grad_norm = _minimize(
            objective, t0, transform.bounds(), options, gtol, scales[id(transform)]
        )
        restarts_used += 1
        if best is None or res.fun < best[0] - 1e-10:
            best = (res.fun, res, transform, ok, grad_norm)
        # stop early once some start converged cleanly and every configured
        # branch start has been tried; perturbation restarts are the fallback
        if best[3] and restarts_used >= len(starts):
            break

    fun, res, transform, ok, grad_norm = best
    like_family = transform.likelihood_family()
    params = transform.unpack(res.x)
    nll, floored = neg_log_likelihood(params, data, like_family, return_floored=True)

    covariance = None
    if options.compute_covariance:
        objective = _TransformedObjective(evaluator, transform)
        hess = objective.hessian(np.asarray(res.x, dtype=float))
        hess = 0.5 * (hess + hess.T)
        try:
            np.linalg.cholesky(hess)
            covariance = np.linalg.inv(hess)
            covariance = 0.5 * (covariance + covariance.T)
        except np.linalg.LinAlgError:
            covariance = None

    fitted = FittedCell(
        params=params,
        transform=transform,
        t_opt=np.asarray(res.x, dtype=float),
        nll=nll,
        covariance=covariance,
        converged=ok,
        n_iter=int(getattr(res, "nit", -1)),
        restarts_used=restarts_used,
        grad_norm=grad_norm,
        floored=floored,
        n_obs=data.n,
        family=family,
        tag=data.tag,
    )
    if not ok:
        raise ConvergenceError(
            f"cell {data.tag} did not converge after {restarts_used} starts "
            f"(grad norm {grad_norm:.3g})",
            best=fitted,
        )
    return fitted


def _counterfactual_consumption(eta00, lam00, eta01, lam01, eta10, lam10):
    eta11 = eta01 + (eta10 - eta00) * (lam01 / lam00)
    lam11 = lam01 * lam10 / lam00
    return eta11, lam11


class _RestrictedObjective:
    """Joint four-cell objective with cell (1,1) tied to the others.

    The gradient exploits the block structure: a coordinate of an untreated
    cell perturbs only that cell's likelihood plus, through the implied
    parameters, cell (1,1); reporting-block coordinates do not touch cell
    (1,1) unless both index blocks are restricted.
    """

    TAGS = ((0, 0), (0, 1), (1, 0), (1, 1))

    def __init__(self, cells, family, transforms, restrict):
        self.family = family
        self.transforms = transforms
        self.restrict = restrict
        self.evaluators = {tag: CellEvaluator(cells[tag]) for tag in self.TAGS}
        self.tr11 = transforms[(1, 1)]
        self.dx = self.tr11.dim_x
        self.dz = self.tr11.dim_z
        self.sizes = [transforms[tag].n_params for tag in self.TAGS[:3]]
        if restrict == "consumption":
            self.free11 = list(range(self.dx + 2, self.tr11.n_params))
        else:
            self.free11 = (
                [self.tr11.n_params - 1] if self.tr11.has_theta else []
            )
        self.n_params = sum(self.sizes) + len(self.free11)
        self._affects = self._coordinate_map()

    def _coordinate_map(self):
        """For each coordinate, the cells whose likelihood it moves."""
        affects = []
        for k, tag in enumerate(self.TAGS[:3]):
            tr = self.transforms[tag]
            for i in range(tr.n_params):
                consumption = i <= tr.dim_x + 1
                reporting = tr.dim_x + 1 < i <= tr.dim_x + tr.dim_z + 3
                hits = [tag]
                if consumption or (reporting and self.restrict == "both"):
                    hits.append((1, 1))
                affects.append(tuple(hits))
        for _ in self.free11:
            affects.append(((1, 1),))
        return affects

    def split(self, t):
        parts = []
        pos = 0
        for s in self.sizes:
            parts.append(t[pos : pos + s])
            pos += s
        return parts, t[pos:]

    def cell_params(self, t):
        parts, tail = self.split(t)
        p00 = self.transforms[(0, 0)].unpack(parts[0])
        p01 = self.transforms[(0, 1)].unpack(parts[1])
        p10 = self.transforms[(1, 0)].unpack(parts[2])
        eta11, lam11 = _counterfactual_consumption(
            p00.eta_bar, p00.lam, p01.eta_bar, p01.lam, p10.eta_bar, p10.lam
        )
        t11 = np.zeros(self.tr11.n_params)
        t11[: self.dx + 1] = eta11
        t11[self.dx + 1] = np.log(lam11)
        if self.restrict == "both":
            pi11, zeta11 = _counterfactual_consumption(
                p00.pi_bar, p00.zeta, p01.pi_bar, p01.zeta, p10.pi_bar, p10.zeta
            )
            t11[self.dx + 2 : self.dx + 2 + self.dz + 1] = pi11
            t11[self.dx + 2 + self.dz + 1] = np.log(zeta11)
            if self.tr11.has_theta:
                t11[-1] = tail[0]
        else:
            t11[self.dx + 2 :] = tail
        return {
            (0, 0): p00,
            (0, 1): p01,
            (1, 0): p10,
            (1, 1): self.tr11.unpack(t11),
        }

    def value(self, t):
        params = self.cell_params(t)
        return float(
            sum(
                self.evaluators[tag].nll_params_batch([params[tag]], self.family)[0]
                for tag in self.TAGS
            )
        )

    def value_and_grad(self, t, step=_GRAD_STEP):
        d = len(t)
        h = step * np.maximum(1.0, np.abs(t))
        center = self.cell_params(t)
        # queue per-cell parameter batches: center first, then the +/- pairs
        # of every coordinate that moves the cell
        queues = {tag: [center[tag]] for tag in self.TAGS}
        slots = []  # (i, tag, pos_plus, pos_minus)
        for i in range(d):
            tp = t.copy()
            tm = t.copy()
            tp[i] += h[i]
            tm[i] -= h[i]
            pp = self.cell_params(tp)
            pm = self.cell_params(tm)
            for tag in self._affects[i]:
                q = queues[tag]
                slots.append((i, tag, len(q), len(q) + 1))
                q.append(pp[tag])
                q.append(pm[tag])
        values = {
            tag: self.evaluators[tag].nll_params_batch(queues[tag], self.family)
            for tag in self.TAGS
        }
        f0 = float(sum(values[tag][0] for tag in self.TAGS))
        grad = np.zeros(d)
        for i, tag, ip, im in slots:
            grad[i] += (values[tag][ip] - values[tag][im]) / (2.0 * h[i])
        return f0, grad

    def diag_curvature(self, t, step=_HESS_STEP):
        d = len(t)
        h = step * np.maximum(1.0, np.abs(t))
        center = self.cell_params(t)
        queues = {tag: [center[tag]] for tag in self.TAGS}
        slots = []
        for i in range(d):
            tp = t.copy()
            tm = t.copy()
            tp[i] += 2.0 * h[i]
            tm[i] -= 2.0 * h[i]
            pp = self.cell_params(tp)
            pm = self.cell_params(tm)
            for tag in self._affects[i]:
                q = queues[tag]
                slots.append((i, tag, len(q), len(q) + 1))
                q.append(pp[tag])
                q.append(pm[tag])
        values = {
            tag: self.evaluators[tag].nll_params_batch(queues[tag], self.family)
            for tag in self.TAGS
        }
        diag = np.zeros(d)
        for i, tag, ip, im in slots:
            diag[i] += (values[tag][ip] - 2.0 * values[tag][0] + values[tag][im]) / (
                4.0 * h[i] ** 2
            )
        return diag


@_single_threaded_blas
def fit_cells_restricted(
    cells, family, unrestricted, options=FitOptions(), restrict="consumption"
):
    """Joint fit of four cells under the parallel-trends parameter relations.

    Cell (1,1)'s consumption block (and the reporting block when
    ``restrict='both'``) is expressed through the other three cells, so the
    restricted parameter vector drops those coordinates. Returns the total
    negative log-likelihood and the implied per-cell parameters.
    """
    if restrict not in ("consumption", "both"):
        raise DomainError(f"restrict must be 'consumption' or 'both', got {restrict!r}")
    for tag in _RestrictedObjective.TAGS:
        if tag not in cells:
            raise InputError(f"missing cell {tag} for the restricted fit")
    transforms = {tag: unrestricted[tag].transform for tag in _RestrictedObjective.TAGS}
    objective = _RestrictedObjective(cells, family, transforms, restrict)

    t0_parts = [unrestricted[tag].t_opt for tag in _RestrictedObjective.TAGS[:3]]
    t0_tail = unrestricted[(1, 1)].t_opt[objective.free11]
    t0 = np.concatenate(t0_parts + [t0_tail])
    bounds = sum((transforms[tag].bounds() for tag in _RestrictedObjective.TAGS[:3]), [])
    bounds += [transforms[(1, 1)].bounds()[i] for i in objective.free11]

    total_n = sum(cells[tag].n for tag in _RestrictedObjective.TAGS)
    gtol = options.pgtol_per_obs * total_n

    def block_preconditioner(t_current):
        """Cholesky factors of per-cell observed information, block-diagonal."""
        parts, _ = objective.split(np.asarray(t_current, dtype=float))
        params = objective.cell_params(np.asarray(t_current, dtype=float))
        blocks = []
        for k, tag in enumerate(_RestrictedObjective.TAGS[:3]):
            cell_obj = _TransformedObjective(objective.evaluators[tag], transforms[tag])
            blocks.append(cell_obj.hessian(np.asarray(parts[k], dtype=float)))
        if objective.free11:
            cell_obj = _TransformedObjective(
                objective.evaluators[(1, 1)], transforms[(1, 1)]
            )
            t11 = transforms[(1, 1)].pack(params[(1, 1)])
            hess11 = cell_obj.hessian(np.asarray(t11, dtype=float))
            blocks.append(hess11[np.ix_(objective.free11, objective.free11)])
        s_matrix = np.eye(objective.n_params)
        pos = 0
        for block in blocks:
            d = block.shape[0]
            sym = 0.5 * (block + block.T)
            try:
                chol = np.linalg.cholesky(sym)
            except np.linalg.LinAlgError:
                # weakly identified block: ridge keeps the factor usable
                ridge = 1e-6 * max(np.trace(sym) / d, 1.0)
                chol = np.linalg.cholesky(sym + ridge * np.eye(d) * 10.0)
            s_matrix[pos : pos + d, pos : pos + d] = chol.T
            pos += d
        return s_matrix

    res = ok = None
    grad_norm = np.inf
    t_current = t0
    # re-preconditioning at the current point acts like a Newton restart;
    # a diagonal scale stands in when the block factorization fails outright
    for _ in range(4):
        try:
            s_matrix = block_preconditioner(t_current)
            res, ok, grad_norm = _minimize_preconditioned(
                objective, t_current, options, gtol, s_matrix
            )
        except np.linalg.LinAlgError:
            scale = _precondition_scale(objective, t_current)
            res, ok, grad_norm = _minimize(
                objective, t_current, bounds, options, gtol, scale
            )
        t_current = res.x
        if ok:
            break
    if not ok:
        raise ConvergenceError(
            f"restricted four-cell fit did not converge (grad norm {grad_norm:.3g})"
        )
    params = objective.cell_params(res.x)
    return {
        "nll": float(res.fun),
        "params": params,
        "n_iter": int(getattr(res, "nit", -1)),
    }
