"""Scikit-learn style estimators wrapping the cell model, the four-cell
changes-in-changes fit, and the nonparametric bounds."""

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator

from . import bounds as bounds_mod
from .copulas import INDEPENDENCE
from .effects import (
    copula_decomposition,
    counterfactual_params,
    dtt_standard_errors,
    marginalize_dtt,
)
from .errors import ConfigError, InputError
from .fitting import FitOptions, fit_cell
from .model import ObservationSet, pmf_matrix
from .validation import build_cells, check_outcome, resolve_block

__all__ = ["CellModel", "OrderedCicEstimator", "CicBounds"]


def _fit_options(est):
    return FitOptions(
        restarts=est.restarts,
        seed=est.seed,
        theta_start=est.theta_start,
        target_rho=est.target_rho,
    )


class CellModel(BaseEstimator):
    """Single-cell ordered outcome model with one-sided underreporting.

    Parameters
    ----------
    x_cols, z_cols : sequence
        Consumption and reporting covariate columns (names for DataFrame
        input, integer indices for arrays); empty for intercept-only blocks.
    copula : str
        'frank', 'clayton' or 'independence'.
    misreporting : bool
        With False the reporting equation is pinned to never bind and the
        model reduces to an ordered probit for the outcome.
    """

    def __init__(
        self,
        x_cols=None,
        z_cols=None,
        copula="frank",
        theta_start=None,
        target_rho=None,
        restarts=4,
        seed=0,
        misreporting=True,
    ):
        self.x_cols = x_cols
        self.z_cols = z_cols
        self.copula = copula
        self.theta_start = theta_start
        self.target_rho = target_rho
        self.restarts = restarts
        self.seed = seed
        self.misreporting = misreporting

    def _observations(self, X, y):
        y = check_outcome(y)
        x = resolve_block(X, self.x_cols, "consumption")
        z = resolve_block(X, self.z_cols, "reporting")
        return ObservationSet(outcomes=y, x=x, z=z)

    def fit(self, X, y):
        data = self._observations(X, y)
        self.result_ = fit_cell(
            data,
            self.copula,
            _fit_options(self),
            no_misreporting=not self.misreporting,
        )
        self.params_ = self.result_.params
        self.covariance_ = self.result_.covariance
        self.nll_ = self.result_.nll
        self.classes_ = np.array([0, 1, 2])
        self.n_features_in_ = X.shape[1] if hasattr(X, "shape") else len(X.columns)
        return self

    def _check_fitted(self):
        if not hasattr(self, "result_"):
            raise InputError("estimator is not fitted; call fit first")

    def predict_proba(self, X):
        self._check_fitted()
        x = resolve_block(X, self.x_cols, "consumption")
        z = resolve_block(X, self.z_cols, "reporting")
        family = self.copula if self.misreporting else INDEPENDENCE
        return pmf_matrix(self.params_, x, z, family)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def score(self, X, y):
        """Mean predictive log-likelihood of the observed levels."""
        proba = self.predict_proba(X)
        y = check_outcome(y)
        picked = proba[np.arange(len(y)), y]
        return float(np.mean(np.log(np.maximum(picked, 1e-300))))


class OrderedCicEstimator(BaseEstimator):
    """Four-cell changes-in-changes estimator for ordered, underreported outcomes.

    Fitting partitions rows by the binary group and time columns, estimates
    each cell by maximum likelihood, forms the counterfactual treated-after
    cell from the parallel-trends identities, and computes marginalized
    treatment effects on consumption and reporting with delta-method
    standard errors, plus the upper-tail decomposition into dependence and
    marginal components.
    """

    def __init__(
        self,
        x_cols=None,
        z_cols=None,
        group_col="group",
        time_col="time",
        copula="frank",
        theta_start=None,
        target_rho=None,
        restarts=4,
        seed=0,
        counterfactual_copula="treated-pre",
        n_jobs=1,
    ):
        self.x_cols = x_cols
        self.z_cols = z_cols
        self.group_col = group_col
        self.time_col = time_col
        self.copula = copula
        self.theta_start = theta_start
        self.target_rho = target_rho
        self.restarts = restarts
        self.seed = seed
        self.counterfactual_copula = counterfactual_copula
        self.n_jobs = n_jobs

    def fit(self, X, y):
        cells = build_cells(X, y, self.x_cols, self.z_cols, self.group_col, self.time_col)
        options = _fit_options(self)
        tags = [(0, 0), (0, 1), (1, 0), (1, 1)]
        fitted = Parallel(n_jobs=self.n_jobs)(
            delayed(fit_cell)(cells[tag], self.copula, options) for tag in tags
        )
        self.cells_ = dict(zip(tags, fitted))
        self.cell_data_ = cells
        params = {tag: f.params for tag, f in self.cells_.items()}
        self.counterfactual_ = counterfactual_params(
            params[(0, 0)],
            params[(0, 1)],
            params[(1, 0)],
            self.counterfactual_copula,
        )
        x11 = cells[(1, 1)].x
        z11 = cells[(1, 1)].z
        self.tau_consumption_ = dtt_standard_errors(
            self.cells_, x11, kind="consumption",
            copula_source=self.counterfactual_copula,
        )
        self.tau_reporting_ = dtt_standard_errors(
            self.cells_, z11, kind="reporting",
            copula_source=self.counterfactual_copula,
        )
        treated = params[(1, 1)]
        self.decomposition_ = {}
        for j in (0, 1, 2):
            comps = np.zeros(3)
            for x_row, z_row in zip(x11, z11):
                comps += copula_decomposition(
                    treated, self.counterfactual_, self.copula, x_row, z_row, j
                )
            self.decomposition_[j] = comps / len(x11)
        return self

    def predict_proba(self, X):
        """Outcome PMF per row under the fitted parameters of its own cell."""
        if not hasattr(self, "cells_"):
            raise InputError("estimator is not fitted; call fit first")
        if not isinstance(X, pd.DataFrame):
            raise InputError("predict_proba needs a DataFrame with group/time columns")
        g = np.asarray(X[self.group_col], dtype=int)
        t = np.asarray(X[self.time_col], dtype=int)
        x = resolve_block(X, self.x_cols, "consumption")
        z = resolve_block(X, self.z_cols, "reporting")
        out = np.empty((len(X), 3))
        for tag, fit in self.cells_.items():
            mask = (g == tag[0]) & (t == tag[1])
            if mask.any():
                out[mask] = pmf_matrix(fit.params, x[mask], z[mask], self.copula)
        return out


class CicBounds(BaseEstimator):
    """Nonparametric bounds on the counterfactual outcome distribution.

    Requires the sensitivity parameter ``alpha`` (cap on the cumulative
    underreporting probability) and a finite-support instrument column; the
    feasibility ratio is always computed so the admissible floor for alpha
    is visible.
    """

    def __init__(
        self,
        alpha=None,
        instrument_col="instrument",
        group_col="group",
        time_col="time",
        smooth_kappa=1e4,
        n_boot=200,
        level=0.95,
        k=1.0,
        seed=0,
        max_instrument_support=32,
    ):
        self.alpha = alpha
        self.instrument_col = instrument_col
        self.group_col = group_col
        self.time_col = time_col
        self.smooth_kappa = smooth_kappa
        self.n_boot = n_boot
        self.level = level
        self.k = k
        self.seed = seed
        self.max_instrument_support = max_instrument_support

    def fit(self, X, y):
        if self.alpha is None:
            raise ConfigError(
                "alpha is required: pass the cap on the cumulative "
                "underreporting probability (0 = none, 1 = unrestricted)"
            )
        if not isinstance(X, pd.DataFrame):
            raise InputError("CicBounds needs a DataFrame input")
        for col in (self.group_col, self.time_col, self.instrument_col):
            if col not in X.columns:
                raise InputError(f"missing column {col!r}")
        y = check_outcome(y)
        g = np.asarray(X[self.group_col], dtype=int)
        t = np.asarray(X[self.time_col], dtype=int)
        z = np.asarray(X[self.instrument_col])
        support = np.unique(z)
        if len(support) > self.max_instrument_support:
            raise InputError(
                f"instrument has {len(support)} support points; bin it upstream "
                f"(limit {self.max_instrument_support})"
            )
        self.instrument_support_ = support.tolist()

        samples = {}
        inputs = {}
        for tag in ((0, 0), (0, 1), (1, 0), (1, 1)):
            mask = (g == tag[0]) & (t == tag[1])
            if not mask.any():
                raise InputError(f"cell (group={tag[0]}, time={tag[1]}) is empty")
            samples[tag] = (y[mask], z[mask])
            inputs[tag] = bounds_mod.CellBoundInputs.from_sample(
                y[mask], z[mask], tag=tag
            )
        self.feasibility_ = bounds_mod.feasibility_check(inputs, self.alpha)

        self.cell_bounds_ = {
            tag: bounds_mod.cell_bounds(inputs[tag], self.alpha) for tag in inputs
        }
        self.factual_ = self.cell_bounds_[(1, 1)]
        raw_l, raw_u = bounds_mod.counterfactual_bounds(
            self.cell_bounds_[(0, 0)],
            self.cell_bounds_[(0, 1)],
            self.cell_bounds_[(1, 0)],
        )
        smooth_l, smooth_u = bounds_mod.smooth_envelope_bounds(
            inputs, self.alpha, self.smooth_kappa
        )
        rng = np.random.default_rng(np.random.SeedSequence((int(self.seed), 0xB00)))
        band_l, band_u, dropped = bounds_mod.bootstrap_bound_ci(
            samples,
            self.alpha,
            self.smooth_kappa,
            self.n_boot,
            self.level,
            self.k,
            rng,
        )
        self.result_ = bounds_mod.BoundsResult(
            lower=raw_l,
            upper=raw_u,
            smooth_lower=smooth_l,
            smooth_upper=smooth_u,
            band_lower=band_l,
            band_upper=band_u,
            alpha=self.alpha,
            smooth_kappa=self.smooth_kappa,
            n_boot=self.n_boot,
            band_level=self.level,
            band_k=self.k,
            dropped_replicates=dropped,
        )
        return self
