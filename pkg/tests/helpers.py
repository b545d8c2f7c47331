"""Shared fixtures: population bound DGPs and four-cell data generators."""

import numpy as np

from ordcic.bounds import CellBoundInputs
from ordcic.montecarlo import SeparableDgp
from ordcic.stats import DiscreteCdf, std_normal_cdf

CELL_TAGS = ((0, 0), (0, 1), (1, 0), (1, 1))


def separable_consumption(scale=2.0):
    return SeparableDgp(
        alpha_t=([-1.0, 1.4], [-0.8, 1.4]),
        beta_t=(1.0, 1.1),
        mu_g=([0.0, 0.0], [0.25, 0.0]),
        sigma_g=(scale, scale * 0.95),
    )


def separable_reporting(scale=2.0):
    return SeparableDgp(
        alpha_t=([1.5, -1.4], [1.4, -1.4]),
        beta_t=(1.0, 0.95),
        mu_g=([0.0, 0.0], [-0.15, 0.0]),
        sigma_g=(scale, scale * 1.05),
    )


def outcome_cdf_values(eta, lam):
    """Population CDF of a latent-index ordered outcome at levels 0 and 1."""
    return np.array(
        [std_normal_cdf((0.0 - eta) / lam), std_normal_cdf((1.0 - eta) / lam), 1.0]
    )


class PopulationBoundsDgp:
    """Population-level DGP for the bounds: separable outcome, instrumented
    misreporting with reporting level independent of the outcome given the
    instrument. Supplies exact cell CDFs, the true counterfactual CDF, and
    samplers for bootstrap studies."""

    def __init__(self, consumption=None, z_probs=(0.5, 0.5), miss=None):
        self.consumption = consumption or SeparableDgp(
            alpha_t=(0.35, 0.55),
            beta_t=(1.0, 1.15),
            mu_g=(0.0, 0.3),
            sigma_g=(1.0, 1.2),
        )
        self.z_probs = np.asarray(z_probs, dtype=float)
        # miss[z][j] = P(R <= j | Z = z), the misreporting CDF per instrument
        # value; R independent of Y given Z
        if miss is None:
            miss = {0: (0.0, 0.0), 1: (0.06, 0.09)}
        self.miss = {z: np.array([m[0], m[1], 1.0]) for z, m in miss.items()}

    def outcome_cdf(self, g, t):
        eta = float(np.atleast_1d(self.consumption.coef(g, t))[0])
        lam = self.consumption.scale(g, t)
        return outcome_cdf_values(eta, lam)

    def conditional_cdfs(self, g, t):
        f_y = self.outcome_cdf(g, t)
        out = {}
        for z, m in self.miss.items():
            vals = 1.0 - (1.0 - f_y) * (1.0 - m)
            vals[2] = 1.0
            out[z] = vals
        return out

    def marginal_cdf(self, g, t):
        conds = self.conditional_cdfs(g, t)
        return sum(p * conds[z] for z, p in zip(sorted(conds), self.z_probs))

    def cell_inputs(self, g, t):
        conds = {
            z: DiscreteCdf(np.arange(3), vals)
            for z, vals in self.conditional_cdfs(g, t).items()
        }
        return CellBoundInputs(
            marginal=DiscreteCdf(np.arange(3), self.marginal_cdf(g, t)),
            conditionals=conds,
            tag=(g, t),
        )

    def all_inputs(self):
        return {tag: self.cell_inputs(*tag) for tag in CELL_TAGS}

    def true_counterfactual(self):
        return self.outcome_cdf(1, 1)

    def sample_cell(self, g, t, n, rng):
        """Draw (outcomes, instrument) for one cell."""
        z_vals = np.array(sorted(self.miss))
        z = z_vals[rng.choice(len(z_vals), size=n, p=self.z_probs)]
        f_y = self.outcome_cdf(g, t)
        u = rng.random(n)
        y = np.searchsorted(f_y, u, side="left")
        r = np.empty(n, dtype=int)
        for zv in z_vals:
            mask = z == zv
            r[mask] = np.searchsorted(self.miss[zv], rng.random(mask.sum()), "left")
        return np.minimum(y, r), z

    def sample_all(self, n, rng):
        return {tag: self.sample_cell(*tag, n, rng) for tag in CELL_TAGS}
