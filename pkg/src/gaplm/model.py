"""Fitted-model record: coefficients, selected components, prediction and component curves."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ClusterDataset, Theta, unpack
from .family import get_family
from .qif import extract_alpha
from .splines import SplineSystem


@dataclass
class FitReport:
    """Estimate theta-hat with the spline system it lives in.

    ``active_x`` / ``active_z`` are the selected nonparametric and linear
    indices (``active_z`` includes the never-penalized columns).
    """

    theta: np.ndarray
    splines: SplineSystem
    d_z: int
    d_x: int
    family: str
    structure: str
    lam: float
    active_x: tuple
    active_z: tuple
    Q: float
    objective: float
    ebic: float | None = None
    trace: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = True
    stalled: bool = False
    beta_cov: np.ndarray | None = None

    @property
    def n_basis(self):
        return self.splines.n_basis

    @property
    def params(self) -> Theta:
        return unpack(self.theta, self.d_z, self.d_x, self.n_basis)

    @property
    def beta(self) -> np.ndarray:
        return self.theta[:self.d_z].copy()

    def gamma(self, l):
        s = self.d_z + l * self.n_basis
        return self.theta[s:s + self.n_basis].copy()

    def alpha(self, l, x, centering="empirical"):
        """alpha-hat_l at ``x``; ``centering="integral"`` gives the version with zero integral on [0, 1]."""
        return extract_alpha(self.theta, self.splines, l, x, centering)

    def alpha_offsets(self):
        """Integral over [0, 1] of each empirically centered alpha-hat_l."""
        return np.array([self.splines.integrals(l) @ self.gamma(l) for l in range(self.d_x)])

    def beta_integral_centered(self):
        """beta-hat with the intercept absorbing the integrals of the alpha-hat_l.

        The fitted predictor is unchanged; only its split between the
        intercept and the components differs, matching components
        normalized by int_0^1 alpha_l = 0.
        """
        b = self.beta
        b[0] += self.alpha_offsets().sum()
        return b

    def eta(self, x, z):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return z @ self.theta[:self.d_z] + self.splines.design(x) @ self.theta[self.d_z:]

    def mu(self, x, z):
        return get_family(self.family).mu(self.eta(x, z))

    def predict(self, ds: ClusterDataset):
        """Fitted means at every observation of ``ds``, stacked cluster by cluster."""
        _, x, z = ds.stacked
        return self.mu(x, z)

    def alpha_grid(self, n_points=101, centering="integral"):
        """(grid, values) with values shaped (d_x, n_points)."""
        grid = np.linspace(0.0, 1.0, n_points)
        vals = np.array([self.alpha(l, grid, centering) for l in range(self.d_x)])
        return grid, vals.reshape(self.d_x, n_points)


def report_from(theta, problem, lam, active_x, active_z, Q, objective, trace=(), n_iter=0,
                converged=True, stalled=False, ebic=None) -> FitReport:
    return FitReport(np.asarray(theta, dtype=float).copy(), problem.splines, problem.d_z,
                     problem.d_x, problem.family.name, problem.structure, float(lam),
                     tuple(int(v) for v in active_x), tuple(int(v) for v in active_z),
                     float(Q), float(objective), ebic, list(trace), n_iter, converged, stalled)
