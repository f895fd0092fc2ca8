"""Quadratic inference function: extended scores, moments, objective and the unpenalized solver."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import kernels
from ._kernels_py import apply_basis
from .core import (ConvergenceError, DomainError, FitConfig, NumericError, SingularityError,
                   Theta, unpack)
from .correlation import STRUCTURE_CODES, n_basis_matrices
from .family import get_family
from .splines import SplineSystem

RIDGE_REL = 1e-8
PINV_CUTOFF = 1e-10
HESS_JITTER = 1e-12


class CnInverse:
    """(C_n + delta I)^{-1}, or the pseudo-inverse of C_n when ridge is 0.

    ``ridge=None`` picks delta = 1e-8 * trace(C_n) / dim. Quadratic forms are
    evaluated through a whitening map R with W = R'R, never through an
    explicit inverse: exactly redundant moments (e.g. the intercept under EC
    with equal cluster sizes) then only add rounding noise of order
    eps^2 / delta. R is the inverse Cholesky factor of C_n + delta I, or
    sqrt(D^+) V' from the eigendecomposition in the pseudo-inverse case.
    """

    def __init__(self, C, ridge=None):
        dim = C.shape[0]
        C = 0.5 * (C + C.T)
        tr = np.trace(C)
        if not np.isfinite(tr):
            raise NumericError("non-finite moment covariance")
        delta = RIDGE_REL * max(tr, 0.0) / dim if ridge is None else float(ridge)
        self.delta = delta
        self.pinv = not delta > 0
        self._chol = None
        if not self.pinv:
            try:
                self._chol = linalg.cholesky(C + delta * np.eye(dim), lower=True)
            except linalg.LinAlgError:
                self._chol = None
        if self._chol is not None:
            self.rank = dim
            return
        w, V = np.linalg.eigh(C)
        w = np.maximum(w, 0.0)
        if self.pinv:
            top = w.max() if w.size else 0.0
            # floor at 1/max so the reciprocals stay finite for vanishing C_n
            keep = w > max(PINV_CUTOFF * top, 1.0 / np.finfo(float).max)
            V = V[:, keep]
            d = 1.0 / w[keep]
        else:
            d = 1.0 / (w + delta)
        self.rank = V.shape[1]
        self._V = V
        self._root = np.sqrt(d)

    def whiten(self, X):
        """R X, so that X' W Y = whiten(X)' whiten(Y)."""
        X = np.asarray(X, dtype=float)
        if self._chol is not None:
            return linalg.solve_triangular(self._chol, X, lower=True, check_finite=False)
        r = self._root if X.ndim == 1 else self._root[:, None]
        return r * (self._V.T @ X)

    def solve(self, G):
        """W G."""
        u = self.whiten(G)
        if self._chol is not None:
            return linalg.solve_triangular(self._chol, u, lower=True, trans="T", check_finite=False)
        return self._V @ (self._root * u if u.ndim == 1 else self._root[:, None] * u)

    def quad(self, G):
        u = self.whiten(G)
        return float(u @ u)

    @property
    def W(self):
        if self._chol is not None:
            Li = linalg.solve_triangular(self._chol, np.eye(self._chol.shape[0]), lower=True)
            return Li.T @ Li
        return (self._V * self._root ** 2) @ self._V.T


@dataclass
class QifState:
    """Everything computed at one parameter value."""

    theta: np.ndarray
    Q: float
    G: np.ndarray
    C: np.ndarray
    cinv: CnInverse
    scores: np.ndarray
    Gdot: np.ndarray | None = None
    grad: np.ndarray | None = None
    hess: np.ndarray | None = None
    grad_full: np.ndarray | None = None     # these two include the dependence of C_n on theta
    hess_full: np.ndarray | None = None


class QIFProblem:
    """Stacked design D = [Z | B_1 | ... | B_dx] for one dataset plus working structure and family.

    Per-cluster computations run through :mod:`gaplm.kernels`. Cluster sizes
    may differ; a dataset whose clusters all have size one uses K = 1.
    """

    def __init__(self, dataset, splines: SplineSystem, structure="EC", family="gaussian",
                 ridge=None):
        y, x, z = dataset.stacked
        self.dataset = dataset
        self.splines = splines
        self.family = get_family(family)
        self.structure = structure
        self.ridge = ridge
        self.y = np.ascontiguousarray(y, dtype=float)
        self.D = np.ascontiguousarray(np.hstack([z, splines.design(x)]), dtype=float)
        self.starts = np.ascontiguousarray(dataset.starts, dtype=np.int64)
        self.n = dataset.n
        self.d_z = dataset.d_z
        self.d_x = dataset.d_x
        self.n_basis = splines.n_basis
        self.K = n_basis_matrices(structure, int(dataset.sizes.max()))
        self.code = STRUCTURE_CODES[structure] if self.K == 2 else 0

    @classmethod
    def from_config(cls, dataset, config: FitConfig, splines: SplineSystem | None = None):
        if splines is None:
            _, x, _ = dataset.stacked
            splines = SplineSystem.fit(x, dataset.sizes, config.order, config.n_interior)
        return cls(dataset, splines, config.structure, config.family, config.ridge)

    @property
    def dim(self) -> int:
        return self.D.shape[1]

    def unpack(self, theta) -> Theta:
        return unpack(theta, self.d_z, self.d_x, self.n_basis)

    def _observation_terms(self, theta, deriv):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise DomainError(f"theta must have length {self.dim}")
        eta = self.D @ theta
        fam = self.family
        mu = fam.mu(eta)
        if fam.saturated(mu):
            raise NumericError("fitted means saturated")
        mdot = fam.mu_dot(eta)
        isq = 1.0 / np.sqrt(fam.variance(mu))
        resid = self.y - mu
        a = mdot * isq
        v = isq * resid
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(v))):
            raise NumericError("non-finite fitted means")
        if not deriv:
            return a, v, None, None
        vdot = fam.variance_dot(mu) * mdot  # dV/deta
        da = fam.mu_ddot(eta) * isq - 0.5 * mdot * isq ** 3 * vdot
        dv = -0.5 * isq ** 3 * vdot * resid - isq * mdot
        return a, v, da, dv

    def scores(self, theta) -> np.ndarray:
        """Extended scores g_i(theta), one row per cluster, K*d_n columns."""
        a, v, _, _ = self._observation_terms(theta, False)
        return kernels.qif_scores(self.D, a, v, self.starts, self.code, self.K)

    def moments(self, theta):
        """(G_n, C_n): sample mean and second moment of the extended scores."""
        g = self.scores(theta)
        return g.mean(axis=0), g.T @ g / self.n

    def cn_inverse(self, C) -> CnInverse:
        return CnInverse(C, self.ridge)

    def _q(self, G, cinv):
        q = self.n * cinv.quad(G)
        if cinv.rank == 0 and np.any(G != 0):
            raise SingularityError("C_n is zero while G_n is not")
        return max(q, 0.0)

    def objective(self, theta, cinv: CnInverse | None = None) -> float:
        """Q_n = n G' (C_n + delta I)^{-1} G; a supplied ``cinv`` freezes C_n."""
        g = self.scores(theta)
        G = g.mean(axis=0)
        if cinv is None:
            cinv = self.cn_inverse(g.T @ g / self.n)
        return self._q(G, cinv)

    def evaluate(self, theta, cinv: CnInverse | None = None, derivatives=True) -> QifState:
        """Objective plus, optionally, Gdot, gradients and Gauss-Newton Hessians.

        ``grad`` = 2n Gdot' W G and ``hess`` = 2n Gdot' W Gdot treat C_n as
        fixed. ``grad_full`` is the exact gradient of Q_n with C_n = C_n(theta),
        2n A' W G, and ``hess_full`` = 2n (A - B)' W (A - B) its Gauss-Newton
        Hessian, where with u = W G and w_i = g_i' u

            A = (1/n) sum_i (1 - w_i) gdot_i,   B = (1/n) sum_i g_i (gdot_i' u)'.

        Only second derivatives of g_i and an O(1) term are dropped. With a
        frozen ``cinv`` both reduce to the fixed-C versions. The ridge is held
        fixed throughout.
        """
        theta = np.asarray(theta, dtype=float)
        a, v, da, dv = self._observation_terms(theta, derivatives)
        if derivatives:
            g, rows = kernels.qif_rows(self.D, a, da, v, dv, self.starts, self.code, self.K)
        else:
            g = kernels.qif_scores(self.D, a, v, self.starts, self.code, self.K)
        G = g.mean(axis=0)
        C = g.T @ g / self.n
        frozen = cinv is not None
        if not frozen:
            cinv = self.cn_inverse(C)
        st = QifState(theta, self._q(G, cinv), G, C, cinv, g)
        if not derivatives:
            return st
        n, p, K = self.n, self.dim, self.K
        blocks = lambda jt: np.vstack([jt[:, k * p:(k + 1) * p] for k in range(K)])
        Gdot = blocks(self.D.T @ rows) / n
        wG = cinv.whiten(G)
        wGd = cinv.whiten(Gdot)
        st.Gdot = Gdot
        st.grad = 2.0 * n * (wGd.T @ wG)
        st.hess = 2.0 * n * (wGd.T @ wGd)
        if frozen:
            st.grad_full, st.hess_full = st.grad, st.hess
            return st
        u = cinv.solve(G)
        w = g @ u
        A = blocks((self.D * (1.0 - np.repeat(w, np.diff(self.starts)))[:, None]).T @ rows) / n
        # r_i = gdot_i' u, accumulated per observation then per cluster
        q = sum(rows[:, k * p:(k + 1) * p] * (self.D @ u[k * p:(k + 1) * p])[:, None] for k in range(K))
        r = np.add.reduceat(q, self.starts[:-1], axis=0)
        B = g.T @ r / n
        wAB = cinv.whiten(A - B)
        st.grad_full = 2.0 * n * (cinv.whiten(A).T @ wG)
        st.hess_full = 2.0 * n * (wAB.T @ wAB)
        return st

    def gradient(self, theta, cinv=None):
        return self.evaluate(theta, cinv).grad

    def hessian(self, theta, cinv=None):
        return self.evaluate(theta, cinv).hess

    def initial_estimate(self) -> np.ndarray:
        """Least squares for the Gaussian family, five working-independence IRLS steps otherwise."""
        D, y = self.D, self.y
        if self.family.name == "gaussian":
            return np.linalg.lstsq(D, y, rcond=None)[0]
        fam = self.family
        theta = np.zeros(self.dim)
        theta[0] = float(fam.link(np.clip(y.mean(), 0.01, 0.99)))
        jitter = 1e-8 * np.eye(self.dim)
        for _ in range(5):
            eta = D @ theta
            mu = fam.mu(eta)
            w = np.maximum(fam.mu_dot(eta) ** 2 / fam.variance(mu), 1e-12)
            zwork = eta + (y - mu) / np.maximum(fam.mu_dot(eta), 1e-12)
            A = D.T @ (D * w[:, None])
            theta = np.linalg.solve(A + jitter * np.trace(A) / self.dim, D.T @ (w * zwork))
        return theta


def newton_direction(H, g):
    """Solve (H + jitter) d = g with a tiny trace-scaled jitter; least squares if still singular."""
    dim = H.shape[0]
    if dim == 0:
        return np.zeros(0)
    tr = np.trace(H)
    Hj = H + 2.0 * HESS_JITTER * (tr / dim if tr > 0 else 1.0) * np.eye(dim)
    try:
        return np.linalg.solve(Hj, g)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(Hj, g, rcond=None)[0]


@dataclass
class UnpenalizedFit:
    theta: np.ndarray
    Q: float
    trace: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = True
    stalled: bool = False


def halving_step(theta, directions, f, F0, max_halvings, tol, index=None):
    """Step halving along candidate Newton directions until ``f`` does not exceed ``F0``.

    Every direction is first tried at full length. The first direction wins
    outright if its full step is accepted; otherwise they are halved in order
    of their full-step values, a later one only if the accepted trial moves
    theta by at most ``tol``. The better
    accepted trial wins. ``index`` restricts the update to those coordinates.
    Returns (theta, value) or None when no direction descends.
    """
    def trial_at(d, s):
        t = theta.copy()
        if index is None:
            t -= s * d
        else:
            t[index] -= s * d
        try:
            v = f(t)
        except (NumericError, SingularityError):
            v = np.inf
        return t, (v if np.isfinite(v) else np.inf)

    first = [(d, *trial_at(d, 1.0)) for d in directions]
    if first[0][2] > F0:
        first.sort(key=lambda item: item[2])
    best = None
    for d, t, v in first:
        s = 1.0
        for _ in range(max_halvings):
            if v <= F0:
                break
            s *= 0.5
            t, v = trial_at(d, s)
        if v <= F0 and (best is None or v < best[1]):
            best = (t, v)
        if best is not None and np.linalg.norm(best[0] - theta) > tol:
            break
    return best


def fit_unpenalized(problem: QIFProblem, config: FitConfig | None = None, theta0=None) -> UnpenalizedFit:
    """Gauss-Newton with step halving on Q_n.

    Each step is theta - s (H + jitter)^{-1} grad with s halved until Q_n
    does not increase. Two Newton directions compete: the Gauss-Newton one
    with C_n held at the current iterate, and the one from the exact gradient
    of Q_n including the dependence of C_n on theta; the one with the lower
    full-step Q_n is halved first (see :func:`halving_step`). C_n is
    re-evaluated at every iterate unless ``config.fixed_cn``. Stops when ||theta_{k+1} - theta_k|| <= tol; an
    iterate from which neither direction decreases Q_n ends the solve as
    stalled.
    """
    config = config or FitConfig()
    theta = problem.initial_estimate() if theta0 is None else np.array(theta0, dtype=float)
    fixed = problem.cn_inverse(problem.moments(theta)[1]) if config.fixed_cn else None
    st = problem.evaluate(theta, fixed)
    trace = [st.Q]

    def f(t):
        return problem.objective(t, fixed)

    for it in range(1, config.max_iter + 1):
        dirs = (lambda: newton_direction(st.hess, st.grad),
                lambda: newton_direction(st.hess_full, st.grad_full))
        res = halving_step(theta, [m() for m in dirs], f, st.Q, config.max_halvings, config.tol)
        if res is None:
            return UnpenalizedFit(theta, st.Q, trace, it, True, True)
        change = float(np.linalg.norm(res[0] - theta))
        theta = res[0]
        st = problem.evaluate(theta, fixed)
        trace.append(st.Q)
        if change <= config.tol:
            return UnpenalizedFit(theta, st.Q, trace, it, True)
    raise ConvergenceError(f"QIF did not converge in {config.max_iter} iterations", trace, theta)


def extract_alpha(theta, splines: SplineSystem, l: int, x, centering="empirical", x_train=None):
    """Fitted component alpha_l at points ``x``.

    ``centering="empirical"`` makes the training-sample mean zero (the centered
    basis already has zero training mean; passing ``x_train`` re-centers on
    those points explicitly). ``centering="integral"`` makes the integral over
    [0, 1] zero instead.
    """
    th = theta if isinstance(theta, Theta) else None
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0) or np.any(x > 1):
        raise DomainError("evaluation points must lie in [0, 1]")
    if th is None:
        J = splines.n_basis
        vec = np.asarray(theta, dtype=float)
        d_z = vec.size - splines.d_x * J
        gamma = vec[d_z + l * J: d_z + (l + 1) * J]
    else:
        gamma = th.gamma[l]
    vals = splines.basis(l, x) @ gamma
    if centering == "integral":
        vals = vals - splines.integrals(l) @ gamma
    elif centering == "empirical":
        if x_train is not None:
            vals = vals - (splines.basis(l, np.asarray(x_train, dtype=float)) @ gamma).mean()
    else:
        raise DomainError("centering must be 'empirical' or 'integral'")
    return vals


def beta_covariance(problem: QIFProblem, theta) -> np.ndarray:
    """Sandwich covariance of beta-hat, Psi^{-1} Omega Psi^{-1} / n.

    Z is profiled against the spline columns by ordinary least squares over all
    observations, Gamma_i^(k) = Delta A^{-1/2} M_k A^{-1/2} Delta at theta-hat,
    and the error covariance in W_i is replaced by the observed residuals, so
    W_i reduces to the extended score g_i(theta-hat).
    """
    theta = np.asarray(theta, dtype=float)
    d_z = problem.d_z
    Z = problem.D[:, :d_z]
    B = problem.D[:, d_z:]
    if B.shape[1]:
        Zhat = Z - B @ np.linalg.lstsq(B, Z, rcond=None)[0]
    else:
        Zhat = Z.copy()
    a, _, _, _ = problem._observation_terms(theta, False)
    aZ = a[:, None] * Zhat
    blocks = [problem.D.T @ (a[:, None] * aZ)]
    if problem.K == 2:
        blocks.append(problem.D.T @ (a[:, None] * apply_basis(aZ, problem.starts, problem.code)))
    J = np.vstack(blocks) / problem.n
    g = problem.scores(theta)
    cinv = problem.cn_inverse(g.T @ g / problem.n)
    wJ = cinv.whiten(J)
    Psi = wJ.T @ wJ
    if np.linalg.cond(Psi) > 1e14:
        raise SingularityError("Psi is singular; beta covariance undefined")
    proj = cinv.whiten(g.T).T @ wJ     # rows: J' W g_i
    Omega = proj.T @ proj / problem.n
    Pinv = np.linalg.inv(Psi)
    S = Pinv @ Omega @ Pinv / problem.n
    return 0.5 * (S + S.T)
