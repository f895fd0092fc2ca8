"""Simulation designs: Gaussian additive partial linear data with exchangeable or
random within-cluster correlation, and correlated binary data via a dichotomized
Gaussian."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .core import ClusterDataset, DomainError, GenerationError
from .correlation import ar1, exchangeable


# true component functions; module level so truths pickle across processes
def alpha_sin(x):
    return np.sin(2.0 * np.pi * x)


def alpha_quad(x):
    return 8.0 * x * (1.0 - x) - 4.0 / 3.0


def alpha_cos4(x):
    return np.cos(2.0 * np.pi * x) / 4.0


def alpha_zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


ALPHAS = {"sin": alpha_sin, "quad": alpha_quad, "cos4": alpha_cos4, "zero": alpha_zero}


@dataclass(frozen=True)
class SimTruth:
    """Generating model: component names per X column, beta, family and the true index sets."""

    design: str
    alphas: tuple
    beta: np.ndarray
    family: str
    T: int
    corr: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def d_x(self):
        return len(self.alphas)

    @property
    def d_z(self):
        return self.beta.size

    @property
    def true_x(self):
        return frozenset(l for l, a in enumerate(self.alphas) if a != "zero")

    @property
    def true_z(self):
        return frozenset(int(j) for j in np.flatnonzero(self.beta))

    def additive(self, x):
        """Sum of the true components at the rows of ``x`` (N, d_x)."""
        x = np.atleast_2d(x)
        out = np.zeros(x.shape[0])
        for l, name in enumerate(self.alphas):
            if name != "zero":
                out += ALPHAS[name](x[:, l])
        return out

    def eta(self, x, z):
        return self.additive(x) + np.asarray(z) @ self.beta

    def mean(self, x, z):
        eta = self.eta(x, z)
        return special.expit(eta) if self.family == "binomial" else eta


# published dimensions; 2 * 500^(1/4) = 9.46 would round to 9
_PUBLISHED_DIMS = {100: 6, 200: 8, 500: 10}


def example_dims(n):
    """d_x = d_z = round(2 n^(1/4)) for the Gaussian design (6, 8, 10 at n = 100, 200, 500)."""
    if n in _PUBLISHED_DIMS:
        return _PUBLISHED_DIMS[n]
    return int(np.floor(2.0 * n ** 0.25 + 0.5))


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def gen_covariates(rng, n, T, d_x, d_z, rho_z=0.7):
    """X^(l) = (2 W^(l) + U) / 3 with W, U uniform; Z = (1, AR-1(rho_z) Gaussian)."""
    N = n * T
    W = rng.random((N, d_x))
    U = rng.random((N, 1))
    x = (2.0 * W + U) / 3.0
    z = np.ones((N, d_z))
    if d_z > 1:
        L = np.linalg.cholesky(ar1(rho_z, d_z - 1))
        z[:, 1:] = rng.standard_normal((N, d_z - 1)) @ L.T
    return x, z


def test_covariates(truth: SimTruth, n, seed=None):
    """Fresh (x, z) rows for n clusters from the covariate law of ``truth``'s design."""
    return gen_covariates(_rng(seed), n, truth.T, truth.d_x, truth.d_z)


def _gaussian_errors(rng, n, corr, sigma2):
    L = np.linalg.cholesky(sigma2 * corr)
    return (rng.standard_normal((n, corr.shape[0])) @ L.T).ravel()


def gen_example1(n, seed=None, T=5, sigma2=1.5, rho=0.7, responses=True):
    """Gaussian design with d_x = d_z = round(2 n^(1/4)) and exchangeable errors.

    alpha_1 = sin(2 pi x), alpha_2 = 8x(1-x) - 4/3, beta = (1, 2, 0, ...)
    with beta_1 the intercept.

    Returns
    -------
    (ClusterDataset, SimTruth)
    """
    if n < 1:
        raise DomainError("n must be positive")
    d = example_dims(n)
    rng = _rng(seed)
    beta = np.zeros(d)
    beta[:2] = (1.0, 2.0)
    alphas = ("sin", "quad") + ("zero",) * (d - 2)
    corr = exchangeable(rho, T)
    truth = SimTruth("example1", alphas, beta, "gaussian", T, corr, {"sigma2": sigma2})
    x, z = gen_covariates(rng, n, T, d, d)
    y = truth.eta(x, z)
    if responses:
        y = y + _gaussian_errors(rng, n, corr, sigma2)
    return ClusterDataset.from_arrays(y, x, z, np.full(n, T)), truth


def random_orthogonal(T, rng):
    """Orthonormalize a Gaussian matrix (QR with sign fix, Haar distributed)."""
    A = rng.standard_normal((T, T))
    Q, R = np.linalg.qr(A)
    return Q * np.sign(np.diag(R))


def gen_random_correlation(T, seed=None):
    """Gamma = Delta (Sigma_1 + Q Lambda Q^T) Delta with unit diagonal.

    Sigma_1 has unit diagonal and 0.5 off-diagonal, Q is a random orthogonal
    matrix and Lambda has Uniform[0.2, 2] entries.
    """
    if T < 2:
        raise DomainError("T must be at least 2")
    rng = _rng(seed)
    Q = random_orthogonal(T, rng)
    lam = rng.uniform(0.2, 2.0, T)
    S = exchangeable(0.5, T) + (Q * lam) @ Q.T
    d = 1.0 / np.sqrt(np.diag(S))
    G = S * np.outer(d, d)
    G = 0.5 * (G + G.T)
    np.fill_diagonal(G, 1.0)
    return G


def gen_example2(n, seed=None, T=3, d_x=9, d_z=5, sigma2=1.5, responses=True):
    """Example-1 covariates and components with a random error correlation per call."""
    rng = _rng(seed)
    corr = gen_random_correlation(T, rng)
    beta = np.zeros(d_z)
    beta[:2] = (1.0, 2.0)
    alphas = ("sin", "quad") + ("zero",) * (d_x - 2)
    truth = SimTruth("example2", alphas, beta, "gaussian", T, corr, {"sigma2": sigma2})
    x, z = gen_covariates(rng, n, T, d_x, d_z)
    y = truth.eta(x, z)
    if responses:
        y = y + _gaussian_errors(rng, n, corr, sigma2)
    return ClusterDataset.from_arrays(y, x, z, np.full(n, T)), truth


# Gauss-Legendre nodes on [0, 1] for the bivariate normal orthant integral
_GL_X, _GL_W = np.polynomial.legendre.leggauss(40)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def bvn_excess(h, k, rho):
    """Phi_2(h, k; rho) - Phi(h) Phi(k), broadcasting over h, k and rho.

    Uses d/dr Phi_2(h, k; r) = phi_2(h, k; r) integrated from 0 to rho.
    """
    h, k, rho = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (h, k, rho)))
    r = rho[..., None] * _GL_X
    om = 1.0 - r * r
    f = np.exp(-(h[..., None] ** 2 - 2.0 * r * h[..., None] * k[..., None]
                 + k[..., None] ** 2) / (2.0 * om)) / np.sqrt(om)
    return rho * (f @ _GL_W) / (2.0 * np.pi)


def binary_correlation(p, rho):
    """Mean pairwise correlation of dichotomized-Gaussian binaries with marginals
    ``p`` (..., T) and latent exchangeable correlation ``rho`` (...)."""
    p = np.asarray(p, dtype=float)
    T = p.shape[-1]
    iu, ju = np.triu_indices(T, 1)
    h = stats.norm.ppf(p)
    cov = bvn_excess(h[..., iu], h[..., ju], np.asarray(rho, dtype=float)[..., None])
    sd = np.sqrt(p * (1.0 - p))
    return (cov / (sd[..., iu] * sd[..., ju])).mean(axis=-1)


def calibrate_latent(p, target=0.3, tol=1e-10, max_iter=80):
    """Per-cluster latent exchangeable correlation giving mean binary correlation ``target``.

    ``p`` is (n, T). Bisection on [0, 1); raises GenerationError if the
    target is unreachable.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    n = p.shape[0]
    if target == 0 or p.shape[1] < 2:
        return np.zeros(n)
    hi_cap = 1.0 - 1e-9
    if binary_correlation(p, np.full(n, hi_cap)).min() < target:
        raise GenerationError(f"binary correlation {target} is infeasible for these marginals")
    lo = np.zeros(n)
    hi = np.full(n, hi_cap)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        above = binary_correlation(p, mid) > target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
        if np.max(hi - lo) < tol:
            break
    return 0.5 * (lo + hi)


def draw_dichotomized(p, rho, rng):
    """One correlated binary vector per row of ``p`` with latent exchangeable ``rho``.

    Latent L = sqrt(rho) S + sqrt(1 - rho) E; Y = 1 iff L < Phi^{-1}(p).
    """
    p = np.atleast_2d(p)
    n, T = p.shape
    rho = np.asarray(rho, dtype=float).reshape(-1, 1)
    lat = np.sqrt(rho) * rng.standard_normal((n, 1)) + np.sqrt(1.0 - rho) * rng.standard_normal((n, T))
    return (lat < stats.norm.ppf(p)).astype(float)


def gen_example3(seed=None, n=250, T=20, d_x=5, d_z=10, corr=0.3, responses=True):
    """Binary marginal logit design, alpha_1 = cos(2 pi x)/4, beta_1 = 1 (intercept).

    Responses are exchangeably correlated with pairwise binary correlation
    ``corr`` on average within each cluster.
    """
    rng = _rng(seed)
    beta = np.zeros(d_z)
    beta[0] = 1.0
    alphas = ("cos4",) + ("zero",) * (d_x - 1)
    truth = SimTruth("example3", alphas, beta, "binomial", T, None, {"binary_corr": corr})
    x, z = gen_covariates(rng, n, T, d_x, d_z)
    if responses:
        p = truth.mean(x, z).reshape(n, T)
        rho = calibrate_latent(p, corr)
        y = draw_dichotomized(p, rho, rng).ravel()
    else:
        y = np.zeros(n * T)
    return ClusterDataset.from_arrays(y, x, z, np.full(n, T)), truth


DESIGNS = {"example1": gen_example1, "example2": gen_example2, "example3": gen_example3}


def generate(design, n, seed=None, responses=True, **kw):
    """Dispatch by design name; ``n`` is the number of clusters."""
    if design == "example3":
        return gen_example3(seed, n=n, responses=responses, **kw)
    if design not in DESIGNS:
        raise DomainError(f"unknown design {design!r}")
    return DESIGNS[design](n, seed, responses=responses, **kw)
