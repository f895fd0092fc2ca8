"""Polynomial spline bases on [0, 1]: knots, Cox-de Boor evaluation, centering, Gram matrices."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError


def knot_count(n: int, p: int) -> int:
    """Number of interior knots, the integer part of n ** (1 / (2p + 3)), at least 1."""
    if n < 1 or p < 1:
        raise DomainError("knot_count needs n >= 1 and p >= 1")
    e = 2 * p + 3
    k = int(math.floor(n ** (1.0 / e)))
    # guard the floating root against exact powers
    while (k + 1) ** e <= n:
        k += 1
    while k > 0 and k ** e > n:
        k -= 1
    return max(1, k)


def uniform_knots(n_interior: int) -> np.ndarray:
    """Boundary plus equally spaced interior knots: 0 = v_0 < ... < v_{N+1} = 1."""
    return np.linspace(0.0, 1.0, n_interior + 2)


def _augment(knots, p):
    knots = np.asarray(knots, dtype=float)
    return np.concatenate([np.repeat(knots[0], p), knots, np.repeat(knots[-1], p)])


def eval_raw_basis(x, knots, p: int) -> np.ndarray:
    """B-spline basis of degree ``p`` on the given knot sequence.

    ``knots`` holds the boundary and interior knots (0, v_1, ..., v_N, 1);
    boundary knots are repeated internally to give N + p + 1 functions.
    A scalar ``x`` returns a vector, an array returns one row per point.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    knots = np.asarray(knots, dtype=float)
    lo, hi = knots[0], knots[-1]
    if np.any(~np.isfinite(x)) or np.any(x < lo) or np.any(x > hi):
        raise DomainError("spline argument outside the knot range [0, 1]")
    t = _augment(knots, p)
    m = len(knots) + p - 1  # number of basis functions
    # span index mu with t[mu] <= x < t[mu+1]; the right end uses the last span
    mu = np.searchsorted(t, x, side="right") - 1
    mu = np.clip(mu, p, m - 1)

    vals = np.zeros((x.size, p + 1))
    vals[:, 0] = 1.0
    left = np.zeros((x.size, p + 1))
    right = np.zeros((x.size, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - t[mu + 1 - j]
        right[:, j] = t[mu + j] - x
        saved = np.zeros(x.size)
        for r in range(j):
            temp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved

    out = np.zeros((x.size, m))
    rows = np.arange(x.size)[:, None]
    out[rows, (mu - p)[:, None] + np.arange(p + 1)] = vals
    return out[0] if scalar else out


def center_columns(design):
    """Subtract empirical column means. Returns (centered, offsets)."""
    design = np.asarray(design, dtype=float)
    offsets = design.mean(axis=0)
    return design - offsets, offsets


def center_basis(raw, drop_first: bool = True):
    """Empirically centered basis for one covariate.

    The raw B-spline columns sum to one, so the first column is dropped
    before centering; the remaining N + p columns span the centered space.
    Returns (centered design, column offsets).
    """
    raw = np.asarray(raw, dtype=float)
    if drop_first:
        raw = raw[:, 1:]
    return center_columns(raw)


def gram_matrix(centered, sizes) -> np.ndarray:
    """K = (1/n) sum_i (1/T_i) sum_t b_it b_it^T for one covariate's centered rows."""
    centered = np.asarray(centered, dtype=float)
    sizes = np.asarray(sizes)
    w = np.repeat(1.0 / sizes, sizes) / len(sizes)
    K = centered.T @ (centered * w[:, None])
    return 0.5 * (K + K.T)


def group_norm(gamma, K) -> float:
    """Empirical norm of the spline with coefficients ``gamma``, sqrt(gamma' K gamma)."""
    q = float(gamma @ K @ gamma)
    return math.sqrt(max(q, 0.0))


@dataclass(frozen=True)
class SplineSystem:
    """Centered spline bases for every nonparametric covariate of one training sample."""

    knots: tuple          # per covariate, boundary + interior knots
    order: int            # polynomial degree p (spline order p + 1)
    offsets: np.ndarray   # (d_x, J_n) training means of the retained raw columns
    gram: np.ndarray      # (d_x, J_n, J_n)

    @classmethod
    def fit(cls, x, sizes, order: int = 1, n_interior: int | None = None) -> "SplineSystem":
        """Build knots, centering offsets and Gram matrices from training covariates."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        sizes = np.asarray(sizes)
        if n_interior is None:
            n_interior = knot_count(len(sizes), order)
        kn = uniform_knots(n_interior)
        knots, offsets, grams = [], [], []
        for l in range(x.shape[1]):
            cen, off = center_basis(eval_raw_basis(x[:, l], kn, order))
            knots.append(kn.copy())
            offsets.append(off)
            grams.append(gram_matrix(cen, sizes))
        J = n_interior + order
        offsets = np.array(offsets).reshape(x.shape[1], J)
        grams = np.array(grams).reshape(x.shape[1], J, J)
        return cls(tuple(knots), order, offsets, grams)

    @property
    def d_x(self) -> int:
        return len(self.knots)

    @property
    def n_interior(self) -> int:
        return len(self.knots[0]) - 2 if self.knots else 0

    @property
    def n_basis(self) -> int:
        return self.n_interior + self.order

    def basis(self, l: int, x) -> np.ndarray:
        """Centered basis of covariate ``l`` at points ``x``, shape (len(x), J_n)."""
        raw = eval_raw_basis(np.atleast_1d(x), self.knots[l], self.order)
        return raw[:, 1:] - self.offsets[l]

    def design(self, x) -> np.ndarray:
        """Spline block of the design: [B_1(x_1) | ... | B_dx(x_dx)]."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[1] != self.d_x:
            raise DomainError("covariate count does not match the spline system")
        if self.d_x == 0:
            return np.zeros((x.shape[0], 0))
        return np.hstack([self.basis(l, x[:, l]) for l in range(self.d_x)])

    def integrals(self, l: int) -> np.ndarray:
        """Exact integrals over [0, 1] of the centered basis functions of covariate ``l``."""
        t = _augment(self.knots[l], self.order)
        p = self.order
        raw = (t[p + 1:] - t[:-p - 1]) / (p + 1)
        return raw[1:] - self.offsets[l]

    def subset(self, cols) -> "SplineSystem":
        """System restricted to the covariates ``cols`` (same knots, offsets and Gram matrices)."""
        cols = [int(c) for c in cols]
        J = self.n_basis
        return SplineSystem(tuple(self.knots[c] for c in cols), self.order,
                            self.offsets[cols].reshape(len(cols), J),
                            self.gram[cols].reshape(len(cols), J, J))

    def norm(self, l: int, gamma) -> float:
        return group_norm(np.asarray(gamma, dtype=float), self.gram[l])
