"""Shared records: clustered datasets, packed parameter vectors, fit configuration."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np


class GaplmError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(GaplmError, ValueError):
    pass


class DomainError(GaplmError, ValueError):
    pass


class NumericError(GaplmError, FloatingPointError):
    pass


class SingularityError(GaplmError, np.linalg.LinAlgError):
    pass


class CapabilityError(GaplmError, NotImplementedError):
    pass


class GenerationError(GaplmError, RuntimeError):
    pass


class ConvergenceError(GaplmError, RuntimeError):
    """Solver hit its iteration cap. ``trace`` holds the objective per iteration."""

    def __init__(self, message, trace=None, theta=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
        self.theta = theta


class Cluster(NamedTuple):
    y: np.ndarray  # (T,)
    x: np.ndarray  # (T, d_x)
    z: np.ndarray  # (T, d_z)


def _frozen(a, ndim):
    a = np.array(a, dtype=float, copy=True)
    if ndim == 2 and a.ndim == 1:
        a = a[:, None]
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ClusterDataset:
    """n clusters of (Y_i, X_i, Z_i) with X in [0, 1] and an intercept in Z.

    Cluster sizes may differ. Arrays are copied and made read-only on
    construction; ``stacked`` concatenates them observation-wise.
    """

    clusters: tuple
    d_x: int
    d_z: int

    def __post_init__(self):
        cl = tuple(Cluster(_frozen(c[0], 1), _frozen(c[1], 2), _frozen(c[2], 2))
                   for c in self.clusters)
        object.__setattr__(self, "clusters", cl)

    @classmethod
    def from_arrays(cls, y, x, z, sizes):
        """Split observation-stacked arrays into clusters of the given sizes."""
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if z.ndim == 1:
            z = z[:, None]
        sizes = np.asarray(sizes, dtype=np.int64)
        if sizes.sum() != len(y) or len(x) != len(y) or len(z) != len(y):
            raise DimensionError("sizes do not match the stacked arrays")
        edges = np.concatenate([[0], np.cumsum(sizes)])
        cl = tuple(Cluster(y[a:b], x[a:b], z[a:b]) for a, b in zip(edges[:-1], edges[1:]))
        return cls(cl, x.shape[1], z.shape[1])

    @property
    def n(self) -> int:
        return len(self.clusters)

    @cached_property
    def sizes(self) -> np.ndarray:
        s = np.array([len(c.y) for c in self.clusters], dtype=np.int64)
        s.setflags(write=False)
        return s

    @cached_property
    def starts(self) -> np.ndarray:
        """Cluster offsets into the stacked arrays, length n + 1."""
        s = np.concatenate([[0], np.cumsum(self.sizes)]).astype(np.int64)
        s.setflags(write=False)
        return s

    @cached_property
    def stacked(self):
        """(y, x, z) concatenated over clusters."""
        y = np.concatenate([c.y for c in self.clusters])
        x = np.vstack([c.x for c in self.clusters])
        z = np.vstack([c.z for c in self.clusters])
        for a in (y, x, z):
            a.setflags(write=False)
        return y, x, z

    @property
    def n_obs(self) -> int:
        return int(self.sizes.sum())

    def subset_columns(self, x_cols: Sequence[int], z_cols: Sequence[int]) -> "ClusterDataset":
        x_cols, z_cols = list(x_cols), list(z_cols)
        cl = tuple(Cluster(c.y, c.x[:, x_cols], c.z[:, z_cols]) for c in self.clusters)
        return ClusterDataset(cl, len(x_cols), len(z_cols))


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def validate_dataset(ds: ClusterDataset) -> ValidationReport:
    """Check cluster shapes, the [0, 1] range of X and the intercept column of Z."""
    out = []
    if ds.n < 1:
        out.append("dataset has no clusters")
    for i, c in enumerate(ds.clusters):
        T = len(c.y)
        if T < 1:
            out.append(f"cluster {i}: empty cluster")
            continue
        if c.x.shape != (T, ds.d_x) or c.z.shape != (T, ds.d_z):
            out.append(f"cluster {i}: dimension mismatch (y has {T} rows, "
                       f"x {c.x.shape}, z {c.z.shape}, expected d_x={ds.d_x}, d_z={ds.d_z})")
            continue
        if not (np.all(np.isfinite(c.y)) and np.all(np.isfinite(c.x)) and np.all(np.isfinite(c.z))):
            out.append(f"cluster {i}: non-finite values")
            continue
        if ds.d_x and (c.x.min() < 0.0 or c.x.max() > 1.0):
            out.append(f"cluster {i}: X out of range [0, 1]")
        if ds.d_z < 1 or not np.all(c.z[:, 0] == 1.0):
            out.append(f"cluster {i}: missing intercept (first Z column must be 1)")
    return ValidationReport(tuple(out))


@dataclass(frozen=True)
class Theta:
    """theta = (beta, gamma_1, ..., gamma_dx); each gamma_l has J_n entries."""

    beta: np.ndarray
    gamma: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).ravel())
        object.__setattr__(self, "gamma", tuple(np.asarray(g, dtype=float).ravel()
                                                for g in self.gamma))

    @property
    def d_z(self):
        return self.beta.size

    @property
    def d_x(self):
        return len(self.gamma)

    @property
    def n_basis(self):
        return self.gamma[0].size if self.gamma else 0


def pack(theta: Theta) -> np.ndarray:
    sizes = {g.size for g in theta.gamma}
    if len(sizes) > 1:
        raise DimensionError("all gamma blocks must have the same length")
    return np.concatenate([theta.beta, *theta.gamma]) if theta.gamma else theta.beta.copy()


def unpack(vec, d_z: int, d_x: int, n_basis: int) -> Theta:
    vec = np.asarray(vec, dtype=float).ravel()
    if vec.size != d_z + d_x * n_basis:
        raise DimensionError(f"vector of length {vec.size} does not match "
                             f"d_z + d_x*J_n = {d_z} + {d_x}*{n_basis}")
    gam = tuple(vec[d_z + l * n_basis: d_z + (l + 1) * n_basis].copy() for l in range(d_x))
    return Theta(vec[:d_z].copy(), gam)


STRUCTURES = ("IND", "EC", "AR1")
FAMILIES = ("gaussian", "binomial")
PENALTIES = ("SCAD", "LASSO", "none")


@dataclass(frozen=True)
class FitConfig:
    """Options shared by the unpenalized, penalized and lambda-path solvers.

    ``ridge=None`` regularizes C_n with 1e-8 * trace(C_n) / dim; ``ridge=0``
    switches to a pseudo-inverse with relative eigenvalue cutoff 1e-10; any
    positive value is used as an absolute ridge.
    """

    order: int = 1
    structure: str = "EC"
    family: str = "gaussian"
    lambdas: tuple | None = None
    penalty: str = "SCAD"
    scad_a: float = 3.7
    eps: float = 1e-6
    tol: float = 1e-6
    max_iter: int = 500
    ridge: float | None = None
    fixed_cn: bool = False
    max_halvings: int = 30
    unpenalized_z: tuple = (0,)
    n_interior: int | None = None
    n_lambda: int = 30
    lambda_ratio: float = 1e-3
    ebic: str = "auto"
    warm_start: bool = True

    def __post_init__(self):
        if int(self.order) < 1:
            raise DomainError("spline order p must be >= 1")
        if self.structure not in STRUCTURES:
            raise DomainError(f"structure must be one of {STRUCTURES}")
        if self.family not in FAMILIES:
            raise DomainError(f"family must be one of {FAMILIES}")
        if self.penalty not in PENALTIES:
            raise DomainError(f"penalty must be one of {PENALTIES}")
        if not self.scad_a > 2:
            raise DomainError("scad_a must exceed 2")
        if not self.eps > 0 or not self.tol > 0:
            raise DomainError("eps and tol must be positive")
        if self.ridge is not None and self.ridge < 0:
            raise DomainError("ridge must be nonnegative")
        if self.lambdas is not None:
            lam = tuple(float(v) for v in self.lambdas)
            if not lam or min(lam) < 0:
                raise DomainError("lambda grid must be nonempty and nonnegative")
            object.__setattr__(self, "lambdas", lam)
        if self.ebic not in ("auto", "qif", "likelihood"):
            raise DomainError("ebic must be 'auto', 'qif' or 'likelihood'")
        if 0 not in self.unpenalized_z:
            raise DomainError("the intercept (z column 0) is never penalized")
