"""Basis matrices M_1..M_K whose span approximates the inverse working correlation."""
from __future__ import annotations

import numpy as np

from .core import STRUCTURES, DomainError

# integer codes shared with the compiled kernels
STRUCTURE_CODES = {"IND": 0, "EC": 1, "AR1": 2}


def basis_matrices(structure: str, T: int) -> list:
    """M_1 = I_T plus, for EC, the all-ones-off-diagonal matrix, or for AR1
    the first sub/super-diagonal indicator. Size-one clusters get [I_1] only.
    """
    if structure not in STRUCTURES:
        raise DomainError(f"unknown working structure {structure!r}")
    if T < 1:
        raise DomainError("cluster size must be at least 1")
    eye = np.eye(T)
    if structure == "IND" or T == 1:
        return [eye]
    if structure == "EC":
        return [eye, np.ones((T, T)) - eye]
    off = np.eye(T, k=1) + np.eye(T, k=-1)
    return [eye, off]


def n_basis_matrices(structure: str, max_size: int) -> int:
    """K for a dataset whose largest cluster has ``max_size`` observations."""
    if structure not in STRUCTURES:
        raise DomainError(f"unknown working structure {structure!r}")
    return 1 if structure == "IND" or max_size <= 1 else 2


def ec_inverse_coeffs(rho: float, T: int):
    """(a1, a2) with a1*I + a2*M_2 equal to the inverse exchangeable correlation.

    R = (1 - rho) I + rho 11' inverts by Sherman-Morrison; this is the
    closed form with k1 = (T-1) rho^2 - (T-2) rho - 1.
    """
    if T < 1:
        raise DomainError("T must be at least 1")
    if T == 1:
        return 1.0, 0.0
    if not (-1.0 / (T - 1) < rho < 1.0):
        raise DomainError(f"exchangeable correlation {rho} is singular for T={T}")
    k1 = (T - 1) * rho ** 2 - (T - 2) * rho - 1.0
    return -((T - 2) * rho + 1.0) / k1, rho / k1


def exchangeable(rho: float, T: int) -> np.ndarray:
    return (1.0 - rho) * np.eye(T) + rho * np.ones((T, T))


def ar1(rho: float, T: int) -> np.ndarray:
    idx = np.arange(T)
    return rho ** np.abs(idx[:, None] - idx[None, :])
