import os
import subprocess
import sys

import numpy as np
import pytest

from gaplm import kernels
from gaplm._kernels_py import apply_basis
from gaplm.correlation import STRUCTURE_CODES, basis_matrices
from gaplm.qif import QIFProblem
from gaplm.splines import SplineSystem

from conftest import random_dataset

try:
    kernels.get_backend("cython")
    HAVE_EXT = True
except ImportError:
    HAVE_EXT = False


def _inputs(rng, family, structure, unequal):
    ds = random_dataset(rng, n=25, T=6, family=family, unequal=unequal)
    _, x, _ = ds.stacked
    prob = QIFProblem(ds, SplineSystem.fit(x, ds.sizes), structure, family)
    theta = 0.3 * rng.standard_normal(prob.dim)
    a, v, da, dv = prob._observation_terms(theta, True)
    return prob, (prob.D, a, da, v, dv, prob.starts, prob.code, prob.K)


@pytest.mark.parametrize("code,structure", [(1, "EC"), (2, "AR1")])
def test_apply_basis_matches_matrices(rng, code, structure):
    sizes = np.array([1, 3, 5, 2])
    starts = np.concatenate([[0], np.cumsum(sizes)])
    v = rng.standard_normal((sizes.sum(), 3))
    out = apply_basis(v, starts, code)
    for i, T in enumerate(sizes):
        Ms = basis_matrices(structure, T)
        M = Ms[1] if len(Ms) == 2 else np.zeros((T, T))
        np.testing.assert_allclose(out[starts[i]:starts[i + 1]], M @ v[starts[i]:starts[i + 1]],
                                   atol=1e-14)
    np.testing.assert_allclose(apply_basis(v[:, 0], starts, code), out[:, 0])


@pytest.mark.skipif(not HAVE_EXT, reason="compiled extension not built")
@pytest.mark.parametrize("family", ["gaussian", "binomial"])
@pytest.mark.parametrize("structure", ["IND", "EC", "AR1"])
@pytest.mark.parametrize("unequal", [False, True])
def test_backend_parity(rng, family, structure, unequal):
    _, args = _inputs(rng, family, structure, unequal)
    py, cy = kernels.get_backend("python"), kernels.get_backend("cython")
    s1, j1 = py.qif_blocks(*args)
    s2, j2 = cy.qif_blocks(*args)
    scale = max(1.0, np.abs(j1).max())
    np.testing.assert_allclose(s2, s1, atol=1e-12 * max(1.0, np.abs(s1).max()))
    np.testing.assert_allclose(j2, j1, atol=1e-12 * scale)
    D, a, da, v, dv, starts, code, K = args
    np.testing.assert_allclose(cy.qif_scores(D, a, v, starts, code, K),
                               py.qif_scores(D, a, v, starts, code, K), atol=1e-12)


@pytest.mark.parametrize("structure", ["EC", "AR1"])
def test_jacobian_is_derivative_of_score_sum(rng, structure):
    prob, args = _inputs(rng, "binomial", structure, True)
    theta = 0.3 * rng.standard_normal(prob.dim)
    a, v, da, dv = prob._observation_terms(theta, True)
    _, jac = kernels.qif_blocks(prob.D, a, da, v, dv, prob.starts, prob.code, prob.K)
    h = 1e-6
    for j in range(0, prob.dim, 3):
        e = np.zeros(prob.dim)
        e[j] = h
        fd = (prob.scores(theta + e).sum(axis=0) - prob.scores(theta - e).sum(axis=0)) / (2 * h)
        np.testing.assert_allclose(jac[:, j], fd, rtol=1e-5, atol=1e-7)


def test_structure_codes():
    assert STRUCTURE_CODES == {"IND": 0, "EC": 1, "AR1": 2}


def test_pure_python_switch():
    env = dict(os.environ, GAPLM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import gaplm.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
