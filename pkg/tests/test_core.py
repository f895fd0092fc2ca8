import numpy as np
import pytest
from hypothesis import given, strategies as st

from gaplm.core import (ClusterDataset, DimensionError, DomainError, FitConfig, Theta, pack,
                        unpack, validate_dataset)
from gaplm.simulate import generate


def _ds(x, y=None, z=None):
    x = np.asarray(x, dtype=float)
    T = x.shape[0]
    y = np.zeros(T) if y is None else y
    z = np.ones((T, 1)) if z is None else z
    return ClusterDataset.from_arrays(y, x, z, [T])


def test_x_out_of_range_reported():
    rep = validate_dataset(_ds([[0.2], [1.2]]))
    assert not rep.ok
    assert any("X out of range" in v for v in rep.violations)


def test_valid_dataset_passes():
    assert validate_dataset(_ds([[0.2], [0.9]])).ok


def test_dimension_mismatch_reported():
    from gaplm.core import Cluster
    c = Cluster(np.zeros(3), np.zeros((2, 1)), np.ones((2, 1)))
    rep = validate_dataset(ClusterDataset((c,), 1, 1))
    assert any("dimension mismatch" in v for v in rep.violations)


def test_missing_intercept_reported():
    rep = validate_dataset(_ds([[0.2], [0.4]], z=np.array([[1.0], [2.0]])))
    assert any("intercept" in v for v in rep.violations)


def test_dataset_arrays_read_only():
    ds = _ds([[0.2], [0.4]])
    with pytest.raises(ValueError):
        ds.clusters[0].y[0] = 1.0


def test_pack_example():
    np.testing.assert_array_equal(pack(Theta([1, 2], [[3, 4]])), [1, 2, 3, 4])


def test_zero_roundtrip():
    th = unpack(np.zeros(7), 3, 2, 2)
    np.testing.assert_array_equal(pack(th), np.zeros(7))


def test_unpack_length_mismatch():
    with pytest.raises(DimensionError):
        unpack(np.zeros(5), 2, 1, 2)


@given(st.integers(1, 6), st.integers(0, 5), st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_pack_unpack_bijection(d_z, d_x, J, seed):
    v = np.random.default_rng(seed).standard_normal(d_z + d_x * J)
    th = unpack(v, d_z, d_x, J)
    np.testing.assert_array_equal(pack(th), v)
    th2 = unpack(pack(th), d_z, d_x, J)
    np.testing.assert_array_equal(th2.beta, th.beta)
    for a, b in zip(th2.gamma, th.gamma):
        np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("kw", [dict(scad_a=2.0), dict(eps=0.0), dict(tol=-1.0),
                                dict(structure="AR2"), dict(family="poisson"),
                                dict(lambdas=(-1.0,)), dict(order=0)])
def test_config_rejects_invalid(kw):
    with pytest.raises(DomainError):
        FitConfig(**kw)


def test_config_defaults():
    c = FitConfig()
    assert (c.scad_a, c.eps, c.tol) == (3.7, 1e-6, 1e-6)


@pytest.mark.parametrize("design,n", [("example1", 50), ("example2", 30), ("example3", 20)])
def test_generated_datasets_validate(design, n):
    ds, _ = generate(design, n, 3)
    assert validate_dataset(ds).ok
