import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from gaplm.core import DomainError, GenerationError
from gaplm.simulate import (ALPHAS, binary_correlation, bvn_excess, calibrate_latent,
                            draw_dichotomized, example_dims, gen_example1, gen_example2,
                            gen_example3, gen_random_correlation, generate, random_orthogonal)


@pytest.mark.parametrize("n, d", [(100, 6), (200, 8), (500, 10)])
def test_published_dims(n, d):
    assert example_dims(n) == d
    ds, truth = gen_example1(n, 0, responses=False)
    assert ds.d_x == d and ds.d_z == d and truth.d_x == d


def test_example1_truth():
    ds, truth = gen_example1(100, 1)
    assert truth.true_x == {0, 1} and truth.true_z == {0, 1}
    np.testing.assert_array_equal(truth.beta[:2], [1.0, 2.0])
    _, x, z = ds.stacked
    assert np.all(z[:, 0] == 1.0)
    assert x.min() >= 0.0 and x.max() <= 1.0
    assert np.all(ds.sizes == 5)


def test_example1_error_correlation():
    # 20000 clusters x 5 times = 10^5 error draws
    ds, truth = gen_example1(20000, 11)
    y, x, z = ds.stacked
    e = (y - truth.eta(x, z)).reshape(-1, 5)
    r = np.corrcoef(e, rowvar=False)
    off = r[np.triu_indices(5, 1)]
    assert abs(off.mean() - 0.7) <= 0.01
    assert np.all(np.abs(off - 0.7) <= 0.02)
    assert abs(e.var() - 1.5) <= 0.03


def test_same_seed_same_data():
    a, _ = gen_example1(50, 3)
    b, _ = gen_example1(50, 3)
    for u, v in zip(a.stacked, b.stacked):
        np.testing.assert_array_equal(u, v)
    c, _ = gen_example1(50, 4)
    assert not np.array_equal(a.stacked[0], c.stacked[0])


def test_z_covariance():
    ds, _ = gen_example1(4000, 5, responses=False)
    z = ds.stacked[2][:, 1:]
    c = np.cov(z, rowvar=False)
    np.testing.assert_allclose(np.diag(c), 1.0, atol=0.03)
    np.testing.assert_allclose(np.diag(c, 1), 0.7, atol=0.03)
    np.testing.assert_allclose(np.diag(c, 2), 0.49, atol=0.03)


def test_random_correlation_1000_seeds():
    for seed in range(1000):
        G = gen_random_correlation(4, seed)
        np.testing.assert_array_equal(np.diag(G), 1.0)
        assert np.array_equal(G, G.T)
        assert np.linalg.eigvalsh(G).min() > 0


@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_random_orthogonal(T, seed):
    Q = random_orthogonal(T, np.random.default_rng(seed))
    assert np.abs(Q.T @ Q - np.eye(T)).max() <= 1e-10


def test_random_correlation_needs_two():
    with pytest.raises(DomainError):
        gen_random_correlation(1, 0)


def test_example2_draws_a_new_correlation():
    a = gen_example2(30, 1)[1].corr
    b = gen_example2(30, 2)[1].corr
    assert a.shape == (3, 3) and not np.allclose(a, b)
    ds, truth = gen_example2(30, 1)
    assert (ds.d_x, ds.d_z) == (9, 5) and truth.true_x == {0, 1}


@pytest.mark.parametrize("name", ["sin", "quad", "cos4", "zero"])
def test_components_integrate_to_zero(name):
    val, _ = integrate.quad(ALPHAS[name], 0.0, 1.0, epsabs=1e-13)
    assert abs(val) <= 1e-10


@given(st.floats(-2.5, 2.5), st.floats(-2.5, 2.5), st.floats(-0.95, 0.95))
def test_bvn_excess_matches_scipy(h, k, rho):
    ref = stats.multivariate_normal(cov=[[1.0, rho], [rho, 1.0]]).cdf([h, k])
    ref -= stats.norm.cdf(h) * stats.norm.cdf(k)
    assert bvn_excess(h, k, rho) == pytest.approx(ref, abs=1e-6)


def test_bvn_excess_zero_rho():
    assert bvn_excess(0.3, -1.2, 0.0) == 0.0


def _binary_draws(n_clusters=10, T=20, reps=100_000, seed=0):
    ds, truth = gen_example3(seed, n=n_clusters, T=T, responses=False)
    _, x, z = ds.stacked
    p = truth.mean(x, z).reshape(n_clusters, T)
    rho = calibrate_latent(p, 0.3)
    rng = np.random.default_rng(seed + 1)
    pp = np.repeat(p, reps, axis=0)
    y = draw_dichotomized(pp, np.repeat(rho, reps), rng).reshape(n_clusters, reps, T)
    return p, rho, y


def _mean_pairwise(y):
    iu = np.triu_indices(y.shape[-1], 1)
    return np.mean([np.corrcoef(c, rowvar=False)[iu].mean() for c in y])


def test_example3_binary_moments():
    p, rho, y = _binary_draws()
    assert np.abs(y.mean(axis=1) - p).max() <= 0.01
    assert abs(_mean_pairwise(y) - 0.3) <= 0.01
    np.testing.assert_allclose(binary_correlation(p, rho), 0.3, atol=1e-8)


def test_zero_latent_correlation_independent():
    rng = np.random.default_rng(2)
    p = np.full((100_000, 6), 0.4)
    y = draw_dichotomized(p, np.zeros(100_000), rng)
    r = np.corrcoef(y, rowvar=False)[np.triu_indices(6, 1)]
    assert np.abs(r).max() <= 0.01


def test_infeasible_binary_correlation():
    with pytest.raises(GenerationError):
        calibrate_latent(np.array([[0.999, 0.001, 0.5]]), 0.3)


def test_example3_shape_and_truth():
    ds, truth = generate("example3", 30, 7)
    assert (ds.d_x, ds.d_z) == (5, 10) and np.all(ds.sizes == 20)
    assert set(np.unique(ds.stacked[0])) <= {0.0, 1.0}
    assert truth.true_x == {0} and truth.true_z == {0} and truth.family == "binomial"


def test_unknown_design():
    with pytest.raises(DomainError):
        generate("example9", 10)
