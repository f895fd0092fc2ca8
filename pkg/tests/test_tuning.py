import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gaplm.core import CapabilityError, ClusterDataset, ConvergenceError, FitConfig
from gaplm.penalty import PenalizedFit, fit_penalized
from gaplm.qif import QIFProblem, fit_unpenalized
from gaplm.simulate import gen_example1
from gaplm.splines import SplineSystem
from gaplm.tuning import (ebic_from_parts, ebic_likelihood, ebic_qif, lambda_max, log_binom,
                          neg2_loglik, select_lambda)



def _fit(Q, dz_hat, dx_hat, theta=None):
    return PenalizedFit(np.zeros(1) if theta is None else theta, 0.0, tuple(range(dz_hat)),
                        tuple(range(dx_hat)), (0,), Q, Q)


def test_all_selected_nu_zero():
    r = ebic_from_parts(3.0, 100, 2, 5, 4, 5, 4)
    assert r.log_nu_z == 0.0 and r.log_nu_x == 0.0


def test_log45():
    r = ebic_from_parts(0.0, 100, 2, 10, 4, 2, 0)
    assert r.log_nu_z == pytest.approx(math.log(45), abs=1e-12)


def test_nothing_selected_is_q():
    assert ebic_qif(_fit(7.25, 0, 0), 200, 2, 7, 8) == 7.25


def test_ebic_qif_terms():
    v = ebic_qif(_fit(4.0, 2, 1), 200, 3, 7, 8)
    ref = 4.0 + 2 * math.log(200) + math.log(21) + 3 * math.log(200) + 3 * math.log(8)
    assert v == pytest.approx(ref, abs=1e-12)


@given(st.floats(0, 1e4), st.integers(1, 500), st.integers(1, 5), st.integers(0, 120),
       st.integers(0, 60), st.data())
def test_recompute_exact(value, n, N_n, d_z, d_x, data):
    dz_hat = data.draw(st.integers(0, d_z))
    dx_hat = data.draw(st.integers(0, d_x))
    r = ebic_from_parts(value, n, N_n, d_z, d_x, dz_hat, dx_hat)
    assert abs(r.recompute() - r.total) <= 1e-12 * max(1.0, abs(r.total))
    assert np.isfinite(r.total)


def test_log_binom_large():
    assert log_binom(200, 100) == pytest.approx(math.log(math.comb(200, 100)), rel=1e-12)


def _problem(y, family):
    N = len(y)
    ds = ClusterDataset.from_arrays(y, np.zeros((N, 0)), np.ones((N, 1)), np.full(N // 2, 2))
    return QIFProblem(ds, SplineSystem.fit(np.zeros((N, 0)), ds.sizes), "IND", family)


def test_gaussian_perfect_fit_floor():
    prob = _problem(np.full(10, 2.0), "gaussian")
    assert neg2_loglik(prob, np.array([2.0])) == pytest.approx(10 * (math.log(2 * math.pi * 1e-12) + 1))


def test_bernoulli_half():
    prob = _problem(np.array([0, 1, 1, 1, 0, 0.0]), "binomial")
    assert neg2_loglik(prob, np.array([0.0])) == pytest.approx(2 * 6 * math.log(2), rel=1e-14)


def test_adding_linear_term_delta():
    a = ebic_from_parts(10.0, 150, 2, 6, 4, 2, 1)
    b = ebic_from_parts(10.0, 150, 2, 6, 4, 3, 1)
    assert b.total - a.total == pytest.approx(math.log(150) + log_binom(6, 3) - log_binom(6, 2))


def test_unsupported_family():
    prob = _problem(np.ones(4), "gaussian")

    class Fake:
        name = "poisson"
    prob.family = Fake()
    with pytest.raises(CapabilityError):
        ebic_likelihood(_fit(0.0, 0, 0, np.zeros(1)), prob)


@pytest.fixture(scope="module")
def ex1():
    ds, truth = gen_example1(100, 2)
    return ds, truth


def test_grid_zero_returns_unpenalized(ex1):
    ds, _ = ex1
    cfg = FitConfig()
    lam, rep, recs = select_lambda(ds, cfg, (0.0,))
    ref = fit_unpenalized(QIFProblem.from_config(ds, cfg), cfg)
    assert lam == 0.0 and len(recs) == 1
    np.testing.assert_allclose(rep.theta, ref.theta, atol=1e-10)
    assert len(rep.active_x) == ds.d_x and len(rep.active_z) == ds.d_z


def test_duplicate_grid_dedup(ex1):
    ds, _ = ex1
    _, _, recs = select_lambda(ds, FitConfig(), (0.5, 0.1, 0.5, 0.1))
    assert [r.lam for r in recs] == [0.5, 0.1]


def test_ties_go_to_larger_lambda(ex1):
    ds, _ = ex1
    cfg = FitConfig()
    lmax = lambda_max(QIFProblem.from_config(ds, cfg), cfg)
    lam, rep, recs = select_lambda(ds, cfg, (2 * lmax, 4 * lmax))
    assert recs[0].total == pytest.approx(recs[1].total, rel=1e-9)
    assert lam == 4 * lmax
    assert rep.active_x == () and rep.active_z == (0,)


def test_lambda_max_zeroes_everything(ex1):
    ds, _ = ex1
    cfg = FitConfig()
    prob = QIFProblem.from_config(ds, cfg)
    lmax = lambda_max(prob, cfg)
    fit = fit_penalized(prob, cfg, lmax)
    assert fit.active_linear == () and fit.active_nonpar == ()
    fit = fit_penalized(prob, cfg, lmax * 1e-3)
    assert fit.active_nonpar


def test_all_fail_aggregated(ex1):
    ds, _ = ex1
    with pytest.raises(ConvergenceError) as info:
        select_lambda(ds, FitConfig(max_iter=1, tol=1e-300), (0.3, 0.2))
    assert "0.3" in str(info.value) and "0.2" in str(info.value)


def test_records_are_consistent(ex1):
    ds, _ = ex1
    lam, rep, recs = select_lambda(ds, FitConfig(n_lambda=8))
    assert [r.lam for r in recs] == sorted((r.lam for r in recs), reverse=True)
    best = min(recs, key=lambda r: r.total)
    assert lam == best.lam and rep.ebic == best.total
    for r in recs:
        assert r.dz_hat <= r.d_z and r.dx_hat <= r.d_x
        assert r.recompute() == pytest.approx(r.total, abs=1e-9)


@pytest.mark.slow
def test_selection_beats_unpenalized():
    # lambda = 0 keeps every candidate, so it never recovers the true model
    hits = 0
    for seed in range(50):
        ds, truth = gen_example1(100, 1000 + seed)
        _, rep, _ = select_lambda(ds, FitConfig(n_lambda=15))
        hits += set(rep.active_x) == truth.true_x and set(rep.active_z) == truth.true_z
    assert hits > 0


@pytest.mark.slow
def test_warm_versus_cold_start(caplog):
    agree = 0
    for seed in range(10):
        ds, _ = gen_example1(100, 500 + seed)
        a = select_lambda(ds, FitConfig(n_lambda=12))[0]
        b = select_lambda(ds, FitConfig(n_lambda=12, warm_start=False))[0]
        agree += a == b
    print(f"warm and cold start agree on lambda* in {agree}/10 instances")
    assert 0 <= agree <= 10
