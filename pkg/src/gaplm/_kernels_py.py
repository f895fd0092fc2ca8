"""Vectorized numpy implementation of the cluster-structured QIF kernels.

Used when the compiled ``_kernels`` extension is unavailable; the two must
agree to rounding (see tests/test_kernels.py).
"""
import numpy as np


def _cluster_ids(starts):
    sizes = np.diff(starts)
    return np.repeat(np.arange(sizes.size), sizes)


def apply_basis(v, starts, code):
    """Apply the second basis matrix of structure ``code`` cluster by cluster.

    ``v`` is (N,) or (N, m). code 1 (EC): row t gets the cluster sum minus v_t;
    code 2 (AR1): row t gets its within-cluster neighbours v_{t-1} + v_{t+1}.
    """
    v = np.asarray(v, dtype=float)
    if code == 1:
        sums = np.add.reduceat(v, starts[:-1], axis=0)
        return sums[_cluster_ids(starts)] - v
    if code == 2:
        out = np.zeros_like(v)
        cid = _cluster_ids(starts)
        same = cid[1:] == cid[:-1]
        if v.ndim == 1:
            out[1:] += np.where(same, v[:-1], 0.0)
            out[:-1] += np.where(same, v[1:], 0.0)
        else:
            out[1:] += np.where(same[:, None], v[:-1], 0.0)
            out[:-1] += np.where(same[:, None], v[1:], 0.0)
        return out
    raise ValueError(f"no second basis matrix for structure code {code}")


def qif_rows(D, a, da, v, dv, starts, code, K):
    """Per-cluster extended scores and the rows whose contraction with D gives the Jacobian.

    With u_k = a * (M_k v), block k of cluster i's score is sum_t D_t u_kt and
    R[t, block k] = da_t (M_k v)_t D_t + a_t (M_k (dv D))_t, so that block k of
    the summed score Jacobian is D^T R_k. Returns ``scores`` (n, K*p) and
    ``rows`` (N, K*p).
    """
    D = np.ascontiguousarray(D, dtype=float)
    N, p = D.shape
    n = starts.size - 1
    scores = np.empty((n, K * p))
    rows = np.empty((N, K * p))
    for k in range(K):
        if k == 0:
            Mv = v
            MdvD = dv[:, None] * D
        else:
            Mv = apply_basis(v, starts, code)
            MdvD = apply_basis(dv[:, None] * D, starts, code)
        u = a * Mv
        scores[:, k * p:(k + 1) * p] = np.add.reduceat(D * u[:, None], starts[:-1], axis=0)
        rows[:, k * p:(k + 1) * p] = D * (da * Mv)[:, None] + a[:, None] * MdvD
    return scores, rows


def contract_rows(D, rows, K):
    """Jacobian (K*p, p) from the rows of :func:`qif_rows`; block k is D^T R_k."""
    p = D.shape[1]
    jt = D.T @ rows
    return np.vstack([jt[:, k * p:(k + 1) * p] for k in range(K)])


def qif_blocks(D, a, da, v, dv, starts, code, K):
    """Per-cluster extended scores (n, K*p) and the summed score Jacobian (K*p, p), not divided by n."""
    scores, rows = qif_rows(D, a, da, v, dv, starts, code, K)
    return scores, contract_rows(np.asarray(D, dtype=float), rows, K)


def qif_scores(D, a, v, starts, code, K):
    """Per-cluster extended scores only, shape (n, K*p)."""
    D = np.asarray(D, dtype=float)
    p = D.shape[1]
    out = np.empty((starts.size - 1, K * p))
    out[:, :p] = np.add.reduceat(D * (a * v)[:, None], starts[:-1], axis=0)
    if K == 2:
        u = a * apply_basis(v, starts, code)
        out[:, p:] = np.add.reduceat(D * u[:, None], starts[:-1], axis=0)
    return out
