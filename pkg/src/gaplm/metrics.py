"""Evaluation quantities: model error, in-sample and holdout squared error, study summaries."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ClusterDataset


def model_error(fit, truth, x, z, x_cols=None, z_cols=None) -> float:
    """Mean of {g^-1(fitted eta) - g^-1(true eta)}^2 over the test rows (x, z).

    ``fit`` needs ``mu(x, z)``; ``truth`` needs ``mean(x, z)``. The
    comparison is on the mean scale, so logit fits are compared as
    probabilities. A fit on a subset of the columns (an oracle model) sees
    only ``x[:, x_cols]`` and ``z[:, z_cols]``.
    """
    x = np.atleast_2d(x)
    z = np.atleast_2d(z)
    xs = x if x_cols is None else x[:, list(x_cols)]
    zs = z if z_cols is None else z[:, list(z_cols)]
    d = fit.mu(xs, zs) - truth.mean(x, z)
    return float(np.mean(d * d))


def msee(fit, ds: ClusterDataset) -> float:
    """(1/N) sum_i sum_t (Y_it - Yhat_it)^2 on the fitting data."""
    y, _, _ = ds.stacked
    r = y - fit.predict(ds)
    return float(np.mean(r * r))


def mspe(fit, holdout: ClusterDataset) -> float:
    """Same squared error on data not used for fitting."""
    return msee(fit, holdout)


def empirical_norm(values) -> float:
    """||s||_n = sqrt(mean s^2) over the supplied evaluations."""
    v = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean(v * v)))


@dataclass
class ReplicationRecord:
    rep: int
    variant: str
    structure: str
    selection: str | None          # correct / over / under, None on failure
    me: float | None
    beta: list | None              # integral-centered beta-hat, zeros where removed
    lam: float | None
    active_x: list | None
    active_z: list | None
    error: str | None = None

    @property
    def failed(self):
        return self.error is not None


@dataclass
class StudySummary:
    """Selection proportions and mean model error over the successful replications.

    C + O + U + failure fraction = 1.
    """

    design: str
    n: int
    structure: str
    variant: str
    R: int
    C: float
    O: float
    U: float
    failures: int
    MME: float
    beta_mean: list = field(default_factory=list)
    beta_sd: list = field(default_factory=list)
    records: list = field(default_factory=list)

    @property
    def failure_fraction(self):
        return self.failures / self.R if self.R else 0.0


def summarize(records, design, n, structure, variant) -> StudySummary:
    """Aggregate replication records; failed replications count only toward ``failures``."""
    R = len(records)
    ok = [r for r in records if not r.failed]
    counts = {"correct": 0, "over": 0, "under": 0}
    for r in ok:
        if r.selection in counts:
            counts[r.selection] += 1
    mes = [r.me for r in ok]
    mme = float(np.mean(mes)) if mes else float("nan")
    if ok:
        B = np.array([r.beta for r in ok], dtype=float)
        bm = B.mean(axis=0).tolist()
        bs = (B.std(axis=0, ddof=1) if len(ok) > 1 else np.zeros(B.shape[1])).tolist()
    else:
        bm, bs = [], []
    return StudySummary(design, int(n), structure, variant, R, counts["correct"] / R if R else 0.0,
                        counts["over"] / R if R else 0.0, counts["under"] / R if R else 0.0,
                        R - len(ok), mme, bm, bs, list(records))
