"""Tuning-parameter selection by extended BIC over a lambda grid."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import CapabilityError, ConvergenceError, DomainError, FitConfig, GaplmError
from .model import FitReport, report_from
from .penalty import PenalizedFit, PenaltySpec, fit_penalized
from .qif import QIFProblem, UnpenalizedFit, fit_unpenalized

log = logging.getLogger(__name__)

SIGMA2_FLOOR = 1e-12
# EBIC totals this close (relative) count as tied; same-model fits differ by solver tolerance
TIE_RTOL = 1e-8


def log_binom(n, k):
    """log C(n, k) through gammaln, safe for large n."""
    return float(gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0))


@dataclass(frozen=True)
class EbicRecord:
    lam: float
    value: float          # Q_n or -2 log L at the estimate
    dz_hat: int
    dx_hat: int
    d_z: int              # penalized linear candidates
    d_x: int
    log_nu_z: float       # log C(d_z, dz_hat)
    log_nu_x: float
    n: int
    N_n: int
    total: float
    variant: str = "qif"
    converged: bool = True

    def recompute(self) -> float:
        ln = np.log(self.n)
        return (self.value + ln * self.dz_hat + self.log_nu_z
                + ln * self.N_n * self.dx_hat + self.N_n * self.log_nu_x)


def ebic_from_parts(value, n, N_n, d_z, d_x, dz_hat, dx_hat, lam=0.0, variant="qif") -> EbicRecord:
    if not (0 <= dz_hat <= d_z and 0 <= dx_hat <= d_x):
        raise DomainError("selected counts must lie between 0 and the candidate counts")
    lz, lx = log_binom(d_z, dz_hat), log_binom(d_x, dx_hat)
    ln = np.log(n)
    total = value + ln * dz_hat + lz + ln * N_n * dx_hat + N_n * lx
    return EbicRecord(float(lam), float(value), int(dz_hat), int(dx_hat), int(d_z), int(d_x),
                      lz, lx, int(n), int(N_n), float(total), variant)


def _counts(fit):
    if isinstance(fit, PenalizedFit):
        return fit.n_linear_selected, fit.n_nonpar_selected
    return fit.dz_hat, fit.dx_hat


def ebic_qif(fit, n, N_n, d_z, d_x) -> float:
    """Q_n at the estimate (penalty excluded) plus the model-size terms.

    ``d_z`` counts the penalized linear candidates only; never-penalized
    columns such as the intercept are not part of the search.
    """
    dz_hat, dx_hat = _counts(fit)
    return ebic_from_parts(fit.Q, n, N_n, d_z, d_x, dz_hat, dx_hat).total


def neg2_loglik(problem: QIFProblem, theta) -> float:
    """-2 log L under working independence.

    Gaussian uses the plug-in variance sigma^2 = mean squared residual,
    floored at 1e-12; binomial is the Bernoulli log-likelihood.
    """
    eta = problem.D @ np.asarray(theta, dtype=float)
    y = problem.y
    fam = problem.family.name
    if fam == "gaussian":
        s2 = max(float(np.mean((y - eta) ** 2)), SIGMA2_FLOOR)
        return y.size * (np.log(2.0 * np.pi * s2) + 1.0)
    if fam == "binomial":
        # log(mu) = -log(1 + e^-eta), log(1 - mu) = -log(1 + e^eta)
        return float(2.0 * np.sum(y * np.logaddexp(0.0, -eta) + (1.0 - y) * np.logaddexp(0.0, eta)))
    raise CapabilityError(f"no likelihood for family {fam!r}")


def ebic_likelihood(fit, problem: QIFProblem, N_n=None, d_z=None, d_x=None) -> float:
    N_n = problem.splines.n_interior if N_n is None else N_n
    d_z = (problem.d_z - 1) if d_z is None else d_z
    d_x = problem.d_x if d_x is None else d_x
    dz_hat, dx_hat = _counts(fit)
    return ebic_from_parts(neg2_loglik(problem, fit.theta), problem.n, N_n, d_z, d_x,
                           dz_hat, dx_hat).total


def resolve_variant(config: FitConfig, problem: QIFProblem) -> str:
    if config.ebic != "auto":
        return config.ebic
    return "likelihood" if problem.family.name in ("gaussian", "binomial") else "qif"


def ebic_record(fit: PenalizedFit, problem: QIFProblem, variant: str, n_exempt: int) -> EbicRecord:
    value = fit.Q if variant == "qif" else neg2_loglik(problem, fit.theta)
    return ebic_from_parts(value, problem.n, problem.splines.n_interior, problem.d_z - n_exempt,
                           problem.d_x, fit.n_linear_selected, fit.n_nonpar_selected,
                           fit.lam, variant)


def _penalty(config: FitConfig, lam) -> PenaltySpec:
    kind = config.penalty if config.penalty != "none" else "SCAD"
    return PenaltySpec.single(lam, kind, config.scad_a)


def _all_zero(fit: PenalizedFit) -> bool:
    return not fit.active_linear and not fit.active_nonpar


def kkt_lambda(problem: QIFProblem, config: FitConfig) -> float:
    """Largest penalized score at the model with only the exempt columns.

    Zero is stationary for every penalized coefficient once n * lambda exceeds
    |dQ/dbeta_j| and ||dQ/dgamma_l||_{K_l^{-1}}; a starting point for the search.
    """
    exempt = list(config.unpenalized_z)
    sub = problem.dataset.subset_columns([], exempt)
    small = QIFProblem(sub, problem.splines.subset([]), problem.structure, problem.family,
                       problem.ridge)
    th0 = fit_unpenalized(small, config).theta
    theta = np.zeros(problem.dim)
    theta[exempt] = th0
    grad = problem.evaluate(theta).grad
    vals = [abs(grad[j]) for j in range(problem.d_z) if j not in exempt]
    J = problem.n_basis
    for l in range(problem.d_x):
        g = grad[problem.d_z + l * J: problem.d_z + (l + 1) * J]
        K = problem.splines.gram[l]
        vals.append(float(np.sqrt(max(g @ np.linalg.solve(K, g), 0.0))))
    return max(vals) / problem.n if vals else 0.0


def lambda_max(problem: QIFProblem, config: FitConfig, unpen: UnpenalizedFit | None = None,
               rel_tol=0.05, max_doublings=20) -> float:
    """Smallest lambda whose penalized fit (from the unpenalized estimate) zeroes every
    penalized component, located by doubling and log-scale bisection."""
    unpen = unpen or fit_unpenalized(problem, config)

    def zeroes(lam):
        try:
            return _all_zero(fit_penalized(problem, config, _penalty(config, lam), unpen))
        except (ConvergenceError, GaplmError, np.linalg.LinAlgError):
            return False

    hi = kkt_lambda(problem, config)
    if not hi > 0:
        hi = 1.0
    lo = 0.0
    for _ in range(max_doublings):
        if zeroes(hi):
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ConvergenceError("could not find a lambda that removes every component")
    if lo == 0.0:
        lo = hi / 8.0
        while zeroes(lo) and lo > 1e-12:
            hi, lo = lo, lo / 8.0
    while hi / lo > 1.0 + rel_tol:
        mid = np.sqrt(lo * hi)
        if zeroes(mid):
            hi = mid
        else:
            lo = mid
    return float(hi)


def default_grid(problem: QIFProblem, config: FitConfig, unpen=None):
    lmax = lambda_max(problem, config, unpen)
    return tuple(np.geomspace(lmax, lmax * config.lambda_ratio, config.n_lambda))


def _hybrid_start(prev: PenalizedFit, unpen: UnpenalizedFit):
    """Coordinates kept by the previous fit start there; removed ones restart at
    the unpenalized estimate so they may re-enter at the smaller lambda."""
    return np.where(prev.theta != 0.0, prev.theta, unpen.theta)


def _to_report(fit: PenalizedFit, problem, ebic) -> FitReport:
    return report_from(fit.theta, problem, fit.lam, fit.active_nonpar, fit.selected_linear,
                       fit.Q, fit.objective, fit.trace, fit.n_iter, fit.converged, fit.stalled,
                       ebic)


def select_lambda(data, config: FitConfig | None = None, grid=None):
    """Fit every lambda of the grid in decreasing order and keep the EBIC minimizer.

    ``data`` is a ClusterDataset or a prepared QIFProblem. The grid defaults
    to ``config.lambdas`` and otherwise to ``config.n_lambda`` log-spaced
    values from lambda_max down to ``lambda_max * config.lambda_ratio``.
    With ``config.warm_start`` each fit starts from the previous solution
    (removed coordinates from the unpenalized estimate); otherwise every fit
    starts from the unpenalized estimate. Ties, EBIC totals within a relative
    1e-8, go to the larger lambda. If the unpenalized fit itself fails on an
    explicit grid, its last iterate starts every fit.

    Returns
    -------
    lam_star, FitReport, list of EbicRecord (decreasing lambda)
    """
    config = config or FitConfig()
    problem = data if isinstance(data, QIFProblem) else QIFProblem.from_config(data, config)
    try:
        unpen = fit_unpenalized(problem, config)
    except ConvergenceError as exc:
        if exc.theta is None or (grid is None and config.lambdas is None
                                 and config.penalty != "none"):
            raise
        log.warning("unpenalized fit failed, starting from its last iterate: %s", exc)
        unpen = UnpenalizedFit(np.asarray(exc.theta, dtype=float), float("nan"),
                               list(exc.trace or []), 0, False)
    variant = resolve_variant(config, problem)
    n_exempt = len(set(config.unpenalized_z))
    if config.penalty == "none":
        grid = (0.0,)
    elif grid is None:
        grid = config.lambdas if config.lambdas is not None else default_grid(problem, config, unpen)
    grid = sorted({float(v) for v in grid}, reverse=True)
    if not grid:
        raise DomainError("lambda grid is empty")
    if min(grid) < 0:
        raise DomainError("lambda must be nonnegative")

    records, fits, prev, errors = [], [], None, []
    for lam in grid:
        if config.warm_start and prev is not None:
            init = _hybrid_start(prev, unpen)
        else:
            init = unpen if unpen.converged else unpen.theta.copy()
        try:
            fit = fit_penalized(problem, config, _penalty(config, lam), init)
        except (ConvergenceError, GaplmError, np.linalg.LinAlgError) as exc:
            log.warning("lambda=%g failed: %s", lam, exc)
            errors.append((lam, exc))
            continue
        prev = fit
        rec = ebic_record(fit, problem, variant, n_exempt)
        records.append(rec)
        fits.append(fit)
    if not records:
        last = errors[-1][1]
        raise ConvergenceError("every lambda failed: " + "; ".join(f"{l:g}: {e}" for l, e in errors),
                               getattr(last, "trace", None), getattr(last, "theta", None))
    low = min(r.total for r in records)
    k = next(i for i, r in enumerate(records) if r.total - low <= TIE_RTOL * max(1.0, abs(low)))
    rec, fit = records[k], fits[k]
    return rec.lam, _to_report(fit, problem, rec.total), records


def fit_at(data, config: FitConfig | None = None, lam=0.0) -> FitReport:
    """Single penalized (or, with lam=0, unpenalized) fit wrapped as a report."""
    config = config or FitConfig()
    problem = data if isinstance(data, QIFProblem) else QIFProblem.from_config(data, config)
    fit = fit_penalized(problem, config, _penalty(config, lam))
    rec = ebic_record(fit, problem, resolve_variant(config, problem), len(set(config.unpenalized_z)))
    return _to_report(fit, problem, rec.total)
