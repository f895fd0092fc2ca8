"""SCAD / LASSO penalties and the penalized QIF solver (local quadratic approximation)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConvergenceError, DomainError, FitConfig, SingularityError
from .qif import QIFProblem, UnpenalizedFit, fit_unpenalized, halving_step, newton_direction
from .splines import group_norm


def scad_derivative(t, lam, a=3.7):
    """p'_lam(t) = lam {I(t <= lam) + (a lam - t)_+ / ((a - 1) lam) I(t > lam)} for t >= 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("SCAD derivative is defined for t >= 0")
    if lam < 0 or not a > 2:
        raise DomainError("need lam >= 0 and a > 2")
    if lam == 0:
        out = np.zeros_like(t)
    else:
        out = np.where(t <= lam, lam, np.maximum(a * lam - t, 0.0) / (a - 1.0))
    return out if out.ndim else float(out)


def scad_penalty(t, lam, a=3.7):
    """SCAD penalty value; the integral of :func:`scad_derivative` from 0 to t."""
    t = np.abs(np.asarray(t, dtype=float))
    mid = (2.0 * a * lam * t - t ** 2 - lam ** 2) / (2.0 * (a - 1.0))
    out = np.where(t <= lam, lam * t, np.where(t <= a * lam, mid, 0.5 * (a + 1.0) * lam ** 2))
    return out if out.ndim else float(out)


def lasso_derivative(t, lam):
    """Constant lam, including at t = 0 (the subgradient cap)."""
    t = np.asarray(t, dtype=float)
    out = np.full_like(t, float(lam))
    return out if out.ndim else float(out)


def lasso_penalty(t, lam):
    out = lam * np.abs(np.asarray(t, dtype=float))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty kind with lambda for the nonparametric groups and for linear terms."""

    kind: str = "SCAD"
    lam_nonpar: float = 0.0
    lam_linear: float = 0.0
    a: float = 3.7

    def __post_init__(self):
        if self.kind not in ("SCAD", "LASSO"):
            raise DomainError("penalty kind must be SCAD or LASSO")
        if self.lam_nonpar < 0 or self.lam_linear < 0:
            raise DomainError("lambda must be nonnegative")
        if not self.a > 2:
            raise DomainError("SCAD constant a must exceed 2")

    @classmethod
    def single(cls, lam, kind="SCAD", a=3.7):
        return cls(kind, float(lam), float(lam), a)

    @property
    def is_zero(self):
        return self.lam_nonpar == 0 and self.lam_linear == 0

    def derivative(self, t, lam):
        if self.kind == "SCAD":
            return scad_derivative(t, lam, self.a)
        return lasso_derivative(t, lam)

    def value(self, t, lam):
        if self.kind == "SCAD":
            return scad_penalty(t, lam, self.a)
        return lasso_penalty(t, lam)


@dataclass
class ActiveSet:
    linear: set
    nonpar: set
    n_iter: int = 0
    converged: bool = False


class _Layout:
    """Index bookkeeping for theta = (beta, gamma_1, ..., gamma_dx)."""

    def __init__(self, problem: QIFProblem, exempt):
        self.d_z = problem.d_z
        self.d_x = problem.d_x
        self.J = problem.n_basis
        self.exempt = sorted(set(exempt))
        self.linear = [j for j in range(self.d_z) if j not in self.exempt]
        self.grams = problem.splines.gram

    def group(self, l):
        s = self.d_z + l * self.J
        return slice(s, s + self.J)

    def indices(self, active: ActiveSet):
        idx = list(self.exempt) + sorted(active.linear)
        for l in sorted(active.nonpar):
            s = self.d_z + l * self.J
            idx.extend(range(s, s + self.J))
        return np.array(sorted(idx), dtype=int)

    def norm(self, theta, l):
        return group_norm(theta[self.group(l)], self.grams[l])


def lqa_matrix(theta, active: ActiveSet, penalty: PenaltySpec, problem: QIFProblem,
               exempt=(0,)) -> np.ndarray:
    """Local quadratic approximation weights Lambda(theta), full d_n x d_n.

    Linear entries get p'(|beta_l|) / |beta_l|; each active group gets
    p'(||gamma_l||_K) / ||gamma_l||_K * K_l. Exempt and inactive coordinates
    are zero.
    """
    lay = _Layout(problem, exempt)
    theta = np.asarray(theta, dtype=float)
    out = np.zeros((theta.size, theta.size))
    for j in active.linear:
        t = abs(theta[j])
        if t == 0:
            raise DomainError(f"active linear coefficient {j} is exactly zero; threshold it first")
        out[j, j] = penalty.derivative(t, penalty.lam_linear) / t
    for l in active.nonpar:
        t = lay.norm(theta, l)
        if t == 0:
            raise DomainError(f"active group {l} has zero norm; threshold it first")
        g = lay.group(l)
        out[g, g] = penalty.derivative(t, penalty.lam_nonpar) / t * lay.grams[l]
    return out


@dataclass
class PenalizedFit:
    theta: np.ndarray
    lam: float
    active_linear: tuple          # penalized Z columns kept (exempt columns excluded)
    active_nonpar: tuple
    exempt_linear: tuple
    Q: float                      # unpenalized objective at the estimate
    objective: float              # Q + n * penalty
    trace: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = True
    stalled: bool = False
    active_trace: list = field(default_factory=list)   # active coordinates per iteration

    @property
    def selected_linear(self):
        return tuple(sorted(set(self.exempt_linear) | set(self.active_linear)))

    @property
    def n_linear_selected(self):
        return len(self.active_linear)

    @property
    def n_nonpar_selected(self):
        return len(self.active_nonpar)


def penalty_total(theta, active: ActiveSet, penalty: PenaltySpec, lay: _Layout) -> float:
    s = 0.0
    if active.linear:
        t = np.abs(theta[sorted(active.linear)])
        s += float(np.sum(penalty.value(t, penalty.lam_linear)))
    if active.nonpar:
        t = np.array([lay.norm(theta, l) for l in active.nonpar])
        s += float(np.sum(penalty.value(t, penalty.lam_nonpar)))
    return s


def fit_penalized(problem: QIFProblem, config: FitConfig | None = None, penalty=None,
                  init=None) -> PenalizedFit:
    """Minimize Q_n + n sum p(||gamma_l||_K) + n sum p(|beta_l|) by thresholded LQA-Newton steps.

    ``penalty`` is a :class:`PenaltySpec` or a single lambda. ``init`` is an
    :class:`~gaplm.qif.UnpenalizedFit` or a starting vector; by default the
    unpenalized QIF estimate. Every iteration first zeroes coefficients with
    |beta_l| <= eps and groups with ||gamma_l||_K <= eps (permanently), then
    takes a Newton step on the active coordinates, halving it until the
    penalized objective does not increase. The step uses the Gauss-Newton
    Hessian with C_n held at the iterate, falling back to the exact-gradient
    direction as in :func:`~gaplm.qif.fit_unpenalized`.
    """
    config = config or FitConfig()
    if penalty is None:
        penalty = PenaltySpec.single(0.0, config.penalty if config.penalty != "none" else "SCAD",
                                     config.scad_a)
    elif not isinstance(penalty, PenaltySpec):
        penalty = PenaltySpec.single(penalty, config.penalty if config.penalty != "none" else "SCAD",
                                     config.scad_a)
    lay = _Layout(problem, config.unpenalized_z)
    if init is None:
        init = fit_unpenalized(problem, config)
    if isinstance(init, UnpenalizedFit):
        if penalty.is_zero:
            return _wrap_unpenalized(init, lay, penalty)
        theta = init.theta.copy()
    else:
        theta = np.array(init, dtype=float)
        if penalty.is_zero:
            return _wrap_unpenalized(fit_unpenalized(problem, config, theta), lay, penalty)

    n = problem.n
    active = ActiveSet(set(lay.linear), set(range(lay.d_x)))
    fixed = problem.cn_inverse(problem.moments(theta)[1]) if config.fixed_cn else None
    trace, sizes = [], []
    st = None

    def penalized(t):
        return problem.objective(t, fixed) + n * penalty_total(t, active, penalty, lay)

    for it in range(1, config.max_iter + 1):
        start = theta.copy()
        changed = _threshold(theta, active, lay, config.eps)
        sizes.append(len(active.linear) + len(active.nonpar))
        if st is None or changed:
            st = problem.evaluate(theta, fixed)
        F = st.Q + n * penalty_total(theta, active, penalty, lay)
        if not trace:
            trace.append(F)
        S = lay.indices(active)
        Lam = lqa_matrix(theta, active, penalty, problem, lay.exempt)[np.ix_(S, S)]
        nL = n * Lam
        pull = nL @ theta[S]
        hs = np.ix_(S, S)
        dirs = (lambda: newton_direction(st.hess[hs] + nL, st.grad[S] + pull),
                lambda: newton_direction(st.hess_full[hs] + nL, st.grad_full[S] + pull))
        res = halving_step(theta, list(_checked(dirs)), penalized, F, config.max_halvings,
                           config.tol, S)
        if res is None:
            return _finish(problem, theta, active, penalty, lay, trace, it, st, True, fixed, sizes)
        theta = res[0]
        st = problem.evaluate(theta, fixed)
        trace.append(st.Q + n * penalty_total(theta, active, penalty, lay))
        if np.linalg.norm(theta - start) <= config.tol:
            _threshold(theta, active, lay, config.eps)
            sizes.append(len(active.linear) + len(active.nonpar))
            return _finish(problem, theta, active, penalty, lay, trace, it, None, False, fixed, sizes)
    raise ConvergenceError(f"penalized QIF did not converge in {config.max_iter} iterations",
                           trace, theta)


def _checked(makers):
    for m in makers:
        d = m()
        if not np.all(np.isfinite(d)):
            raise SingularityError("penalized Newton system is singular")
        yield d


def _threshold(theta, active: ActiveSet, lay: _Layout, eps) -> bool:
    changed = False
    for j in sorted(active.linear):
        if abs(theta[j]) <= eps:
            active.linear.discard(j)
            theta[j] = 0.0
            changed = True
    for l in sorted(active.nonpar):
        if lay.norm(theta, l) <= eps:
            active.nonpar.discard(l)
            theta[lay.group(l)] = 0.0
            changed = True
    return changed


def _finish(problem, theta, active, penalty, lay, trace, it, st, stalled, fixed, sizes):
    if st is None:
        st = problem.evaluate(theta, fixed, derivatives=False)
    pen = problem.n * penalty_total(theta, active, penalty, lay)
    lam = max(penalty.lam_linear, penalty.lam_nonpar)
    return PenalizedFit(theta, lam, tuple(sorted(active.linear)), tuple(sorted(active.nonpar)),
                        tuple(lay.exempt), st.Q, st.Q + pen, trace, it, True, stalled, sizes)


def _wrap_unpenalized(fit: UnpenalizedFit, lay: _Layout, penalty):
    lam = max(penalty.lam_linear, penalty.lam_nonpar)
    return PenalizedFit(fit.theta.copy(), lam, tuple(lay.linear), tuple(range(lay.d_x)),
                        tuple(lay.exempt), fit.Q, fit.Q, list(fit.trace), fit.n_iter,
                        fit.converged, fit.stalled)


def classify_selection(selected, truth) -> str:
    """'correct' if the selected set equals the true set, 'over' if it strictly
    contains it, 'under' if any true component is missing."""
    selected, truth = set(selected), set(truth)
    if selected == truth:
        return "correct"
    if truth <= selected:
        return "over"
    return "under"
