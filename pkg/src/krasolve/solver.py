"""Krasnoselskij averaged iteration with certified error bounds.

Given an admissible certificate (b, theta) for T, the solver iterates the
averaged map ``x_{n+1} = (1-lam)*x_n + lam*T(x_n)`` with lam = 1/(b+1).
That map contracts with factor c = theta/(b+1), which yields two running
error guarantees on the distance to the fixed point p:

    a priori:      norm(x_n - p) <= c^n / (1-c) * norm(x_1 - x_0)
    a posteriori:  norm(x_n - p) <= c / (1-c) * norm(x_n - x_{n-1})

and, shifting i-1 further iterations ahead of step n,

    norm(x_{n+i-1} - p) <= c^i / (1-c) * norm(x_n - x_{n-1}).

Termination on ``min(bounds) <= tol`` therefore makes tol a true error
guarantee rather than a step-size heuristic. Certified runs must also
contract step norms by the factor c; three consecutive violations of that
inequality empirically falsify the certificate and terminate the run as
diverged, which keeps a wrong certificate from ever reporting bound-met.

Solve modes beyond the global one: a local mode restricted to a closed
ball around the start (admitted only when the start is not displaced too
far), an asymptotic mode that certifies and iterates the N-th power of the
map, and a two-norm ("maia") mode where a stronger norm drives the bounds
while convergence is also reported in a dominated weaker norm.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .enrichment import EnrichmentCertificate
from .operators import Operator, evaluate, power, residual
from .spaces import (
    NonFiniteError,
    NormPair,
    NormSpec,
    as_vector,
    combine,
    norm,
    validate_dominance,
)

# Relative slack on step-contraction and ball-containment comparisons;
# absorbs rounding jitter without masking real violations.
STEP_SLACK = 1e-9
BALL_SLACK = 1e-9

# Absolute allowance in the step-contraction check, in units of machine
# epsilon times the iterate scale. Near convergence steps shrink to the
# rounding floor of the iterates, where ratios of consecutive steps carry
# noise far above any relative slack; a sound certificate must not be
# falsified by that noise.
JITTER_ULPS = 64.0

# Consecutive step-contraction violations that falsify a certificate.
FALSIFY_STREAK = 3

MAX_ITER_CAP = 1_000_000
TRACE_CAP = 10_000
TRACE_HEAD = 100
TRACE_TAIL = 100


class AdmissionError(RuntimeError):
    """Local-mode admission failed: the start is displaced too far.

    The local mode requires ``norm(T(x0) - x0) < (b + 1 - theta) * r``.
    """

    def __init__(self, displacement: float, threshold: float, radius: float):
        super().__init__(
            f"local admission failed: displacement {displacement:.6g} is not below "
            f"(b + 1 - theta) * r = {threshold:.6g} for radius {radius:.6g}"
        )
        self.displacement = displacement
        self.threshold = threshold
        self.radius = radius


class DominanceError(RuntimeError):
    """The two-norm mode's dominance precondition failed on sampling."""

    def __init__(self, verdict):
        super().__init__(
            f"norm dominance failed: worst ratio {verdict.worst_ratio:.6g} at witness "
            f"{verdict.witness.tolist()}"
        )
        self.verdict = verdict


class BackVerificationError(RuntimeError):
    """The asymptotic mode's fixed point failed re-verification under the base map."""

    def __init__(self, residual_value: float, threshold: float, report: "SolveReport"):
        super().__init__(
            f"back-verification failed: base-map residual {residual_value:.6g} exceeds "
            f"{threshold:.6g}; the operator or certificate is inconsistent"
        )
        self.residual_value = residual_value
        self.threshold = threshold
        self.report = report


def bound_a_priori(c: float, n: int, first_step: float) -> float:
    """Error bound from the first step: ``c^n / (1-c) * first_step``."""
    _check_bound_args(c, first_step)
    if n < 1:
        raise ValueError("iteration index must be >= 1")
    return c**n / (1.0 - c) * first_step

def bound_a_posteriori(c: float, last_step: float) -> float:
    """Error bound from the latest step: ``c / (1-c) * last_step``."""
    _check_bound_args(c, last_step)
    return c / (1.0 - c) * last_step

def bound_unified(c: float, i: int, step_at_n: float) -> float:
    """Bound on the error i-1 iterations ahead of step n: ``c^i / (1-c) * step_at_n``."""
    _check_bound_args(c, step_at_n)
    if i < 1:
        raise ValueError("shift index must be >= 1")
    return c**i / (1.0 - c) * step_at_n

def _check_bound_args(c: float, step: float) -> None:
    if not 0.0 <= c < 1.0:
        raise ValueError(f"contraction factor must lie in [0, 1), got {c}")
    if step < 0.0:
        raise ValueError("step norms are nonnegative")


@dataclass(frozen=True, eq=False)
class TraceRecord:
    """One retained iteration: index, iterate, step norm, bounds, base residual."""

    n: int
    x: np.ndarray
    step: float
    a_priori: float
    a_posteriori: float
    residual: float


class IterationTrace:
    """Per-iteration records with bounded retention.

    The full trace is kept up to ``cap`` iterations; past that only the
    first ``head`` and most recent ``tail`` records are retained.
    """

    def __init__(self, cap: int = TRACE_CAP, head: int = TRACE_HEAD, tail: int = TRACE_TAIL):
        self.cap = cap
        self.head = head
        self.tail = tail
        self.total = 0
        self._rows: list[TraceRecord] = []
        self._tail_rows: deque[TraceRecord] | None = None

    def append(self, record: TraceRecord) -> None:
        self.total += 1
        if self._tail_rows is not None:
            self._tail_rows.append(record)
            return
        self._rows.append(record)
        if len(self._rows) > self.cap:
            self._tail_rows = deque(self._rows[-self.tail :], maxlen=self.tail)
            del self._rows[self.head :]

    @property
    def truncated(self) -> bool:
        return self._tail_rows is not None

    @property
    def rows(self) -> list[TraceRecord]:
        if self._tail_rows is None:
            return list(self._rows)
        return list(self._rows) + list(self._tail_rows)


@dataclass(frozen=True)
class SolveConfig:
    """Iteration configuration shared by all solve modes.

    tol is a guaranteed bound on the distance to the fixed point at
    termination with reason bound-met. max_iter defaults to the iteration
    count the a priori bound predicts for reaching tol, plus margin.
    lambda_override replaces the certified averaging weight; the error
    bounds are then no longer claimed (expert use).
    """

    x0: np.ndarray
    tol: float
    max_iter: int | None = None
    lambda_override: float | None = None
    trace_cap: int = TRACE_CAP

    def __post_init__(self) -> None:
        object.__setattr__(self, "x0", as_vector(self.x0))
        if not (np.isfinite(self.tol) and self.tol > 0):
            raise ValueError(f"tol must be finite and > 0, got {self.tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.lambda_override is not None and not (0.0 < self.lambda_override <= 1.0):
            raise ValueError("lambda override must lie in (0, 1]")
        if self.trace_cap < 1:
            raise ValueError("trace_cap must be >= 1")


@dataclass
class SolveReport:
    """Outcome of a solve: approximation, bounds, trace, and verdict.

    back_verification is mode dependent: the base-map residual
    ``norm(U(p) - p)`` in asymptotic mode, the weaker-norm residual in
    two-norm mode, absent otherwise. falsified marks runs whose step norms
    violated the certified contraction factor.
    """

    mode: str
    fixed_point: np.ndarray
    iterations: int
    termination: str
    certificate: EnrichmentCertificate
    lambda_used: float
    tol: float
    bounds_certified: bool
    trace: IterationTrace
    evaluations: int
    final_a_priori: float | None = None
    final_a_posteriori: float | None = None
    final_residual: float | None = None
    falsified: bool = False
    detail: str | None = None
    back_verification: float | None = None
    ball_radius: float | None = None


def _default_max_iter(c: float, tol: float, first_step: float) -> int:
    """Iterations predicted by the a priori bound to reach tol, plus margin."""
    if c <= 0.0 or first_step == 0.0:
        return 2
    need = tol * (1.0 - c) / first_step
    predicted = 1 if need >= 1.0 else math.ceil(math.log(need) / math.log(c))
    return int(min(max(predicted + 10, 1), MAX_ITER_CAP))


def _iterate(
    op: Operator,
    cert: EnrichmentCertificate,
    spec: NormSpec,
    cfg: SolveConfig,
    *,
    mode: str = "global",
    ball: tuple[np.ndarray, float] | None = None,
) -> SolveReport:
    x = as_vector(cfg.x0, dim=op.dimension)
    lam = cert.lam if cfg.lambda_override is None else cfg.lambda_override
    certified = cfg.lambda_override is None
    c = cert.c
    trace = IterationTrace(cap=cfg.trace_cap)

    def report(x_final, n, termination, **kw) -> SolveReport:
        return SolveReport(
            mode=mode,
            fixed_point=as_vector(x_final),
            iterations=n,
            termination=termination,
            certificate=cert,
            lambda_used=lam,
            tol=cfg.tol,
            bounds_certified=certified,
            trace=trace,
            **kw,
        )

    evals = 0
    try:
        t = evaluate(op, x)
        evals += 1
    except NonFiniteError as exc:
        return report(x, 0, "diverged", evaluations=evals, detail=str(exc))

    max_iter = cfg.max_iter
    first_step: float | None = None
    prev_step: float | None = None
    viol_streak = 0

    while True:
        n = trace.total + 1
        x_new = t if lam == 1.0 else combine(1.0 - lam, x, lam, t)
        if not np.all(np.isfinite(x_new)):
            return report(
                x, n - 1, "diverged", evaluations=evals,
                detail=f"non-finite iterate at iteration {n}",
            )
        step = norm(x_new - x, spec)
        if first_step is None:
            first_step = step
            if max_iter is None:
                max_iter = _default_max_iter(c, cfg.tol, first_step)
        ap = bound_a_priori(c, n, first_step)
        apost = bound_a_posteriori(c, step)

        try:
            t_next = evaluate(op, x_new)
            evals += 1
        except NonFiniteError as exc:
            return report(
                x_new, n, "diverged", evaluations=evals, detail=str(exc),
                final_a_priori=ap, final_a_posteriori=apost,
            )
        res = norm(t_next - x_new, spec)
        trace.append(TraceRecord(n=n, x=as_vector(x_new), step=step,
                                 a_priori=ap, a_posteriori=apost, residual=res))
        finals = dict(final_a_priori=ap, final_a_posteriori=apost, final_residual=res)

        if step == 0.0:
            return report(x_new, n, "residual-zero", evaluations=evals, **finals)

        if ball is not None:
            center, radius = ball
            if norm(x_new - center, spec) > radius * (1.0 + BALL_SLACK):
                return report(
                    x_new, n, "escaped-ball", evaluations=evals,
                    detail=f"iterate left the closed ball of radius {radius:.6g}",
                    falsified=certified, **finals,
                )

        if prev_step is not None:
            factor = c if certified else 1.0
            floor = JITTER_ULPS * np.finfo(np.float64).eps * (1.0 + norm(x_new, spec))
            violated = step > factor * prev_step * (1.0 + STEP_SLACK) + floor
            viol_streak = viol_streak + 1 if violated else 0
            if viol_streak >= FALSIFY_STREAK:
                detail = (
                    "certificate falsified: step contraction violated for "
                    f"{FALSIFY_STREAK} consecutive iterations"
                    if certified
                    else f"step norm increased for {FALSIFY_STREAK} consecutive iterations"
                )
                return report(
                    x_new, n, "diverged", evaluations=evals, detail=detail,
                    falsified=certified, **finals,
                )

        # With c = 0 the bounds are trivially zero; the next step's exact
        # zero (residual-zero) is the self-verifying stop instead.
        if certified and c > 0.0 and min(ap, apost) <= cfg.tol:
            return report(x_new, n, "bound-met", evaluations=evals, **finals)

        if n >= max_iter:
            return report(x_new, n, "max-iter", evaluations=evals, **finals)

        x = x_new
        t = t_next
        prev_step = step


def solve(
    op: Operator, cert: EnrichmentCertificate, spec: NormSpec, cfg: SolveConfig
) -> SolveReport:
    """Iterate the averaged map globally until a bound certifies tol.

    Stops with bound-met when min(a priori, a posteriori) <= tol, with
    residual-zero on an exactly zero step, with diverged when the
    certificate is empirically falsified or an iterate leaves the finite
    range, and with max-iter otherwise.
    """
    return _iterate(op, cert, spec, cfg, mode="global")


def solve_local(
    op: Operator,
    cert: EnrichmentCertificate,
    spec: NormSpec,
    cfg: SolveConfig,
    radius: float,
) -> SolveReport:
    """Solve restricted to a ball around x0, admitted only if x0 moves little.

    Admission requires ``norm(T(x0) - x0) < (b + 1 - theta) * radius``;
    otherwise AdmissionError is raised without iterating. On admission the
    iteration must stay in the closed ball of radius
    ``eps = norm(T(x0) - x0) / (b + 1 - theta)`` around x0 (the smallest
    invariant ball the certificate guarantees); leaving it terminates the
    run as escaped-ball.
    """
    if not (np.isfinite(radius) and radius > 0):
        raise ValueError(f"radius must be finite and > 0, got {radius}")
    x0 = as_vector(cfg.x0, dim=op.dimension)
    t0 = evaluate(op, x0)
    displacement = norm(t0 - x0, spec)
    margin = cert.b + 1.0 - cert.theta
    threshold = margin * radius
    if not displacement < threshold:
        raise AdmissionError(displacement, threshold, radius)
    eps = displacement / margin
    if displacement == 0.0:
        trace = IterationTrace(cap=cfg.trace_cap)
        return SolveReport(
            mode="local", fixed_point=x0, iterations=0, termination="residual-zero",
            certificate=cert, lambda_used=cert.lam, tol=cfg.tol, bounds_certified=True,
            trace=trace, evaluations=1, final_a_priori=0.0, final_a_posteriori=0.0,
            final_residual=0.0, ball_radius=0.0,
        )
    rep = _iterate(op, cert, spec, cfg, mode="local", ball=(x0, eps))
    rep.evaluations += 1
    rep.ball_radius = eps
    return rep


def solve_asymptotic(
    op: Operator,
    n_power: int,
    cert: EnrichmentCertificate,
    spec: NormSpec,
    cfg: SolveConfig,
) -> SolveReport:
    """Solve via the N-th power of the map, then re-verify under the map itself.

    The certificate must certify ``op`` applied n_power times. The unique
    fixed point of that power is also the unique fixed point of ``op``, so
    after a successful solve the base-map residual ``norm(U(p) - p)`` is
    computed and required to be consistent with tol; a violation raises
    BackVerificationError with the report attached.
    """
    if n_power < 1:
        raise ValueError("n_power must be >= 1")
    rep = _iterate(power(op, n_power), cert, spec, cfg, mode="asymptotic")
    back = residual(op, rep.fixed_point, spec)
    rep.evaluations += 1
    rep.back_verification = back
    if rep.termination in ("bound-met", "residual-zero"):
        c = cert.c
        threshold = cfg.tol * (1.0 + c) / (1.0 - c) + 1e-12 * max(
            1.0, norm(rep.fixed_point, spec)
        )
        if back > threshold:
            raise BackVerificationError(back, threshold, rep)
    return rep


def solve_maia(
    op: Operator,
    cert_rho: EnrichmentCertificate,
    pair: NormPair,
    cfg: SolveConfig,
    *,
    dominance_samples: int = 1000,
    dominance_seed: int = 42,
) -> SolveReport:
    """Two-norm solve: contraction in the rho norm, convergence also in d.

    The dominance precondition ``norm_d <= norm_rho`` is validated by
    sampling first (DominanceError on failure). Iteration, bounds, and
    termination all run in the rho norm; the report's back_verification
    carries the final fixed-point residual measured in the d norm.
    """
    verdict = validate_dominance(
        pair, dominance_samples, dominance_seed, dimension=op.dimension
    )
    if not verdict.passed:
        raise DominanceError(verdict)
    rep = _iterate(op, cert_rho, pair.rho, cfg, mode="maia")
    rep.back_verification = residual(op, rep.fixed_point, pair.d)
    rep.evaluations += 1
    return rep


@dataclass(frozen=True)
class BoundValidity:
    """Result of replaying recorded bounds against a reference fixed point."""

    ok: bool
    checked: int
    worst_excess: float


def check_bound_validity(
    report: SolveReport,
    reference_point,
    spec: NormSpec,
    *,
    slack: float = 1e-9,
    shifts: tuple[int, ...] = (1, 2, 3),
) -> BoundValidity:
    """Verify recorded a priori/a posteriori bounds against a known fixed point.

    Also checks the shifted estimate ``norm(x_{n+i-1} - p) <= c^i/(1-c) *
    step_n`` for each shift i where both iterations are retained. All
    comparisons carry the given relative slack.
    """
    p = as_vector(reference_point)
    c = report.certificate.c
    rows = report.trace.rows
    by_n = {r.n: r for r in rows}
    ok = True
    checked = 0
    worst = -math.inf
    for r in rows:
        err = norm(r.x - p, spec)
        for bound in (r.a_priori, r.a_posteriori):
            checked += 1
            excess = err - bound * (1.0 + slack)
            worst = max(worst, excess)
            if excess > 0:
                ok = False
        for i in shifts:
            ahead = by_n.get(r.n + i - 1)
            if ahead is None:
                continue
            err_ahead = norm(ahead.x - p, spec)
            checked += 1
            excess = err_ahead - bound_unified(c, i, r.step) * (1.0 + slack)
            worst = max(worst, excess)
            if excess > 0:
                ok = False
    return BoundValidity(ok=ok, checked=checked, worst_excess=worst)
