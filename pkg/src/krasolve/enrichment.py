"""Enrichment certificates and the averaged operator.

A map T is an enriched contraction when there are constants b >= 0 and
theta in [0, b+1) with

    norm(b*(x - y) + T(x) - T(y)) <= theta * norm(x - y)   for all x, y.

The averaged map ``T_lam(x) = (1-lam)*x + lam*T(x)`` with lam = 1/(b+1)
then contracts with factor c = theta/(b+1) < 1 and shares T's fixed
points. This module carries the (b, theta) certificates, builds averaged
operators, checks declared certificates by sampling, and estimates
certificates empirically (any operator) or analytically (affine ones,
where theta(b) is the induced norm of b*I + A).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import Operator, evaluate
from .spaces import DimensionMismatchError, NormSpec, as_vector, combine

# Multiplicative inflation applied to estimated theta values so that
# downstream bound checks are not invalidated by the supremum being
# attained between samples at the observed ratio.
THETA_INFLATION = 1.0 + 1e-9

# Relative slack on sampled certificate inequalities.
CHECK_SLACK = 1e-12

DEFAULT_B_MAX = 10.0
DEFAULT_B_STEP = 0.05


class NotCertifiableError(RuntimeError):
    """No admissible (b, theta) with contraction factor below 1 was found."""

    def __init__(self, message: str, *, b_grid=None, c_grid=None, best_b=None, best_c=None):
        super().__init__(message)
        self.b_grid = b_grid
        self.c_grid = c_grid
        self.best_b = best_b
        self.best_c = best_c


class DegeneratePlanError(ValueError):
    """Every sampled pair collapsed to x == y; the sample plan is unusable."""


class PowerIterationError(RuntimeError):
    """The spectral-norm power iteration failed to converge."""


@dataclass(frozen=True)
class EnrichmentCertificate:
    """The constants (b, theta) licensing the averaged iteration's bounds.

    Derived quantities: lam = 1/(b+1) is the averaging weight and
    c = theta/(b+1) the contraction factor of the averaged map. Admissible
    certificates satisfy 0 <= theta < b+1, hence c < 1. b = 0 gives
    lam = 1, i.e. plain Picard iteration.
    """

    b: float
    theta: float
    provenance: str = "declared"
    sample_count: int | None = None
    seed: int | None = None
    b_grid: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not (np.isfinite(self.b) and self.b >= 0):
            raise ValueError(f"b must be finite and >= 0, got {self.b}")
        if not (np.isfinite(self.theta) and 0 <= self.theta < self.b + 1):
            raise ValueError(
                f"inadmissible certificate: theta must lie in [0, b+1) = [0, {self.b + 1}), "
                f"got theta = {self.theta}"
            )
        if self.provenance not in ("declared", "empirical", "analytic"):
            raise ValueError(f"unknown certificate provenance {self.provenance!r}")

    @property
    def lam(self) -> float:
        """Averaging weight 1/(b+1); equals 1 exactly when b = 0."""
        return 1.0 / (self.b + 1.0)

    @property
    def c(self) -> float:
        """Contraction factor theta/(b+1) of the averaged map."""
        return self.theta / (self.b + 1.0)

    def describe(self) -> dict:
        out: dict = {
            "b": float(self.b),
            "theta": float(self.theta),
            "lambda": float(self.lam),
            "c": float(self.c),
            "provenance": self.provenance,
        }
        if self.sample_count is not None:
            out["sample_count"] = int(self.sample_count)
        if self.seed is not None:
            out["seed"] = int(self.seed)
        if self.b_grid is not None:
            out["b_grid"] = {
                "points": len(self.b_grid),
                "lo": float(self.b_grid[0]),
                "hi": float(self.b_grid[-1]),
            }
        return out


@dataclass(frozen=True)
class SamplePlan:
    """Seeded uniform sampling of point pairs from a coordinate box."""

    pair_count: int
    seed: int
    domain: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if self.pair_count < 1:
            raise ValueError("pair_count must be >= 1")
        box = tuple((float(lo), float(hi)) for lo, hi in self.domain)
        if not box:
            raise ValueError("sampling domain must have at least one coordinate")
        for k, (lo, hi) in enumerate(box):
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ValueError(f"domain bounds for coordinate {k} must be finite")
            if not lo < hi:
                raise ValueError(
                    f"degenerate domain: coordinate {k} has low {lo} >= high {hi}"
                )
        object.__setattr__(self, "domain", box)

    @property
    def dimension(self) -> int:
        return len(self.domain)

    def describe(self) -> dict:
        return {
            "pair_count": self.pair_count,
            "seed": self.seed,
            "domain": [[lo, hi] for lo, hi in self.domain],
        }


@dataclass(frozen=True, eq=False)
class CheckVerdict:
    """Outcome of a sampled certificate check.

    max_ratio is the largest observed norm(b*(x-y) + Tx - Ty) / norm(x-y);
    the witness pair attains it. Passing requires max_ratio <= theta within
    relative slack 1e-12.
    """

    passed: bool
    max_ratio: float
    witness_x: np.ndarray
    witness_y: np.ndarray
    pairs: int


@dataclass(frozen=True, eq=False)
class Averaged(Operator):
    """The averaged map ``x -> (1-lam)*x + lam*base(x)``."""

    base: Operator
    lam: float

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def _apply(self, x: np.ndarray) -> np.ndarray:
        return combine(1.0 - self.lam, x, self.lam, evaluate(self.base, x))


def averaged(op: Operator, lam: float) -> Operator:
    """Build the averaged operator for weight lam in (0, 1].

    With lam = 1 the base operator itself is returned, so the iteration
    reduces bitwise to plain Picard iteration.
    """
    if not (0.0 < lam <= 1.0):
        raise ValueError(f"averaging weight must lie in (0, 1], got {lam}")
    if lam == 1.0:
        return op
    return Averaged(base=op, lam=float(lam))


def draw_pairs(plan: SamplePlan) -> tuple[np.ndarray, np.ndarray]:
    """Draw the plan's (x, y) sample pairs; deterministic for a fixed seed."""
    rng = np.random.default_rng(plan.seed)
    lows = np.array([lo for lo, _ in plan.domain])
    highs = np.array([hi for _, hi in plan.domain])
    x = rng.uniform(lows, highs, size=(plan.pair_count, plan.dimension))
    y = rng.uniform(lows, highs, size=(plan.pair_count, plan.dimension))
    return x, y


def _row_norms(m: np.ndarray, spec: NormSpec) -> np.ndarray:
    """Norm of each row of a 2-D array under ``spec``."""
    if spec.weights is not None:
        if spec.weights.size != m.shape[1]:
            raise DimensionMismatchError(
                f"norm weights have dimension {spec.weights.size}, rows have {m.shape[1]}"
            )
        m = m * spec.weights
    if spec.kind == "l1":
        return np.sum(np.abs(m), axis=1)
    if spec.kind == "l2":
        return np.sqrt(np.sum(m * m, axis=1))
    return np.max(np.abs(m), axis=1)


def _sampled_differences(
    op: Operator, plan: SamplePlan, spec: NormSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate the operator on the plan's pairs and drop degenerate ones.

    Returns (x, y, d, delta, dnorm) with d = x - y, delta = Tx - Ty,
    restricted to pairs with norm(d) > 0.
    """
    if op.dimension != plan.dimension:
        raise DimensionMismatchError(
            f"operator dimension {op.dimension} does not match plan dimension {plan.dimension}"
        )
    x, y = draw_pairs(plan)
    tx = np.stack([evaluate(op, x[i]) for i in range(plan.pair_count)])
    ty = np.stack([evaluate(op, y[i]) for i in range(plan.pair_count)])
    d = x - y
    dnorm = _row_norms(d, spec)
    keep = dnorm > 0.0
    if not np.any(keep):
        raise DegeneratePlanError("all sampled pairs are degenerate (x == y)")
    return x[keep], y[keep], d[keep], (tx - ty)[keep], dnorm[keep]


def check_certificate(
    op: Operator, cert: EnrichmentCertificate, spec: NormSpec, plan: SamplePlan
) -> CheckVerdict:
    """Check a declared certificate on sampled pairs.

    Sampling can refute the certificate but never prove it; a pass means
    no violation was observed on this plan.
    """
    x, y, d, delta, dnorm = _sampled_differences(op, plan, spec)
    ratios = _row_norms(cert.b * d + delta, spec) / dnorm
    worst = int(np.argmax(ratios))
    max_ratio = float(ratios[worst])
    passed = max_ratio <= cert.theta * (1.0 + CHECK_SLACK)
    return CheckVerdict(
        passed=passed,
        max_ratio=max_ratio,
        witness_x=as_vector(x[worst]),
        witness_y=as_vector(y[worst]),
        pairs=int(dnorm.size),
    )


def default_b_grid(b_max: float = DEFAULT_B_MAX, b_step: float = DEFAULT_B_STEP) -> list[float]:
    """Ascending b grid 0, step, 2*step, ..., up to b_max inclusive."""
    if b_step <= 0 or b_max < 0:
        raise ValueError("b_step must be > 0 and b_max >= 0")
    count = int(round(b_max / b_step))
    return [k * b_step for k in range(count + 1)]


def _validate_grid(b_grid) -> np.ndarray:
    grid = np.asarray(list(b_grid), dtype=np.float64)
    if grid.size == 0:
        raise ValueError("b grid must be nonempty")
    if not np.all(np.isfinite(grid)) or np.any(grid < 0):
        raise ValueError("b grid values must be finite and >= 0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("b grid must be strictly ascending")
    return grid


def select_certificate(
    grid: np.ndarray, theta_hat: np.ndarray, provenance: str, **meta
) -> EnrichmentCertificate:
    """Pick the grid b minimizing c(b) = theta_hat/(b+1); ties go to smallest b."""
    c_grid = theta_hat / (grid + 1.0)
    best = int(np.argmin(c_grid))  # argmin returns the first (smallest-b) minimizer
    best_c = float(c_grid[best])
    theta = float(theta_hat[best]) * THETA_INFLATION
    b = float(grid[best])
    if best_c >= 1.0 or theta >= b + 1.0:
        raise NotCertifiableError(
            f"not certifiable: minimal contraction factor over the b grid is "
            f"{best_c:.6g} (at b = {b:.6g}), which does not stay below 1",
            b_grid=grid.copy(),
            c_grid=c_grid.copy(),
            best_b=b,
            best_c=best_c,
        )
    return EnrichmentCertificate(
        b=b,
        theta=theta,
        provenance=provenance,
        b_grid=tuple(float(v) for v in grid),
        **meta,
    )


def estimate_grid(
    op: Operator, spec: NormSpec, plan: SamplePlan, b_grid
) -> tuple[np.ndarray, np.ndarray]:
    """Empirical theta_hat(b) over a b grid.

    theta_hat(b) is the maximum of norm(b*(x-y) + Tx - Ty) / norm(x-y)
    over the plan's non-degenerate pairs.
    """
    grid = _validate_grid(b_grid)
    _, _, d, delta, dnorm = _sampled_differences(op, plan, spec)
    theta_hat = np.empty(grid.size)
    for i, b in enumerate(grid):
        theta_hat[i] = float(np.max(_row_norms(b * d + delta, spec) / dnorm))
    return grid, theta_hat


def estimate(
    op: Operator, spec: NormSpec, plan: SamplePlan, b_grid=None
) -> EnrichmentCertificate:
    """Estimate a certificate from samples by grid search over b.

    The returned theta carries a 1e-9 relative safety inflation. Empirical
    certificates are only evidence on the sampled region; they are marked
    with provenance "empirical" and record the plan. Raises
    NotCertifiableError when no grid b gives a contraction factor below 1.
    """
    if b_grid is None:
        b_grid = default_b_grid()
    grid, theta_hat = estimate_grid(op, spec, plan, b_grid)
    return select_certificate(
        grid, theta_hat, "empirical", sample_count=plan.pair_count, seed=plan.seed
    )


def induced_norm(matrix: np.ndarray, spec: NormSpec) -> float:
    """Operator norm of a square matrix induced by a (possibly weighted) p-norm.

    For weights w the computation reduces to the plain induced p-norm of
    D @ M @ D^-1 with D = diag(w). l1 and linf use the exact column/row sum
    formulas; l2 uses a power iteration on M^T M with tolerance 1e-12 and
    at most 10,000 steps.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"induced norm needs a square matrix, got {m.shape}")
    if spec.weights is not None:
        if spec.weights.size != m.shape[0]:
            raise DimensionMismatchError(
                f"norm weights have dimension {spec.weights.size}, matrix has {m.shape[0]}"
            )
        w = spec.weights
        m = (m * w[:, None]) / w[None, :]
    if spec.kind == "l1":
        return float(np.max(np.sum(np.abs(m), axis=0)))
    if spec.kind == "linf":
        return float(np.max(np.sum(np.abs(m), axis=1)))
    return _spectral_norm(m)


_POWER_ITERATION_TOL = 1e-12
_POWER_ITERATION_MAX_STEPS = 10_000


def _spectral_norm(m: np.ndarray) -> float:
    """Largest singular value via power iteration on M^T M."""
    gram = m.T @ m
    n = gram.shape[0]
    # Deterministic start, perturbed so it is almost surely not orthogonal
    # to the top eigenvector.
    rng = np.random.default_rng(0)
    v = np.ones(n) + 1e-3 * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(_POWER_ITERATION_MAX_STEPS):
        u = gram @ v
        nu = float(np.linalg.norm(u))
        if nu == 0.0:
            return 0.0
        new_value = float(v @ u)  # Rayleigh quotient of the unit vector v
        v = u / nu
        if abs(new_value - value) <= _POWER_ITERATION_TOL * max(1.0, abs(new_value)):
            return float(np.sqrt(max(new_value, 0.0)))
        value = new_value
    raise PowerIterationError(
        f"spectral-norm power iteration did not converge in {_POWER_ITERATION_MAX_STEPS} steps"
    )


def affine_certificate(
    matrix: np.ndarray,
    spec: NormSpec,
    b_grid=None,
    *,
    fallback_plan: SamplePlan | None = None,
) -> EnrichmentCertificate:
    """Analytic certificate for an affine map ``T(x) = A @ x + u``.

    For affine maps theta(b) is exactly the induced norm of b*I + A
    (independent of the offset u), so the grid search runs on induced
    norms instead of samples. If the l2 power iteration fails to converge
    and a fallback plan is given, the empirical estimator takes over.
    """
    if b_grid is None:
        b_grid = default_b_grid()
    grid = _validate_grid(b_grid)
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"affine matrix must be square, got shape {a.shape}")
    eye = np.eye(a.shape[0])
    theta_hat = np.empty(grid.size)
    try:
        for i, b in enumerate(grid):
            theta_hat[i] = induced_norm(b * eye + a, spec)
    except PowerIterationError:
        if fallback_plan is None:
            raise
        from .operators import Affine

        op = Affine(matrix=a, offset=np.zeros(a.shape[0]))
        return estimate(op, spec, fallback_plan, grid)
    return select_certificate(grid, theta_hat, "analytic")
