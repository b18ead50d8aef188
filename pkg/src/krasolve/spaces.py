"""Vectors, norms, and dominated norm pairs on finite-dimensional spaces.

Points are 1-D float64 arrays of fixed dimension. Norms are the p-norms
for p in {1, 2, inf}, optionally with a positive per-coordinate weight
vector w, in which case ``norm(v) = ||w * v||_p``. All values here are
immutable after construction and every operation is pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORM_KINDS = ("l1", "l2", "linf")

# Relative slack applied to norm inequalities; absorbs rounding at problem
# scales ~1 without masking real violations.
DOMINANCE_SLACK = 1e-12


class DimensionMismatchError(ValueError):
    """Operands live in spaces of different dimensions."""


class NonFiniteError(ValueError):
    """A vector contains NaN or infinite coordinates."""


def as_vector(values, dim: int | None = None) -> np.ndarray:
    """Coerce ``values`` to an immutable float64 vector, validating it.

    Scalars become 1-D vectors of dimension 1. Rejects non-finite entries
    and, when ``dim`` is given, any dimension mismatch.
    """
    v = np.atleast_1d(np.asarray(values, dtype=np.float64)).copy()
    if v.ndim != 1:
        raise DimensionMismatchError(f"expected a 1-D vector, got shape {v.shape}")
    if v.size < 1:
        raise DimensionMismatchError("vectors must have dimension >= 1")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"vector has non-finite coordinates: {v}")
    if dim is not None and v.size != dim:
        raise DimensionMismatchError(f"expected dimension {dim}, got {v.size}")
    v.flags.writeable = False
    return v


@dataclass(frozen=True, eq=False)
class NormSpec:
    """A p-norm, optionally coordinate-weighted.

    kind: one of "l1", "l2", "linf".
    weights: optional strictly positive per-coordinate weights; the norm of
        v is then the plain p-norm of ``weights * v``.
    """

    kind: str
    weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        kind = self.kind.lower()
        if kind not in NORM_KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}; expected one of {NORM_KINDS}")
        object.__setattr__(self, "kind", kind)
        if self.weights is not None:
            w = as_vector(self.weights)
            if not np.all(w > 0):
                raise ValueError("norm weights must be strictly positive")
            object.__setattr__(self, "weights", w)

    def describe(self) -> dict:
        """JSON-friendly description of this norm."""
        out: dict = {"kind": self.kind}
        if self.weights is not None:
            out["weights"] = [float(w) for w in self.weights]
        return out


@dataclass(frozen=True, eq=False)
class NormPair:
    """A dominated pair of norms: ``norm_d(v) <= norm_rho(v)`` is expected.

    Dominance is an empirical precondition checked by sampling, see
    :func:`validate_dominance`; it is not proved symbolically.
    """

    d: NormSpec
    rho: NormSpec


@dataclass(frozen=True, eq=False)
class DominanceVerdict:
    """Outcome of a sampled dominance check.

    worst_ratio is the largest observed ``norm_d(v) / norm_rho(v)``;
    witness is a vector attaining it.
    """

    passed: bool
    worst_ratio: float
    witness: np.ndarray
    checked: int


def _weighted(v: np.ndarray, spec: NormSpec) -> np.ndarray:
    if spec.weights is None:
        return v
    if spec.weights.size != v.size:
        raise DimensionMismatchError(
            f"norm weights have dimension {spec.weights.size}, vector has {v.size}"
        )
    return spec.weights * v


def norm(v, spec: NormSpec) -> float:
    """Evaluate the (possibly weighted) p-norm of a vector."""
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if v.ndim != 1:
        raise DimensionMismatchError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("norm of a non-finite vector is undefined")
    w = _weighted(v, spec)
    if spec.kind == "l1":
        return float(np.sum(np.abs(w)))
    if spec.kind == "l2":
        return float(np.sqrt(np.sum(w * w)))
    return float(np.max(np.abs(w)))


def combine(alpha: float, x, beta: float, y) -> np.ndarray:
    """Return ``alpha*x + beta*y`` coordinatewise.

    Each coordinate is computed with one rounding per product plus one for
    the sum, so it matches the fused value within 1 ulp whenever the
    products are exactly representable.
    """
    if not (np.isfinite(alpha) and np.isfinite(beta)):
        raise NonFiniteError("combine coefficients must be finite")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionMismatchError(f"cannot combine shapes {x.shape} and {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFiniteError("combine of non-finite vectors is undefined")
    return alpha * x + beta * y


def _dominance_dimension(pair: NormPair, dimension: int | None) -> int:
    dims = set()
    for spec in (pair.d, pair.rho):
        if spec.weights is not None:
            dims.add(spec.weights.size)
    if dimension is not None:
        dims.add(int(dimension))
    if not dims:
        raise ValueError("dimension is required when neither norm carries weights")
    if len(dims) > 1:
        raise DimensionMismatchError(f"conflicting dimensions for dominance check: {sorted(dims)}")
    return dims.pop()


def validate_dominance(
    pair: NormPair,
    sample_count: int,
    seed: int,
    *,
    dimension: int | None = None,
) -> DominanceVerdict:
    """Check ``norm_d(v) <= norm_rho(v)`` on seeded random vectors.

    Besides ``sample_count`` standard-normal samples, the all-ones vector
    and the coordinate basis vectors are always probed so that classic
    violations (e.g. the l1-vs-l2 swap, worst at the diagonal) yield a
    deterministic witness. Passing requires every vector to satisfy the
    inequality with relative slack 1e-12.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    dim = _dominance_dimension(pair, dimension)
    rng = np.random.default_rng(seed)
    probes = [np.ones(dim)]
    probes.extend(np.eye(dim))
    samples = rng.standard_normal((sample_count, dim))
    vectors = probes + [samples[i] for i in range(sample_count)]

    passed = True
    worst = -np.inf
    witness = probes[0]
    for v in vectors:
        nd = norm(v, pair.d)
        nr = norm(v, pair.rho)
        if nr == 0.0:
            continue
        ratio = nd / nr
        if ratio > worst:
            worst = ratio
            witness = v
        if nd > nr * (1.0 + DOMINANCE_SLACK):
            passed = False
    return DominanceVerdict(
        passed=passed,
        worst_ratio=float(worst),
        witness=as_vector(witness),
        checked=len(vectors),
    )
