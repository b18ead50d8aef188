"""Self-maps of finite-dimensional spaces.

Supported forms: affine maps, the 1-D reflection ``x -> 1 - x``, a 1-D
two-valued threshold map, iterated powers, and compositions. Operators are
immutable, evaluation is pure, and everything is black-box: no Jacobians,
no symbolic structure beyond what the constructors pin down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spaces import DimensionMismatchError, NonFiniteError, NormSpec, as_vector, norm


class Operator:
    """Base for all operator forms. Subclasses define ``dimension`` and ``_apply``."""

    dimension: int

    def _apply(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)


@dataclass(frozen=True, eq=False)
class Affine(Operator):
    """``T(x) = A @ x + u`` for a square matrix A and offset u."""

    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64).copy()
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatchError(f"affine matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NonFiniteError("affine matrix has non-finite entries")
        u = as_vector(self.offset, dim=m.shape[0])
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", u)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def _apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x + self.offset


@dataclass(frozen=True)
class Reflection1D(Operator):
    """The 1-D reflection ``T(x) = 1 - x``; an isometry, its only fixed point is 1/2."""

    @property
    def dimension(self) -> int:
        return 1

    def _apply(self, x: np.ndarray) -> np.ndarray:
        return 1.0 - x


@dataclass(frozen=True)
class Threshold1D(Operator):
    """1-D two-valued map: ``low_value`` for x <= cut, ``high_value`` above.

    The lower branch is closed: the value at the cut itself is low_value.
    """

    cut: float
    low_value: float
    high_value: float

    def __post_init__(self) -> None:
        for name in ("cut", "low_value", "high_value"):
            if not np.isfinite(getattr(self, name)):
                raise NonFiniteError(f"threshold parameter {name} must be finite")

    @property
    def dimension(self) -> int:
        return 1

    def _apply(self, x: np.ndarray) -> np.ndarray:
        return np.where(x <= self.cut, self.low_value, self.high_value).astype(np.float64)


@dataclass(frozen=True, eq=False)
class Power(Operator):
    """N successive applications of a base operator."""

    base: Operator
    exponent: int

    def __post_init__(self) -> None:
        if self.exponent < 1:
            raise ValueError("power exponent must be >= 1")

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def _apply(self, x: np.ndarray) -> np.ndarray:
        for _ in range(self.exponent):
            x = evaluate(self.base, x)
        return x


@dataclass(frozen=True, eq=False)
class Composed(Operator):
    """``T(x) = outer(inner(x))``; both maps act on the same space."""

    outer: Operator
    inner: Operator

    def __post_init__(self) -> None:
        if self.outer.dimension != self.inner.dimension:
            raise DimensionMismatchError(
                f"cannot compose dimension {self.inner.dimension} into {self.outer.dimension}"
            )

    @property
    def dimension(self) -> int:
        return self.outer.dimension

    def _apply(self, x: np.ndarray) -> np.ndarray:
        return evaluate(self.outer, evaluate(self.inner, x))


@dataclass(frozen=True, eq=False)
class FixedPointReference:
    """A known fixed point used to validate solver output and error bounds."""

    point: np.ndarray
    residual_tolerance: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "point", as_vector(self.point))
        if self.residual_tolerance < 0:
            raise ValueError("residual_tolerance must be nonnegative")

    def holds_for(self, op: Operator, spec: NormSpec) -> bool:
        """True when ``norm(T(point) - point)`` is within the stated tolerance."""
        return residual(op, self.point, spec) <= self.residual_tolerance


def evaluate(op: Operator, x) -> np.ndarray:
    """Apply an operator to a point, validating dimensions and finiteness.

    A non-finite output signals an ill-posed operator (or an escaping
    iteration) and raises NonFiniteError.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.ndim != 1 or x.size != op.dimension:
        raise DimensionMismatchError(
            f"operator expects dimension {op.dimension}, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("operator applied to a non-finite point")
    out = np.atleast_1d(np.asarray(op._apply(x), dtype=np.float64))
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("operator produced a non-finite value")
    return out


def power(op: Operator, n: int) -> Operator:
    """The operator applying ``op`` n times; ``power(op, 1)`` is ``op`` itself."""
    if n < 1:
        raise ValueError("power exponent must be >= 1")
    if n == 1:
        return op
    return Power(base=op, exponent=n)


def residual(op: Operator, x, spec: NormSpec) -> float:
    """Fixed-point residual ``norm(T(x) - x)``."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return norm(evaluate(op, x) - x, spec)
