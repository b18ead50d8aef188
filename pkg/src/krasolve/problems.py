"""Problem-file ingestion: strict TOML schema for solver problems.

A problem file has sections [space], [operator], [certificate], [solve]
and optionally [reference] and [bench]. Unknown keys are rejected
anywhere: a misspelled key must fail loudly rather than silently fall
back to a default. See the README for the full grammar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .enrichment import (
    DEFAULT_B_MAX,
    DEFAULT_B_STEP,
    EnrichmentCertificate,
)
from .operators import (
    Affine,
    Composed,
    FixedPointReference,
    Operator,
    Power,
    Reflection1D,
    Threshold1D,
)
from .spaces import NORM_KINDS, NormSpec

DEFAULT_SEED = 42
DEFAULT_TOL = 1e-10
DEFAULT_PAIRS = 1000
DEFAULT_DOMINANCE_SAMPLES = 1000

SOLVE_MODES = ("global", "local", "asymptotic", "maia")


class ProblemFileError(ValueError):
    """A problem file failed validation; the message names the field."""


class _Table:
    """Strict reader over one TOML table: typed takes, leftovers rejected."""

    def __init__(self, data: dict, where: str):
        self._data = dict(data)
        self.where = where

    def error(self, message: str) -> ProblemFileError:
        return ProblemFileError(f"{self.where}: {message}")

    def take_float(self, key, required=False, default=None):
        v = self._take(key, required)
        if v is None:
            return default
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.error(f"key {key!r} must be a number")
        v = float(v)
        if not np.isfinite(v):
            raise self.error(f"key {key!r} must be finite")
        return v

    def take_int(self, key, required=False, default=None):
        v = self._take(key, required)
        if v is None:
            return default
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.error(f"key {key!r} must be an integer")
        return int(v)

    def take_str(self, key, required=False, default=None, choices=None):
        v = self._take(key, required)
        if v is None:
            return default
        if not isinstance(v, str):
            raise self.error(f"key {key!r} must be a string")
        if choices is not None and v not in choices:
            raise self.error(f"key {key!r} must be one of {list(choices)}, got {v!r}")
        return v

    def take_vector(self, key, required=False, default=None, dim=None):
        v = self._take(key, required)
        if v is None:
            return default
        arr = self._number_list(key, v)
        if dim is not None and arr.size != dim:
            raise self.error(f"key {key!r} must have {dim} entries, got {arr.size}")
        return arr

    def take_matrix(self, key, required=False, dim=None):
        v = self._take(key, required)
        if v is None:
            return None
        if not isinstance(v, list) or not all(isinstance(row, list) for row in v):
            raise self.error(f"key {key!r} must be an array of arrays of numbers")
        rows = [self._number_list(key, row) for row in v]
        if not rows or any(r.size != len(rows) for r in rows):
            raise self.error(f"key {key!r} must be a square matrix")
        m = np.stack(rows)
        if dim is not None and m.shape[0] != dim:
            raise self.error(f"key {key!r} must be {dim}x{dim}, got {m.shape}")
        return m

    def take_box(self, key, required=False, dim=None):
        v = self._take(key, required)
        if v is None:
            return None
        if not isinstance(v, list):
            raise self.error(f"key {key!r} must be an array of [low, high] pairs")
        box = []
        for k, entry in enumerate(v):
            pair = self._number_list(key, entry)
            if pair.size != 2:
                raise self.error(f"key {key!r} entry {k} must be a [low, high] pair")
            box.append((float(pair[0]), float(pair[1])))
        if dim is not None and len(box) != dim:
            raise self.error(f"key {key!r} must have {dim} entries, got {len(box)}")
        return tuple(box)

    def take_table(self, key, required=False):
        v = self._take(key, required)
        if v is None:
            return None
        if not isinstance(v, dict):
            raise self.error(f"key {key!r} must be a table")
        return _Table(v, f"{self.where}.{key}")

    def _number_list(self, key, v) -> np.ndarray:
        if not isinstance(v, list) or not v:
            raise self.error(f"key {key!r} must be a nonempty array of numbers")
        for entry in v:
            if isinstance(entry, bool) or not isinstance(entry, (int, float)):
                raise self.error(f"key {key!r} must contain only numbers")
        arr = np.asarray([float(e) for e in v], dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise self.error(f"key {key!r} must contain only finite numbers")
        return arr

    def _take(self, key, required):
        if key not in self._data:
            if required:
                raise self.error(f"missing required key {key!r}")
            return None
        return self._data.pop(key)

    def finish(self) -> None:
        if self._data:
            names = ", ".join(repr(k) for k in sorted(self._data))
            raise self.error(f"unknown key(s) {names}")


@dataclass(frozen=True)
class EstimateParams:
    """Sampling and grid parameters for empirical certificate estimation."""

    pairs: int = DEFAULT_PAIRS
    seed: int = DEFAULT_SEED
    b_max: float = DEFAULT_B_MAX
    b_step: float = DEFAULT_B_STEP


@dataclass
class Problem:
    """A fully validated in-memory problem."""

    path: str
    dimension: int
    norm: NormSpec
    operator: Operator
    certificate_mode: str
    declared: EnrichmentCertificate | None
    estimate_params: EstimateParams
    domain: tuple[tuple[float, float], ...]
    mode: str
    x0: np.ndarray
    tol: float
    max_iter: int | None
    radius: float | None
    n_power: int | None
    d_norm: NormSpec | None
    dominance_samples: int
    reference: FixedPointReference | None
    expect: str
    echo: dict


def _build_norm(table: _Table, dim: int) -> NormSpec:
    kind = table.take_str("kind", required=True, choices=NORM_KINDS)
    weights = table.take_vector("weights", dim=dim)
    table.finish()
    try:
        return NormSpec(kind=kind, weights=weights)
    except ValueError as exc:
        raise table.error(str(exc)) from exc


def _build_operator(table: _Table, dim: int) -> Operator:
    form = table.take_str(
        "form",
        required=True,
        choices=("affine", "reflection1d", "threshold1d", "power", "composed"),
    )
    try:
        if form == "affine":
            matrix = table.take_matrix("matrix", required=True, dim=dim)
            offset = table.take_vector("offset", default=np.zeros(dim), dim=dim)
            table.finish()
            return Affine(matrix=matrix, offset=offset)
        if form == "reflection1d":
            table.finish()
            if dim != 1:
                raise table.error("reflection1d requires dimension 1")
            return Reflection1D()
        if form == "threshold1d":
            cut = table.take_float("cut", required=True)
            low = table.take_float("low", required=True)
            high = table.take_float("high", required=True)
            table.finish()
            if dim != 1:
                raise table.error("threshold1d requires dimension 1")
            return Threshold1D(cut=cut, low_value=low, high_value=high)
        if form == "power":
            exponent = table.take_int("exponent", required=True)
            base = table.take_table("base", required=True)
            table.finish()
            if exponent < 1:
                raise table.error("power exponent must be >= 1")
            return Power(base=_build_operator(base, dim), exponent=exponent)
        # composed
        outer = table.take_table("outer", required=True)
        inner = table.take_table("inner", required=True)
        table.finish()
        return Composed(outer=_build_operator(outer, dim), inner=_build_operator(inner, dim))
    except ProblemFileError:
        raise
    except ValueError as exc:
        raise table.error(str(exc)) from exc


def _operator_echo(op: Operator) -> dict:
    if isinstance(op, Affine):
        return {
            "form": "affine",
            "matrix": [[float(v) for v in row] for row in op.matrix],
            "offset": [float(v) for v in op.offset],
        }
    if isinstance(op, Reflection1D):
        return {"form": "reflection1d"}
    if isinstance(op, Threshold1D):
        return {
            "form": "threshold1d",
            "cut": float(op.cut),
            "low": float(op.low_value),
            "high": float(op.high_value),
        }
    if isinstance(op, Power):
        return {"form": "power", "exponent": op.exponent, "base": _operator_echo(op.base)}
    if isinstance(op, Composed):
        return {
            "form": "composed",
            "outer": _operator_echo(op.outer),
            "inner": _operator_echo(op.inner),
        }
    raise TypeError(f"unknown operator form {type(op).__name__}")


def parse_problem(path: str) -> Problem:
    """Parse and validate a problem file; raises ProblemFileError on any defect."""
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ProblemFileError(f"{path}: TOML syntax error: {exc}") from exc

    root = _Table(data, "problem")

    space = root.take_table("space", required=True)
    dim = space.take_int("dimension", required=True)
    if dim is None or dim < 1:
        raise space.error("dimension must be an integer >= 1")
    norm_kind = space.take_str("norm", required=True, choices=NORM_KINDS)
    weights = space.take_vector("weights", dim=dim)
    space.finish()
    try:
        norm_spec = NormSpec(kind=norm_kind, weights=weights)
    except ValueError as exc:
        raise ProblemFileError(f"space: {exc}") from exc

    op_table = root.take_table("operator", required=True)
    op = _build_operator(op_table, dim)

    cert_table = root.take_table("certificate", required=True)
    cert_mode = cert_table.take_str("mode", default="declared", choices=("declared", "estimate"))
    domain = cert_table.take_box("domain", dim=dim)
    if domain is None:
        domain = tuple((-1.0, 1.0) for _ in range(dim))
    declared = None
    params = EstimateParams()
    if cert_mode == "declared":
        b = cert_table.take_float("b", required=True)
        theta = cert_table.take_float("theta", required=True)
        cert_table.finish()
        try:
            declared = EnrichmentCertificate(b=b, theta=theta, provenance="declared")
        except ValueError as exc:
            raise ProblemFileError(f"certificate: {exc}") from exc
    else:
        pairs = cert_table.take_int("pairs", default=DEFAULT_PAIRS)
        seed = cert_table.take_int("seed", default=DEFAULT_SEED)
        b_max = cert_table.take_float("b_max", default=DEFAULT_B_MAX)
        b_step = cert_table.take_float("b_step", default=DEFAULT_B_STEP)
        cert_table.finish()
        if pairs < 1:
            raise ProblemFileError("certificate: pairs must be >= 1")
        if b_step <= 0 or b_max < 0:
            raise ProblemFileError("certificate: b_step must be > 0 and b_max >= 0")
        params = EstimateParams(pairs=pairs, seed=seed, b_max=b_max, b_step=b_step)

    solve = root.take_table("solve", required=True)
    mode = solve.take_str("mode", default="global", choices=SOLVE_MODES)
    x0 = solve.take_vector("x0", required=True, dim=dim)
    tol = solve.take_float("tol", default=DEFAULT_TOL)
    if tol <= 0:
        raise ProblemFileError("solve: tol must be > 0")
    max_iter = solve.take_int("max_iter")
    if max_iter is not None and max_iter < 1:
        raise ProblemFileError("solve: max_iter must be >= 1")
    radius = solve.take_float("radius")
    n_power = solve.take_int("power")
    d_norm_table = solve.take_table("d_norm")
    dominance_samples = solve.take_int("dominance_samples", default=DEFAULT_DOMINANCE_SAMPLES)
    solve.finish()

    if mode == "local":
        if radius is None or radius <= 0:
            raise ProblemFileError("solve: local mode requires radius > 0")
    elif radius is not None:
        raise ProblemFileError(f"solve: key 'radius' is only valid in local mode, not {mode!r}")
    if mode == "asymptotic":
        if n_power is None or n_power < 1:
            raise ProblemFileError("solve: asymptotic mode requires power >= 1")
    elif n_power is not None:
        raise ProblemFileError(f"solve: key 'power' is only valid in asymptotic mode, not {mode!r}")
    d_norm = None
    if mode == "maia":
        if d_norm_table is None:
            raise ProblemFileError("solve: maia mode requires a [solve.d_norm] table")
        d_norm = _build_norm(d_norm_table, dim)
    elif d_norm_table is not None:
        raise ProblemFileError(f"solve: table 'd_norm' is only valid in maia mode, not {mode!r}")
    if dominance_samples < 1:
        raise ProblemFileError("solve: dominance_samples must be >= 1")

    reference = None
    ref_table = root.take_table("reference")
    if ref_table is not None:
        point = ref_table.take_vector("point", required=True, dim=dim)
        ref_tol = ref_table.take_float("residual_tolerance", default=0.0)
        ref_table.finish()
        if ref_tol < 0:
            raise ProblemFileError("reference: residual_tolerance must be >= 0")
        reference = FixedPointReference(point=point, residual_tolerance=ref_tol)

    expect = "converge"
    bench_table = root.take_table("bench")
    if bench_table is not None:
        expect = bench_table.take_str("expect", default="converge", choices=("converge", "diverge"))
        bench_table.finish()

    root.finish()

    echo: dict = {
        "path": path,
        "space": {"dimension": dim, "norm": norm_spec.describe()},
        "operator": _operator_echo(op),
        "certificate": (
            {"mode": "declared", "b": declared.b, "theta": declared.theta}
            if declared is not None
            else {
                "mode": "estimate",
                "pairs": params.pairs,
                "seed": params.seed,
                "b_max": params.b_max,
                "b_step": params.b_step,
            }
        ),
        "domain": [[lo, hi] for lo, hi in domain],
        "solve": {
            "mode": mode,
            "x0": [float(v) for v in x0],
            "tol": tol,
            "max_iter": max_iter,
        },
    }
    if radius is not None:
        echo["solve"]["radius"] = radius
    if n_power is not None:
        echo["solve"]["power"] = n_power
    if d_norm is not None:
        echo["solve"]["d_norm"] = d_norm.describe()
        echo["solve"]["dominance_samples"] = dominance_samples
    if reference is not None:
        echo["reference"] = {
            "point": [float(v) for v in reference.point],
            "residual_tolerance": reference.residual_tolerance,
        }
    if expect != "converge":
        echo["bench"] = {"expect": expect}

    return Problem(
        path=path,
        dimension=dim,
        norm=norm_spec,
        operator=op,
        certificate_mode=cert_mode,
        declared=declared,
        estimate_params=params,
        domain=domain,
        mode=mode,
        x0=x0,
        tol=tol,
        max_iter=max_iter,
        radius=radius,
        n_power=n_power,
        d_norm=d_norm,
        dominance_samples=dominance_samples,
        reference=reference,
        expect=expect,
        echo=echo,
    )
