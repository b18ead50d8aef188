"""krasolve: fixed-point solving for enriched contractions.

Maps T satisfying ``norm(b*(x-y) + Tx - Ty) <= theta * norm(x-y)`` with
theta < b + 1 have a unique fixed point, reachable by iterating the
averaged map ``(1-lam)*x + lam*T(x)`` with lam = 1/(b+1). This package
certifies such constants (declared, estimated from samples, or computed
for affine maps), runs the averaged iteration with a priori/a posteriori
error guarantees, and ships local-ball, iterated-power, and two-norm
solve modes plus a CLI with a reproducible benchmark corpus.
"""

from .enrichment import (
    Averaged,
    CheckVerdict,
    DegeneratePlanError,
    EnrichmentCertificate,
    NotCertifiableError,
    PowerIterationError,
    SamplePlan,
    affine_certificate,
    averaged,
    check_certificate,
    default_b_grid,
    estimate,
    estimate_grid,
    induced_norm,
    select_certificate,
)
from .operators import (
    Affine,
    Composed,
    FixedPointReference,
    Operator,
    Power,
    Reflection1D,
    Threshold1D,
    evaluate,
    power,
    residual,
)
from .solver import (
    AdmissionError,
    BackVerificationError,
    BoundValidity,
    DominanceError,
    IterationTrace,
    SolveConfig,
    SolveReport,
    TraceRecord,
    bound_a_posteriori,
    bound_a_priori,
    bound_unified,
    check_bound_validity,
    solve,
    solve_asymptotic,
    solve_local,
    solve_maia,
)
from .spaces import (
    DimensionMismatchError,
    DominanceVerdict,
    NonFiniteError,
    NormPair,
    NormSpec,
    as_vector,
    combine,
    norm,
    validate_dominance,
)

__version__ = "0.1.0"

__all__ = [
    "Affine",
    "AdmissionError",
    "Averaged",
    "BackVerificationError",
    "BoundValidity",
    "CheckVerdict",
    "Composed",
    "DegeneratePlanError",
    "DimensionMismatchError",
    "DominanceError",
    "DominanceVerdict",
    "EnrichmentCertificate",
    "FixedPointReference",
    "IterationTrace",
    "NonFiniteError",
    "NormPair",
    "NormSpec",
    "NotCertifiableError",
    "Operator",
    "Power",
    "PowerIterationError",
    "Reflection1D",
    "SamplePlan",
    "SolveConfig",
    "SolveReport",
    "Threshold1D",
    "TraceRecord",
    "affine_certificate",
    "as_vector",
    "averaged",
    "bound_a_posteriori",
    "bound_a_priori",
    "bound_unified",
    "check_bound_validity",
    "check_certificate",
    "combine",
    "default_b_grid",
    "estimate",
    "estimate_grid",
    "evaluate",
    "induced_norm",
    "norm",
    "power",
    "residual",
    "select_certificate",
    "solve",
    "solve_asymptotic",
    "solve_local",
    "solve_maia",
    "validate_dominance",
]
