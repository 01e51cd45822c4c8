"""Projective splitting for structured monotone inclusions

    0 in sum_i G_i^* (A_i + B_i + C_i + D_i)(G_i z)

with resolvent-accessed ``A_i``, Lipschitz ``B_i``, cocoercive ``C_i`` and
smooth ``D_i`` handled by proximal-Newton steps.
"""
from .engine import ProblemSpec, RunResult, StoppingRule, run
from .errors import (
    BisectionFailure,
    ConfigError,
    InnerSolveFailure,
    InternalInconsistency,
    InvariantViolation,
    OracleFailure,
    SolverFailure,
    ZeroResidual,
)
from .hilbert import BlockPoint, LinearMap
from .operators import OperatorBlock
from .problems import ProblemInstance, certify_solution, reference_solve
from .stepper import Branch, StepConfig

__version__ = "0.1.0"

__all__ = [
    "BisectionFailure", "BlockPoint", "Branch", "ConfigError", "InnerSolveFailure",
    "InternalInconsistency", "InvariantViolation", "LinearMap", "OperatorBlock",
    "OracleFailure", "ProblemInstance", "ProblemSpec", "RunResult", "SolverFailure",
    "StepConfig", "StoppingRule", "ZeroResidual", "certify_solution", "reference_solve", "run",
]
