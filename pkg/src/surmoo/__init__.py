"""surmoo: surrogate-assisted constrained multi-objective optimization.

A joint differentiable model learns objectives and constraint feasibility
from every true evaluation; its input gradients steer candidate batches
toward feasible, high-quality regions, hybridized with an NSGA-II loop.
"""

from .core import (
    EvaluationRecord,
    ParameterSpace,
    ParetoArchive,
    Population,
    Provenance,
    RandomStream,
    RunHistory,
    dominates,
    is_feasible,
)
from .engine import RunConfig, RunResult, run
from .feasolve import FeasolveConfig
from .problems import PROBLEM_REGISTRY, ProblemDefinition, get_problem
from .surrogate import JointSurrogate, SurrogateConfig

__version__ = "0.1.0"

__all__ = [
    "EvaluationRecord",
    "FeasolveConfig",
    "JointSurrogate",
    "ParameterSpace",
    "ParetoArchive",
    "Population",
    "ProblemDefinition",
    "PROBLEM_REGISTRY",
    "Provenance",
    "RandomStream",
    "RunConfig",
    "RunHistory",
    "RunResult",
    "SurrogateConfig",
    "dominates",
    "get_problem",
    "is_feasible",
    "run",
    "__version__",
]
