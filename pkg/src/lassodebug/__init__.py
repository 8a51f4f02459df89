"""Find contaminated labels in linear regression data with a two-pool Lasso."""

__version__ = "0.1.0"

from .core import (CleanPool, ContaminatedPool, DebugProblem, GroundTruth, StackedSystem, build_stacked,
                   residual_projection)
from .errors import DebugError
from .lasso import (LassoSolution, SolverOptions, huber_loss, pdw_construct, soft_threshold, solve_gamma,
                    solve_joint, solve_weighted_m)
from .conditions import (ConditionReport, OrthogonalDesign, check_conditions, eigenvalue_sweep,
                         orthogonal_conditions, repetition_budget)
from .tuning import TuningConfig, TuningResult, select_lambda
from .game import (GameInstance, GameOutcome, certify_foolable, debug_strategy, generator_search,
                   nullspace_matrix)
from .synth import SynthSpec, generate, generate_clean_pool
from .io import RunReport, load_csv

__all__ = [
    "CleanPool", "ContaminatedPool", "DebugProblem", "GroundTruth", "StackedSystem", "build_stacked",
    "residual_projection", "DebugError", "LassoSolution", "SolverOptions", "huber_loss", "pdw_construct",
    "soft_threshold", "solve_gamma", "solve_joint", "solve_weighted_m", "ConditionReport",
    "OrthogonalDesign", "check_conditions", "eigenvalue_sweep", "orthogonal_conditions",
    "repetition_budget", "TuningConfig", "TuningResult", "select_lambda", "GameInstance", "GameOutcome",
    "certify_foolable", "debug_strategy", "generator_search", "nullspace_matrix", "SynthSpec", "generate",
    "generate_clean_pool", "RunReport", "load_csv",
]
