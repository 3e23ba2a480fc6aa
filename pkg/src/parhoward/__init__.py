"""Howard policy iteration and its domain-decomposed parallel variant for
steady first-order Hamilton-Jacobi-Bellman equations on uniform grids."""

from .errors import (
    CflViolation,
    ConfigError,
    DimensionOutOfRange,
    EmptyTargetAtThisResolution,
    HowardError,
    MaxIterExceeded,
    MaxOuterExceeded,
    MissingFixedValue,
    NonConformingSpacing,
    PointOutsideDomain,
    SingularSystem,
    TooManySplits,
    UnknownProblem,
)
from .grid import Decomposition, Grid, build_grid, decompose, optimal_splits
from .howard import HowardResult, bellman_residual, howard_solve, policy_evaluate, policy_improve
from .maxmin import GameSpec, f_beta_solve, maxmin_howard, maxmin_solve, saddle_residual
from .pha import PhaConfig, SolveReport, coarse_init, monotone_trajectory_check, pha_solve
from .problems import (
    ObstacleSpec,
    TargetSpec,
    analytic_eikonal,
    apply_obstacle,
    apply_target,
    ball_target,
    builtin_problem,
    disk_obstacle,
)
from .scheme import (
    AssembledSystem,
    ProblemSpec,
    SystemRow,
    assemble_row_sl,
    assemble_row_upwind,
    assemble_system,
    interp_weights,
)

__version__ = "0.1.0"
