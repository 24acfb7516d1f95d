"""Goal-driven adaptive DPG refinement for the ultraweak 2D Poisson problem.

Layers, bottom to top: `basis` (Legendre tensor tables), `mesh`
(1-irregular quadrilateral meshes), `spaces` (constrained trial dofs and
broken test spaces), `solver` (primal and dual normal-equation solves),
`goals` (quantity-of-interest catalog), `estimators` (energy and adjoint
refinement indicators), `driver`/`report`/`cli` (the adaptive loop and its
artifacts), `operator_lab`/`selftest` (finite-dimensional duality checks).
"""

from .driver import RunConfig, load_config, run_amr, run_and_report
from .estimators import (
    IndicatorField,
    adhoc_star_indicators,
    energy_indicators,
    explicit_star_indicators,
    implicit_star_indicators,
    product_indicators,
)
from .goals import GoalSpec, ManufacturedSolution, catalog, evaluate_qoi
from .mesh import BoundarySpec, QuadMesh, build_rect_mesh, mark_greedy, refine
from .report import ConvergenceLog, IterationRecord, compare_logs, emit_report
from .selftest import format_report, run_selftest
from .solver import SolveState, solve_dual, solve_primal
from .spaces import TestSpace, TrialSpace, build_test_space, build_trial_space

__version__ = "0.1.0"

__all__ = [
    "BoundarySpec",
    "ConvergenceLog",
    "GoalSpec",
    "IndicatorField",
    "IterationRecord",
    "ManufacturedSolution",
    "QuadMesh",
    "RunConfig",
    "SolveState",
    "TestSpace",
    "TrialSpace",
    "adhoc_star_indicators",
    "build_rect_mesh",
    "build_test_space",
    "build_trial_space",
    "catalog",
    "compare_logs",
    "emit_report",
    "energy_indicators",
    "evaluate_qoi",
    "explicit_star_indicators",
    "format_report",
    "implicit_star_indicators",
    "load_config",
    "mark_greedy",
    "product_indicators",
    "refine",
    "run_amr",
    "run_and_report",
    "run_selftest",
    "solve_dual",
    "solve_primal",
    "__version__",
]
