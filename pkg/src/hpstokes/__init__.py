"""hp-adaptive Taylor-Hood finite elements for the Stokes problem on quadrilateral meshes."""
from .adaptivity import RefinementPlan, apply_plan, build_plan, choose_pattern, doerfler_mark, local_ritz
from .driver import CycleRecord, RunConfig, run
from .estimator import EstimatorReport, effectivity, estimate
from .mesh import Mesh, check_regularity, make_l_shape_mesh, refine_cells
from .problems import BENCHMARKS, example1, example2, solve_exponent
from .space import HpSpace, build_constraints, distribute_dofs
from .stokes import SolverError, StokesSolution, assemble, energy_error, solve, solve_problem

__all__ = [
    "BENCHMARKS", "CycleRecord", "EstimatorReport", "HpSpace", "Mesh", "RefinementPlan",
    "RunConfig", "SolverError", "StokesSolution", "apply_plan", "assemble", "build_constraints",
    "build_plan", "check_regularity", "choose_pattern", "distribute_dofs", "doerfler_mark",
    "effectivity", "energy_error", "estimate", "example1", "example2", "local_ritz",
    "make_l_shape_mesh", "refine_cells", "run", "solve", "solve_exponent", "solve_problem",
]
