"""Harmonic MPC with cone-band output constraints, solved by ADMM."""
from .admm import AdmmSettings, DivergenceError, SolveResult, SolverState, Status, solve
from .bench import bench_compare, gen_polygon, stable_surrogate_problem, surrogate_problem
from .cones import (ConeBand, ShiftedCone, cone_contains, dykstra_project, project_band,
                    project_shifted_cone)
from .hmpc import (CondensedQP, Encoding, HarmonicParams, HmpcProblem, ProblemError, Solution,
                   assemble, extract_solution, harmonic_reference, objective_value, update_online)
from .qpcore import (KktOperators, SetupError, SparseMatrixCSR, build_kkt_operators,
                     csr_matvec, csr_matvec_transpose, solve_equality_qp)
from .sim import ClosedLoopTrace, Controller, ReferenceChange, Scenario, plant_step, run_closed_loop

__version__ = "0.1.0"

__all__ = [
    "AdmmSettings", "DivergenceError", "SolveResult", "SolverState", "Status", "solve",
    "bench_compare", "gen_polygon", "stable_surrogate_problem", "surrogate_problem",
    "ConeBand", "ShiftedCone", "cone_contains", "dykstra_project", "project_band",
    "project_shifted_cone",
    "CondensedQP", "Encoding", "HarmonicParams", "HmpcProblem", "ProblemError", "Solution",
    "assemble", "extract_solution", "harmonic_reference", "objective_value", "update_online",
    "KktOperators", "SetupError", "SparseMatrixCSR", "build_kkt_operators", "csr_matvec",
    "csr_matvec_transpose", "solve_equality_qp",
    "ClosedLoopTrace", "Controller", "ReferenceChange", "Scenario", "plant_step", "run_closed_loop",
]
