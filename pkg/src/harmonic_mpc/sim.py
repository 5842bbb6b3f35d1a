"""Closed-loop simulation of an LTI plant under the HMPC controller."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .admm import AdmmSettings, BlockProjector, SolverState, prime_kernels, solve
from .hmpc import (CondensedQP, Encoding, HarmonicParams, HmpcProblem, assemble,
                   extract_solution, objective_value, update_online)
from .qpcore import KktOperators, build_kkt_operators

__all__ = [
    "ReferenceChange",
    "Scenario",
    "TraceRow",
    "ClosedLoopTrace",
    "Controller",
    "plant_step",
    "run_closed_loop",
]


def plant_step(A, B, x, u) -> np.ndarray:
    """``A x + B u``."""
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    x, u = np.atleast_1d(x), np.atleast_1d(u)
    if A.shape != (x.size, x.size) or B.shape != (x.size, u.size):
        raise ValueError(f"plant_step: A {A.shape}, B {B.shape} incompatible with x {x.shape}, u {u.shape}")
    return A @ x + B @ u


@dataclass(frozen=True)
class ReferenceChange:
    start_step: int
    x_r: np.ndarray
    u_r: np.ndarray


@dataclass
class Scenario:
    problem: HmpcProblem
    x0: np.ndarray
    reference_schedule: list
    steps: int
    settings: AdmmSettings = field(default_factory=AdmmSettings)
    encoding: Encoding = Encoding.BAND
    warm_start: bool = True

    def __post_init__(self):
        self.encoding = Encoding(self.encoding)
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.problem.n_x,):
            raise ValueError(f"x0 has shape {self.x0.shape}, expected ({self.problem.n_x},)")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be an integer >= 1, got {self.steps!r}")
        if not self.reference_schedule:
            raise ValueError("reference schedule is empty")
        starts = [r.start_step for r in self.reference_schedule]
        if starts[0] != 0 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("reference schedule must start at step 0 and be strictly increasing")

    def reference_at(self, t: int) -> ReferenceChange:
        current = self.reference_schedule[0]
        for r in self.reference_schedule:
            if r.start_step <= t:
                current = r
            else:
                break
        return current


@dataclass
class TraceRow:
    t: int
    x: np.ndarray
    u: np.ndarray
    x_r: np.ndarray
    u_r: np.ndarray
    iterations: int
    solve_time: float
    primal_residual: float
    dual_residual: float
    objective: float
    theta: HarmonicParams
    converged: bool


@dataclass
class ClosedLoopTrace:
    rows: list = field(default_factory=list)
    setup_time: float = 0.0
    aborted: str | None = None

    def __len__(self):
        return len(self.rows)

    @property
    def states(self) -> np.ndarray:
        return np.array([r.x for r in self.rows])

    @property
    def inputs(self) -> np.ndarray:
        return np.array([r.u for r in self.rows])

    @property
    def iterations(self) -> np.ndarray:
        return np.array([r.iterations for r in self.rows])

    @property
    def solve_times(self) -> np.ndarray:
        return np.array([r.solve_time for r in self.rows])


class Controller:
    """Assembled problem, operators and warm-start memory of one controller."""

    def __init__(self, problem: HmpcProblem, settings: AdmmSettings = AdmmSettings(),
                 encoding: Encoding | str = Encoding.BAND):
        t0 = time.perf_counter()
        self.problem = problem
        self.settings = settings
        self.qp: CondensedQP = assemble(problem, encoding)
        self.ops: KktOperators = build_kkt_operators(
            self.qp.H, self.qp.G, self.qp.C, settings.rho, problem.n_x)
        self.projector = BlockProjector(self.qp.block_map, self.qp.dims.m)
        prime_kernels(self.qp, self.ops, self.projector)
        self.setup_time = time.perf_counter() - t0
        self.last_state: SolverState | None = None

    def solve(self, x_t, x_r, u_r, warm: bool = True):
        update_online(self.qp, x_t, x_r, u_r)
        start = self.last_state if warm else None
        res = solve(self.qp, self.ops, self.settings, start, projector=self.projector)
        res.setup_time = self.setup_time
        self.last_state = res.state
        return res


def run_closed_loop(sc: Scenario) -> ClosedLoopTrace:
    """Simulate ``sc.steps`` steps of the plant under HMPC.

    A solver divergence stops the run; the rows collected so far are kept and
    ``trace.aborted`` records the reason.
    """
    prob = sc.problem
    ctrl = Controller(prob, sc.settings, sc.encoding)
    trace = ClosedLoopTrace(setup_time=ctrl.setup_time)
    x = sc.x0.copy()
    for t in range(sc.steps):
        ref = sc.reference_at(t)
        try:
            res = ctrl.solve(x, ref.x_r, ref.u_r, warm=sc.warm_start and t > 0)
        except RuntimeError as exc:
            trace.aborted = f"step {t}: {exc}"
            break
        sol = extract_solution(ctrl.qp, res.z)
        trace.rows.append(TraceRow(
            t=t, x=x.copy(), u=sol.u0.copy(), x_r=np.asarray(ref.x_r, float), u_r=np.asarray(ref.u_r, float),
            iterations=res.iterations, solve_time=res.solve_time,
            primal_residual=res.primal_residual, dual_residual=res.dual_residual,
            objective=objective_value(prob, res.z, x, ref.x_r, ref.u_r, ctrl.qp),
            theta=sol.theta, converged=res.converged,
        ))
        x = plant_step(prob.A, prob.B, x, sol.u0)
    return trace
