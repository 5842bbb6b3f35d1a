"""Band-vs-split-cone benchmark: polygon position constraints of growing size.

Each side of a regular ``l``-gon on a 2-D position subspace adds one output
row with two nonzeros.  For every ``l`` both encodings are solved from the
same random initial states and the averages are compared.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass, field, replace

import numpy as np

from .admm import AdmmSettings
from .hmpc import Encoding, HmpcProblem
from .sim import Controller

__all__ = [
    "BenchConfig",
    "BenchReport",
    "gen_polygon",
    "with_polygon",
    "surrogate_problem",
    "surrogate_bench_config",
    "stable_surrogate_problem",
    "bench_compare",
]


def gen_polygon(l: int, radius: float = 2.0):
    """Half-space rows of the regular ``l``-gon with circumradius ``radius``.

    Vertices sit at angles ``2 pi k / l`` starting from 0.  Row ``k`` is the
    edge between vertices ``k`` and ``k+1``: ``a_k' p <= radius cos(pi/l)``.
    The lower bound of each row is the polygon's own minimum of ``a_k' p``,
    so the two-sided rows describe the polygon exactly for odd and even ``l``.

    Returns
    -------
    rows : ndarray (l, 2)
    lower, upper : ndarray (l,)
    vertices : ndarray (l, 2)
    """
    if int(l) != l or l < 3:
        raise ValueError(f"a polygon needs at least 3 sides, got {l!r}")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius!r}")
    l = int(l)
    ang = 2 * np.pi * np.arange(l) / l
    vertices = radius * np.column_stack((np.cos(ang), np.sin(ang)))
    normal_ang = ang + np.pi / l
    rows = np.column_stack((np.cos(normal_ang), np.sin(normal_ang)))
    upper = np.full(l, radius * np.cos(np.pi / l))
    lower = (rows @ vertices.T).min(axis=1)
    return rows, lower, upper, vertices


def with_polygon(prob: HmpcProblem, position_idx, l: int, radius: float = 2.0) -> HmpcProblem:
    """Copy of ``prob`` with ``l`` polygon rows appended on the position states."""
    i, j = position_idx
    rows, lower, upper, _ = gen_polygon(l, radius)
    E_poly = np.zeros((l, prob.n_x))
    E_poly[:, i] = rows[:, 0]
    E_poly[:, j] = rows[:, 1]
    return replace(
        prob,
        E=np.vstack((prob.E, E_poly)),
        F=np.vstack((prob.F, np.zeros((l, prob.n_u)))),
        y_lower=np.concatenate((prob.y_lower, lower)),
        y_upper=np.concatenate((prob.y_upper, upper)),
    )


def surrogate_problem(N: int = 5, w: float = 0.3, dt: float = 0.2) -> HmpcProblem:
    """Double integrator per axis, state ``(p1, v1, p2, v2)``, input ``(a1, a2)``.

    Stands in for a ball-and-plate plant: positions in ``[-3, 3]``, speeds in
    ``[-1, 1]``, accelerations in ``[-1, 1]``.
    """
    Ai = np.array([[1.0, dt], [0.0, 1.0]])
    Bi = np.array([[0.5 * dt ** 2], [dt]])
    A = np.kron(np.eye(2), Ai)
    B = np.kron(np.eye(2), Bi)
    E = np.vstack((np.eye(4), np.zeros((2, 4))))
    F = np.vstack((np.zeros((4, 2)), np.eye(2)))
    y_hi = np.array([3.0, 1.0, 3.0, 1.0, 1.0, 1.0])
    return HmpcProblem(
        A=A, B=B, E=E, F=F, y_lower=-y_hi, y_upper=y_hi,
        Q=np.diag([1.0, 0.5, 1.0, 0.5]), R=0.5 * np.eye(2),
        T_e=np.diag([10.0, 5.0, 10.0, 5.0]), T_h=np.full(4, 0.5),
        S_e=0.5 * np.eye(2), S_h=np.full(2, 0.5),
        N=N, w=w,
    )


def stable_surrogate_problem(N: int = 5, w: float = 0.3) -> HmpcProblem:
    """Stable two-state plant with output ``x1`` bounded to ``[-1, 1]`` and ``|u| <= 1``."""
    A = np.array([[0.9, 0.2], [0.0, 0.8]])
    B = np.array([[0.0], [0.5]])
    E = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    F = np.array([[0.0], [0.0], [1.0]])
    return HmpcProblem(
        A=A, B=B, E=E, F=F,
        y_lower=np.array([-1.0, -2.0, -1.0]), y_upper=np.array([1.0, 2.0, 1.0]),
        Q=np.eye(2), R=0.1 * np.eye(1), T_e=10 * np.eye(2), T_h=np.ones(2),
        S_e=0.1 * np.eye(1), S_h=np.ones(1), N=N, w=w,
    )


@dataclass
class BenchConfig:
    """Everything :func:`bench_compare` needs besides the settings."""

    problem: HmpcProblem
    position_idx: tuple
    x_r: np.ndarray
    u_r: np.ndarray
    init_lower: np.ndarray
    init_upper: np.ndarray
    radius: float = 2.0


def surrogate_bench_config(N: int = 5, w: float = 0.3) -> BenchConfig:
    prob = surrogate_problem(N=N, w=w)
    return BenchConfig(
        problem=prob, position_idx=(0, 2),
        x_r=np.array([1.2, 0.0, 0.4, 0.0]), u_r=np.zeros(2),
        init_lower=np.array([-1.0, -0.2, -1.0, -0.2]),
        init_upper=np.array([1.0, 0.2, 1.0, 0.2]),
    )


@dataclass
class BenchReport:
    """Per-configuration statistics and the split-cone / band ratio rows."""

    rows: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    min_runs: int = 1

    ROW_FIELDS = ("encoding", "sides", "n_y", "m", "runs", "converged_runs",
                  "time_avg_ms", "time_median_ms", "time_max_ms", "time_min_ms",
                  "iter_avg", "iter_median", "iter_max", "iter_min",
                  "us_per_iter_avg", "low_confidence")
    RATIO_FIELDS = ("sides", "time_ratio", "iter_ratio", "time_per_iter_ratio", "low_confidence")

    def to_dict(self) -> dict:
        return {"rows": self.rows, "ratios": self.ratios}


def _stats(encoding, sides, n_y, m, times, iters, converged, min_runs):
    per_iter = [t / k for t, k in zip(times, iters)]
    return {
        "encoding": encoding, "sides": sides, "n_y": n_y, "m": m,
        "runs": len(times), "converged_runs": converged,
        "time_avg_ms": 1e3 * statistics.fmean(times),
        "time_median_ms": 1e3 * statistics.median(times),
        "time_max_ms": 1e3 * max(times), "time_min_ms": 1e3 * min(times),
        "iter_avg": statistics.fmean(iters), "iter_median": statistics.median(iters),
        "iter_max": max(iters), "iter_min": min(iters),
        "us_per_iter_avg": 1e6 * statistics.fmean(per_iter),
        "low_confidence": len(times) < min_runs or converged < len(times),
    }


def _initial_states(cfg: BenchConfig, l: int, runs: int, rng: np.random.Generator):
    lo, hi = cfg.init_lower.astype(float).copy(), cfg.init_upper.astype(float).copy()
    # square inscribed in the polygon's incircle
    half = cfg.radius * np.cos(np.pi / l) / np.sqrt(2.0)
    for i in cfg.position_idx:
        lo[i], hi[i] = max(lo[i], -half), min(hi[i], half)
    return rng.uniform(lo, hi, size=(runs, lo.size))


def bench_compare(cfg: BenchConfig, sides, runs: int, settings: AdmmSettings = AdmmSettings(),
                  seed: int = 0, min_runs: int = 5, progress=None,
                  warmup: bool = True) -> BenchReport:
    """Time both encodings over ``sides`` and return the aggregated report.

    Every run is a cold solve; the two encodings alternate run by run.  Time
    per iteration is computed per run and then averaged.  Rows with fewer than ``min_runs`` runs, or with any run
    that hit the iteration limit, are flagged ``low_confidence``.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    rng = np.random.default_rng(seed)
    report = BenchReport(min_runs=min_runs)
    encodings = (Encoding.BAND, Encoding.SOC_SPLIT)
    for l in sides:
        prob = with_polygon(cfg.problem, cfg.position_idx, l, cfg.radius)
        states = _initial_states(cfg, l, runs, rng)
        ctrls = {enc: Controller(prob, settings, enc) for enc in encodings}
        if warmup:
            # keep JIT compilation and first-touch effects out of the timings
            for ctrl in ctrls.values():
                ctrl.solve(states[0], cfg.x_r, cfg.u_r, warm=False)
        samples = {enc: ([], [], [0]) for enc in encodings}
        # interleave the encodings so load drift on the host hits both alike
        for x0 in states:
            for enc in encodings:
                res = ctrls[enc].solve(x0, cfg.x_r, cfg.u_r, warm=False)
                times, iters, conv = samples[enc]
                times.append(res.solve_time)
                iters.append(res.iterations)
                conv[0] += res.converged
        per_enc = {}
        for enc in encodings:
            times, iters, conv = samples[enc]
            row = _stats(enc.value, int(l), prob.n_y, ctrls[enc].qp.dims.m, times, iters, conv[0], min_runs)
            report.rows.append(row)
            per_enc[enc] = (row, times, iters)
            if progress is not None:
                progress(row)
        band, split = per_enc[Encoding.BAND][0], per_enc[Encoding.SOC_SPLIT][0]
        report.ratios.append({
            "sides": int(l),
            "time_ratio": split["time_avg_ms"] / band["time_avg_ms"],
            "iter_ratio": split["iter_avg"] / band["iter_avg"],
            "time_per_iter_ratio": split["us_per_iter_avg"] / band["us_per_iter_avg"],
            "low_confidence": band["low_confidence"] or split["low_confidence"],
        })
    return report
