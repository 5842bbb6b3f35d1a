"""ADMM iteration for the condensed HMPC problem.

Each iteration::

    qh = q + C'(rho (s - d) + lam)
    z  = M_q qh + M_b b
    c  = C z - d
    s  = P_S(-c - lam / rho)          # block-wise projection
    c  = c + s                        # now C z + s - d
    lam = lam + rho c

and stops once ``||c||_inf <= eps_p`` and ``||s - s_prev||_inf <= eps_d``.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .cones import MEMBERSHIP_TOL, _project_band_at, _project_cone_at
from .hmpc import BandBlock, BoxBlock, ConeBlock, CondensedQP
from .qpcore import KktOperators, _csr_mtv, _csr_mv

__all__ = [
    "prime_kernels",
    "AdmmSettings",
    "SolverState",
    "SolveResult",
    "Status",
    "DivergenceError",
    "BlockProjector",
    "project_blocks",
    "blocks_contain",
    "residuals",
    "solve",
]

NAN_CHECK_EVERY = 100


class DivergenceError(RuntimeError):
    """A non-finite value appeared in the iterates."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite iterate detected by iteration {iteration}")
        self.iteration = iteration


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class AdmmSettings:
    rho: float = 15.0
    eps_p: float = 1e-5
    eps_d: float = 1e-5
    max_iter: int = 20000

    def __post_init__(self):
        for name in ("rho", "eps_p", "eps_d"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive real, got {v!r}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be an integer >= 1, got {self.max_iter!r}")


@dataclass
class SolverState:
    """Iterates owned by one solve; reusable as a warm start."""

    z: np.ndarray
    s: np.ndarray
    lam: np.ndarray
    s_prev: np.ndarray = None
    c_buf: np.ndarray = None
    q_hat: np.ndarray = None
    iteration: int = 0

    def __post_init__(self):
        if self.s_prev is None:
            self.s_prev = self.s.copy()
        if self.c_buf is None:
            self.c_buf = np.zeros_like(self.s)
        if self.q_hat is None:
            self.q_hat = np.zeros_like(self.z)

    @classmethod
    def cold(cls, n: int, m: int) -> "SolverState":
        return cls(z=np.zeros(n), s=np.zeros(m), lam=np.zeros(m))

    def copy(self) -> "SolverState":
        return SolverState(self.z.copy(), self.s.copy(), self.lam.copy(), self.s_prev.copy(),
                           self.c_buf.copy(), self.q_hat.copy(), self.iteration)


@dataclass
class SolveResult:
    z: np.ndarray
    s: np.ndarray
    lam: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    status: Status
    setup_time: float = 0.0
    solve_time: float = 0.0
    state: SolverState = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


@njit(cache=True)
def _project_slack(v, box_idx, box_lo, box_hi, band_start, band_hi, band_lo,
                   cone_start, cone_alpha, cone_c, dim):
    for k in range(box_idx.size):
        i = box_idx[k]
        if v[i] > box_hi[k]:
            v[i] = box_hi[k]
        elif v[i] < box_lo[k]:
            v[i] = box_lo[k]
    for k in range(band_start.size):
        _project_band_at(v, band_start[k], dim, band_hi[k], band_lo[k])
    for k in range(cone_start.size):
        _project_cone_at(v, cone_start[k], dim, cone_alpha[k], cone_c[k])


class BlockProjector:
    """Block map compiled into flat arrays for the projection kernel."""

    DIM = 3

    def __init__(self, block_map, m: int | None = None):
        box_idx, box_lo, box_hi = [], [], []
        band_start, band_hi, band_lo = [], [], []
        cone_start, cone_alpha, cone_c = [], [], []
        total = 0
        for blk in block_map:
            total += blk.size
            if isinstance(blk, BoxBlock):
                box_idx.append(np.arange(blk.start, blk.start + blk.size))
                box_lo.append(blk.lower)
                box_hi.append(blk.upper)
                continue
            if blk.size != self.DIM:
                raise ValueError(f"cone blocks must have size {self.DIM}, got {blk.size}")
            if isinstance(blk, BandBlock):
                band_start.append(blk.start)
                band_hi.append(blk.upper)
                band_lo.append(blk.lower)
            elif isinstance(blk, ConeBlock):
                cone_start.append(blk.start)
                cone_alpha.append(float(blk.alpha))
                cone_c.append(blk.c)
            else:
                raise TypeError(f"unknown constraint block {blk!r}")
        if m is not None and total != m:
            raise ValueError(f"block sizes sum to {total}, expected {m}")
        self.m = total

        def cat(parts, dtype=float):
            return np.ascontiguousarray(np.concatenate(parts) if parts else np.zeros(0), dtype=dtype)

        self.box_idx = cat(box_idx, np.int64)
        self.box_lo = cat(box_lo)
        self.box_hi = cat(box_hi)
        self.band_start = np.array(band_start, dtype=np.int64)
        self.band_hi = np.array(band_hi, dtype=float)
        self.band_lo = np.array(band_lo, dtype=float)
        self.cone_start = np.array(cone_start, dtype=np.int64)
        self.cone_alpha = np.array(cone_alpha, dtype=float)
        self.cone_c = np.array(cone_c, dtype=float)

    @property
    def kernel_args(self):
        return (self.box_idx, self.box_lo, self.box_hi, self.band_start, self.band_hi,
                self.band_lo, self.cone_start, self.cone_alpha, self.cone_c, self.DIM)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        """Project ``v`` (contiguous float array of length m) in place and return it."""
        _project_slack(v, *self.kernel_args)
        return v

    def contains(self, s: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        ok = True
        if self.box_idx.size:
            sb = s[self.box_idx]
            ok &= bool(np.all(sb >= self.box_lo - tol) and np.all(sb <= self.box_hi + tol))
        rows = np.arange(self.DIM)
        if self.band_start.size:
            t = s[self.band_start[:, None] + rows]
            tail = np.linalg.norm(t[:, 1:], axis=1)
            ok &= bool(np.all(tail <= t[:, 0] - self.band_lo + tol))
            ok &= bool(np.all(tail <= self.band_hi - t[:, 0] + tol))
        if self.cone_start.size:
            t = s[self.cone_start[:, None] + rows]
            tail = np.linalg.norm(t[:, 1:], axis=1)
            ok &= bool(np.all(tail <= self.cone_alpha * (t[:, 0] - self.cone_c) + tol))
        return ok


def project_blocks(v: np.ndarray, block_map) -> np.ndarray:
    """Project ``v`` block by block onto the slack set; returns a new array.

    Boxes are clamped, bands use the two-cone composition and split cones are
    projected independently.
    """
    v = np.array(v, dtype=float, order="C")
    return BlockProjector(block_map, v.size)(v)


def blocks_contain(s: np.ndarray, block_map, tol: float = MEMBERSHIP_TOL) -> bool:
    """True if every block of ``s`` satisfies its membership test within ``tol``."""
    s = np.asarray(s, dtype=float)
    return BlockProjector(block_map, s.size).contains(s, tol)


def residuals(state: SolverState) -> tuple[float, float]:
    """``(||C z + s - d||_inf, ||s - s_prev||_inf)`` of a completed iteration."""
    primal = float(np.max(np.abs(state.c_buf))) if state.c_buf.size else 0.0
    dual = float(np.max(np.abs(state.s - state.s_prev))) if state.s.size else 0.0
    return primal, dual


def solve(
    qp: CondensedQP,
    ops: KktOperators,
    settings: AdmmSettings = AdmmSettings(),
    warm: SolverState | None = None,
    callback=None,
    projector: BlockProjector | None = None,
) -> SolveResult:
    """Run ADMM on ``qp`` from ``warm`` (or from zeros).

    Parameters
    ----------
    qp : CondensedQP
        Assembled problem with ``q``, ``b``, ``d`` already updated.
    ops : KktOperators
        Built from ``qp`` with ``settings.rho``.
    settings : AdmmSettings
    warm : SolverState, optional
        Initial ``(z, s, lam)``; copied, never modified.
    callback : callable, optional
        Called as ``callback(state)`` after every iteration.
    projector : BlockProjector, optional
        Precompiled block map; built from ``qp.block_map`` when omitted.

    Returns
    -------
    SolveResult
        ``status`` is ``MAX_ITERATIONS`` (not an exception) when the budget
        runs out.

    Raises
    ------
    DivergenceError
        If a NaN or infinity shows up in the iterates.
    """
    dims = qp.dims
    if not np.isclose(ops.rho, settings.rho, rtol=1e-12, atol=0):
        raise ValueError(f"operators were built for rho={ops.rho}, settings use rho={settings.rho}")
    if ops.n != dims.n or ops.n_x != dims.n_x:
        raise ValueError("operators do not match the problem dimensions")
    if projector is None:
        projector = BlockProjector(qp.block_map, dims.m)

    if warm is None:
        st = SolverState.cold(dims.n, dims.m)
    else:
        if warm.z.shape != (dims.n,) or warm.s.shape != (dims.m,) or warm.lam.shape != (dims.m,):
            raise ValueError("warm start dimensions do not match the problem")
        st = warm.copy()
        st.iteration = 0

    b_head = qp.b[:dims.n_x]
    Mb_b = ops.M_b_head @ b_head
    C = qp.C
    work = np.empty(dims.m)
    max_iter = settings.max_iter

    status = Status.MAX_ITERATIONS
    primal = dual = np.inf
    k = 0
    t0 = time.perf_counter()
    while k < max_iter:
        chunk = 1 if callback is not None else min(NAN_CHECK_EVERY - k % NAN_CHECK_EVERY, max_iter - k)
        done, conv, primal, dual = _admm_iterate(
            C.row_ptr, C.col_idx, C.values, ops.M_q, Mb_b, qp.q, qp.d, settings.rho,
            *projector.kernel_args,
            st.z, st.s, st.s_prev, st.lam, st.c_buf, st.q_hat, work,
            settings.eps_p, settings.eps_d, chunk,
        )
        k += done
        st.iteration = k
        if callback is not None:
            callback(st)
        if (conv or k % NAN_CHECK_EVERY == 0 or k == max_iter) and not _finite(st):
            raise DivergenceError(k)
        if conv:
            status = Status.CONVERGED
            break
    solve_time = time.perf_counter() - t0

    return SolveResult(
        z=st.z.copy(), s=st.s.copy(), lam=st.lam.copy(), iterations=st.iteration,
        primal_residual=float(primal), dual_residual=float(dual), status=status,
        setup_time=ops.setup_time, solve_time=solve_time, state=st,
    )


def prime_kernels(qp: CondensedQP, ops: KktOperators, projector: BlockProjector) -> None:
    """Load (or compile) the iteration kernel for these array types.

    Runs zero iterations; call during setup so the first timed solve does
    not pay for JIT dispatch.
    """
    st = SolverState.cold(qp.dims.n, qp.dims.m)
    _admm_iterate(qp.C.row_ptr, qp.C.col_idx, qp.C.values, ops.M_q, np.zeros(qp.dims.n), qp.q, qp.d,
                  ops.rho, *projector.kernel_args, st.z, st.s, st.s_prev, st.lam, st.c_buf, st.q_hat,
                  np.empty(qp.dims.m), 1.0, 1.0, 0)


def _finite(st: SolverState) -> bool:
    return bool(np.all(np.isfinite(st.z)) and np.all(np.isfinite(st.lam)) and np.all(np.isfinite(st.s)))


@njit(cache=True)
def _admm_iterate(row_ptr, col_idx, values, Mq, Mb_b, q, d, rho,
                  box_idx, box_lo, box_hi, band_start, band_hi, band_lo,
                  cone_start, cone_alpha, cone_c, dim,
                  z, s, s_prev, lam, c, q_hat, work, eps_p, eps_d, n_steps):
    """Run up to ``n_steps`` iterations in place; stop early on convergence."""
    n = z.size
    m = s.size
    inv_rho = 1.0 / rho
    primal = 0.0
    dual = 0.0
    for it in range(n_steps):
        for i in range(m):
            work[i] = rho * (s[i] - d[i]) + lam[i]
        _csr_mtv(row_ptr, col_idx, values, work, q_hat)
        for j in range(n):
            q_hat[j] += q[j]
        for i in range(n):
            acc = Mb_b[i]
            for j in range(n):
                acc += Mq[i, j] * q_hat[j]
            z[i] = acc
        # single product with C per iteration
        _csr_mv(row_ptr, col_idx, values, z, c)
        for i in range(m):
            c[i] -= d[i]
            s_prev[i] = s[i]
            s[i] = -c[i] - inv_rho * lam[i]
        _project_slack(s, box_idx, box_lo, box_hi, band_start, band_hi, band_lo,
                       cone_start, cone_alpha, cone_c, dim)
        primal = 0.0
        dual = 0.0
        for i in range(m):
            c[i] += s[i]
            lam[i] += rho * c[i]
            a = abs(c[i])
            if not a <= primal:
                primal = a
            a = abs(s[i] - s_prev[i])
            if not a <= dual:
                dual = a
        if primal <= eps_p and dual <= eps_d:
            return it + 1, True, primal, dual
    return n_steps, False, primal, dual
