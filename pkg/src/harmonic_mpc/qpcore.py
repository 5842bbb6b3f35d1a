"""Sparse kernels and the dense explicit solver for the ADMM z-update.

The z-update minimizes ``0.5 z' Hh z + qh' z`` subject to ``G z = b`` with
``Hh = H + rho C'C``.  Its solution is linear in ``(qh, b)``::

    z = M_q qh + M_b b
    M_q = Hh^-1 G' (G Hh^-1 G')^-1 G Hh^-1 - Hh^-1
    M_b = Hh^-1 G' (G Hh^-1 G')^-1

Both operators are formed once at setup.  Only the leading ``n_x`` columns of
``M_b`` are kept because ``b`` is zero past its first ``n_x`` entries.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from numba import njit

__all__ = [
    "SparseMatrixCSR",
    "KktOperators",
    "SetupError",
    "csr_matvec",
    "csr_matvec_transpose",
    "build_kkt_operators",
    "solve_equality_qp",
]


class SetupError(RuntimeError):
    """A factorization needed by the solver could not be computed."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class SparseMatrixCSR:
    """Compressed sparse row matrix.

    ``row_ptr[i]:row_ptr[i+1]`` indexes the stored entries of row ``i`` in
    ``col_idx``/``values``; column indices increase strictly within a row.
    """

    rows: int
    cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _row_idx: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        self.col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=float)
        self._validate()
        self._row_idx = np.repeat(np.arange(self.rows), np.diff(self.row_ptr))

    def _validate(self):
        rp, ci = self.row_ptr, self.col_idx
        if self.rows < 0 or self.cols < 0:
            raise ValueError("matrix dimensions must be non-negative")
        if rp.shape != (self.rows + 1,):
            raise ValueError(f"row_ptr must have length rows+1={self.rows + 1}, got {rp.shape}")
        if rp[0] != 0 or np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must start at 0 and be non-decreasing")
        nnz = int(rp[-1])
        if ci.shape != (nnz,) or self.values.shape != (nnz,):
            raise ValueError("col_idx and values must both have length row_ptr[-1]")
        if nnz and (ci.min() < 0 or ci.max() >= self.cols):
            raise ValueError("column index out of range")
        for i in range(self.rows):
            seg = ci[rp[i]:rp[i + 1]]
            if seg.size > 1 and np.any(np.diff(seg) <= 0):
                raise ValueError(f"column indices of row {i} are not strictly increasing")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @classmethod
    def from_dense(cls, M, drop_tol: float = 0.0) -> "SparseMatrixCSR":
        """Store the entries of ``M`` with magnitude above ``drop_tol``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        mask = np.abs(M) > drop_tol
        rows, cols = np.nonzero(mask)
        counts = np.bincount(rows, minlength=M.shape[0])
        row_ptr = np.concatenate(([0], np.cumsum(counts)))
        return cls(M.shape[0], M.shape[1], row_ptr, cols, M[rows, cols])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self._row_idx, self.col_idx] = self.values
        return out

    def gram(self) -> np.ndarray:
        """Dense ``M' M``, accumulated row by row from the stored entries."""
        out = np.zeros((self.cols, self.cols))
        rp, ci, v = self.row_ptr, self.col_idx, self.values
        for i in range(self.rows):
            cols = ci[rp[i]:rp[i + 1]]
            vals = v[rp[i]:rp[i + 1]]
            out[np.ix_(cols, cols)] += np.outer(vals, vals)
        return out


@njit(cache=True)
def _csr_mv(row_ptr, col_idx, values, x, out):
    for i in range(row_ptr.size - 1):
        acc = 0.0
        for k in range(row_ptr[i], row_ptr[i + 1]):
            acc += values[k] * x[col_idx[k]]
        out[i] = acc


@njit(cache=True)
def _csr_mtv(row_ptr, col_idx, values, x, out):
    out[:] = 0.0
    for i in range(row_ptr.size - 1):
        xi = x[i]
        for k in range(row_ptr[i], row_ptr[i + 1]):
            out[col_idx[k]] += values[k] * xi


def csr_matvec(M: SparseMatrixCSR, x: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """``M @ x`` over the stored entries only."""
    x = np.ascontiguousarray(x, dtype=float)
    if x.shape != (M.cols,):
        raise ValueError(f"csr_matvec: expected vector of length {M.cols}, got shape {x.shape}")
    if out is None:
        out = np.empty(M.rows)
    _csr_mv(M.row_ptr, M.col_idx, M.values, x, out)
    return out


def csr_matvec_transpose(M: SparseMatrixCSR, x: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """``M.T @ x`` without forming the transpose."""
    x = np.ascontiguousarray(x, dtype=float)
    if x.shape != (M.rows,):
        raise ValueError(
            f"csr_matvec_transpose: expected vector of length {M.rows}, got shape {x.shape}"
        )
    if out is None:
        out = np.empty(M.cols)
    _csr_mtv(M.row_ptr, M.col_idx, M.values, x, out)
    return out


@dataclass(frozen=True)
class KktOperators:
    """Dense operators of the explicit equality-QP solution.

    Attributes
    ----------
    M_q : ndarray (n, n)
    M_b_head : ndarray (n, n_x)
        Leading ``n_x`` columns of ``M_b``.
    rho : float
        Penalty parameter the operators were built for.
    setup_time : float
        Seconds spent building the operators.
    """

    M_q: np.ndarray
    M_b_head: np.ndarray
    rho: float
    setup_time: float = 0.0

    @property
    def n(self) -> int:
        return self.M_q.shape[0]

    @property
    def n_x(self) -> int:
        return self.M_b_head.shape[1]


def build_kkt_operators(H, G: SparseMatrixCSR, C: SparseMatrixCSR, rho: float, n_x: int) -> KktOperators:
    """Form ``M_q`` and the head of ``M_b`` for ``Hh = H + rho C'C``.

    Raises
    ------
    SetupError
        If ``Hh`` is not positive definite or ``G Hh^-1 G'`` is singular
        (``G`` rank deficient).  ``err.stage`` names the failed factorization.
    """
    t0 = time.perf_counter()
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    if H.shape != (n, n) or G.cols != n or C.cols != n:
        raise ValueError("inconsistent dimensions between H, G and C")
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho!r}")
    if not 0 <= n_x <= G.rows:
        raise ValueError(f"n_x={n_x} out of range for G with {G.rows} rows")

    H_hat = H + rho * C.gram()
    H_hat = 0.5 * (H_hat + H_hat.T)
    try:
        hh_fac = sla.cho_factor(H_hat, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SetupError("cholesky(H + rho C'C)", f"matrix is not positive definite ({exc})") from exc

    Gd = G.to_dense()
    Y = sla.cho_solve(hh_fac, Gd.T)              # Hh^-1 G'
    S = Gd @ Y
    S = 0.5 * (S + S.T)
    try:
        s_fac = sla.cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SetupError(
            "cholesky(G Hh^-1 G')", f"Schur complement is singular; G is rank deficient ({exc})"
        ) from exc
    # Cholesky can succeed on a numerically singular matrix.  Rounding leaves
    # pivots of order sqrt(eps) there, so compare against that scale.
    diag = np.diag(s_fac[0])
    if diag.min() <= 10 * np.sqrt(S.shape[0] * np.finfo(float).eps) * diag.max():
        raise SetupError("cholesky(G Hh^-1 G')", "Schur complement is numerically singular; G is rank deficient")

    M_b = sla.cho_solve(s_fac, Y.T).T            # Hh^-1 G' S^-1
    H_inv = sla.cho_solve(hh_fac, np.eye(n))
    M_q = M_b @ Y.T - H_inv
    M_q = 0.5 * (M_q + M_q.T)
    M_b_head = np.ascontiguousarray(M_b[:, :n_x])
    return KktOperators(M_q, M_b_head, float(rho), time.perf_counter() - t0)


def solve_equality_qp(ops: KktOperators, q_hat: np.ndarray, b_head: np.ndarray, out=None) -> np.ndarray:
    """Return ``M_q q_hat + M_b_head b_head``; two dense matvecs."""
    if q_hat.shape != (ops.n,) or b_head.shape != (ops.n_x,):
        raise ValueError(
            f"solve_equality_qp: expected shapes ({ops.n},) and ({ops.n_x},), "
            f"got {q_hat.shape} and {b_head.shape}"
        )
    if out is None:
        return ops.M_q @ q_hat + ops.M_b_head @ b_head
    np.dot(ops.M_q, q_hat, out=out)
    out += ops.M_b_head @ b_head
    return out
