"""Harmonic MPC problem data and its assembly into the ADMM-ready form.

The controller solves::

    min  0.5 z' H z + q' z
    s.t. G z = b,  C z + s = d,  s in S

with the decision vector laid out as::

    z = (u0, x1, u1, ..., x_{N-1}, u_{N-1}, x_e, x_s, x_c, u_e, u_s, u_c)

``x0`` is fixed to the measured state and enters only through ``b`` and ``d``.
``S`` is a product of ``N`` output boxes and, per output row ``i``, either one
band ``D(y_upper[i], y_lower[i])`` on ``(y_e[i], y_s[i], y_c[i])`` or two
separate shifted cones on duplicated copies of that triple.
"""
from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field

import numpy as np

from .qpcore import SparseMatrixCSR

__all__ = [
    "Encoding",
    "ProblemError",
    "HmpcProblem",
    "HarmonicParams",
    "BoxBlock",
    "BandBlock",
    "ConeBlock",
    "Dims",
    "CondensedQP",
    "Solution",
    "assemble",
    "update_online",
    "harmonic_reference",
    "objective_value",
    "extract_solution",
    "pack_solution",
]


class ProblemError(ValueError):
    """Invalid problem data; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class Encoding(str, enum.Enum):
    BAND = "band"
    SOC_SPLIT = "soc-split"


def _as_matrix(name, M, shape=None):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ProblemError(name, "must be a matrix")
    if shape is not None and M.shape != shape:
        raise ProblemError(name, f"has shape {M.shape}, expected {shape}")
    if not np.all(np.isfinite(M)):
        raise ProblemError(name, "contains non-finite entries")
    return M


def _as_vector(name, v, size):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (size,):
        raise ProblemError(name, f"has shape {v.shape}, expected ({size},)")
    if not np.all(np.isfinite(v)):
        raise ProblemError(name, "contains non-finite entries")
    return v


def _check_spd(name, M):
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise ProblemError(name, "must be symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ProblemError(name, "must be positive definite") from None


@dataclass
class HmpcProblem:
    """Plant, constraints and tuning of one HMPC controller.

    ``T_h`` and ``S_h`` are stored as the diagonals of the harmonic weights.
    """

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    F: np.ndarray
    y_lower: np.ndarray
    y_upper: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    T_e: np.ndarray
    T_h: np.ndarray
    S_e: np.ndarray
    S_h: np.ndarray
    N: int
    w: float

    def __post_init__(self):
        self.A = _as_matrix("A", self.A)
        n_x = self.A.shape[0]
        if self.A.shape != (n_x, n_x):
            raise ProblemError("A", f"must be square, got shape {self.A.shape}")
        self.B = _as_matrix("B", self.B)
        if self.B.shape[0] != n_x:
            raise ProblemError("B", f"has {self.B.shape[0]} rows, expected {n_x}")
        n_u = self.B.shape[1]
        self.E = _as_matrix("E", self.E)
        if self.E.shape[1] != n_x:
            raise ProblemError("E", f"has {self.E.shape[1]} columns, expected {n_x}")
        n_y = self.E.shape[0]
        self.F = _as_matrix("F", self.F, (n_y, n_u))
        self.y_lower = _as_vector("y_lower", self.y_lower, n_y)
        self.y_upper = _as_vector("y_upper", self.y_upper, n_y)
        if not np.all(self.y_lower < self.y_upper):
            bad = int(np.argmax(~(self.y_lower < self.y_upper)))
            raise ProblemError(f"y_lower[{bad}]", "must be strictly below the matching y_upper entry")
        self.Q = _as_matrix("Q", self.Q, (n_x, n_x))
        self.R = _as_matrix("R", self.R, (n_u, n_u))
        self.T_e = _as_matrix("T_e", self.T_e, (n_x, n_x))
        self.S_e = _as_matrix("S_e", self.S_e, (n_u, n_u))
        for name in ("Q", "R", "T_e", "S_e"):
            _check_spd(name, getattr(self, name))
        self.T_h = _as_vector("T_h", np.diag(self.T_h) if np.ndim(self.T_h) == 2 else self.T_h, n_x)
        self.S_h = _as_vector("S_h", np.diag(self.S_h) if np.ndim(self.S_h) == 2 else self.S_h, n_u)
        if np.any(self.T_h <= 0) or np.any(self.S_h <= 0):
            field = "T_h" if np.any(self.T_h <= 0) else "S_h"
            raise ProblemError(field, "diagonal entries must be strictly positive")
        if int(self.N) != self.N or self.N < 2:
            raise ProblemError("N", f"must be an integer >= 2, got {self.N!r}")
        self.N = int(self.N)
        if not (np.isfinite(self.w) and self.w >= 0):
            raise ProblemError("w", f"must be a finite non-negative real, got {self.w!r}")
        self.w = float(self.w)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.E.shape[0]


@dataclass
class HarmonicParams:
    """Parameters of the artificial harmonic reference."""

    x_e: np.ndarray
    x_s: np.ndarray
    x_c: np.ndarray
    u_e: np.ndarray
    u_s: np.ndarray
    u_c: np.ndarray

    def outputs(self, E, F):
        """``(y_e, y_s, y_c)``, each ``E x_* + F u_*``."""
        return (E @ self.x_e + F @ self.u_e,
                E @ self.x_s + F @ self.u_s,
                E @ self.x_c + F @ self.u_c)

    def as_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("x_e", "x_s", "x_c", "u_e", "u_s", "u_c")}


def harmonic_reference(theta: HarmonicParams, j: int, N: int, w: float):
    """Value ``(x_h^j, u_h^j)`` of the harmonic reference at prediction step ``j``."""
    sj, cj = np.sin(w * (j - N)), np.cos(w * (j - N))
    x_h = theta.x_e + theta.x_s * sj + theta.x_c * cj
    u_h = theta.u_e + theta.u_s * sj + theta.u_c * cj
    return x_h, u_h


@dataclass(frozen=True)
class BoxBlock:
    start: int
    lower: np.ndarray
    upper: np.ndarray

    @property
    def size(self) -> int:
        return self.lower.size


@dataclass(frozen=True)
class BandBlock:
    start: int
    upper: float
    lower: float
    size: int = 3


@dataclass(frozen=True)
class ConeBlock:
    start: int
    alpha: int
    c: float
    size: int = 3


@dataclass(frozen=True)
class Dims:
    n: int
    m: int
    n_eq: int
    n_x: int
    n_u: int
    n_y: int
    N: int


@dataclass
class CondensedQP:
    """Assembled QP data plus layout bookkeeping.

    ``q``, ``b`` and ``d`` are overwritten in place by :func:`update_online`;
    everything else is fixed after assembly.
    """

    H: np.ndarray
    q: np.ndarray
    G: SparseMatrixCSR
    b: np.ndarray
    C: SparseMatrixCSR
    d: np.ndarray
    block_map: list
    dims: Dims
    encoding: Encoding
    problem: HmpcProblem
    sin: np.ndarray = field(repr=False)
    cos: np.ndarray = field(repr=False)

    def clone(self) -> "CondensedQP":
        """Copy sharing the fixed matrices; ``q``, ``b``, ``d`` are private."""
        new = copy.copy(self)
        new.q, new.b, new.d = self.q.copy(), self.b.copy(), self.d.copy()
        return new

    # Offsets into z.
    @property
    def off_harmonic_x(self) -> int:
        d = self.dims
        return d.n_u + (d.N - 1) * (d.n_x + d.n_u)

    @property
    def off_harmonic_u(self) -> int:
        return self.off_harmonic_x + 3 * self.dims.n_x

    def x_slice(self, j: int) -> slice:
        """Slice of ``x^j`` in z, ``1 <= j <= N-1``."""
        d = self.dims
        if not 1 <= j <= d.N - 1:
            raise IndexError(f"x^{j} is not a decision variable")
        start = d.n_u + (j - 1) * (d.n_x + d.n_u)
        return slice(start, start + d.n_x)

    def u_slice(self, j: int) -> slice:
        """Slice of ``u^j`` in z, ``0 <= j <= N-1``."""
        d = self.dims
        if not 0 <= j <= d.N - 1:
            raise IndexError(f"u^{j} is not a decision variable")
        start = 0 if j == 0 else d.n_u + (j - 1) * (d.n_x + d.n_u) + d.n_x
        return slice(start, start + d.n_u)

    def harmonic_slices(self) -> dict:
        n_x, n_u = self.dims.n_x, self.dims.n_u
        ox, ou = self.off_harmonic_x, self.off_harmonic_u
        return {
            "x_e": slice(ox, ox + n_x),
            "x_s": slice(ox + n_x, ox + 2 * n_x),
            "x_c": slice(ox + 2 * n_x, ox + 3 * n_x),
            "u_e": slice(ou, ou + n_u),
            "u_s": slice(ou + n_u, ou + 2 * n_u),
            "u_c": slice(ou + 2 * n_u, ou + 3 * n_u),
        }


def _trig(N, w):
    i = np.arange(N)
    return np.sin(w * (i - N)), np.cos(w * (i - N))


def _dims(prob: HmpcProblem, encoding: Encoding) -> Dims:
    n_x, n_u, n_y, N = prob.n_x, prob.n_u, prob.n_y, prob.N
    n = n_u + (N + 2) * (n_x + n_u)
    per_output = 3 if encoding is Encoding.BAND else 6
    m = n_y * N + per_output * n_y
    return Dims(n=n, m=m, n_eq=n_x * (N + 3), n_x=n_x, n_u=n_u, n_y=n_y, N=N)


def assemble(prob: HmpcProblem, encoding: Encoding | str = Encoding.BAND) -> CondensedQP:
    """Build ``H, q, G, b, C, d`` and the slack block map.

    ``q``, ``b`` and ``d`` come back with their state- and reference-dependent
    entries zeroed; call :func:`update_online` before solving.
    """
    encoding = Encoding(encoding)
    dims = _dims(prob, encoding)
    n, m, n_eq = dims.n, dims.m, dims.n_eq
    n_x, n_u, n_y, N = dims.n_x, dims.n_u, dims.n_y, dims.N
    A, B, E, F = prob.A, prob.B, prob.E, prob.F
    Q, R = prob.Q, prob.R
    sin, cos = _trig(N, prob.w)

    qp = CondensedQP(
        H=np.zeros((n, n)), q=np.zeros(n), G=None, b=np.zeros(n_eq), C=None,
        d=np.zeros(m), block_map=[], dims=dims, encoding=encoding, problem=prob,
        sin=sin, cos=cos,
    )
    hs = qp.harmonic_slices()
    xe, xs, xc = hs["x_e"], hs["x_s"], hs["x_c"]
    ue, us, uc = hs["u_e"], hs["u_s"], hs["u_c"]

    # Hessian
    H = qp.H
    H[qp.u_slice(0), qp.u_slice(0)] = R
    for j in range(1, N):
        H[qp.x_slice(j), qp.x_slice(j)] = Q
        H[qp.u_slice(j), qp.u_slice(j)] = R
    for j in range(1, N):
        xj = qp.x_slice(j)
        H[xj, xe] = -Q
        H[xj, xs] = -sin[j] * Q
        H[xj, xc] = -cos[j] * Q
    for j in range(N):
        uj = qp.u_slice(j)
        H[uj, ue] = -R
        H[uj, us] = -sin[j] * R
        H[uj, uc] = -cos[j] * R
    s1, c1 = sin[1:], cos[1:]
    Th, Sh = np.diag(prob.T_h), np.diag(prob.S_h)
    H[xe, xe] = prob.T_e + (N - 1) * Q
    H[xe, xs] = Q * s1.sum()
    H[xe, xc] = Q * c1.sum()
    H[xs, xs] = Th + Q * (s1 ** 2).sum()
    H[xs, xc] = Q * (s1 * c1).sum()
    H[xc, xc] = Th + Q * (c1 ** 2).sum()
    H[ue, ue] = prob.S_e + N * R
    H[ue, us] = R * sin.sum()
    H[ue, uc] = R * cos.sum()
    H[us, us] = Sh + R * (sin ** 2).sum()
    H[us, uc] = R * (sin * cos).sum()
    H[uc, uc] = Sh + R * (cos ** 2).sum()
    # only the upper triangle was written off the diagonal blocks
    H[:] = np.triu(H) + np.triu(H, 1).T

    # Equality constraints
    Gd = np.zeros((n_eq, n))
    I_x = np.eye(n_x)
    rows = slice(0, n_x)
    Gd[rows, qp.u_slice(0)] = B
    Gd[rows, qp.x_slice(1)] = -I_x
    for j in range(1, N):
        rows = slice(j * n_x, (j + 1) * n_x)
        Gd[rows, qp.x_slice(j)] = A
        Gd[rows, qp.u_slice(j)] = B
        if j < N - 1:
            Gd[rows, qp.x_slice(j + 1)] = -I_x
        else:
            Gd[rows, xe] = -I_x
            Gd[rows, xc] = -I_x
    sw, cw = np.sin(prob.w), np.cos(prob.w)
    r0 = N * n_x
    Gd[r0:r0 + n_x, xe] = A - I_x
    Gd[r0:r0 + n_x, ue] = B
    r1 = r0 + n_x
    Gd[r1:r1 + n_x, xs] = A - cw * I_x
    Gd[r1:r1 + n_x, xc] = sw * I_x
    Gd[r1:r1 + n_x, us] = B
    r2 = r1 + n_x
    Gd[r2:r2 + n_x, xs] = -sw * I_x
    Gd[r2:r2 + n_x, xc] = A - cw * I_x
    Gd[r2:r2 + n_x, uc] = B
    qp.G = SparseMatrixCSR.from_dense(Gd)

    # Coupling constraints and the slack partition
    Cd = np.zeros((m, n))
    Cd[0:n_y, qp.u_slice(0)] = -F
    qp.block_map.append(BoxBlock(0, prob.y_lower.copy(), prob.y_upper.copy()))
    for j in range(1, N):
        rows = slice(j * n_y, (j + 1) * n_y)
        Cd[rows, qp.x_slice(j)] = -E
        Cd[rows, qp.u_slice(j)] = -F
        qp.block_map.append(BoxBlock(j * n_y, prob.y_lower.copy(), prob.y_upper.copy()))
    row = N * n_y
    copies = 1 if encoding is Encoding.BAND else 2
    for i in range(n_y):
        for k in range(copies):
            for part, (xsl, usl) in enumerate(((xe, ue), (xs, us), (xc, uc))):
                Cd[row + part, xsl] = -E[i]
                Cd[row + part, usl] = -F[i]
            if encoding is Encoding.BAND:
                qp.block_map.append(BandBlock(row, float(prob.y_upper[i]), float(prob.y_lower[i])))
            elif k == 0:
                qp.block_map.append(ConeBlock(row, 1, float(prob.y_lower[i])))
            else:
                qp.block_map.append(ConeBlock(row, -1, float(prob.y_upper[i])))
            row += 3
    assert row == m
    qp.C = SparseMatrixCSR.from_dense(Cd)
    return qp


def update_online(qp: CondensedQP, x_t, x_r, u_r) -> None:
    """Write the current state and reference into ``q``, ``b`` and ``d`` in place."""
    prob, dims = qp.problem, qp.dims
    x_t = _as_vector("x_t", x_t, dims.n_x)
    x_r = _as_vector("x_r", x_r, dims.n_x)
    u_r = _as_vector("u_r", u_r, dims.n_u)
    ox, ou = qp.off_harmonic_x, qp.off_harmonic_u
    qp.q[ox:ox + dims.n_x] = -(prob.T_e @ x_r)
    qp.q[ou:ou + dims.n_u] = -(prob.S_e @ u_r)
    qp.b[:dims.n_x] = -(prob.A @ x_t)
    qp.d[:dims.n_y] = prob.E @ x_t


@dataclass
class Solution:
    """Segments of a decision vector.

    ``x`` holds ``x^1 .. x^{N-1}`` (rows) and ``u`` holds ``u^0 .. u^{N-1}``.
    """

    u0: np.ndarray
    x: np.ndarray
    u: np.ndarray
    theta: HarmonicParams

    @property
    def trajectory(self):
        """``[(x^j, u^j)]`` for ``j = 1 .. N-1``; ``u^0`` is ``self.u0``."""
        return list(zip(self.x, self.u[1:]))


def extract_solution(qp: CondensedQP, z) -> Solution:
    z = np.asarray(z, dtype=float)
    d = qp.dims
    if z.shape != (d.n,):
        raise ValueError(f"z has shape {z.shape}, expected ({d.n},)")
    x = np.array([z[qp.x_slice(j)] for j in range(1, d.N)]).reshape(d.N - 1, d.n_x)
    u = np.array([z[qp.u_slice(j)] for j in range(d.N)]).reshape(d.N, d.n_u)
    hs = qp.harmonic_slices()
    theta = HarmonicParams(**{k: z[s].copy() for k, s in hs.items()})
    return Solution(u0=u[0].copy(), x=x, u=u, theta=theta)


def pack_solution(qp: CondensedQP, sol: Solution) -> np.ndarray:
    """Inverse of :func:`extract_solution`."""
    d = qp.dims
    z = np.zeros(d.n)
    for j in range(d.N):
        z[qp.u_slice(j)] = sol.u[j]
    for j in range(1, d.N):
        z[qp.x_slice(j)] = sol.x[j - 1]
    for k, s in qp.harmonic_slices().items():
        z[s] = getattr(sol.theta, k)
    return z


def _wnorm2(v, W):
    return float(v @ W @ v)


def objective_value(prob: HmpcProblem, z, x_t, x_r, u_r, qp: CondensedQP | None = None) -> float:
    """Cost of the decision vector ``z``.

    The state deviation is summed over ``j = 1 .. N-1`` and the input deviation
    over ``j = 0 .. N-1``; ``x^0 = x_t`` is fixed and not penalized.  ``x_t`` is
    accepted for interface symmetry only.
    """
    if qp is None:
        qp = assemble(prob)
    sol = extract_solution(qp, z)
    th = sol.theta
    x_r = np.asarray(x_r, dtype=float)
    u_r = np.asarray(u_r, dtype=float)
    N, w = prob.N, prob.w
    total = 0.0
    for j in range(N):
        x_h, u_h = harmonic_reference(th, j, N, w)
        if j >= 1:
            total += _wnorm2(sol.x[j - 1] - x_h, prob.Q)
        total += _wnorm2(sol.u[j] - u_h, prob.R)
    total += _wnorm2(th.x_e - x_r, prob.T_e) + _wnorm2(th.u_e - u_r, prob.S_e)
    total += float(prob.T_h @ (th.x_s ** 2) + prob.T_h @ (th.x_c ** 2))
    total += float(prob.S_h @ (th.u_s ** 2) + prob.S_h @ (th.u_c ** 2))
    return total
