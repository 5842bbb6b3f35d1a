"""Euclidean projections onto shifted second-order cones.

A shifted cone ``K_alpha(c)`` is the set of ``z = (z0, z1)`` with
``||z1|| <= alpha * (z0 - c)``, ``alpha`` in ``{+1, -1}``.  The band
``D(upper, lower)`` is ``K_-(upper) ∩ K_+(lower)``; its projection is the
composition ``P_{K_-(upper)} ∘ P_{K_+(lower)}``.

Every projector here works on a single vector of shape ``(n,)`` or on a
stack of vectors of shape ``(k, n)`` (one vector per row), so the solver can
project all constraint blocks of one kind in a single call.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit

__all__ = [
    "ShiftedCone",
    "ConeBand",
    "DykstraResult",
    "project_shifted_cone",
    "project_band",
    "dykstra_project",
    "cone_contains",
    "band_nonempty",
]

MEMBERSHIP_TOL = 1e-9
DYKSTRA_TOL = 1e-10
DYKSTRA_MAX_ITER = 10_000

# Below this tail norm the tail direction is treated as undefined.
_TAIL_EPS = 1e-14


@dataclass(frozen=True)
class ShiftedCone:
    """The set ``{(z0, z1) : ||z1|| <= alpha (z0 - c)}`` in ``R^dim``."""

    alpha: int
    c: float
    dim: int = 3

    def __post_init__(self):
        if self.alpha not in (1, -1) or isinstance(self.alpha, bool):
            raise ValueError(f"alpha must be +1 or -1, got {self.alpha!r}")
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"cone dimension must be an integer >= 2, got {self.dim!r}")
        if not np.isfinite(self.c):
            raise ValueError(f"apex offset must be finite, got {self.c!r}")

    @property
    def apex(self) -> np.ndarray:
        a = np.zeros(self.dim)
        a[0] = self.c
        return a


@dataclass(frozen=True)
class ConeBand:
    """Intersection of the downward cone at ``upper`` and the upward cone at ``lower``."""

    upper: float
    lower: float
    dim: int = 3

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"band dimension must be an integer >= 2, got {self.dim!r}")
        if not band_nonempty(self.upper, self.lower):
            raise ValueError(
                f"empty band: lower={self.lower!r} exceeds upper={self.upper!r}"
            )

    @property
    def upper_cone(self) -> ShiftedCone:
        return ShiftedCone(-1, self.upper, self.dim)

    @property
    def lower_cone(self) -> ShiftedCone:
        return ShiftedCone(1, self.lower, self.dim)


def band_nonempty(upper: float, lower: float) -> bool:
    """True iff the band with these apexes contains at least one point."""
    return bool(lower <= upper)


def _check_vectors(z: np.ndarray, dim: int) -> None:
    if z.ndim not in (1, 2) or z.shape[-1] != dim:
        raise ValueError(f"expected vectors of length {dim}, got array of shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("projection input contains non-finite entries")


@njit(cache=True)
def _project_cone_at(v, off, dim, alpha, c):
    """Project ``v[off:off+dim]`` onto ``K_alpha(c)`` in place."""
    t2 = 0.0
    for k in range(1, dim):
        t2 += v[off + k] * v[off + k]
    t = np.sqrt(t2)
    s = alpha * (v[off] - c)
    if t <= s:
        return
    if t <= -s:
        v[off] = c
        for k in range(1, dim):
            v[off + k] = 0.0
        return
    # both tests failed, so t > |s| >= 0
    tau = 0.5 * (s + t)
    scale = tau / t if t > _TAIL_EPS else 0.0
    for k in range(1, dim):
        v[off + k] *= scale
    v[off] = tau * alpha + c


@njit(cache=True)
def _project_band_at(v, off, dim, upper, lower):
    """Project ``v[off:off+dim]`` onto ``K_+(lower)`` then ``K_-(upper)`` in place.

    Same composition as two ``_project_cone_at`` calls, but the tail norm is
    computed once and the tail is rescaled once.
    """
    t2 = 0.0
    for k in range(1, dim):
        t2 += v[off + k] * v[off + k]
    t = np.sqrt(t2)
    z0 = v[off]
    scale = 1.0
    s = z0 - lower
    if t <= s:
        pass
    elif t <= -s:
        z0 = lower
        t = 0.0
        scale = 0.0
    else:
        tau = 0.5 * (s + t)
        z0 = tau + lower
        scale = tau / t if t > _TAIL_EPS else 0.0
        t = tau
    s = upper - z0
    if t <= s:
        if scale == 1.0:
            return
    elif t <= -s:
        z0 = upper
        scale = 0.0
    else:
        tau = 0.5 * (s + t)
        z0 = upper - tau
        scale *= tau / t if t > _TAIL_EPS else 0.0
    v[off] = z0
    for k in range(1, dim):
        v[off + k] *= scale


@njit(cache=True)
def _project_cone_rows_kernel(out, alpha, c):
    k, dim = out.shape
    flat = out.reshape(k * dim)
    for i in range(k):
        _project_cone_at(flat, i * dim, dim, alpha[i], c[i])


@njit(cache=True)
def _project_band_rows_kernel(out, upper, lower):
    k, dim = out.shape
    flat = out.reshape(k * dim)
    for i in range(k):
        _project_band_at(flat, i * dim, dim, upper[i], lower[i])


def _per_row(values, k):
    return np.ascontiguousarray(np.broadcast_to(np.asarray(values, dtype=float), (k,)))


def _rows_into(z, out):
    """Copy ``z`` into a C-contiguous 2-D work array (``out`` if usable)."""
    if out is None:
        return np.array(z, dtype=float, order="C", copy=True, ndmin=2)
    if out is not z:
        out[...] = z
    return out


def project_cones_batch(z, alpha, c, out=None):
    """Project each row of ``z`` onto its own cone ``K_{alpha[i]}(c[i])``.

    ``alpha`` and ``c`` are scalars or length-``k`` arrays.  ``out`` must be
    C-contiguous when given and may alias ``z``.  No input validation.
    """
    work = _rows_into(z, out)
    k = work.shape[0]
    _project_cone_rows_kernel(work, _per_row(alpha, k), _per_row(c, k))
    return work


def project_bands_batch(z, upper, lower, out=None):
    """Project each row of ``z`` onto its own band ``D(upper[i], lower[i])``."""
    work = _rows_into(z, out)
    k = work.shape[0]
    _project_band_rows_kernel(work, _per_row(upper, k), _per_row(lower, k))
    return work


def project_shifted_cone(
    z: np.ndarray,
    cone: ShiftedCone,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Project ``z`` onto ``cone``.

    Parameters
    ----------
    z : ndarray, shape (n,) or (k, n)
        Point(s) to project; ``n`` must equal ``cone.dim``.
    cone : ShiftedCone
    out : ndarray, optional
        Destination with the shape of ``z``.  May be ``z`` itself for an
        in-place projection.

    Returns
    -------
    ndarray
        The projection(s).

    Notes
    -----
    Cases are tested in the order: member (returned unchanged), polar side
    (mapped to the apex ``(c, 0)``), otherwise the boundary point
    ``(tau*alpha + c, tau*z1/||z1||)`` with ``tau = (alpha (z0 - c) + ||z1||)/2``.
    """
    z = np.asarray(z, dtype=float)
    _check_vectors(z, cone.dim)
    work = project_cones_batch(z.reshape(-1, cone.dim), float(cone.alpha), float(cone.c))
    if out is None:
        return work.reshape(z.shape)
    out[...] = work.reshape(z.shape)
    return out


def project_band(
    z: np.ndarray,
    band: ConeBand,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Project ``z`` onto ``band``: first onto the lower cone, then the upper one."""
    z = np.asarray(z, dtype=float)
    _check_vectors(z, band.dim)
    work = project_bands_batch(z.reshape(-1, band.dim), float(band.upper), float(band.lower))
    if out is None:
        return work.reshape(z.shape)
    out[...] = work.reshape(z.shape)
    return out


def cone_contains(z: np.ndarray, cone: ShiftedCone, tol: float = MEMBERSHIP_TOL):
    """Membership test ``||z1|| <= alpha (z0 - c) + tol``.

    Returns a bool for a single vector and a boolean array for a stack.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    z = np.asarray(z, dtype=float)
    if z.ndim not in (1, 2) or z.shape[-1] != cone.dim:
        raise ValueError(f"expected vectors of length {cone.dim}, got shape {z.shape}")
    t = np.linalg.norm(z[..., 1:], axis=-1)
    inside = t <= cone.alpha * (z[..., 0] - cone.c) + tol
    return bool(inside) if z.ndim == 1 else inside


@dataclass
class DykstraResult:
    """Outcome of :func:`dykstra_project`.

    ``converged`` is a bool for a single input vector and a boolean array for
    a stack; ``iterations`` is the number of sweeps performed.
    """

    point: np.ndarray
    converged: np.ndarray | bool
    iterations: int
    history: list | None = None


Projector = Callable[[np.ndarray], np.ndarray]


def dykstra_project(
    z: np.ndarray,
    projector_1: Projector,
    projector_2: Projector,
    tol: float = DYKSTRA_TOL,
    max_iter: int = DYKSTRA_MAX_ITER,
    record: bool = False,
) -> DykstraResult:
    """Dykstra's alternating projections onto ``C1 ∩ C2``.

    Iterates::

        v = P1(w + p);  p = w + p - v
        w = P2(v + q);  q = v + q - w

    from ``w = z, p = q = 0`` and stops once ``||w_k - w_{k-1}||_inf <= tol``
    and ``||v_k - w_k||_inf <= tol``.  For a stack of inputs the test is per
    row; converged rows are frozen and dropped from further sweeps.

    The projectors must accept arrays shaped like ``z`` (or a subset of its
    rows, when ``z`` is 2-D).  With ``record=True`` the ``(v, w)`` pairs of
    every sweep are kept in ``history`` (1-D input only).

    Exhausting ``max_iter`` is not an error: the last iterate is returned with
    ``converged`` False for the affected rows.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    zz = z.reshape(1, -1) if single else z
    if record and not single:
        raise ValueError("record=True requires a single input vector")

    def p1(a):
        return projector_1(a[0]).reshape(1, -1) if single else projector_1(a)

    def p2(a):
        return projector_2(a[0]).reshape(1, -1) if single else projector_2(a)

    k_rows = zz.shape[0]
    result = zz.copy()
    converged = np.zeros(k_rows, dtype=bool)
    active = np.arange(k_rows)
    w = zz.copy()
    p = np.zeros_like(zz)
    q = np.zeros_like(zz)
    history = [] if record else None
    it = 0
    for it in range(1, max_iter + 1):
        v = p1(w + p)
        p = w + p - v
        w_new = p2(v + q)
        q = v + q - w_new
        if record:
            history.append((v[0].copy(), w_new[0].copy()))
        step = np.max(np.abs(w_new - w), axis=1)
        gap = np.max(np.abs(v - w_new), axis=1)
        w = w_new
        done = (step <= tol) & (gap <= tol)
        if np.any(done):
            result[active[done]] = w[done]
            converged[active[done]] = True
            keep = ~done
            active, w, p, q = active[keep], w[keep], p[keep], q[keep]
            if active.size == 0:
                break
    if active.size:
        result[active] = w

    if single:
        return DykstraResult(result[0], bool(converged[0]), it, history)
    return DykstraResult(result, converged, it, history)
