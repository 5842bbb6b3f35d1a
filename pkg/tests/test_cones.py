import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from harmonic_mpc.cones import (ConeBand, ShiftedCone, band_nonempty, cone_contains, dykstra_project,
                                project_band, project_shifted_cone)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec3 = arrays(float, 3, elements=finite)


def sampled_members(rng, cone, k):
    """Points of the cone: boundary and interior draws around the apex."""
    d = cone.dim
    dirs = rng.normal(size=(k, d - 1))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    r = rng.uniform(0, 10, k)
    frac = rng.uniform(0, 1, k)
    frac[: k // 2] = 1.0  # half on the boundary
    v = np.empty((k, d))
    v[:, 0] = cone.c + cone.alpha * r
    v[:, 1:] = (frac * r)[:, None] * dirs
    return v


def grid_projection(z, cone, rng, k=200_000):
    """Nearest of many sampled cone members; an upper bound on the true distance."""
    cand = sampled_members(rng, cone, k)
    cand = np.vstack((cand, cone.apex))
    i = np.argmin(np.linalg.norm(cand - z, axis=1))
    return cand[i]


# construction ------------------------------------------------------------

def test_cone_rejects_bad_alpha():
    for a in (0, 2, 0.5, True):
        with pytest.raises(ValueError):
            ShiftedCone(a, 0.0)


def test_cone_rejects_bad_dim_and_offset():
    with pytest.raises(ValueError):
        ShiftedCone(1, 0.0, dim=1)
    with pytest.raises(ValueError):
        ShiftedCone(1, np.inf)


def test_band_rejects_empty():
    with pytest.raises(ValueError, match="empty band"):
        ConeBand(upper=-1.0, lower=1.0)
    assert band_nonempty(1.0, 1.0)
    assert not band_nonempty(0.0, 0.1)


# closed-form cases -------------------------------------------------------

def test_member_returned_unchanged():
    z = np.array([2.0, 0.3, -0.4])
    np.testing.assert_array_equal(project_shifted_cone(z, ShiftedCone(1, 0.0)), z)


def test_polar_point_maps_to_apex():
    z = np.array([-3.0, 0.5, 0.5])
    np.testing.assert_array_equal(project_shifted_cone(z, ShiftedCone(1, 1.0)), [1.0, 0.0, 0.0])


def test_boundary_case_hand_value():
    # tau = (0 + 1)/2
    out = project_shifted_cone(np.array([0.0, 1.0, 0.0]), ShiftedCone(1, 0.0))
    np.testing.assert_allclose(out, [0.5, 0.5, 0.0], atol=1e-15)
    rng = np.random.default_rng(1)
    ref = grid_projection(np.array([0.0, 1.0, 0.0]), ShiftedCone(1, 0.0), rng)
    np.testing.assert_allclose(out, ref, atol=2e-2)


def test_downward_cone_hand_value():
    # K_-(1): ||z1|| <= 1 - z0; z = (1, 1, 0): s = 0, t = 1, tau = 1/2 -> (1 - 1/2, 1/2, 0)
    out = project_shifted_cone(np.array([1.0, 1.0, 0.0]), ShiftedCone(-1, 1.0))
    np.testing.assert_allclose(out, [0.5, 0.5, 0.0], atol=1e-15)


def test_apex_with_zero_tail_is_member():
    z = np.array([0.7, 0.0, 0.0])
    np.testing.assert_array_equal(project_shifted_cone(z, ShiftedCone(1, 0.7)), z)
    np.testing.assert_array_equal(project_shifted_cone(z, ShiftedCone(-1, 0.7)), z)


def test_zero_tail_outside_goes_to_apex():
    out = project_shifted_cone(np.array([-1.0, 0.0, 0.0]), ShiftedCone(1, 0.0))
    np.testing.assert_array_equal(out, [0.0, 0.0, 0.0])


def test_higher_dimension_and_stack():
    cone = ShiftedCone(1, 0.5, dim=5)
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(50, 5)) * 3
    P = project_shifted_cone(Z, cone)
    assert P.shape == Z.shape
    for z, p in zip(Z, P):
        np.testing.assert_array_equal(project_shifted_cone(z, cone), p)
    assert np.all(cone_contains(P, cone))


def test_out_argument_in_place():
    cone = ShiftedCone(-1, 2.0)
    z = np.array([5.0, 1.0, 1.0])
    expected = project_shifted_cone(z, cone)
    res = project_shifted_cone(z, cone, out=z)
    assert res is z
    np.testing.assert_array_equal(z, expected)


def test_input_validation():
    with pytest.raises(ValueError):
        project_shifted_cone(np.zeros(4), ShiftedCone(1, 0.0))
    with pytest.raises(ValueError, match="non-finite"):
        project_band(np.array([np.nan, 0, 0]), ConeBand(1.0, -1.0))
    with pytest.raises(ValueError):
        cone_contains(np.zeros(3), ShiftedCone(1, 0.0), tol=-1)


def test_band_member_unchanged_and_degenerate():
    band = ConeBand(1.0, -1.0)
    z = np.array([0.2, 0.3, 0.1])
    np.testing.assert_array_equal(project_band(z, band), z)
    # upper == lower: the band is the single point (c, 0)
    out = project_band(np.array([4.0, -2.0, 3.0]), ConeBand(0.5, 0.5))
    np.testing.assert_allclose(out, [0.5, 0.0, 0.0], atol=1e-15)


# properties --------------------------------------------------------------

@settings(max_examples=300, deadline=None)
@given(vec3, st.sampled_from([1, -1]), st.floats(-5, 5))
def test_projection_is_member_and_idempotent(z, alpha, c):
    cone = ShiftedCone(alpha, c)
    p = project_shifted_cone(z, cone)
    assert cone_contains(p, cone, tol=1e-9)
    np.testing.assert_allclose(project_shifted_cone(p, cone), p, atol=1e-12)


@settings(max_examples=300, deadline=None)
@given(vec3, vec3, st.sampled_from([1, -1]), st.floats(-5, 5))
def test_projection_is_nonexpansive(z1, z2, alpha, c):
    cone = ShiftedCone(alpha, c)
    p1, p2 = project_shifted_cone(z1, cone), project_shifted_cone(z2, cone)
    assert np.linalg.norm(p1 - p2) <= np.linalg.norm(z1 - z2) + 1e-12


@settings(max_examples=200, deadline=None)
@given(vec3, st.floats(-5, 5), st.floats(-5, 5))
def test_band_projection_matches_dykstra(z, a, b):
    upper, lower = max(a, b), min(a, b)
    band = ConeBand(upper, lower)
    p = project_band(z, band)
    ref = dykstra_project(z, lambda v: project_shifted_cone(v, band.lower_cone),
                          lambda v: project_shifted_cone(v, band.upper_cone))
    assert ref.converged
    np.testing.assert_allclose(p, ref.point, atol=1e-7)


def test_band_equals_composition_of_cone_projections():
    rng = np.random.default_rng(3)
    Z = rng.uniform(-10, 10, (2000, 3))
    up = rng.uniform(-5, 5, 2000)
    lo = up - rng.uniform(0, 5, 2000)
    for z, u, l in zip(Z, up, lo):
        band = ConeBand(u, l)
        comp = project_shifted_cone(project_shifted_cone(z, band.lower_cone), band.upper_cone)
        np.testing.assert_allclose(project_band(z, band), comp, atol=1e-12)


def test_projection_beats_sampled_members():
    # the projection is at least as close as any sampled member
    rng = np.random.default_rng(5)
    for _ in range(20):
        cone = ShiftedCone(int(rng.choice([1, -1])), rng.uniform(-3, 3))
        z = rng.uniform(-10, 10, 3)
        p = project_shifted_cone(z, cone)
        cand = sampled_members(rng, cone, 20000)
        assert np.linalg.norm(z - p) <= np.min(np.linalg.norm(cand - z, axis=1)) + 1e-12


# Dykstra -----------------------------------------------------------------

def test_dykstra_two_halfspaces_hand_value():
    # {x <= 0} ∩ {y <= 0}: projection of (1, 2) is the origin
    p1 = lambda v: np.minimum(v, [0.0, np.inf])
    p2 = lambda v: np.minimum(v, [np.inf, 0.0])
    res = dykstra_project(np.array([1.0, 2.0]), p1, p2)
    assert res.converged
    np.testing.assert_allclose(res.point, [0.0, 0.0], atol=1e-10)


def test_dykstra_disk_and_halfplane():
    # the lower half disk is closest to (2, 2) at (1, 0)
    def disk(v):
        n = np.linalg.norm(v, axis=-1, keepdims=True)
        return np.where(n > 1, v / np.maximum(n, 1e-300), v)

    def half(v):
        return np.minimum(v, np.array([np.inf, 0.0]))

    z = np.array([2.0, 2.0])
    res = dykstra_project(z, disk, half)
    np.testing.assert_allclose(res.point, [1.0, 0.0], atol=1e-8)


def test_dykstra_batch_and_history():
    band = ConeBand(1.0, -1.0)
    Z = np.random.default_rng(0).uniform(-5, 5, (100, 3))
    p1 = lambda v: project_shifted_cone(v, band.lower_cone)
    p2 = lambda v: project_shifted_cone(v, band.upper_cone)
    res = dykstra_project(Z, p1, p2)
    assert res.converged.all()
    for z, p in zip(Z[:10], res.point[:10]):
        np.testing.assert_allclose(dykstra_project(z, p1, p2).point, p, atol=1e-12)
    single = dykstra_project(Z[0], p1, p2, record=True)
    assert len(single.history) == single.iterations
    with pytest.raises(ValueError):
        dykstra_project(Z, p1, p2, record=True)


def test_dykstra_budget_exhaustion_is_not_an_error():
    def disk(v):
        n = np.linalg.norm(v)
        return v / n if n > 1 else v

    res = dykstra_project(np.array([3.0, 3.0]), disk, lambda v: np.minimum(v, [np.inf, 0.0]),
                          tol=1e-15, max_iter=2)
    assert not res.converged
    assert res.iterations == 2
    with pytest.raises(ValueError):
        dykstra_project(np.zeros(2), disk, disk, tol=0)
