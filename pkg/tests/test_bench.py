import numpy as np
import pytest

from harmonic_mpc import AdmmSettings, gen_polygon
from harmonic_mpc.bench import (BenchReport, bench_compare, surrogate_bench_config, with_polygon,
                                _initial_states)


def test_unit_square_up_to_rotation():
    rows, lower, upper, verts = gen_polygon(4, np.sqrt(2.0))
    np.testing.assert_allclose(upper, 1.0)
    np.testing.assert_allclose(lower, -1.0)
    # vertices start at angle 0, so the square is turned by 45 degrees;
    # rotating the rows back gives |p1| <= 1, |p2| <= 1
    c = np.cos(np.pi / 4)
    Rot = np.array([[c, c], [-c, c]])
    turned = rows @ Rot.T
    np.testing.assert_allclose(np.sort(np.abs(turned), axis=0), [[0, 0], [0, 0], [1, 1], [1, 1]], atol=1e-12)
    for k in range(4):
        np.testing.assert_allclose(np.linalg.norm(verts[k]), np.sqrt(2))
        assert abs(rows[k] @ verts[k] - 1.0) <= 1e-12
        assert abs(rows[k] @ verts[(k + 1) % 4] - 1.0) <= 1e-12


@pytest.mark.parametrize("l", [3, 4, 5, 7, 16, 64, 257])
def test_vertices_on_adjacent_rows(l):
    rows, lower, upper, verts = gen_polygon(l, 2.0)
    assert rows.shape == (l, 2)
    np.testing.assert_allclose(np.linalg.norm(verts, axis=1), 2.0)
    np.testing.assert_allclose(np.arctan2(verts[0, 1], verts[0, 0]), 0.0, atol=1e-15)
    for k in range(l):
        a = rows[k]
        for v in (verts[k], verts[(k + 1) % l]):
            assert abs(a @ v - upper[k]) <= 1e-12
        # every vertex satisfies every row
        vals = verts @ a
        assert np.all(vals <= upper[k] + 1e-12) and np.all(vals >= lower[k] - 1e-12)
        # the lower bound is attained by some vertex
        assert abs(vals.min() - lower[k]) <= 1e-12
    # origin strictly inside
    assert np.all(upper > 0) and np.all(lower < 0)


def test_lower_bound_matches_negated_upper_for_even_sides():
    rows, lower, upper, _ = gen_polygon(8)
    np.testing.assert_allclose(lower, -upper)
    rows, lower, upper, _ = gen_polygon(5)
    # odd polygons are not centrally symmetric; the far side is a vertex
    np.testing.assert_allclose(lower, -2.0)


def test_polygon_argument_checks():
    with pytest.raises(ValueError):
        gen_polygon(2)
    with pytest.raises(ValueError):
        gen_polygon(5, 0.0)


def test_with_polygon_rows_have_two_nonzeros():
    cfg = surrogate_bench_config()
    p = with_polygon(cfg.problem, cfg.position_idx, 12)
    assert p.n_y == cfg.problem.n_y + 12
    extra = p.E[cfg.problem.n_y:]
    assert np.all(np.count_nonzero(extra, axis=1) == 2)
    assert not p.F[cfg.problem.n_y:].any()


def test_initial_states_inside_polygon():
    cfg = surrogate_bench_config()
    rng = np.random.default_rng(0)
    for l in (3, 5, 64):
        rows, lower, upper, _ = gen_polygon(l, cfg.radius)
        X = _initial_states(cfg, l, 200, rng)
        P = X[:, list(cfg.position_idx)]
        assert np.all(P @ rows.T <= upper) and np.all(P @ rows.T >= lower)


def test_bench_smoke_and_report_fields():
    cfg = surrogate_bench_config()
    rep = bench_compare(cfg, [5], runs=1, settings=AdmmSettings(), seed=1)
    assert [r["encoding"] for r in rep.rows] == ["band", "soc-split"]
    assert set(rep.rows[0]) == set(BenchReport.ROW_FIELDS)
    assert set(rep.ratios[0]) == set(BenchReport.RATIO_FIELDS)
    assert rep.rows[0]["low_confidence"]            # fewer than min_runs
    band, split = rep.rows
    assert split["m"] - band["m"] == 3 * band["n_y"]
    r = rep.ratios[0]
    assert r["time_ratio"] == pytest.approx(split["time_avg_ms"] / band["time_avg_ms"])
    assert r["iter_ratio"] == pytest.approx(split["iter_avg"] / band["iter_avg"])


def test_bench_per_iteration_average_is_per_run():
    cfg = surrogate_bench_config()
    rep = bench_compare(cfg, [6], runs=5, seed=2)
    row = rep.rows[0]
    assert row["runs"] == 5 and row["converged_runs"] == 5
    assert not row["low_confidence"]
    assert row["time_min_ms"] <= row["time_median_ms"] <= row["time_max_ms"]
    assert row["iter_min"] <= row["iter_avg"] <= row["iter_max"]
    # per-run division then mean is within the range of per-run values
    assert row["us_per_iter_avg"] > 0


def test_bench_same_seed_same_iterations():
    cfg = surrogate_bench_config()
    a = bench_compare(cfg, [5, 9], runs=3, seed=4)
    b = bench_compare(cfg, [5, 9], runs=3, seed=4)
    assert [r["iter_avg"] for r in a.rows] == [r["iter_avg"] for r in b.rows]
    with pytest.raises(ValueError):
        bench_compare(cfg, [5], runs=0)
