
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubblesolver import geometry as geo
from bubblesolver.geometry import Vec2
from bubblesolver.guide import (EPS1, EPS2, REGION_MARGIN, GuidePath, LocalRegion, NoPathError,
                                compute_local_region, local_target, nearest_on_polyline, plan_guide_path)

from conftest import make_level
from oracles import minimal_aabb_oracle, nearest_points_bruteforce, random_pair


def wall(x, y, w, h):
    return {"shape": "rectangle", "pos": [x, y], "angle": 0, "w": w, "h": h}


def assert_collision_free(level, path):
    r = level.ball_radius
    for a, b in zip(path.waypoints, path.waypoints[1:]):
        for e in level.env:
            assert geo.segment_polygon_distance(a, b, e.polygon.verts, e.polygon.normals) >= r - 1e-9


# --------------------------------------------------------------------------
# planner


def test_open_level_gives_straight_path(floor_level):
    p = plan_guide_path(floor_level)
    assert p.waypoints[0] == Vec2(100, 100) and p.waypoints[-1] == Vec2(700, 100)
    assert p.length() == pytest.approx(600, rel=0.02)
    assert_collision_free(floor_level, p)


def test_path_routes_through_gap_under_wall():
    env = [wall(400, 580, 800, 40), wall(400, 230, 40, 460)]  # wall from the top down to y=460
    lv = make_level(env=env, target={"pos": [700, 100], "eps": 15})
    p = plan_guide_path(lv)
    assert_collision_free(lv, p)
    lowest = max(w.y for w in p.waypoints)
    assert 460 + 15 <= lowest <= 560 - 15
    near = min(abs(w.x - 400) for w in p.waypoints[1:-1])
    assert near < 60


def test_walled_off_target_has_no_path():
    env = [wall(400, 580, 800, 40), wall(600, 300, 20, 600)]
    lv = make_level(env=env)
    with pytest.raises(NoPathError):
        plan_guide_path(lv)


def test_planner_deterministic(floor_level):
    assert plan_guide_path(floor_level, seed=1) == plan_guide_path(floor_level, seed=2)


# --------------------------------------------------------------------------
# local region


def test_identical_paths_give_no_region():
    g = [(0, 0), (100, 0), (200, 50)]
    traj = GuidePath(tuple(Vec2(*p) for p in g)).resampled(5).waypoints
    assert compute_local_region(traj, g) is None


def test_single_qualifying_pair():
    g = [(0, 130), (200, 130)]
    traj = [(50, 125), (100, 100), (150, 128)]  # only the middle sample is 30 px off
    reg = compute_local_region(traj, g, 10, 60)
    assert reg.core == (100, 100, 100, 130)
    m = REGION_MARGIN
    assert reg.rect == (100 - m, 100 - m, 100 + m, 130 + m)
    assert reg.k_loc == 1


def test_increasing_deviation_covers_exactly_band():
    g = [(0, 0), (1000, 0)]
    traj = [(5.0 * k, -1.0 * k) for k in range(201)]  # deviation k px
    reg = compute_local_region(traj, g, 10, 60)
    assert reg.core == (50.0, -60.0, 300.0, 0.0)
    assert reg.k_loc == 10


def test_fallback_when_band_is_skipped():
    g = [(0, 0), (1000, 0)]
    traj = [(0, 0), (10, 0), (20, -200), (30, -300)]
    assert compute_local_region(traj, g, 10, 60, fallback=False) is None
    reg = compute_local_region(traj, g, 10, 60)
    assert reg.fallback and reg.k_loc == 2


def test_bad_band_rejected():
    with pytest.raises(ValueError):
        compute_local_region([(0, 0)], [(0, 0), (1, 0)], 60, 10)


def test_region_matches_bruteforce_oracle_on_random_pairs():
    rng = np.random.default_rng(11)
    for _ in range(60):
        traj, guide = random_pair(rng)
        reg = compute_local_region(traj, guide, EPS1, EPS2, fallback=False)
        want = minimal_aabb_oracle(traj, guide, EPS1, EPS2)
        assert (reg.core if reg else None) == want


def test_nearest_point_agrees_with_bruteforce():
    rng = np.random.default_rng(3)
    traj, guide = random_pair(rng, n_guide=6, n_traj=50)
    q, d = nearest_points_bruteforce(traj, guide)
    for i, p in enumerate(traj):
        got, dist, _, _ = nearest_on_polyline(p, guide)
        assert (got.x, got.y) == pytest.approx(tuple(q[i]), abs=1e-9) and dist == pytest.approx(d[i], abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_region_invariants(seed):
    traj, guide = random_pair(np.random.default_rng(seed))
    reg = compute_local_region(traj, guide, fallback=False)
    if reg is None:
        return
    x0, y0, x1, y1 = reg.rect
    assert reg.gamma_in_loc and reg.gamma_g_loc
    for _, p in reg.gamma_in_loc:
        assert reg.contains(p)
    for p in reg.gamma_g_loc:
        assert reg.contains(p, tol=1e-6)
    assert reg.k_loc in [k for k, _ in reg.gamma_in_loc]
    # minimality: every side of the core touches a qualifying point
    q, d = nearest_points_bruteforce(traj, guide)
    keep = (d >= EPS1) & (d <= EPS2)
    pts = np.concatenate([np.asarray(traj)[keep], q[keep]])
    cx0, cy0, cx1, cy1 = reg.core
    assert (pts[:, 0] < cx0 + 1).any() and (pts[:, 0] > cx1 - 1).any()
    assert (pts[:, 1] < cy0 + 1).any() and (pts[:, 1] > cy1 - 1).any()


def test_region_invariant_to_guide_resampling():
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(40):
        traj, guide = random_pair(rng)
        dense = GuidePath(tuple(Vec2(*p) for p in guide)).resampled(2.0).waypoints
        a = compute_local_region(traj, guide, fallback=False)
        b = compute_local_region(traj, dense, fallback=False)
        assert (a is None) == (b is None)
        if a is None:
            continue
        assert max(abs(u - v) for u, v in zip(a.rect, b.rect)) <= 1.0
        checked += 1
    assert checked > 20


# --------------------------------------------------------------------------
# local target


def _region_ending_at(c):
    return LocalRegion((0, 0, 100, 100), (0, 0, 100, 100), 0, ((0, Vec2(0, 0)),), (Vec2(0, 0), Vec2(*c)))


def test_local_target_membership_is_strict():
    tgt = local_target(_region_ending_at((50, 50)), eps=20)
    assert tgt.center == Vec2(50, 50)
    assert (50, 50) in tgt
    assert (60, 50) in tgt
    assert (70, 50) not in tgt
    with pytest.raises(ValueError):
        local_target(_region_ending_at((50, 50)), eps=0)
