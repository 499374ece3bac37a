import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from bubblesolver.geometry import Vec2
from bubblesolver.level import (BallState, LevelInvariantError, LevelParseError, PlacedBlock, Placement,
                                UnknownTemplateError, in_target_set, load_level, placement_feasible, read_level,
                                save_level)

from conftest import LEVELS_DIR, level_dict, make_level


def test_minimal_file_parses():
    lv = load_level(json.dumps(level_dict()))
    assert len(lv.env) == 1 and len(lv.inventory) == 1


def test_negative_width_names_block():
    d = level_dict(inventory=[{"id": 3, "shape": "rectangle", "w": -5, "h": 16, "material": "wood"}])
    with pytest.raises(LevelInvariantError) as exc:
        load_level(json.dumps(d))
    assert "3" in str(exc.value)


def test_parse_error_reports_position():
    with pytest.raises(LevelParseError, match="line"):
        load_level('{"bounds": [0, 0,')


def test_missing_field_is_parse_error():
    d = level_dict()
    del d["horizon"]
    with pytest.raises(LevelParseError, match="horizon"):
        load_level(json.dumps(d))


def test_ball_start_inside_env_rejected():
    d = level_dict(ball={"start": [400, 580, 0, 0], "radius": 15})
    with pytest.raises(LevelInvariantError):
        load_level(json.dumps(d))


def test_bundled_l01_has_one_block():
    lv = read_level(LEVELS_DIR / "L01.json")
    assert len(lv.inventory) == 1


def test_all_bundled_levels_load():
    files = sorted(LEVELS_DIR.glob("*.json"))
    assert len(files) == 10
    for f in files:
        assert read_level(f).name == f.stem


def test_round_trip(floor_level):
    assert load_level(save_level(floor_level)) == floor_level


def test_target_set_boundaries(floor_level):
    t = floor_level.target
    eps = floor_level.target_eps
    assert in_target_set(BallState.of(t.x, t.y, 123, -45), floor_level)
    assert in_target_set(BallState.of(t.x + eps, t.y), floor_level)
    assert not in_target_set(BallState.of(t.x + eps + 1, t.y), floor_level)


@given(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4), st.floats(-50, 50), st.floats(-50, 50))
def test_target_set_ignores_velocity(vx, vy, dx, dy):
    lv = make_level()
    a = BallState.of(lv.target.x + dx, lv.target.y + dy, 0.0, 0.0)
    b = BallState.of(lv.target.x + dx, lv.target.y + dy, vx, vy)
    assert in_target_set(a, lv) == in_target_set(b, lv)


def test_empty_placement_feasible(floor_level):
    assert placement_feasible(Placement(), floor_level) == (True, [])


def test_block_inside_env_infeasible(floor_level):
    ok, why = placement_feasible(Placement((PlacedBlock(1, Vec2(400, 580)),)), floor_level)
    assert not ok
    assert any("1" in w and "env" in w for w in why)


def test_block_tangent_to_floor_feasible(floor_level):
    # floor top at y=560; a 16 px tall block centred 8 px above touches it
    ok, why = placement_feasible(Placement((PlacedBlock(1, Vec2(400, 552)),)), floor_level)
    assert ok, why
    ok, _ = placement_feasible(Placement((PlacedBlock(1, Vec2(400, 552.5)),)), floor_level)
    assert not ok


def test_block_over_ball_start_infeasible(floor_level):
    ok, _ = placement_feasible(Placement((PlacedBlock(1, Vec2(100, 100)),)), floor_level)
    assert not ok


def test_unknown_template(floor_level):
    with pytest.raises(UnknownTemplateError):
        placement_feasible(Placement((PlacedBlock(9, Vec2(300, 300)),)), floor_level)


def test_duplicate_id_infeasible(floor_level):
    p = Placement((PlacedBlock(1, Vec2(300, 300)), PlacedBlock(1, Vec2(500, 300))))
    assert not placement_feasible(p, floor_level)[0]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(60, 740), st.floats(40, 540), st.floats(-math.pi, math.pi)),
                min_size=1, max_size=3), st.randoms(use_true_random=False))
def test_feasibility_permutation_invariant(poses, rnd):
    inv = [{"id": i + 1, "shape": "rectangle", "w": 80, "h": 16, "material": "wood"} for i in range(3)]
    lv = make_level(inventory=inv)
    blocks = [PlacedBlock(i + 1, Vec2(x, y), a) for i, (x, y, a) in enumerate(poses)]
    shuffled = list(blocks)
    rnd.shuffle(shuffled)
    assert placement_feasible(Placement(tuple(blocks)), lv)[0] == placement_feasible(Placement(tuple(shuffled)), lv)[0]
