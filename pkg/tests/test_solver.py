import json

import pytest

from bubblesolver.level import Placement, in_target_set, read_level
from bubblesolver.physics import simulate
from bubblesolver.solver import closest_approach, region_window, solve
from bubblesolver.guide import GuidePath
from bubblesolver.geometry import Vec2

from conftest import LEVELS_DIR, make_level


def test_free_fall_level_solved_without_regions():
    rep = solve(read_level(LEVELS_DIR / "L00.json"))
    assert rep.solved and rep.trials == 1 and rep.n_regions == 0 and len(rep.placement) == 0


def test_report_json_round_trips_and_is_stable():
    lv = read_level(LEVELS_DIR / "L01.json")
    a, b = solve(lv, seed=3), solve(lv, seed=3)
    assert a.to_json() == b.to_json()
    d = json.loads(a.to_json())
    assert d["level"] == "L01" and d["status"] == "solved" and d["trials"] == a.trials
    assert Placement.from_dict(d["placement"]) == a.placement


def test_solved_placement_reaches_target_from_scratch():
    lv = read_level(LEVELS_DIR / "L01.json")
    rep = solve(lv)
    tr = simulate(lv, rep.placement)
    assert tr.outcome == "reached_target" and in_target_set(tr.trajectory[tr.tau], lv)


def test_empty_inventory_fails_cleanly():
    lv = make_level(inventory=[])
    rep = solve(lv, budget=3)
    assert not rep.solved and rep.reason.startswith("unsolvable-region")
    assert rep.trials == 1


def test_budget_counts_placement_trials():
    lv = read_level(LEVELS_DIR / "L03.json")
    rep = solve(lv, budget=1)
    assert rep.trials == 1
    assert rep.solved or rep.reason == "budget"


def test_region_window_stops_after_first_stray():
    guide = GuidePath((Vec2(0, 0), Vec2(100, 0)))
    pos = [(0, 0), (10, 5), (20, 80), (30, 0)]
    assert region_window(pos, guide, 0) == pos[:3]
    assert region_window(pos, guide, 3) == pos[3:]


def test_closest_approach(floor_level):
    tr = simulate(floor_level)
    assert closest_approach(tr, floor_level) == pytest.approx(
        min(((s.pos.x - 700) ** 2 + (s.pos.y - 100) ** 2) ** 0.5 for s in tr.trajectory))


def test_exhausted_inventory_rolls_back_and_resolves_region(caplog):
    # L01 has one block: after the first accepted pose misses, the region is re-solved with it freed
    lv = read_level(LEVELS_DIR / "L01.json")
    with caplog.at_level("INFO", logger="bubblesolver.solver"):
        rep = solve(lv)
    assert any("rollback: inventory exhausted" in r.getMessage() for r in caplog.records)
    assert rep.solved and len(rep.placement) == 1
    rects = [r.rect for r in rep.regions]
    assert len(rects) == 2 and rects[0] == rects[1]
