import copy
import json
from pathlib import Path

import pytest

from bubblesolver.level import level_from_dict

LEVELS_DIR = Path(__file__).resolve().parents[1] / "src" / "bubblesolver" / "levels"

BASE = {
    "name": "t",
    "bounds": [0, 0, 800, 600],
    "ball": {"start": [100, 100, 0, 0], "radius": 15},
    "target": {"pos": [700, 100], "eps": 15},
    "horizon": 120,
    "env": [{"shape": "rectangle", "pos": [400, 580], "angle": 0, "w": 800, "h": 40}],
    "inventory": [{"id": 1, "shape": "rectangle", "w": 100, "h": 16, "material": "wood"}],
}


def level_dict(**over) -> dict:
    d = copy.deepcopy(BASE)
    for k, v in over.items():
        d[k] = v
    return d


def make_level(**over):
    return level_from_dict(level_dict(**over)).validate()


@pytest.fixture
def floor_level():
    return make_level()


@pytest.fixture(scope="session")
def level_files():
    return sorted(LEVELS_DIR.glob("*.json"))


def load_json(path):
    return json.loads(Path(path).read_text())


# acceptance criteria report one line each at the end of the run
ACCEPTANCE: dict = {}


def record_criterion(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
