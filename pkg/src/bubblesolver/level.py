"""Level data model, level-file format and feasibility tests."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

from . import geometry as geo
from .geometry import Vec2

DEFAULT_TARGET_EPS = 15.0
DEFAULT_BALL_RADIUS = 15.0
SHAPES = ("rectangle", "square", "circle-segment")
MATERIALS = ("wood", "metal")


class LevelError(ValueError):
    pass


class LevelParseError(LevelError):
    """Malformed level text; message carries the line or field."""


class LevelInvariantError(LevelError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("level invariants violated:\n  " + "\n  ".join(self.violations))


class UnknownTemplateError(KeyError):
    pass


@dataclass(frozen=True)
class BallState:
    pos: Vec2
    vel: Vec2 = Vec2(0.0, 0.0)

    @classmethod
    def of(cls, x, y, vx=0.0, vy=0.0) -> "BallState":
        return cls(Vec2(float(x), float(y)), Vec2(float(vx), float(vy)))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.pos.x, self.pos.y, self.vel.x, self.vel.y)


@dataclass(frozen=True)
class BlockState:
    """Pose, twist and size of a rectangle-like object.

    Mass and inertia are derived from the shape and the world density.
    """
    pos: Vec2
    angle: float
    vel: Vec2
    angvel: float
    width: float
    height: float


@dataclass(frozen=True)
class EnvBlock:
    shape: str
    pos: Vec2
    angle: float
    width: float
    height: float

    @cached_property
    def polygon(self):
        return make_polygon(self.shape, self.width, self.height, self.pos.x, self.pos.y, self.angle)

    def state(self) -> BlockState:
        return BlockState(self.pos, self.angle, Vec2(0.0, 0.0), 0.0, self.width, self.height)


@dataclass(frozen=True)
class BlockTemplate:
    id: int
    shape: str
    width: float
    height: float
    material: str = "wood"

    @property
    def kind(self) -> tuple:
        """Everything but the id: interchangeable blocks share a kind."""
        return (self.shape, self.width, self.height, self.material)

    @property
    def area(self) -> float:
        return abs(geo.signed_area(geo.shape_vertices(self.shape, self.width, self.height)))

    def polygon(self, x: float, y: float, angle: float):
        return make_polygon(self.shape, self.width, self.height, x, y, angle)


@dataclass(frozen=True)
class Polygon:
    verts: tuple
    normals: tuple
    box: tuple

    def as_obstacle(self):
        return (self.verts, self.normals, self.box)


def make_polygon(shape: str, w: float, h: float, x: float, y: float, angle: float) -> Polygon:
    local = geo.shape_vertices(shape, w, h)
    verts = tuple(geo.transform(local, x, y, angle))
    normals = tuple(geo.edge_normals(verts))
    return Polygon(verts, normals, geo.aabb(verts))


@dataclass(frozen=True)
class PlacedBlock:
    id: int
    pos: Vec2
    angle: float = 0.0

    def to_dict(self) -> dict:
        return {"id": self.id, "pos": [self.pos.x, self.pos.y], "angle": self.angle}


@dataclass(frozen=True)
class Placement:
    """Initial poses of the placed subset of the inventory."""
    entries: tuple[PlacedBlock, ...] = ()

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def ids(self) -> list[int]:
        return [e.id for e in self.entries]

    def merged(self, more: Iterable[PlacedBlock]) -> "Placement":
        return Placement(tuple(self.entries) + tuple(more))

    def to_dict(self) -> dict:
        return {"placement": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> "Placement":
        items = d.get("placement", d) if isinstance(d, dict) else d
        return cls(tuple(PlacedBlock(int(e["id"]), Vec2(float(e["pos"][0]), float(e["pos"][1])),
                                     float(e.get("angle", 0.0))) for e in items))


def load_placement(path) -> Placement:
    return Placement.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Level:
    env: tuple[EnvBlock, ...]
    inventory: tuple[BlockTemplate, ...]
    ball_start: BallState
    target: Vec2
    horizon: int
    bounds: tuple[float, float, float, float]
    ball_radius: float = DEFAULT_BALL_RADIUS
    target_eps: float = DEFAULT_TARGET_EPS
    name: str = ""

    def template(self, tid: int) -> BlockTemplate:
        for t in self.inventory:
            if t.id == tid:
                return t
        raise UnknownTemplateError(tid)

    @cached_property
    def env_obstacles(self) -> tuple:
        return tuple(b.polygon.as_obstacle() for b in self.env)

    @cached_property
    def min_feature(self) -> float:
        sizes = [2.0 * self.ball_radius]
        sizes += [min(b.width, b.height) for b in self.env]
        sizes += [min(t.width, t.height) for t in self.inventory]
        return min(sizes)

    def violations(self) -> list[str]:
        out = []
        x0, y0, x1, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            out.append("bounds must have positive extent")
        if self.horizon <= 0:
            out.append(f"horizon must be > 0 (got {self.horizon})")
        if not self.ball_radius > 0:
            out.append("ball radius must be > 0")
        if not self.target_eps > 0:
            out.append("target eps must be > 0")
        vals = list(self.ball_start.as_tuple()) + [self.target.x, self.target.y]
        if not all(math.isfinite(v) for v in vals):
            out.append("ball start and target must be finite")
            return out
        bx, by = self.ball_start.pos
        r = self.ball_radius
        if not (x0 + r <= bx <= x1 - r and y0 + r <= by <= y1 - r):
            out.append(f"ball start ({bx}, {by}) outside bounds")
        if not (x0 <= self.target.x <= x1 and y0 <= self.target.y <= y1):
            out.append(f"target ({self.target.x}, {self.target.y}) outside bounds")
        for i, b in enumerate(self.env):
            if b.shape not in SHAPES:
                out.append(f"env[{i}]: unknown shape {b.shape!r}")
                continue
            if not (b.width > 0 and b.height > 0):
                out.append(f"env[{i}]: width and height must be > 0 (got {b.width} x {b.height})")
                continue
            p = b.polygon
            if geo.circle_polygon_overlap(self.ball_start.pos, r, p.verts, p.normals):
                out.append(f"env[{i}]: penetrates the ball start")
        seen = set()
        for t in self.inventory:
            if t.id in seen:
                out.append(f"inventory block {t.id}: duplicate id")
            seen.add(t.id)
            if t.shape not in SHAPES:
                out.append(f"inventory block {t.id}: unknown shape {t.shape!r}")
            if t.material not in MATERIALS:
                out.append(f"inventory block {t.id}: unknown material {t.material!r}")
            if not (t.width > 0 and t.height > 0):
                out.append(f"inventory block {t.id}: width and height must be > 0 (got {t.width} x {t.height})")
        return out

    def validate(self) -> "Level":
        v = self.violations()
        if v:
            raise LevelInvariantError(v)
        return self


# --------------------------------------------------------------------------
# file format


def _req(d: dict, key: str, where: str):
    if key not in d:
        raise LevelParseError(f"missing field '{where}{key}'")
    return d[key]


def _num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise LevelParseError(f"field '{where}' must be a number, got {v!r}")
    return float(v)


def _vec(v, n: int, where: str) -> list[float]:
    if not isinstance(v, list) or len(v) != n:
        raise LevelParseError(f"field '{where}' must be a list of {n} numbers")
    return [_num(x, f"{where}[{i}]") for i, x in enumerate(v)]


def level_from_dict(d: dict) -> Level:
    if not isinstance(d, dict):
        raise LevelParseError("level file must contain a JSON object")
    bounds = _vec(_req(d, "bounds", ""), 4, "bounds")
    ball = _req(d, "ball", "")
    start = _vec(_req(ball, "start", "ball."), 4, "ball.start")
    radius = _num(ball.get("radius", DEFAULT_BALL_RADIUS), "ball.radius")
    tgt = _req(d, "target", "")
    tpos = _vec(_req(tgt, "pos", "target."), 2, "target.pos")
    teps = _num(tgt.get("eps", DEFAULT_TARGET_EPS), "target.eps")
    horizon = _req(d, "horizon", "")
    if isinstance(horizon, bool) or not isinstance(horizon, int):
        raise LevelParseError("field 'horizon' must be an integer")
    env = []
    for i, e in enumerate(_req(d, "env", "")):
        w = f"env[{i}]."
        pos = _vec(_req(e, "pos", w), 2, w + "pos")
        env.append(EnvBlock(str(e.get("shape", "rectangle")), Vec2(*pos), _num(e.get("angle", 0.0), w + "angle"),
                            _num(_req(e, "w", w), w + "w"), _num(_req(e, "h", w), w + "h")))
    inv = []
    for i, e in enumerate(_req(d, "inventory", "")):
        w = f"inventory[{i}]."
        tid = _req(e, "id", w)
        if isinstance(tid, bool) or not isinstance(tid, int):
            raise LevelParseError(f"field '{w}id' must be an integer")
        inv.append(BlockTemplate(tid, str(e.get("shape", "rectangle")), _num(_req(e, "w", w), w + "w"),
                                 _num(_req(e, "h", w), w + "h"), str(e.get("material", "wood"))))
    return Level(env=tuple(env), inventory=tuple(inv), ball_start=BallState.of(*start),
                 target=Vec2(*tpos), horizon=horizon, bounds=tuple(bounds), ball_radius=radius,
                 target_eps=teps, name=str(d.get("name", "")))


def level_to_dict(level: Level) -> dict:
    d = {}
    if level.name:
        d["name"] = level.name
    d["bounds"] = list(level.bounds)
    d["ball"] = {"start": list(level.ball_start.as_tuple()), "radius": level.ball_radius}
    d["target"] = {"pos": [level.target.x, level.target.y], "eps": level.target_eps}
    d["horizon"] = level.horizon
    d["env"] = [{"shape": b.shape, "pos": [b.pos.x, b.pos.y], "angle": b.angle, "w": b.width, "h": b.height}
                for b in level.env]
    d["inventory"] = [{"id": t.id, "shape": t.shape, "w": t.width, "h": t.height, "material": t.material}
                      for t in level.inventory]
    return d


def load_level(text: str) -> Level:
    """Parse level-file text and validate every invariant."""
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LevelParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        level = level_from_dict(d)
    except (TypeError, AttributeError) as exc:
        raise LevelParseError(f"malformed level structure: {exc}") from None
    return level.validate()


def save_level(level: Level) -> str:
    return json.dumps(level_to_dict(level), indent=2)


def read_level(path) -> Level:
    p = Path(path)
    level = load_level(p.read_text())
    if not level.name:
        object.__setattr__(level, "name", p.stem)
    return level


# --------------------------------------------------------------------------
# sets


def in_target_set(s: BallState, level: Level) -> bool:
    """Position within ``target_eps`` of the flag (inclusive); velocity is ignored."""
    return math.hypot(s.pos.x - level.target.x, s.pos.y - level.target.y) <= level.target_eps


def inside_bounds(poly: Polygon, bounds) -> bool:
    x0, y0, x1, y1 = bounds
    bx0, by0, bx1, by1 = poly.box
    return bx0 >= x0 and by0 >= y0 and bx1 <= x1 and by1 <= y1


def placement_polygons(p: Placement, level: Level) -> list[Polygon]:
    return [level.template(e.id).polygon(e.pos.x, e.pos.y, e.angle) for e in p]


def placement_feasible(p: Placement, level: Level) -> tuple[bool, list[str]]:
    """Exact strict-interior overlap test of every placed block.

    Touching (zero penetration) is allowed, so blocks may rest on the
    ground.  Raises :class:`UnknownTemplateError` for ids not in the
    inventory.
    """
    polys = placement_polygons(p, level)
    violations = []
    seen = set()
    for e in p:
        if e.id in seen:
            violations.append(f"block {e.id}: placed more than once")
        seen.add(e.id)
    for e, poly in zip(p, polys):
        if not inside_bounds(poly, level.bounds):
            violations.append(f"block {e.id}: outside bounds")
        if geo.circle_polygon_overlap(level.ball_start.pos, level.ball_radius, poly.verts, poly.normals):
            violations.append(f"block {e.id}: overlaps ball start")
        for q, env in enumerate(level.env):
            ep = env.polygon
            if geo.aabb_overlap(poly.box, ep.box) and geo.polygons_overlap(poly.verts, poly.normals, ep.verts, ep.normals):
                violations.append(f"block {e.id}: overlaps env[{q}]")
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            a, b = polys[i], polys[j]
            if geo.aabb_overlap(a.box, b.box) and geo.polygons_overlap(a.verts, a.normals, b.verts, b.normals):
                violations.append(f"block {p.entries[i].id}: overlaps block {p.entries[j].id}")
    return not violations, violations
