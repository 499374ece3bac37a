"""Event-based local optimisation of one Main Block inside a local region.

Decision variables are the contact sample ``e1`` on the recorded
trajectory, the Main Block ``l`` and its static pose.  Every grid pose
is settled under gravity first (dropped until it touches the scene and,
if it would tip, pivoted until a second contact) because placed blocks
are dynamic bodies.  Candidates are scored by forward-integrating the
three-event surrogate chain and comparing the outcome with the local
target.  A coarse pass picks the block, a fine pass refines the rest,
and Supporting Blocks are added where the Main Block cannot rest alone.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import geometry as geo
from . import statics
from .chain import (SUPPORT_NY, EventChain, Obstacle, first_arc, march_arc, obstacles_for, path_min_distance, roll_approach,
                    run_chain)
from .geometry import Vec2
from . import guide as gd
from .guide import LocalRegion, LocalTargetSet
from .kinematics import BOUNCE_THRESHOLD, REST_SPEED, KinParams
from .level import Level, PlacedBlock, Placement, placement_feasible
from .physics import TrialRecord

log = logging.getLogger(__name__)

COARSE_STEP = 20.0
COARSE_ANGLE = math.radians(15.0)
COARSE_E1_STRIDE = 5
COARSE_E1_MAX = 8
FINE_STEP = 5.0
FINE_ANGLE = math.radians(5.0)
FINE_SPAN = 15.0  # px either side of the anchor
FINE_ANGLE_SPAN = math.radians(10.0)
FINE_E1_SPAN = 4  # samples either side of the anchor
PIVOT_STEP = math.radians(2.0)
PIVOT_MAX = math.radians(90.0)
SUPPORT_SCAN = 2.0  # px
MAX_SUPPORTS = 2
MAX_SUPPORT_TRIES = 40
MAX_FG_SUPPORT_TRIES = 10  # fine neighbours of an unsupportable anchor tend to share its problem
POSE_DECIMALS = 6
LIFT_STEPS = 3  # 1e-6 px steps allowed to clear a rounded resting pose
PATH_TOL = 1.0  # px of overlap with the recorded approach tolerated as resting contact
CLEAR_MARGIN = 3.0  # px; exceeds half the largest approach sample spacing


def _rolls(contacts) -> bool:
    """One sustained contact with an upward-facing edge."""
    if len({c.body_a for c in contacts}) != 1:
        return False
    c = contacts[0]
    approach = -(c.v_pre.x * c.normal.x + c.v_pre.y * c.normal.y)
    return (approach < BOUNCE_THRESHOLD and c.surface is not None and c.surface.kind == "segment"
            and c.normal.y < SUPPORT_NY)


class EmptyGridError(RuntimeError):
    """No feasible candidate pose exists in the region."""


class UnsolvableRegionError(RuntimeError):
    """Every candidate in the region is infeasible or unsupportable."""


class UnsupportableError(RuntimeError):
    """The Main Block cannot be brought to rest with the remaining inventory."""


@dataclass(frozen=True)
class Candidate:
    e1: int
    main_block: int
    x: float
    y: float
    angle: float
    settle: str = "drop"  # how the pose was obtained: "drop" | "pivot" | "anchor"

    @property
    def pose(self) -> tuple:
        return (self.x, self.y, self.angle)

    def placed(self) -> PlacedBlock:
        return PlacedBlock(self.main_block, Vec2(self.x, self.y), self.angle)


@dataclass(frozen=True)
class Scored:
    candidate: Candidate
    cost: float  # inf when infeasible
    chain: Optional[EventChain] = None
    reason: str = ""

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.cost)

    @property
    def key(self) -> tuple:
        c = self.candidate
        return (self.cost, c.main_block, c.e1, c.x, c.y, c.angle, c.settle)


@dataclass(frozen=True)
class LocalProblem:
    """Everything one local optimisation needs, bundled immutably."""
    level: Level
    region: LocalRegion
    target: LocalTargetSet
    states: tuple  # recorded BallState per step
    free_steps: frozenset  # steps k whose ball state is contact-free
    frozen: Placement
    inventory: tuple  # template ids still available
    beta: KinParams
    k_min: int = 0  # earliest step the new block may influence
    guide: tuple = ()  # full guide polyline; orients the local target
    rolling: tuple = ()  # (k, owner) for steps where the ball rolls on one surface

    @classmethod
    def from_trial(cls, level: Level, region: LocalRegion, target: LocalTargetSet, tr: TrialRecord,
                   frozen: Placement, inventory: Sequence[int], beta: KinParams, k_min: int = 0,
                   guide: Sequence = ()) -> "LocalProblem":
        free, rolling = [], []
        n = len(tr.trajectory)
        for k in range(n):
            now = [c for c in tr.contacts[k] if c.is_ball]
            nxt = [c for c in tr.contacts[k + 1] if c.is_ball] if k + 1 < n else []
            if not now and not nxt:
                free.append(k)
            elif now and nxt and _rolls(now) and _rolls(nxt) and now[0].body_a == nxt[0].body_a:
                rolling.append((k, now[0].body_a))
        return cls(level, region, target, tuple(tr.trajectory), frozenset(free), frozen, tuple(sorted(inventory)),
                   beta, k_min, tuple(guide), tuple(rolling))

    @property
    def obstacles(self) -> tuple:
        cache = self.__dict__.get("_obstacles")
        if cache is None:
            cache = obstacles_for(self.level, self.frozen)
            object.__setattr__(self, "_obstacles", cache)
        return cache

    def approach_points(self, e1: int) -> np.ndarray:
        """Recorded ball centres from ``k_min`` through ``e1``."""
        cache = self.__dict__.get("_points")
        if cache is None:
            cache = np.array([(s.pos.x, s.pos.y) for s in self.states], dtype=float)
            object.__setattr__(self, "_points", cache)
        return cache[self.k_min:e1 + 1]

    def support_index(self, k: int) -> Optional[int]:
        """Obstacle index the ball rolls on at step ``k``, if any."""
        cache = self.__dict__.get("_support")
        if cache is None:
            where = {ob.owner: i for i, ob in enumerate(self.obstacles)}
            cache = {k2: where[o] for k2, o in self.rolling if o in where}
            object.__setattr__(self, "_support", cache)
        return cache.get(k)

    def base_approach(self, e1: int):
        """Approach from ``e1`` through the frozen scene alone, as an arc and
        an array of its ball centres (cached)."""
        cache = self.__dict__.get("_base")
        if cache is None:
            cache = {}
            object.__setattr__(self, "_base", cache)
        if e1 not in cache:
            s, r, bounds = self.states[e1], self.level.ball_radius, self.level.bounds
            k = self.support_index(e1)
            arc = march_arc(s, self.obstacles, r, bounds) if k is None else \
                roll_approach(s, self.obstacles, k, self.beta, r, bounds)
            cache[e1] = (arc, np.array([(p.x, p.y) for p in arc.path], dtype=float))
        return cache[e1]

    def e1_pool(self) -> list[int]:
        """Free-flight or rolling samples of the clipped trajectory."""
        out = []
        for k, _ in self.region.gamma_in_loc:
            if k < self.k_min:
                continue
            if k in self.free_steps:
                out.append(k)
            elif self.support_index(k) is not None and self.states[k].vel.norm() > REST_SPEED:
                out.append(k)
        return out


@dataclass
class LocalSolution:
    best: Candidate
    cost: float
    supporting: tuple  # of PlacedBlock
    m0_patch: Placement
    chain: Optional[EventChain]
    cg_best: Scored
    fg_best: Scored
    cg_time: float
    fg_time: float
    n_cg: int
    n_fg: int
    tried: int = 1


# --------------------------------------------------------------------------
# pose grids and settling


def _axis(lo: float, hi: float, step: float) -> list[float]:
    """Grid with the given step centred in [lo, hi]."""
    n = max(1, int(math.floor((hi - lo) / step)))
    first = lo + 0.5 * ((hi - lo) - (n - 1) * step)
    return [first + i * step for i in range(n)]


def _angles(shape: str, step: float) -> list[float]:
    period = math.pi / 2 if shape == "square" else math.pi
    n = int(round(period / step))
    return [-period / 2 + i * step for i in range(n)]


def _round_pose(x, y, a) -> tuple:
    return (round(x, POSE_DECIMALS), round(y, POSE_DECIMALS), round(a, 9))


def _obs_tuples(obstacles: Sequence[Obstacle]) -> list:
    return [(o.verts, o.normals, o.box) for o in obstacles]


def _overlaps_any(poly, obstacles) -> bool:
    for ov, on, ob in obstacles:
        if geo.aabb_overlap(poly.box, ob) and geo.polygons_overlap(poly.verts, poly.normals, ov, on):
            return True
    return False


def settle_drop(level: Level, tid: int, x: float, y: float, angle: float, obstacles: list,
                max_drop: float) -> Optional[float]:
    """Resting height after a vertical drop, or ``None`` if the start pose
    overlaps the scene or nothing is hit within ``max_drop``."""
    t = level.template(tid)
    if _overlaps_any(t.polygon(x, y, angle), obstacles):
        return None
    local = geo.shape_vertices(t.shape, t.width, t.height)
    d = geo.sweep_distance(local, x, y, angle, (0.0, 1.0), obstacles, max_drop)
    if d >= max_drop:
        return None
    return y + d


def _rotate_about(x, y, px, py, da):
    c, s = math.cos(da), math.sin(da)
    dx, dy = x - px, y - py
    return px + c * dx - s * dy, py + s * dx + c * dy


def settle_pivot(level: Level, tid: int, x: float, y: float, angle: float, static_polys: list,
                 obstacles: list) -> Optional[tuple]:
    """If the resting pose would tip, rotate it about the outermost contact
    on the heavy side until a second contact stops it."""
    t = level.template(tid)
    poly = t.polygon(x, y, angle)
    body = statics.body_of(poly, (x, y), t.area)
    contacts = statics.find_contacts([body], static_polys)
    if not contacts:
        return None
    lo, hi = statics.support_span(contacts, 0)
    if lo - 1e-6 <= x <= hi + 1e-6:
        return None
    if x > hi:
        pivot = max(contacts, key=lambda c: (c.point[0], c.point[1])).point
        sign = 1.0
    else:
        pivot = min(contacts, key=lambda c: (c.point[0], -c.point[1])).point
        sign = -1.0

    def pose(th):
        nx_, ny_ = _rotate_about(x, y, pivot[0], pivot[1], sign * th)
        return nx_, ny_, angle + sign * th

    def hit(th):
        px_, py_, pa = pose(th)
        return _overlaps_any(t.polygon(px_, py_, pa), obstacles)

    lo_t, th = 0.0, PIVOT_STEP
    while th <= PIVOT_MAX + 1e-12:
        if hit(th):
            hi_t = th
            for _ in range(40):
                mid = 0.5 * (lo_t + hi_t)
                if hit(mid):
                    hi_t = mid
                else:
                    lo_t = mid
            return pose(lo_t)
        lo_t = th
        th += PIVOT_STEP
    return None


def settled_poses(problem: LocalProblem, tid: int, xs: Iterable[float], ys: Sequence[float],
                  angles: Iterable[float]) -> list[tuple]:
    """Settled ``(x, y, angle, how)`` poses that still reach into the region."""
    level = problem.level
    x0, y0, x1, y1 = problem.region.rect
    obstacles = _obs_tuples(problem.obstacles)
    static_polys = [level.env[q].polygon for q in range(len(level.env))]
    static_polys += [level.template(b.id).polygon(b.pos.x, b.pos.y, b.angle) for b in problem.frozen]
    seen = set()
    out = []
    t = level.template(tid)
    bx0, by0, bx1, by1 = level.bounds
    r = level.ball_radius

    def admit(px, py, pa, how):
        raw = key = _round_pose(px, py, pa)
        if key in seen:
            return
        poly = t.polygon(*key)
        lift = 0
        while LIFT_STEPS and _overlaps_any(poly, obstacles):
            # rounding can sink a resting pose into its support by a few ulps
            lift += 1
            if lift > LIFT_STEPS:
                return
            key = (key[0], round(key[1] - 10.0 ** -POSE_DECIMALS, POSE_DECIMALS), key[2])
            poly = t.polygon(*key)
        vb = poly.box
        if vb[0] > x1 or vb[2] < x0 or vb[1] > y1 or vb[3] < y0:
            return  # settled entirely outside the region
        if vb[0] < bx0 or vb[1] < by0 or vb[2] > bx1 or vb[3] > by1:
            return
        if geo.circle_polygon_overlap(level.ball_start.pos, r, poly.verts, poly.normals):
            return
        if key in seen:
            return
        seen.update((raw, key))
        out.append((key[0], key[1], key[2], how))

    for a in angles:
        for x in xs:
            landed = -math.inf
            for y in ys:
                if y <= landed:
                    continue  # would land on the same spot
                yl = settle_drop(level, tid, x, y, a, obstacles, by1 - y)
                if yl is None:
                    continue
                landed = yl
                admit(x, yl, a, "drop")
                piv = settle_pivot(level, tid, x, yl, a, static_polys, obstacles)
                if piv is not None:
                    admit(piv[0], piv[1], piv[2], "pivot")
    return out


def candidate_grid(problem: LocalProblem, resolution: str = "coarse", anchor: Optional[Candidate] = None,
                   mode: str = "grid", seed: int = 0) -> list[Candidate]:
    """Candidate list for one pass.

    Coarse: every 5th free sample of the clipped trajectory, 20 px / 15 deg
    poses, every available block.  Fine: the anchor's block only, 5 px /
    5 deg around the anchor, neighbouring samples; the anchor is always
    included.  ``mode="random"`` draws the same number of poses uniformly
    from a generator seeded with ``seed``.
    """
    x0, y0, x1, y1 = problem.region.rect
    pool = problem.e1_pool()
    if resolution == "coarse":
        e1s = pool[::COARSE_E1_STRIDE]
        if len(e1s) > COARSE_E1_MAX:
            e1s = [e1s[round(i * (len(e1s) - 1) / (COARSE_E1_MAX - 1))] for i in range(COARSE_E1_MAX)]
        blocks = list(problem.inventory)
    elif resolution == "fine":
        if anchor is None:
            raise ValueError("fine grid needs an anchor")
        e1s = [k for k in pool if abs(k - anchor.e1) <= FINE_E1_SPAN]
        blocks = [anchor.main_block]
    else:
        raise ValueError(f"unknown resolution {resolution!r}")
    out: list[Candidate] = []
    rng = np.random.default_rng(seed) if mode == "random" else None
    for tid in blocks:
        shape = problem.level.template(tid).shape
        if resolution == "coarse":
            xs = _axis(x0, x1, COARSE_STEP)
            ys = _axis(y0, y1, COARSE_STEP)
            angles = _angles(shape, COARSE_ANGLE)
        else:
            xs = [anchor.x + d for d in np.arange(-FINE_SPAN, FINE_SPAN + 1e-9, FINE_STEP)]
            ys = [anchor.y + d for d in np.arange(-FINE_SPAN, FINE_SPAN + 1e-9, FINE_STEP)]
            angles = [anchor.angle + d for d in np.arange(-FINE_ANGLE_SPAN, FINE_ANGLE_SPAN + 1e-12, FINE_ANGLE)]
        if rng is not None:
            m = len(xs)
            xs = sorted(rng.uniform(x0, x1, m).tolist())
            ys = sorted(rng.uniform(y0, y1, len(ys)).tolist())
            angles = sorted(rng.uniform(-math.pi / 2, math.pi / 2, len(angles)).tolist())
        poses = settled_poses(problem, tid, [float(v) for v in xs], sorted(float(v) for v in ys),
                              [float(v) for v in angles])
        for e1 in e1s:
            for px, py, pa, how in poses:
                out.append(Candidate(e1, tid, px, py, pa, how))
    if anchor is not None and resolution == "fine" and anchor not in out:
        out.append(anchor)
    if not out:
        raise EmptyGridError("no feasible candidate in the region")
    return out


# --------------------------------------------------------------------------
# evaluation


def evaluate(c: Candidate, problem: LocalProblem) -> Scored:
    """Predicted cost of one candidate; a pure function of its inputs."""
    level = problem.level
    r = level.ball_radius
    t = level.template(c.main_block)
    poly = t.polygon(c.x, c.y, c.angle)
    main = Obstacle(("block", c.main_block), poly.verts, poly.normals, poly.box)
    # the recorded approach must not already run through the block
    pts = problem.approach_points(c.e1)
    if len(pts) and (main.sdf(pts) < r - PATH_TOL).any():
        return Scored(c, math.inf, None, "blocks the incoming path")
    # a block that stays clear of the unobstructed approach can never be hit first
    base, base_pts = problem.base_approach(c.e1)
    if (main.sdf(base_pts) >= r + CLEAR_MARGIN).all():
        return Scored(c, math.inf, None, "no contact with the Main Block")
    obstacles = problem.obstacles + (main,)
    s_e1, support = problem.states[c.e1], problem.support_index(c.e1)
    approach = None if support is not None else first_arc(s_e1, base, main, len(obstacles) - 1, r, level.bounds)
    chain = run_chain(s_e1, obstacles, len(obstacles) - 1, problem.beta, r, level.bounds,
                      approach=approach, support=support)
    if chain is None:
        return Scored(c, math.inf, None, "no contact with the Main Block")
    return Scored(c, chain_cost(chain, problem.target, problem.guide), chain)


def chain_cost(chain: EventChain, target: LocalTargetSet, guide: Sequence = ()) -> float:
    """Distance of the final predicted position to the local target.

    A chain that passes through the local target and ends downstream of
    it along ``guide`` scores its closest approach instead, so bridges
    and ramps that carry the ball past the target are not penalised for
    where the ball ends up afterwards.
    """
    c = target.center
    f = chain.final.pos
    dmin = path_min_distance(chain.path, c)
    if dmin < target.radius and (not guide or gd.progress(f, guide) >= gd.progress(c, guide) - target.radius):
        return dmin
    return math.hypot(f.x - c[0], f.y - c[1])


def _evaluate_batch(args) -> list:
    problem, cands = args
    return [evaluate(c, problem) for c in cands]


def evaluate_all(cands: Sequence[Candidate], problem: LocalProblem, jobs: int = 1) -> list[Scored]:
    """Evaluate in input order; the result does not depend on ``jobs``."""
    if jobs <= 1 or len(cands) < 64:
        return [evaluate(c, problem) for c in cands]
    size = math.ceil(len(cands) / (4 * jobs))
    batches = [(problem, list(cands[i:i + size])) for i in range(0, len(cands), size)]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        out = []
        for part in ex.map(_evaluate_batch, batches):
            out.extend(part)
    return out


def select_best(scored: Iterable[Scored]) -> Scored:
    """Total-order argmin: cost, then block id, then (e1, x, y, angle)."""
    return min(scored, key=lambda s: s.key)


def dump_csv(path, rows: Sequence[Scored], resolution: str) -> None:
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if fh.tell() == 0:
            w.writerow(["pass", "e1", "l", "x", "y", "angle", "cost"])
        for s in rows:
            c = s.candidate
            w.writerow([resolution, c.e1, c.main_block, f"{c.x:.6f}", f"{c.y:.6f}", f"{c.angle:.9f}",
                        f"{s.cost:.6f}" if s.feasible else "infeasible"])


# --------------------------------------------------------------------------
# supports


def _body(level: Level, pb: PlacedBlock) -> statics.Body:
    t = level.template(pb.id)
    return statics.body_of(t.polygon(pb.pos.x, pb.pos.y, pb.angle), (pb.pos.x, pb.pos.y), t.area)


def _static_polys(level: Level, frozen: Placement) -> list:
    out = [e.polygon for e in level.env]
    out += [level.template(b.id).polygon(b.pos.x, b.pos.y, b.angle) for b in frozen]
    return out


def assembly_stable(level: Level, blocks: Sequence[PlacedBlock], frozen: Placement) -> bool:
    return statics.in_equilibrium([_body(level, b) for b in blocks], _static_polys(level, frozen))


def _support_roots(level: Level, tid: int, main_poly, obstacles: list, xs: Sequence[float]) -> list[tuple]:
    """Poses of block ``tid`` (flat) that rest on the scene and just touch
    the underside of ``main_poly``, found by scanning x and bisecting."""
    t = level.template(tid)
    top = min(v[1] for v in main_poly.verts)

    def rest(x):
        y = top - t.height / 2
        yl = settle_drop(level, tid, x, y, 0.0, obstacles, level.bounds[3] - y)
        return yl

    def gap(x):
        yl = rest(x)
        if yl is None:
            return None
        p = t.polygon(x, yl, 0.0)
        return -geo.polygon_penetration(p.verts, p.normals, main_poly.verts, main_poly.normals), yl

    roots = []
    prev = None
    for x in xs:
        g = gap(x)
        if g is None:
            prev = None
            continue
        if prev is not None and (prev[1] < 0.0) != (g[0] < 0.0):
            lo, hi = prev[0], x
            glo = prev[1]
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                gm = gap(mid)
                if gm is None:
                    break
                if (gm[0] < 0.0) == (glo < 0.0):
                    lo = mid
                else:
                    hi = mid
            # keep the non-overlapping side
            xr = lo if glo >= 0.0 else hi
            gr = gap(xr)
            if gr is not None and gr[0] >= -1e-6:
                roots.append((xr, gr[1]))
        prev = (x, g[0])
    return roots


def place_supports(main: Candidate, problem: LocalProblem, inventory_remaining: Sequence[int],
                   path: Sequence = ()) -> list[PlacedBlock]:
    """Smallest-first greedy Supporting Blocks that make the Main Block rest.

    Returns ``[]`` when the Main Block already rests in equilibrium.  The
    first support goes under the side the block would tip toward; a second
    one may act as a stopper on the other side.  Supports never touch the
    predicted ball ``path``.
    """
    level = problem.level
    r = level.ball_radius
    mb = main.placed()
    if assembly_stable(level, [mb], problem.frozen):
        return []
    inv = sorted(inventory_remaining, key=lambda i: (level.template(i).area, i))
    if not inv:
        raise UnsupportableError("Main Block cannot rest and no blocks remain")
    main_poly = level.template(mb.id).polygon(mb.pos.x, mb.pos.y, mb.angle)
    base = _obs_tuples(problem.obstacles)
    path_pts = np.asarray(path, dtype=float) if len(path) else np.zeros((0, 2))
    bx0, _, bx1, _ = main_poly.box
    cx = main.x

    def clear_of_path(poly) -> bool:
        if not len(path_pts):
            return True
        return bool((geo.polygon_sdf(path_pts, poly.verts, poly.normals) >= r).all())

    def options(tid, placed):
        obs = base + [(main_poly.verts, main_poly.normals, main_poly.box)]
        for pb in placed:
            p = level.template(pb.id).polygon(pb.pos.x, pb.pos.y, pb.angle)
            obs.append((p.verts, p.normals, p.box))
        w = level.template(tid).width
        xs = list(np.arange(bx0 - w / 2, bx1 + w / 2 + 1e-9, SUPPORT_SCAN))
        roots = _support_roots(level, tid, main_poly, obs[:len(base)] + obs[len(base) + 1:], xs)
        # prefer supports far from the Main Block centre: longer lever arm
        roots.sort(key=lambda q: (-abs(q[0] - cx), q[0]))
        for x, y in roots:
            pb = PlacedBlock(tid, Vec2(float(x), float(y)), 0.0)
            p = level.template(tid).polygon(x, y, 0.0)
            if _overlaps_any(p, obs) or not clear_of_path(p):
                continue
            yield pb

    for tid in inv:
        for pb in options(tid, []):
            if assembly_stable(level, [mb, pb], problem.frozen):
                return [pb]
    if MAX_SUPPORTS >= 2:
        for tid in inv:
            for pb in options(tid, []):
                rest = [i for i in inv if i != tid]
                for tid2 in rest:
                    for pb2 in options(tid2, [pb]):
                        if assembly_stable(level, [mb, pb, pb2], problem.frozen):
                            return [pb, pb2]
                        break  # one stopper position per block keeps this cheap
    raise UnsupportableError("no support arrangement brings the Main Block to rest")


def back_map(main: Candidate, supports: Sequence[PlacedBlock], level: Level,
             frozen: Placement = Placement()) -> Placement:
    """Static placements are untouched before contact, so the pose at the
    contact time is the initial pose."""
    p = frozen.merged([main.placed(), *supports])
    ok, why = placement_feasible(p, level)
    if not ok:
        raise UnsupportableError("; ".join(why))
    return p


# --------------------------------------------------------------------------
# local solve


def _near_tried(ident: tuple, exclude: Iterable[tuple]) -> bool:
    """Same block kind within one fine-grid cell of a pose already simulated."""
    kind, (x, y, a) = ident
    for k2, (x2, y2, a2) in exclude:
        if k2 == kind and abs(x - x2) < FINE_STEP and abs(y - y2) < FINE_STEP and abs(a - a2) < FINE_ANGLE:
            return True
    return False


def solve_local(problem: LocalProblem, jobs: int = 1, mode: str = "grid", seed: int = 0,
                exclude: frozenset = frozenset(), dump=None) -> LocalSolution:
    """Coarse pass to choose the Main Block, fine pass around the best
    coarse candidate, then supports for the best candidate that can be
    made to rest.  ``exclude`` holds ``(block kind, pose)`` pairs already
    tried; poses within one fine-grid cell of those are skipped too."""
    t0 = time.perf_counter()
    cg = candidate_grid(problem, "coarse", mode=mode, seed=seed)
    cg_scored = evaluate_all(cg, problem, jobs)
    t1 = time.perf_counter()
    feasible = [s for s in cg_scored if s.feasible]
    if dump is not None:
        dump_csv(dump, cg_scored, "coarse")
    if not feasible:
        raise UnsolvableRegionError("every coarse candidate is infeasible")
    cg_best = select_best(feasible)
    fg = candidate_grid(problem, "fine", anchor=cg_best.candidate, mode=mode, seed=seed + 1)
    fg_scored = evaluate_all(fg, problem, jobs)
    t2 = time.perf_counter()
    if dump is not None:
        dump_csv(dump, fg_scored, "fine")
    fg_feasible = [s for s in fg_scored if s.feasible]
    fg_best = select_best(fg_feasible)
    ordered = [(True, s) for s in sorted(fg_feasible, key=lambda s: s.key)] + \
        [(False, s) for s in sorted(feasible, key=lambda s: s.key)]
    tried = fg_tried = 0
    seen = set()
    for fine, s in ordered:
        c = s.candidate
        ident = (problem.level.template(c.main_block).kind, c.pose)
        if ident in seen or _near_tried(ident, exclude) or (fine and fg_tried >= MAX_FG_SUPPORT_TRIES):
            continue
        seen.add(ident)
        tried += 1
        fg_tried += fine
        if tried > MAX_SUPPORT_TRIES:
            break
        remaining = [i for i in problem.inventory if i != c.main_block]
        try:
            sup = place_supports(c, problem, remaining, s.chain.path if s.chain else ())
            patch = back_map(c, sup, problem.level, problem.frozen)
        except UnsupportableError:
            continue
        return LocalSolution(c, s.cost, tuple(sup), patch, s.chain, cg_best, fg_best, t1 - t0, t2 - t1,
                             len(cg), len(fg), tried)
    raise UnsolvableRegionError("no candidate could be supported")
