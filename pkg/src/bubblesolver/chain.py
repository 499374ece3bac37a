"""Forward integration of the event-based surrogate.

Starting from a ball state, the chain alternates closed-form ballistic
arcs with contact episodes (bounces, rolls and slides on one object),
using the kinematic predictors with the current parameter snapshot.
Arcs are marched against obstacle geometry at no more than 5 px
spacing; the first obstacle reached is the one bound to the next event.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import geometry as geo
from .geometry import Vec2
from .kinematics import (FRICTION_CONE, GRAVITY, ContactType, KinParams, Surface, along_decel, along_legs,
                         classify_normal, incline_of_normal, predict_bounce)
from .level import BallState, Level, Placement

ARC_SPACING = 5.0  # px between arc samples
ALONG_SPACING = 2.0  # px between rolling samples
ARC_T_MAX = 4.0  # s of flight before giving up
CHUNK_T = 0.25  # s of flight sampled per vectorised chunk
ROLL_OVERLAP = 0.5  # px of overlap tolerated before a rolling ball counts as touching another object
SUPPORT_NY = -0.05  # surfaces whose normal points up more than this can carry a rolling ball
MAX_CONTACTS = 60
STALL_T = 1e-6  # s; a re-hit sooner than this means the ball is held
LOOKAHEAD_T = 0.05  # s
REFINE_SPLIT = 256  # hit-time subdivision; brackets start at <= 5 px
REFINE_ROUNDS = 1


@dataclass(frozen=True)
class Obstacle:
    owner: tuple  # ("env", q) | ("block", id)
    verts: tuple
    normals: tuple
    box: tuple

    @cached_property
    def columns(self):
        return geo.polygon_columns(self.verts, self.normals)

    def sdf(self, pts: np.ndarray) -> np.ndarray:
        return geo.polygon_sdf_fast(np.asarray(pts, dtype=float).reshape(-1, 2), self.columns)


def obstacles_for(level: Level, frozen: Placement = Placement()) -> tuple:
    out = [Obstacle(("env", q), e.polygon.verts, e.polygon.normals, e.polygon.box) for q, e in enumerate(level.env)]
    for b in frozen:
        p = level.template(b.id).polygon(b.pos.x, b.pos.y, b.angle)
        out.append(Obstacle(("block", b.id), p.verts, p.normals, p.box))
    return tuple(out)


@dataclass(frozen=True)
class Hit:
    index: int  # into the obstacle list
    t: float  # flight time from the arc start
    state: BallState
    surface: Surface
    normal: Vec2  # from the surface toward the ball centre


@dataclass
class Arc:
    hit: Optional[Hit]
    state: BallState  # at the hit, or where the arc stopped
    path: list  # ball centres
    end: str  # "hit" | "exit" | "timeout"
    t_sample: Optional[float] = None  # time of the sample that detected the hit or exit


def _ballistic(s: BallState, ts: np.ndarray) -> np.ndarray:
    out = np.empty((len(ts), 2))
    out[:, 0] = s.pos.x + s.vel.x * ts
    out[:, 1] = s.pos.y + s.vel.y * ts + 0.5 * GRAVITY * ts * ts
    return out


def _flight_state(s: BallState, t: float) -> BallState:
    return BallState(Vec2(s.pos.x + s.vel.x * t, s.pos.y + s.vel.y * t + 0.5 * GRAVITY * t * t),
                     Vec2(s.vel.x, s.vel.y + GRAVITY * t))


def contact_geometry(p, ob: Obstacle, owner_index: int = -1):
    """Surface feature of ``ob`` nearest to ``p`` and the outward normal."""
    d, q, feat = geo.point_polygon_distance(p, ob.verts, ob.normals)
    if feat[0] == "edge":
        i = feat[1]
        a, b = ob.verts[i], ob.verts[(i + 1) % len(ob.verts)]
        surf = Surface.segment(Vec2(*a), Vec2(*b), owner=ob.owner)
        normal = Vec2(*ob.normals[i])
    else:
        v = ob.verts[feat[1]]
        surf = Surface.circle(Vec2(*v), 0.0, owner=ob.owner)
        dx, dy = p[0] - v[0], p[1] - v[1]
        dd = math.hypot(dx, dy)
        normal = Vec2(dx / dd, dy / dd) if dd > 0 else Vec2(0.0, -1.0)
    return surf, normal, d


def _refine_hit(s: BallState, lo: float, hi: float, ob: Obstacle, r: float) -> float:
    """Last time in [lo, hi] at which the ball is still clear of ``ob``
    (clear at ``lo``, overlapping at ``hi``), by repeated subdivision."""
    for _ in range(REFINE_ROUNDS):
        ts = np.linspace(lo, hi, REFINE_SPLIT + 1)
        d = ob.sdf(_ballistic(s, ts))
        over = np.nonzero(d[1:] < r)[0]
        i = int(over[0]) if over.size else REFINE_SPLIT - 1
        lo, hi = float(ts[i]), float(ts[i + 1])
    return lo


def _first_approaching(s: BallState, ts: np.ndarray, pts: np.ndarray, d: np.ndarray, ob: Obstacle) -> int:
    """Index of the first overlapping sample that still moves into ``ob``, or -1."""
    n = pts - geo.polygon_closest_fast(pts, ob.columns)
    n[d < 0] *= -1.0
    vx = s.vel.x
    vy = s.vel.y + GRAVITY * ts
    ok = np.nonzero(vx * n[:, 0] + vy * n[:, 1] < 0.0)[0]
    return int(ok[0]) if ok.size else -1


def first_arc(s: BallState, base: Arc, main: Obstacle, main_index: int, r: float, bounds) -> Arc:
    """Arc from ``s`` through the scene plus ``main``, given ``base``, the
    arc through the scene alone.  Marching only ``main`` up to the sample
    that ended ``base`` visits the same samples as a joint march, so the
    result is identical; ties go to the scene, as in :func:`march_arc`."""
    t_end = ARC_T_MAX if base.t_sample is None else base.t_sample
    arc = march_arc(s, (main,), r, bounds, t_max=t_end)
    if arc.hit is not None and (base.t_sample is None or arc.t_sample < base.t_sample):
        return Arc(replace(arc.hit, index=main_index), arc.state, arc.path, "hit", arc.t_sample)
    return base


def march_arc(s: BallState, obstacles: Sequence[Obstacle], r: float, bounds, t_max: float = ARC_T_MAX,
              spacing: float = ARC_SPACING) -> Arc:
    """Follow the ballistic arc from ``s`` to the first obstacle it runs into.

    A sample counts as a hit when the ball overlaps an obstacle while
    moving toward it; overlaps while separating (leaving a surface) are
    ignored.  The hit time is refined by bisection.
    """
    x0, y0, x1, y1 = bounds
    path = [s.pos]
    t = 0.0
    while t < t_max:
        speed = math.hypot(s.vel.x, s.vel.y + GRAVITY * t) + GRAVITY * CHUNK_T
        dt = min(1.0 / 120.0, spacing / max(speed, 1e-9))
        n = max(1, int(math.ceil(min(CHUNK_T, t_max - t) / dt)))
        ts = t + dt * np.arange(1, n + 1)
        pts = _ballistic(s, ts)
        oob = np.nonzero((pts[:, 0] < x0 - r) | (pts[:, 0] > x1 + r) | (pts[:, 1] > y1 + r))[0]
        stop = int(oob[0]) if oob.size else n
        bx0, by0 = pts[:stop + 1, 0].min() - r, pts[:stop + 1, 1].min() - r
        bx1, by1 = pts[:stop + 1, 0].max() + r, pts[:stop + 1, 1].max() + r
        best = None  # (sample index, obstacle index)
        for oi, ob in enumerate(obstacles):
            b = ob.box
            if b[0] > bx1 or b[2] < bx0 or b[1] > by1 or b[3] < by0:
                continue
            m = stop if best is None else best[0]  # only earlier samples can win
            if m <= 0:
                continue
            # samples beyond r of the bounding box cannot touch the polygon
            px, py = pts[:m, 0], pts[:m, 1]
            near = np.nonzero((px >= b[0] - r) & (px <= b[2] + r) & (py >= b[1] - r) & (py <= b[3] + r))[0]
            if not near.size:
                continue
            d = ob.sdf(pts[near])
            keep = d < r - 1e-9
            idx, d = near[keep], d[keep]
            if idx.size:
                hit = _first_approaching(s, ts[idx], pts[idx], d, ob)
                if hit >= 0:
                    best = (int(idx[hit]), oi)
        if best is not None:
            i, oi = best
            ob = obstacles[oi]
            lo = float(ts[i - 1]) if i > 0 else t
            hi = float(ts[i])
            if ob.sdf(_ballistic(s, np.array([lo])))[0] >= r:
                t_hit = _refine_hit(s, lo, hi, ob, r)
            else:
                t_hit = hi
            st = _flight_state(s, t_hit)
            path.extend(map(Vec2._make, pts[:i].tolist()))
            path.append(st.pos)
            surf, normal, _ = contact_geometry(st.pos, ob)
            return Arc(Hit(oi, t_hit, st, surf, normal), st, path, "hit", hi)
        path.extend(map(Vec2._make, pts[:stop].tolist()))
        if stop < n:
            st = _flight_state(s, float(ts[stop]))
            path.append(st.pos)
            return Arc(None, st, path, "exit", float(ts[stop]))
        t = float(ts[-1])
    return Arc(None, _flight_state(s, t), path, "timeout")


@dataclass
class AlongResult:
    state: BallState
    path: list
    terminal: bool
    hit: Optional[Hit]  # another obstacle touched while rolling


def roll_along(s: BallState, surf: Surface, j: ContactType, beta: KinParams, obstacles: Sequence[Obstacle],
               owner_index: int, r: float) -> AlongResult:
    """Closed-form rolling/sliding along ``surf`` with path sampling so that
    other obstacles touched on the way end the event early."""
    u = surf.tangent
    n = surf.normal_toward(s.pos)
    p0 = (s.pos - surf.a).dot(u)
    decel = along_decel(surf, j, beta[j].a_roll, s.pos)
    legs, p_end, v_end, terminal = along_legs(p0, s.vel.dot(u), GRAVITY * u.y, decel, surf.length)
    ax, ay = surf.a.x + n.x * r, surf.a.y + n.y * r
    samples_p, samples_v = [p0], [s.vel.dot(u)]
    for leg in legs:
        travel = abs(leg.v0) * leg.duration + 0.5 * abs(leg.accel) * leg.duration ** 2
        m = max(1, int(math.ceil(travel / ALONG_SPACING)))
        ts = leg.duration * np.arange(1, m + 1) / m
        samples_p.extend((leg.p0 + leg.v0 * ts + 0.5 * leg.accel * ts * ts).tolist())
        samples_v.extend((leg.v0 + leg.accel * ts).tolist())
    P = np.asarray(samples_p)
    pts = np.stack([ax + u.x * P, ay + u.y * P], axis=-1)
    first = len(P)
    first_oi = -1
    if len(P) > 1:
        bx0, by0 = pts[:, 0].min() - r, pts[:, 1].min() - r
        bx1, by1 = pts[:, 0].max() + r, pts[:, 1].max() + r
        for oi, ob in enumerate(obstacles):
            if oi == owner_index:
                continue
            b = ob.box
            if b[0] > bx1 or b[2] < bx0 or b[1] > by1 or b[3] < by0:
                continue
            d = ob.sdf(pts[1:first])
            idx = np.nonzero(d < r - ROLL_OVERLAP)[0]
            if idx.size:
                first, first_oi = int(idx[0]) + 1, oi
    if first_oi >= 0:
        v = samples_v[first]
        c = Vec2(float(pts[first, 0]), float(pts[first, 1]))
        st = BallState(c, Vec2(u.x * v, u.y * v))
        path = list(map(Vec2._make, pts[:first + 1].tolist()))
        surf2, normal, _ = contact_geometry(c, obstacles[first_oi])
        return AlongResult(st, path, False, Hit(first_oi, 0.0, st, surf2, normal))
    c = Vec2(ax + u.x * p_end, ay + u.y * p_end)
    path = list(map(Vec2._make, pts.tolist()))
    path.append(c)
    return AlongResult(BallState(c, Vec2(u.x * v_end, u.y * v_end)), path, terminal, None)


@dataclass
class Episode:
    """All contacts of the ball with one object, up to the moment it leaves."""
    kind: ContactType  # type of the first contact
    owner: tuple
    leave: BallState  # state when the ball leaves the object (or rests on it)
    path: list
    end: str  # "hit" | "rest" | "exit" | "timeout" | "stall"
    next_hit: Optional[Hit] = None
    flight: list = field(default_factory=list)  # arc from leaving to the next hit
    flight_end: Optional[BallState] = None


def _edge_from_vertex(ob: Obstacle, v, vel: Vec2):
    """Upward-facing edge at vertex ``v`` that a slow ball moves onto, as
    ``(surface, normal)``; ``None`` if neither adjacent edge can carry it."""
    n = len(ob.verts)
    i = min(range(n), key=lambda k: (ob.verts[k][0] - v.x) ** 2 + (ob.verts[k][1] - v.y) ** 2)
    best = None
    for e, other in ((i, (i + 1) % n), ((i - 1) % n, (i - 1) % n)):
        nx, ny = ob.normals[e]
        if ny > SUPPORT_NY:
            continue
        dx, dy = ob.verts[other][0] - v.x, ob.verts[other][1] - v.y
        dd = math.hypot(dx, dy)
        # where the ball heads over the next fraction of a second
        score = (vel.x * dx + (vel.y + GRAVITY * LOOKAHEAD_T) * dy) / dd
        if best is None or score > best[0]:
            a, b = ob.verts[e], ob.verts[(e + 1) % n]
            best = (score, Surface.segment(a, b, owner=ob.owner), Vec2(nx, ny))
    return None if best is None else best[1:]


def run_episode(hit: Hit, obstacles: Sequence[Obstacle], beta: KinParams, r: float, bounds,
                budget: list) -> Episode:
    owner_index = hit.index
    owner = obstacles[owner_index].owner
    state = hit.state
    surf, normal = hit.surface, hit.normal
    kind = None
    path = [state.pos]
    while True:
        budget[0] -= 1
        if budget[0] < 0:
            return Episode(kind or ContactType.ROLL_ON_SEGMENT, owner, state, path, "stall")
        j = classify_normal(state.vel, normal, circle=surf.kind == "circle")
        if not j.is_bounce and surf.kind == "circle":
            edge = _edge_from_vertex(obstacles[owner_index], surf.a, state.vel)
            if edge is not None:
                surf, normal = edge
                j = ContactType.SLIDE_ON_SEGMENT if incline_of_normal(normal) > FRICTION_CONE \
                    else ContactType.ROLL_ON_SEGMENT
        kind = kind or j
        if j.is_bounce:
            state = predict_bounce(state, surf, beta[j])
        elif surf.kind == "circle" or normal.y > SUPPORT_NY:
            # nothing to roll on: drop the approach component and fly on
            vn = state.vel.x * normal.x + state.vel.y * normal.y
            if vn < 0.0:
                state = BallState(state.pos, Vec2(state.vel.x - vn * normal.x, state.vel.y - vn * normal.y))
        else:
            res = roll_along(state, surf, j, beta, obstacles, owner_index, r)
            path += res.path[1:]
            state = res.state
            if res.hit is not None:
                return Episode(kind, owner, state, path, "hit", res.hit, [])
            if res.terminal:
                return Episode(kind, owner, state, path, "rest")
        arc = march_arc(state, obstacles, r, bounds)
        if arc.hit is not None and arc.hit.index == owner_index:
            if not j.is_bounce and arc.hit.t <= STALL_T:
                # pressed straight back into the owner: it holds the ball
                return Episode(kind, owner, state, path, "rest")
            path += arc.path[1:]
            state = arc.state
            surf, normal = arc.hit.surface, arc.hit.normal
            continue
        return Episode(kind, owner, state, path, arc.end, arc.hit, arc.path, arc.state)


@dataclass(frozen=True)
class EventChain:
    """Predicted boundary states ``s_e1 .. s_e4`` and the ball path between them."""
    states: tuple
    kinds: tuple
    objects: tuple
    path: tuple
    end: str

    @property
    def final(self) -> BallState:
        return self.states[-1]


def roll_approach(s: BallState, obstacles: Sequence[Obstacle], support: int, beta: KinParams, r: float,
                  bounds) -> Arc:
    """Approach of a ball that starts out rolling on obstacle ``support``."""
    surf, normal, _ = contact_geometry(s.pos, obstacles[support])
    if surf.kind != "segment" or normal.y > SUPPORT_NY:
        return march_arc(s, obstacles, r, bounds)
    j = ContactType.SLIDE_ON_SEGMENT if incline_of_normal(normal) > FRICTION_CONE else ContactType.ROLL_ON_SEGMENT
    res = roll_along(s, surf, j, beta, obstacles, support, r)
    if res.hit is not None:
        return Arc(res.hit, res.state, res.path, "hit")
    if res.terminal:
        return Arc(None, res.state, res.path, "rest")
    arc = march_arc(res.state, obstacles, r, bounds)
    return Arc(arc.hit, arc.state, res.path + arc.path[1:], arc.end)


def run_chain(s_e1: BallState, obstacles: Sequence[Obstacle], main_index: int, beta: KinParams, r: float,
              bounds, approach: Optional[Arc] = None, support: Optional[int] = None) -> Optional[EventChain]:
    """Three-transition chain: Main Block contact, free flight, contact with
    the next object, end of that contact.  ``None`` if the ball never
    reaches the Main Block first.  ``support`` is the obstacle a rolling
    ``s_e1`` rests on."""
    budget = [MAX_CONTACTS]
    if approach is None:
        approach = march_arc(s_e1, obstacles, r, bounds) if support is None else \
            roll_approach(s_e1, obstacles, support, beta, r, bounds)
    arc = approach
    if arc.hit is None or arc.hit.index != main_index:
        return None
    path = list(arc.path)
    ep1 = run_episode(arc.hit, obstacles, beta, r, bounds, budget)
    path += ep1.path[1:]
    states = [s_e1, ep1.leave]
    kinds = [ep1.kind]
    objects = [ep1.owner]
    if ep1.next_hit is None:
        path += ep1.flight[1:]
        final = _flight_end(ep1)
        states += [final, final]
        return EventChain(tuple(states), tuple(kinds), tuple(objects), tuple(path), ep1.end)
    path += ep1.flight[1:]
    states.append(ep1.next_hit.state)
    ep2 = run_episode(ep1.next_hit, obstacles, beta, r, bounds, budget)
    path += ep2.path[1:]
    states.append(ep2.leave)
    kinds.append(ep2.kind)
    objects.append(ep2.owner)
    return EventChain(tuple(states), tuple(kinds), tuple(objects), tuple(path), ep2.end)


def _flight_end(ep: Episode) -> BallState:
    return ep.flight_end if ep.flight_end is not None else ep.leave


def path_min_distance(path: Sequence, c) -> float:
    """Exact distance from ``c`` to the polyline through ``path``."""
    if len(path) == 1:
        return geo.dist(path[0], c)
    P = np.asarray(path, dtype=float)
    a, b = P[:-1], P[1:]
    e = b - a
    ll = (e ** 2).sum(axis=1)
    safe = np.where(ll > 0, ll, 1.0)
    t = np.clip(((c[0] - a[:, 0]) * e[:, 0] + (c[1] - a[:, 1]) * e[:, 1]) / safe, 0.0, 1.0)
    t = np.where(ll > 0, t, 0.0)
    dx = a[:, 0] + t * e[:, 0] - c[0]
    dy = a[:, 1] + t * e[:, 1] - c[1]
    return float(np.sqrt(dx * dx + dy * dy).min())
