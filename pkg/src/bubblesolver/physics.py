"""Deterministic fixed-step 2D rigid-body simulator for the ball world.

Semi-implicit Euler (velocity first, then position), sequential impulses
with Coulomb friction and restitution, Baumgarte-style positional
correction.  The ball is a non-rotating disc; its tangential contact
behaviour is the rolling-ball rule from :mod:`kinematics` (impact
friction capped by the spin capture, rolling resistance in sustained
contact, Coulomb friction on slopes steeper than the friction cone).

Every run is a pure function of its inputs: plain float arithmetic in
a fixed order, no randomness, no global state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from . import geometry as geo
from .geometry import Vec2
from .kinematics import (BOUNCE_THRESHOLD, FRICTION, GRAVITY, ROLL_CAPTURE, ROLL_DECEL,
                         ContactType, Surface, classify_normal)
from .level import BallState, BlockState, Level, Placement, in_target_set, placement_feasible

DT = 1.0 / 60.0
DENSITY = 1.0
RESTITUTION = {"wood": 0.4, "metal": 0.6}
ENV_RESTITUTION = 0.4
ITERATIONS = 4
BAUMGARTE = 0.2
SLOP = 0.5
DEBOUNCE = 3


@dataclass(frozen=True)
class PhysicsParams:
    """Material constants of the ground-truth engine."""
    restitution_env: float = ENV_RESTITUTION
    restitution_wood: float = RESTITUTION["wood"]
    restitution_metal: float = RESTITUTION["metal"]

    def restitution(self, material: str) -> float:
        if material == "env":
            return self.restitution_env
        return self.restitution_metal if material == "metal" else self.restitution_wood


DEFAULT_PHYSICS = PhysicsParams()


class InfeasiblePlacementError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("infeasible placement: " + "; ".join(self.violations))


@dataclass(frozen=True)
class Contact:
    """One contact point.  For ball contacts ``normal`` points from the
    surface toward the ball and ``v_pre`` is the ball velocity before the
    impulses of that step."""
    body_a: tuple  # ("block", id) | ("env", q)
    body_b: tuple  # ("ball",) | ("block", id)
    point: Vec2
    normal: Vec2
    penetration: float
    surface: Optional[Surface] = None
    v_pre: Optional[Vec2] = None

    @property
    def is_ball(self) -> bool:
        return self.body_b == ("ball",)


@dataclass(frozen=True)
class WorldState:
    ball: BallState
    blocks: tuple  # ((id, BlockState), ...)
    step: int = 0
    cache: tuple = ()  # warm-start impulses ((key, (pn, pt)), ...)


@dataclass
class TrialRecord:
    trajectory: list  # BallState per step k = 0..tau
    block_ids: tuple
    block_history: list  # per step: tuple of BlockState in block_ids order
    contacts: list  # per step: tuple of Contact (contacts[0] is empty)
    outcome: str  # "reached_target" | "timeout" | "out_of_bounds"
    tau: Optional[int] = None

    def positions(self) -> list[Vec2]:
        return [s.pos for s in self.trajectory]

    def ball_contacts(self, k: int) -> list[Contact]:
        return [c for c in self.contacts[k] if c.is_ball]

    def signature(self) -> tuple:
        return (tuple(s.as_tuple() for s in self.trajectory),
                tuple(tuple((b.pos, b.angle, b.vel, b.angvel) for b in row) for row in self.block_history),
                self.outcome, self.tau)


@dataclass(frozen=True)
class Event:
    start: int
    end: int  # inclusive
    kind: ContactType
    object: Optional[tuple]
    feature: Optional[str] = None  # "segment" (edge) | "circle" (corner or arc) | None in free fall


# --------------------------------------------------------------------------
# engine


class _Block:
    __slots__ = ("id", "x", "y", "a", "vx", "vy", "w", "inv_m", "inv_i", "local", "lnormals",
                 "material", "width", "height", "verts", "normals", "box", "static")

    def __init__(self, bid, local, x, y, a, vx, vy, w, mass, inertia, material, width, height, static=False):
        self.id = bid
        self.local = local
        self.lnormals = geo.edge_normals(local)
        self.x, self.y, self.a = x, y, a
        self.vx, self.vy, self.w = vx, vy, w
        self.static = static
        self.inv_m = 0.0 if static else 1.0 / mass
        self.inv_i = 0.0 if static else 1.0 / inertia
        self.material = material
        self.width, self.height = width, height
        self.update()

    def update(self):
        self.verts = geo.transform(self.local, self.x, self.y, self.a)
        self.normals = geo.rotate_normals(self.lnormals, self.a)
        self.box = geo.aabb(self.verts)


class _Pt:
    """Solver-side contact point."""
    __slots__ = ("a", "b", "nx", "ny", "ra", "rb", "mass_n", "mass_t", "pn", "pt", "bias", "key",
                 "sep", "ball", "record", "px", "py")


class Engine:
    """Mutable simulation world; :func:`step` wraps it in a pure function."""

    def __init__(self, level: Level, blocks: Sequence[tuple], ball: BallState, step: int = 0, cache=(),
                 params: PhysicsParams = DEFAULT_PHYSICS):
        self.level = level
        self.params = params
        self.r = level.ball_radius
        self.ball_inv_m = 1.0 / (DENSITY * math.pi * self.r * self.r)
        self.bx, self.by = ball.pos
        self.bvx, self.bvy = ball.vel
        self.k = step
        self.max_speed = 0.9 * level.min_feature / DT
        self.env = [_Block(("env", q), geo.shape_vertices(e.shape, e.width, e.height), e.pos.x, e.pos.y, e.angle,
                           0.0, 0.0, 0.0, 1.0, 1.0, "env", e.width, e.height, static=True)
                    for q, e in enumerate(level.env)]
        self.blocks = []
        for bid, st in blocks:
            t = level.template(bid)
            local = geo.shape_vertices(t.shape, t.width, t.height)
            mass, inertia = geo.polygon_mass_properties(local, DENSITY)
            self.blocks.append(_Block(("block", bid), local, st.pos.x, st.pos.y, st.angle, st.vel.x, st.vel.y,
                                      st.angvel, mass, inertia, t.material, t.width, t.height))
        self.cache = dict(cache)

    @classmethod
    def from_placement(cls, level: Level, placement: Placement, params: PhysicsParams = DEFAULT_PHYSICS) -> "Engine":
        blocks = [(e.id, BlockState(e.pos, e.angle, Vec2(0.0, 0.0), 0.0, level.template(e.id).width,
                                    level.template(e.id).height)) for e in placement]
        return cls(level, blocks, level.ball_start, params=params)

    # -- state export ------------------------------------------------------
    def ball_state(self) -> BallState:
        return BallState(Vec2(self.bx, self.by), Vec2(self.bvx, self.bvy))

    def block_states(self) -> tuple:
        return tuple(BlockState(Vec2(b.x, b.y), b.a, Vec2(b.vx, b.vy), b.w, b.width, b.height) for b in self.blocks)

    def world_state(self) -> WorldState:
        return WorldState(self.ball_state(), tuple((b.id[1], s) for b, s in zip(self.blocks, self.block_states())),
                          self.k, tuple(sorted(self.cache.items())))

    # -- one step ------------------------------------------------------------
    def advance(self) -> tuple:
        r = self.r
        g_dt = GRAVITY * DT
        e_before = 0.5 * (self.bvx * self.bvx + self.bvy * self.bvy) - GRAVITY * self.by

        # velocities
        self.bvy += g_dt
        for b in self.blocks:
            b.vy += g_dt

        # narrow phase on start-of-step positions
        points: list[_Pt] = []
        ball_pts: list[_Pt] = []
        bbox = (self.bx - r, self.by - r, self.bx + r, self.by + r)
        for body in self.env + self.blocks:
            if not geo.aabb_overlap(bbox, body.box, 0.5):
                continue
            m = geo.collide_circle_polygon((self.bx, self.by), r, body.verts, body.normals)
            if m is None:
                continue
            (nx, ny), (px, py), sep, feat = m
            if sep > 0.0:
                continue
            pt = _Pt()
            pt.a, pt.b, pt.ball = body, None, True
            pt.nx, pt.ny, pt.px, pt.py, pt.sep = nx, ny, px, py, sep
            n_v = len(body.verts)
            if feat[0] == "edge":
                i = feat[1]
                surf = Surface.segment(body.verts[i], body.verts[(i + 1) % n_v], owner=body.id)
            else:
                surf = Surface.circle(body.verts[feat[1]], 0.0, owner=body.id)
            pt.record = surf
            ball_pts.append(pt)
        blocks = self.blocks
        for i, a in enumerate(blocks):
            for other in self.env + blocks[i + 1:]:
                if not geo.aabb_overlap(a.box, other.box, 0.5):
                    continue
                # keep the static body (or the earlier block) as body A
                m = geo.collide_polygons(other.verts, other.normals, a.verts, a.normals)
                if m is None:
                    continue
                nx, ny = m.normal
                for (px, py), sep, fid in m.points:
                    pt = _Pt()
                    pt.a, pt.b, pt.ball = other, a, False
                    pt.nx, pt.ny, pt.px, pt.py, pt.sep = nx, ny, px, py, sep
                    pt.key = (other.id, a.id, fid)
                    pt.record = None
                    points.append(pt)

        records = []
        # ball contacts: restitution target and one-off tangential impulse
        for pt in ball_pts:
            body = pt.a
            nx, ny = pt.nx, pt.ny
            rax, ray = pt.px - body.x, pt.py - body.y
            pt.ra = (rax, ray)
            rn = rax * ny - ray * nx
            k_n = self.ball_inv_m + body.inv_m + body.inv_i * rn * rn
            pt.mass_n = 1.0 / k_n
            tx, ty = -ny, nx
            rt = rax * ty - ray * tx
            k_t = self.ball_inv_m + body.inv_m + body.inv_i * rt * rt
            pt.mass_t = 1.0 / k_t
            dvx = self.bvx - (body.vx - body.w * ray)
            dvy = self.bvy - (body.vy + body.w * rax)
            vt = dvx * tx + dvy * ty
            # incoming relative velocity: a static body got no gravity this step
            ivx, ivy = (dvx, dvy - g_dt) if body.static else (dvx, dvy)
            vn = ivx * nx + ivy * ny
            records.append(Contact(body.id, ("ball",), Vec2(pt.px, pt.py), Vec2(nx, ny), max(0.0, -pt.sep),
                                   pt.record, Vec2(self.bvx, self.bvy - g_dt)))
            kind = classify_normal((ivx, ivy), (nx, ny), circle=pt.record.kind == "circle")
            e = self.params.restitution(body.material)
            if -vn >= BOUNCE_THRESHOLD:
                pt.bias = -e * vn
                dvt = min(FRICTION * (1.0 + e) * -vn, ROLL_CAPTURE * abs(vt))
            else:
                pt.bias = 0.0
                decel = ROLL_DECEL
                if kind == ContactType.SLIDE_ON_SEGMENT:
                    decel += FRICTION * GRAVITY * max(0.0, -ny)
                dvt = min(decel * DT, abs(vt))
            if vt != 0.0 and dvt > 0.0:
                jt = -math.copysign(dvt, vt) * pt.mass_t
                self._apply_ball(pt, jt * tx, jt * ty)
            pt.pn = 0.0

        # block contacts: Baumgarte bias, warm start
        for pt in points:
            a, b = pt.a, pt.b
            nx, ny = pt.nx, pt.ny
            rax, ray = pt.px - a.x, pt.py - a.y
            rbx, rby = pt.px - b.x, pt.py - b.y
            pt.ra, pt.rb = (rax, ray), (rbx, rby)
            rna = rax * ny - ray * nx
            rnb = rbx * ny - rby * nx
            k_n = a.inv_m + b.inv_m + a.inv_i * rna * rna + b.inv_i * rnb * rnb
            pt.mass_n = 1.0 / k_n
            tx, ty = -ny, nx
            rta = rax * ty - ray * tx
            rtb = rbx * ty - rby * tx
            k_t = a.inv_m + b.inv_m + a.inv_i * rta * rta + b.inv_i * rtb * rtb
            pt.mass_t = 1.0 / k_t
            pt.bias = BAUMGARTE / DT * max(0.0, -pt.sep - SLOP)
            pn, ptt = self.cache.get(pt.key, (0.0, 0.0))
            pt.pn, pt.pt = pn, ptt
            if pn or ptt:
                self._apply_pair(pt, pn * nx + ptt * tx, pn * ny + ptt * ty)
            records.append(Contact(a.id, b.id, Vec2(pt.px, pt.py), Vec2(nx, ny), max(0.0, -pt.sep)))

        # sequential impulses
        for _ in range(ITERATIONS):
            for pt in ball_pts:
                body = pt.a
                rax, ray = pt.ra
                dvx = self.bvx - (body.vx - body.w * ray)
                dvy = self.bvy - (body.vy + body.w * rax)
                vn = dvx * pt.nx + dvy * pt.ny
                dpn = pt.mass_n * (pt.bias - vn)
                pn0 = pt.pn
                pt.pn = max(pn0 + dpn, 0.0)
                dpn = pt.pn - pn0
                if dpn:
                    self._apply_ball(pt, dpn * pt.nx, dpn * pt.ny)
            for pt in points:
                a, b = pt.a, pt.b
                rax, ray = pt.ra
                rbx, rby = pt.rb
                dvx = (b.vx - b.w * rby) - (a.vx - a.w * ray)
                dvy = (b.vy + b.w * rbx) - (a.vy + a.w * rax)
                nx, ny = pt.nx, pt.ny
                vn = dvx * nx + dvy * ny
                dpn = pt.mass_n * (pt.bias - vn)
                pn0 = pt.pn
                pt.pn = max(pn0 + dpn, 0.0)
                dpn = pt.pn - pn0
                if dpn:
                    self._apply_pair(pt, dpn * nx, dpn * ny)
                dvx = (b.vx - b.w * rby) - (a.vx - a.w * ray)
                dvy = (b.vy + b.w * rbx) - (a.vy + a.w * rax)
                tx, ty = -ny, nx
                vt = dvx * tx + dvy * ty
                dpt = -pt.mass_t * vt
                lim = FRICTION * pt.pn
                pt0 = pt.pt
                pt.pt = max(-lim, min(lim, pt0 + dpt))
                dpt = pt.pt - pt0
                if dpt:
                    self._apply_pair(pt, dpt * tx, dpt * ty)
        self.cache = {pt.key: (pt.pn, pt.pt) for pt in points}

        # speed cap instead of continuous collision detection
        cap = self.max_speed
        sp = math.hypot(self.bvx, self.bvy)
        if sp > cap:
            self.bvx *= cap / sp
            self.bvy *= cap / sp
        for b in self.blocks:
            sp = math.hypot(b.vx, b.vy)
            if sp > cap:
                b.vx *= cap / sp
                b.vy *= cap / sp

        # positions
        self.bx += self.bvx * DT
        self.by += self.bvy * DT
        for b in self.blocks:
            b.x += b.vx * DT
            b.y += b.vy * DT
            b.a += b.w * DT

        # ball position correction, split by inverse mass
        for pt in ball_pts:
            body = pt.a
            rax, ray = pt.ra
            dvx = self.bvx - (body.vx - body.w * ray)
            dvy = self.bvy - (body.vy + body.w * rax)
            pen = -pt.sep - (dvx * pt.nx + dvy * pt.ny) * DT
            corr = BAUMGARTE * max(0.0, pen - SLOP)
            if corr > 0.0:
                wsum = self.ball_inv_m + body.inv_m
                self.bx += pt.nx * corr * self.ball_inv_m / wsum
                self.by += pt.ny * corr * self.ball_inv_m / wsum
                body.x -= pt.nx * corr * body.inv_m / wsum
                body.y -= pt.ny * corr * body.inv_m / wsum

        # contacts with static geometry never add energy to the ball
        if ball_pts and all(pt.a.static for pt in ball_pts):
            self._energy_guard(e_before)

        for b in self.blocks:
            b.update()
        self.k += 1
        return tuple(records)

    def _energy_guard(self, e_before: float):
        budget = e_before + GRAVITY * self.by
        ke = 0.5 * (self.bvx * self.bvx + self.bvy * self.bvy)
        if ke <= budget:
            return
        if budget >= 0.0:
            s = math.sqrt(budget / ke) if ke > 0.0 else 0.0
            self.bvx *= s
            self.bvy *= s
            return
        # correction lifted the ball more than its kinetic energy pays for
        self.bvx = self.bvy = 0.0
        self.by = -e_before / GRAVITY

    def _apply_ball(self, pt: _Pt, jx: float, jy: float):
        body = pt.a
        self.bvx += jx * self.ball_inv_m
        self.bvy += jy * self.ball_inv_m
        if body.inv_m:
            rax, ray = pt.ra
            body.vx -= jx * body.inv_m
            body.vy -= jy * body.inv_m
            body.w -= body.inv_i * (rax * jy - ray * jx)

    @staticmethod
    def _apply_pair(pt: _Pt, jx: float, jy: float):
        a, b = pt.a, pt.b
        if a.inv_m:
            rax, ray = pt.ra
            a.vx -= jx * a.inv_m
            a.vy -= jy * a.inv_m
            a.w -= a.inv_i * (rax * jy - ray * jx)
        rbx, rby = pt.rb
        b.vx += jx * b.inv_m
        b.vy += jy * b.inv_m
        b.w += b.inv_i * (rbx * jy - rby * jx)


# --------------------------------------------------------------------------
# public API


def initial_state(level: Level, placement: Placement) -> WorldState:
    return Engine.from_placement(level, placement).world_state()


def step(w: WorldState, level: Level, params: PhysicsParams = DEFAULT_PHYSICS) -> WorldState:
    """Advance one fixed timestep; a pure function of ``(w, level)``."""
    eng = Engine(level, w.blocks, w.ball, w.step, w.cache, params)
    eng.advance()
    return eng.world_state()


def _out_of_bounds(s: BallState, level: Level) -> bool:
    x0, y0, x1, y1 = level.bounds
    r = level.ball_radius
    return s.pos.x < x0 - r or s.pos.x > x1 + r or s.pos.y > y1 + r


def simulate(level: Level, placement: Placement = Placement(), horizon: Optional[int] = None,
             stop_on_target: bool = True, params: PhysicsParams = DEFAULT_PHYSICS) -> TrialRecord:
    """Run one trial from the level's start state.

    Stops at the first step whose ball state lies in the target set, when
    the ball leaves the world, or after ``horizon`` steps.
    """
    ok, why = placement_feasible(placement, level)
    if not ok:
        raise InfeasiblePlacementError(why)
    T = level.horizon if horizon is None else horizon
    eng = Engine.from_placement(level, placement, params)
    traj = [eng.ball_state()]
    hist = [eng.block_states()]
    contacts: list = [()]
    ids = tuple(e.id for e in placement)
    if stop_on_target and in_target_set(traj[0], level):
        return TrialRecord(traj, ids, hist, contacts, "reached_target", 0)
    outcome, tau = "timeout", None
    for k in range(1, T + 1):
        contacts.append(eng.advance())
        s = eng.ball_state()
        traj.append(s)
        hist.append(eng.block_states())
        if stop_on_target and in_target_set(s, level):
            outcome, tau = "reached_target", k
            break
        if _out_of_bounds(s, level):
            outcome = "out_of_bounds"
            break
    return TrialRecord(traj, ids, hist, contacts, outcome, tau)


# --------------------------------------------------------------------------
# events


def primary_ball_contact(contacts: Sequence[Contact]) -> Optional[Contact]:
    """The contact that defines the ball's motion mode at one step."""
    best, best_key = None, None
    for c in contacts:
        if not c.is_ball:
            continue
        approach = -(c.v_pre.x * c.normal.x + c.v_pre.y * c.normal.y)
        key = (approach >= BOUNCE_THRESHOLD, approach if approach >= BOUNCE_THRESHOLD else c.penetration)
        if best_key is None or key > best_key:
            best, best_key = c, key
    return best


def contact_kind(c: Contact) -> ContactType:
    return classify_normal(c.v_pre, c.normal, circle=c.surface.kind == "circle")


def is_impact(c: Contact) -> bool:
    return -(c.v_pre.x * c.normal.x + c.v_pre.y * c.normal.y) >= BOUNCE_THRESHOLD


def step_labels(tr: TrialRecord) -> list[tuple]:
    labels = []
    for k in range(1, len(tr.trajectory)):
        c = primary_ball_contact(tr.contacts[k])
        if c is None:
            labels.append((ContactType.FREE_FALL, None, False, None))
        else:
            labels.append((contact_kind(c), c.body_a, is_impact(c), c.surface.kind))
    return labels


def detect_events(tr: TrialRecord, debounce: int = DEBOUNCE) -> list[Event]:
    """Segment a trial into maximal runs of constant (contact kind, object,
    contact feature).  Passing from an edge onto a corner of the same object
    switches the motion model, so it starts a new event.

    Runs shorter than ``debounce`` steps are merged into the preceding
    event unless they start with an impact (a bounce is a legitimate
    one-step event).  Step 0 belongs to the first event.
    """
    n = len(tr.trajectory)
    if n == 0:
        return []
    if n == 1:
        return [Event(0, 0, ContactType.FREE_FALL, None)]
    labels = step_labels(tr)
    runs = []  # [start, end, kind, obj, impact, feature]
    for k, (kind, obj, impact, feat) in enumerate(labels, start=1):
        if runs and runs[-1][2] == kind and runs[-1][3] == obj and runs[-1][5] == feat:
            runs[-1][1] = k
        else:
            runs.append([k, k, kind, obj, impact, feat])
    runs[0][0] = 0
    merged = []
    for run in runs:
        length = run[1] - run[0] + 1
        if merged and length < debounce and not run[4]:
            merged[-1][1] = run[1]
        else:
            merged.append(run)
    out = []
    for run in merged:
        if out and out[-1][2] == run[2] and out[-1][3] == run[3] and out[-1][5] == run[5]:
            out[-1][1] = run[1]
        else:
            out.append(run)
    return [Event(s, e, kind, obj, feat) for s, e, kind, obj, _, feat in out]


def event_first_contact(tr: TrialRecord, ev: Event) -> Optional[Contact]:
    for k in range(max(ev.start, 1), ev.end + 1):
        c = primary_ball_contact(tr.contacts[k])
        if c is not None:
            return c
    return None


def precontact_drift(tr: TrialRecord, placement: Optional[Placement] = None) -> tuple[float, float]:
    """Largest pose drift (px, degrees) of any placed block before the ball first touches it."""
    if not tr.block_ids:
        return 0.0, 0.0
    first_touch = {}
    for k, cs in enumerate(tr.contacts):
        for c in cs:
            if c.is_ball and c.body_a[0] == "block" and c.body_a[1] not in first_touch:
                first_touch[c.body_a[1]] = k
    max_d = max_a = 0.0
    last = len(tr.block_history) - 1
    for i, bid in enumerate(tr.block_ids):
        k_end = min(first_touch.get(bid, last + 1) - 1, last)
        b0 = tr.block_history[0][i]
        for k in range(1, k_end + 1):
            b = tr.block_history[k][i]
            max_d = max(max_d, math.hypot(b.pos.x - b0.pos.x, b.pos.y - b0.pos.y))
            max_a = max(max_a, abs(math.degrees(b.angle - b0.angle)))
    return max_d, max_a
