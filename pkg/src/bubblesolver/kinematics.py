"""Event-dependent kinematic surrogates of the ball motion.

Each contact type has a closed-form (or one-pass) predictor that maps
the ball state at the start of an event to the state at the next event.
The predictors are parameterised per contact type by
:class:`ContactParams`; the whole set is a :class:`KinParams`.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

from .geometry import Vec2
from .level import BallState

GRAVITY = 980.0
FRICTION = 0.3
BOUNCE_THRESHOLD = 30.0  # px/s of normal approach speed
REST_SPEED = 2.0  # px/s
ROLL_DECEL = 20.0  # px/s^2
# An impact can remove at most this share of the tangential velocity: the
# rest is stored as spin by a rolling ball.
ROLL_CAPTURE = 2.0 / 7.0
FRICTION_CONE = math.atan(FRICTION)


class ContactType(str, enum.Enum):
    FREE_FALL = "free_fall"
    ROLL_ON_SEGMENT = "roll_on_segment"
    BOUNCE_OFF_SEGMENT = "bounce_off_segment"
    BOUNCE_OFF_CIRCLE = "bounce_off_circle"
    SLIDE_ON_SEGMENT = "slide_on_segment"

    @property
    def is_bounce(self) -> bool:
        return self in (ContactType.BOUNCE_OFF_SEGMENT, ContactType.BOUNCE_OFF_CIRCLE)

    @property
    def is_along(self) -> bool:
        return self in (ContactType.ROLL_ON_SEGMENT, ContactType.SLIDE_ON_SEGMENT)


class KinematicsError(ValueError):
    pass


@dataclass(frozen=True)
class ContactParams:
    e_n: float = 0.0
    e_t: float = 1.0
    a_roll: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.e_n <= 1.0 and 0.0 <= self.e_t <= 1.0 and self.a_roll >= 0.0):
            raise ValueError(f"invalid contact parameters {self}")

    @classmethod
    def clamped(cls, e_n: float, e_t: float, a_roll: float) -> "ContactParams":
        return cls(min(1.0, max(0.0, e_n)), min(1.0, max(0.0, e_t)), max(0.0, a_roll))


DEFAULT_PARAMS = {
    ContactType.FREE_FALL: ContactParams(0.0, 1.0, 0.0),
    ContactType.ROLL_ON_SEGMENT: ContactParams(0.0, 1.0, ROLL_DECEL),
    ContactType.SLIDE_ON_SEGMENT: ContactParams(0.0, 1.0, ROLL_DECEL),
    ContactType.BOUNCE_OFF_SEGMENT: ContactParams(0.4, 1.0 - ROLL_CAPTURE, 0.0),
    ContactType.BOUNCE_OFF_CIRCLE: ContactParams(0.4, 1.0 - ROLL_CAPTURE, 0.0),
}


@dataclass(frozen=True)
class KinParams:
    """Per-contact-type parameter vectors (the regression target)."""
    by_type: tuple = tuple(sorted(DEFAULT_PARAMS.items(), key=lambda kv: kv[0].value))

    def __getitem__(self, j: ContactType) -> ContactParams:
        for k, v in self.by_type:
            if k == j:
                return v
        return DEFAULT_PARAMS[j]

    def with_params(self, j: ContactType, p: ContactParams) -> "KinParams":
        d = dict(self.by_type)
        d[j] = p
        return KinParams(tuple(sorted(d.items(), key=lambda kv: kv[0].value)))

    def to_dict(self) -> dict:
        return {k.value: {"e_n": v.e_n, "e_t": v.e_t, "a_roll": v.a_roll} for k, v in self.by_type}

    @classmethod
    def from_dict(cls, d: dict) -> "KinParams":
        out = cls()
        for k, v in d.items():
            out = out.with_params(ContactType(k), ContactParams(float(v["e_n"]), float(v["e_t"]), float(v["a_roll"])))
        return out

    def to_json(self, version: str = "") -> str:
        return json.dumps({"version": version, "beta": self.to_dict()}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "KinParams":
        d = json.loads(text)
        return cls.from_dict(d.get("beta", d))


# --------------------------------------------------------------------------
# surfaces


@dataclass(frozen=True)
class Surface:
    """Contact geometry: a segment ``a``-``b`` or a circle about ``a``."""
    kind: str  # "segment" | "circle"
    a: Vec2
    b: Optional[Vec2] = None
    radius: float = 0.0
    owner: Optional[tuple] = None  # ("block", id) | ("env", q)

    def __post_init__(self):
        if self.kind == "segment" and (self.b is None or (self.a.x == self.b.x and self.a.y == self.b.y)):
            raise ValueError("segment endpoints must be distinct")

    @classmethod
    def segment(cls, a, b, owner=None) -> "Surface":
        return cls("segment", Vec2(*a), Vec2(*b), 0.0, owner)

    @classmethod
    def circle(cls, c, radius: float = 0.0, owner=None) -> "Surface":
        return cls("circle", Vec2(*c), None, radius, owner)

    @property
    def length(self) -> float:
        return (self.b - self.a).norm()

    @property
    def tangent(self) -> Vec2:
        return (self.b - self.a).unit()

    def normal_toward(self, p) -> Vec2:
        """Unit normal of the surface pointing to the side of ``p``."""
        if self.kind == "circle":
            d = Vec2(p[0] - self.a.x, p[1] - self.a.y)
            n = d.norm()
            return Vec2(0.0, -1.0) if n == 0.0 else Vec2(d.x / n, d.y / n)
        t = self.tangent
        n = Vec2(t.y, -t.x)
        if n.x * (p[0] - self.a.x) + n.y * (p[1] - self.a.y) < 0.0:
            n = -n
        return n

    @property
    def incline(self) -> float:
        """Angle between the segment and the horizontal, in [0, pi/2]."""
        t = self.tangent
        return math.atan2(abs(t.y), abs(t.x))


def incline_of_normal(n) -> float:
    return math.atan2(abs(n[0]), abs(n[1]))


def classify_normal(vel, normal, circle: bool = False) -> ContactType:
    """Contact type from the ball velocity and the outward surface normal."""
    approach = -(vel[0] * normal[0] + vel[1] * normal[1])
    if approach >= BOUNCE_THRESHOLD:
        return ContactType.BOUNCE_OFF_CIRCLE if circle else ContactType.BOUNCE_OFF_SEGMENT
    # slow contact with a corner or arc behaves like rolling over it
    if incline_of_normal(normal) > FRICTION_CONE:
        return ContactType.SLIDE_ON_SEGMENT
    return ContactType.ROLL_ON_SEGMENT


def classify(ball: BallState, surf: Surface) -> ContactType:
    n = surf.normal_toward(ball.pos)
    return classify_normal(ball.vel, n, circle=surf.kind == "circle")


# --------------------------------------------------------------------------
# predictors


def freefall_at(s: BallState, t: float) -> BallState:
    vx, vy = s.vel
    return BallState(Vec2(s.pos.x + vx * t, s.pos.y + vy * t + 0.5 * GRAVITY * t * t), Vec2(vx, vy + GRAVITY * t))


def predict_freefall(s: BallState, d: float) -> BallState:
    """Ballistic flight over an x-distance ``d``."""
    if d == 0.0:
        return s
    if s.vel.x == 0.0:
        raise KinematicsError("no horizontal progress: use predict_freefall_dy for vertical drops")
    t = d / s.vel.x
    if t < 0.0:
        raise KinematicsError("x-distance points against the horizontal velocity")
    return freefall_at(s, t)


def predict_freefall_dy(s: BallState, dy: float) -> BallState:
    """Ballistic flight until the ball has descended by ``dy`` (y-distance overload)."""
    vy = s.vel.y
    disc = vy * vy + 2.0 * GRAVITY * dy
    if disc < 0.0:
        raise KinematicsError("ball never reaches that height")
    t = (-vy + math.sqrt(disc)) / GRAVITY
    return freefall_at(s, t)


class RollResult(NamedTuple):
    state: BallState
    exit_point: Vec2  # contact point on the segment at the end of the event
    duration: float
    terminal: bool  # came to rest on the segment


class Leg(NamedTuple):
    """Constant-acceleration piece of motion along a surface tangent."""
    p0: float
    v0: float
    accel: float
    duration: float

    def at(self, t: float) -> tuple[float, float]:
        return self.p0 + self.v0 * t + 0.5 * self.accel * t * t, self.v0 + self.accel * t


def along_legs(p: float, v: float, g_t: float, decel: float, length: float) -> tuple[list, float, float, bool]:
    """Motion along a segment of ``length`` from arc position ``p`` with
    signed speed ``v``: gravity component ``g_t`` drives it, ``decel``
    opposes the direction of travel.

    Returns ``(legs, p_end, v_end, terminal)``; terminal means the ball
    came to rest on the segment.
    """
    legs: list = []
    if p <= 0.0 and v <= 0.0 and not (v == 0.0 and g_t > decel):
        return legs, p, v, False
    if p >= length and v >= 0.0 and not (v == 0.0 and g_t < -decel):
        return legs, p, v, False
    for _ in range(3):
        if abs(v) < 1e-12:
            if abs(g_t) <= decel:
                return legs, min(max(p, 0.0), length), 0.0, True
            sigma = 1.0 if g_t > 0 else -1.0
            u0 = 0.0
        else:
            sigma = 1.0 if v > 0 else -1.0
            u0 = abs(v)
        alpha = sigma * g_t - decel  # acceleration along the direction of travel
        dist = max((length - p) if sigma > 0 else p, 0.0)
        if alpha >= 0.0 or u0 * u0 + 2.0 * alpha * dist >= 0.0:
            if abs(alpha) < 1e-12:
                t = dist / u0
            else:
                t = (-u0 + math.sqrt(max(0.0, u0 * u0 + 2.0 * alpha * dist))) / alpha
            legs.append(Leg(p, sigma * u0, sigma * alpha, t))
            return legs, p + sigma * dist, sigma * (u0 + alpha * t), False
        t = u0 / -alpha
        legs.append(Leg(p, sigma * u0, sigma * alpha, t))
        p = p + sigma * (u0 * u0 / (-2.0 * alpha))
        v = 0.0
    return legs, p, v, True


def along_decel(surf: "Surface", j: ContactType, a_roll: float, toward) -> float:
    if j == ContactType.SLIDE_ON_SEGMENT:
        n = surf.normal_toward(toward)
        return a_roll + FRICTION * GRAVITY * max(0.0, -n.y)  # share of gravity pressing into the surface
    return a_roll


def _along(s: BallState, surf: Surface, decel: float, radius: float) -> RollResult:
    u = surf.tangent
    n = surf.normal_toward(s.pos)
    p0 = (s.pos - surf.a).dot(u)
    legs, p, v, terminal = along_legs(p0, s.vel.dot(u), GRAVITY * u.y, decel, surf.length)
    c = surf.a + u * p + n * radius
    cp = surf.a + u * p
    state = BallState(Vec2(c.x, c.y), Vec2(u.x * v, u.y * v))
    return RollResult(state, Vec2(cp.x, cp.y), sum(leg.duration for leg in legs), terminal)


def predict_roll(s: BallState, surf: Surface, beta, radius: float = 15.0) -> RollResult:
    """Constant-acceleration rolling along a segment until an endpoint or rest.

    ``beta`` is a :class:`ContactParams` or a :class:`KinParams`.
    """
    p = beta[ContactType.ROLL_ON_SEGMENT] if isinstance(beta, KinParams) else beta
    return _along(s, surf, p.a_roll, radius)


def predict_slide(s: BallState, surf: Surface, beta, radius: float = 15.0) -> RollResult:
    p = beta[ContactType.SLIDE_ON_SEGMENT] if isinstance(beta, KinParams) else beta
    return _along(s, surf, along_decel(surf, ContactType.SLIDE_ON_SEGMENT, p.a_roll, s.pos), radius)


def predict_bounce(s: BallState, surf: Surface, beta) -> BallState:
    """Instantaneous impact: ``v_n <- -e_n v_n``, ``v_t <- e_t v_t``."""
    if isinstance(beta, KinParams):
        beta = beta[ContactType.BOUNCE_OFF_CIRCLE if surf.kind == "circle" else ContactType.BOUNCE_OFF_SEGMENT]
    n = surf.normal_toward(s.pos)
    vn = s.vel.dot(n)
    if vn >= 0.0:
        return s
    tx, ty = s.vel.x - vn * n.x, s.vel.y - vn * n.y
    return BallState(s.pos, Vec2(-beta.e_n * vn * n.x + beta.e_t * tx, -beta.e_n * vn * n.y + beta.e_t * ty))


def event_transition(s: BallState, surf: Optional[Surface], j: ContactType, beta: KinParams,
                     d: Optional[float] = None, radius: float = 15.0) -> BallState:
    """One event-to-event step of the surrogate; dispatches on ``j``.

    For free fall, ``d`` is the x-distance to the next event.
    """
    if j == ContactType.FREE_FALL:
        return predict_freefall(s, 0.0 if d is None else d)
    if surf is None:
        raise KinematicsError(f"{j.value} needs a surface")
    if j.is_bounce:
        return predict_bounce(s, surf, beta[j])
    if j == ContactType.ROLL_ON_SEGMENT:
        return predict_roll(s, surf, beta, radius).state
    return predict_slide(s, surf, beta, radius).state


def with_param(beta: KinParams, j: ContactType, **kw) -> KinParams:
    return beta.with_params(j, replace(beta[j], **kw))
