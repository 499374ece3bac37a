"""Static equilibrium of resting block assemblies.

Each contact point carries a force inside the 2D Coulomb cone, written
exactly as a non-negative combination of the two cone edges.  Force and
moment balance of every dynamic body is then a linear feasibility
problem.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from . import geometry as geo
from .kinematics import FRICTION, GRAVITY
from .level import Polygon

CONTACT_MARGIN = 0.5  # px; touching within this gap counts as contact
FRICTION_SAFETY = 0.8
COM_MARGIN = 2.0  # px of lateral gravity-line offset the assembly must tolerate


@dataclass(frozen=True)
class Body:
    poly: Polygon
    com: tuple
    mass: float


@dataclass(frozen=True)
class ContactPoint:
    a: int  # index of the pushing body, -1 for static geometry
    b: int  # index of the pushed body
    point: tuple
    normal: tuple  # unit, from a to b


def body_of(poly: Polygon, com, area: float, density: float = 1.0) -> Body:
    return Body(poly, (float(com[0]), float(com[1])), area * density)


def find_contacts(bodies: Sequence[Body], static: Sequence[Polygon], margin: float = CONTACT_MARGIN) -> list[ContactPoint]:
    out = []
    for i, b in enumerate(bodies):
        others = [(-1, s) for s in static] + [(j, bodies[j].poly) for j in range(i)]
        for j, other in others:
            if not geo.aabb_overlap(b.poly.box, other.box, margin):
                continue
            m = geo.collide_polygons(other.verts, other.normals, b.poly.verts, b.poly.normals, margin)
            if m is None:
                continue
            for p, _, _ in m.points:
                out.append(ContactPoint(j, i, (float(p[0]), float(p[1])), (float(m.normal[0]), float(m.normal[1]))))
    return out


def _solve(bodies, contacts, mu, offset) -> bool:
    n = len(bodies)
    if not contacts:
        return False
    cols = []
    for c in contacts:
        nx, ny = c.normal
        tx, ty = -ny, nx
        for s in (1.0, -1.0):
            fx, fy = nx + s * mu * tx, ny + s * mu * ty
            col = np.zeros(3 * n)
            for body, sign in ((c.b, 1.0), (c.a, -1.0)):
                if body < 0:
                    continue
                cx, cy = bodies[body].com
                rx, ry = c.point[0] - cx, c.point[1] - cy
                col[3 * body] += sign * fx
                col[3 * body + 1] += sign * fy
                col[3 * body + 2] += sign * (rx * fy - ry * fx)
            cols.append(col)
    A = np.column_stack(cols)
    scale = max(b.mass for b in bodies) * GRAVITY
    b_eq = np.zeros(3 * n)
    for i, body in enumerate(bodies):
        w = body.mass * GRAVITY / scale
        b_eq[3 * i + 1] = -w
        # gravity acting at the COM shifted sideways by ``offset``
        b_eq[3 * i + 2] = -offset * w
    res = linprog(np.ones(A.shape[1]), A_eq=A, b_eq=b_eq, bounds=(0, None), method="highs")
    return res.status == 0


def in_equilibrium(bodies: Sequence[Body], static: Sequence[Polygon], mu: float = FRICTION * FRICTION_SAFETY,
                   com_margin: float = COM_MARGIN, contacts=None) -> bool:
    """True if every body can rest under gravity with forces inside the
    friction cones, even with each centre of mass shifted by
    ``±com_margin`` sideways."""
    if not bodies:
        return True
    contacts = find_contacts(bodies, static) if contacts is None else contacts
    offsets = (-com_margin, com_margin) if com_margin > 0 else (0.0,)
    return all(_solve(bodies, contacts, mu, off) for off in offsets)


def support_span(contacts: Sequence[ContactPoint], body: int) -> tuple[float, float]:
    xs = [c.point[0] for c in contacts if c.b == body or c.a == body]
    if not xs:
        return math.inf, -math.inf
    return min(xs), max(xs)
