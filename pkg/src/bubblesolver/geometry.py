"""Planar geometry for convex polygons and the ball.

Everything here works on plain tuples of floats, which keeps the
simulator inner loop cheap.  Polygons are stored with positive
(shoelace) orientation so the outward normal of edge ``v[i] -> v[i+1]``
is ``(e.y, -e.x)`` normalised.

Frame: x to the right, y downward.  A body angle is the standard
positive rotation (from +x toward +y).
"""
from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

Point = tuple[float, float]

EPS = 1e-9


class Vec2(NamedTuple):
    x: float
    y: float

    def __add__(self, o):  # type: ignore[override]
        return Vec2(self.x + o[0], self.y + o[1])

    def __sub__(self, o):
        return Vec2(self.x - o[0], self.y - o[1])

    def __mul__(self, k):  # type: ignore[override]
        return Vec2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def __neg__(self):
        return Vec2(-self.x, -self.y)

    def dot(self, o) -> float:
        return self.x * o[0] + self.y * o[1]

    def cross(self, o) -> float:
        return self.x * o[1] - self.y * o[0]

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def unit(self) -> "Vec2":
        n = math.hypot(self.x, self.y)
        return Vec2(self.x / n, self.y / n)


def dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


# --------------------------------------------------------------------------
# shapes


def rect_vertices(w: float, h: float) -> list[Point]:
    hw, hh = 0.5 * w, 0.5 * h
    return [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]


def circle_segment_vertices(w: float, h: float, n: int = 8) -> list[Point]:
    """Circular segment with chord ``w`` (flat side down) and sagitta ``h``.

    Returned about the centroid of the polygonal approximation.
    """
    if h > 0.5 * w:
        h = 0.5 * w
    radius = (0.25 * w * w + h * h) / (2.0 * h)
    half = math.asin(min(1.0, 0.5 * w / radius))
    cy = radius - h  # circle centre is below the chord (y down)
    pts = [(-0.5 * w, 0.0), (0.5 * w, 0.0)]
    # arc from right end over the top back to the left end
    for i in range(1, n):
        a = half - 2.0 * half * i / n
        pts.append((radius * math.sin(a), cy - radius * math.cos(a)))
    pts = ensure_positive(pts)
    cx, cyc = polygon_centroid(pts)
    return [(x - cx, y - cyc) for x, y in pts]


def shape_vertices(shape: str, w: float, h: float) -> list[Point]:
    if shape in ("rectangle", "square"):
        return rect_vertices(w, h)
    if shape == "circle-segment":
        return circle_segment_vertices(w, h)
    raise ValueError(f"unknown shape {shape!r}")


def signed_area(pts: Sequence[Point]) -> float:
    a = 0.0
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        a += x0 * y1 - x1 * y0
    return 0.5 * a


def ensure_positive(pts: Sequence[Point]) -> list[Point]:
    pts = list(pts)
    if signed_area(pts) < 0:
        pts.reverse()
    return pts


def polygon_centroid(pts: Sequence[Point]) -> Point:
    a = signed_area(pts)
    cx = cy = 0.0
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        c = x0 * y1 - x1 * y0
        cx += (x0 + x1) * c
        cy += (y0 + y1) * c
    return cx / (6.0 * a), cy / (6.0 * a)


def polygon_mass_properties(pts: Sequence[Point], density: float) -> tuple[float, float]:
    """Mass and moment of inertia about the origin (pass centred vertices)."""
    area = signed_area(pts)
    inertia = 0.0
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        c = x0 * y1 - x1 * y0
        inertia += c * (x0 * x0 + x0 * x1 + x1 * x1 + y0 * y0 + y0 * y1 + y1 * y1)
    return density * area, density * inertia / 12.0


def edge_normals(pts: Sequence[Point]) -> list[Point]:
    out = []
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        ex, ey = x1 - x0, y1 - y0
        ln = math.hypot(ex, ey)
        out.append((ey / ln, -ex / ln))
    return out


def transform(local: Sequence[Point], x: float, y: float, angle: float) -> list[Point]:
    c, s = math.cos(angle), math.sin(angle)
    return [(x + c * px - s * py, y + s * px + c * py) for px, py in local]


def rotate_normals(local: Sequence[Point], angle: float) -> list[Point]:
    c, s = math.cos(angle), math.sin(angle)
    return [(c * nx - s * ny, s * nx + c * ny) for nx, ny in local]


def aabb(pts: Sequence[Point]) -> tuple[float, float, float, float]:
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return min(xs), min(ys), max(xs), max(ys)


def aabb_overlap(a, b, pad: float = 0.0) -> bool:
    return not (a[2] + pad < b[0] or b[2] + pad < a[0] or a[3] + pad < b[1] or b[3] + pad < a[1])


# --------------------------------------------------------------------------
# distance / overlap queries


def closest_on_segment(p: Sequence[float], a: Sequence[float], b: Sequence[float]) -> tuple[Point, float]:
    """Closest point on segment ab to p and its parameter t in [0, 1]."""
    ax, ay = a
    ex, ey = b[0] - ax, b[1] - ay
    ll = ex * ex + ey * ey
    if ll == 0.0:
        return (ax, ay), 0.0
    t = ((p[0] - ax) * ex + (p[1] - ay) * ey) / ll
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return (ax + t * ex, ay + t * ey), t


def point_polygon_distance(p: Sequence[float], verts: Sequence[Point], normals: Sequence[Point]):
    """Signed distance from ``p`` to a convex polygon (negative inside).

    Returns ``(distance, closest_point, feature)`` where feature is
    ``("edge", i)`` or ``("vertex", i)``.
    """
    n = len(verts)
    best_sep = -math.inf
    best_i = 0
    px, py = p
    for i in range(n):
        vx, vy = verts[i]
        nx, ny = normals[i]
        s = nx * (px - vx) + ny * (py - vy)
        if s > best_sep:
            best_sep, best_i = s, i
    if best_sep <= 0.0:
        nx, ny = normals[best_i]
        return best_sep, (px - best_sep * nx, py - best_sep * ny), ("edge", best_i)
    # outside: closest feature is on some edge; check all edges (n is tiny)
    best_d = math.inf
    best = None
    for i in range(n):
        a = verts[i]
        b = verts[(i + 1) % n]
        q, t = closest_on_segment(p, a, b)
        d = math.hypot(px - q[0], py - q[1])
        if d < best_d:
            if t <= 0.0:
                feat = ("vertex", i)
            elif t >= 1.0:
                feat = ("vertex", (i + 1) % n)
            else:
                feat = ("edge", i)
            best_d, best = d, (q, feat)
    return best_d, best[0], best[1]


def circle_polygon_overlap(c: Sequence[float], r: float, verts, normals, tol: float = EPS) -> bool:
    """Strict overlap: touching circles are not overlapping."""
    d, _, _ = point_polygon_distance(c, verts, normals)
    return d < r - tol


def _project(verts, ax, ay):
    lo = hi = verts[0][0] * ax + verts[0][1] * ay
    for x, y in verts[1:]:
        v = x * ax + y * ay
        if v < lo:
            lo = v
        elif v > hi:
            hi = v
    return lo, hi


def polygons_overlap(va, na, vb, nb, tol: float = EPS) -> bool:
    """Strict-interior SAT overlap test for convex polygons."""
    for normals in (na, nb):
        for ax, ay in normals:
            a0, a1 = _project(va, ax, ay)
            b0, b1 = _project(vb, ax, ay)
            if a1 <= b0 + tol or b1 <= a0 + tol:
                return False
    return True


def polygon_penetration(va, na, vb, nb) -> float:
    """Minimum SAT overlap depth (<= 0 means separated or touching)."""
    depth = math.inf
    for normals in (na, nb):
        for ax, ay in normals:
            a0, a1 = _project(va, ax, ay)
            b0, b1 = _project(vb, ax, ay)
            depth = min(depth, min(a1, b1) - max(a0, b0))
    return depth


def segments_intersect(p0, p1, q0, q1) -> bool:
    d1x, d1y = p1[0] - p0[0], p1[1] - p0[1]
    d2x, d2y = q1[0] - q0[0], q1[1] - q0[1]
    den = d1x * d2y - d1y * d2x
    wx, wy = q0[0] - p0[0], q0[1] - p0[1]
    if abs(den) < 1e-15:
        return False
    t = (wx * d2y - wy * d2x) / den
    u = (wx * d1y - wy * d1x) / den
    return 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0


def point_in_polygon(p, verts, normals) -> bool:
    for (vx, vy), (nx, ny) in zip(verts, normals):
        if nx * (p[0] - vx) + ny * (p[1] - vy) > 0.0:
            return False
    return True


def segment_polygon_distance(a, b, verts, normals) -> float:
    """Euclidean distance between segment ab and a convex polygon (0 if they meet)."""
    if point_in_polygon(a, verts, normals) or point_in_polygon(b, verts, normals):
        return 0.0
    n = len(verts)
    best = math.inf
    for i in range(n):
        q0, q1 = verts[i], verts[(i + 1) % n]
        if segments_intersect(a, b, q0, q1):
            return 0.0
        best = min(best, dist(closest_on_segment(q0, a, b)[0], q0))
    for p in (a, b):
        d, _, _ = point_polygon_distance(p, verts, normals)
        best = min(best, d)
    return best


def polygon_edges(verts) -> tuple[np.ndarray, np.ndarray]:
    """Edge vectors and squared lengths of a polygon, for :func:`polygon_closest`."""
    v = np.asarray(verts, dtype=float)
    e = np.roll(v, -1, axis=0) - v
    return e, (e ** 2).sum(axis=1)


def polygon_closest(points, verts, normals, edges=None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised signed distance (negative inside) from points ``(m, 2)`` to a
    convex polygon, plus the closest boundary point of each.  ``edges`` is
    the optional precomputed result of :func:`polygon_edges`."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    v = np.asarray(verts, dtype=float)
    nrm = np.asarray(normals, dtype=float)
    e, ll = polygon_edges(v) if edges is None else edges
    px, py = pts[:, 0, None], pts[:, 1, None]
    sep = (px - v[:, 0]) * nrm[:, 0] + (py - v[:, 1]) * nrm[:, 1]
    inside = sep.max(axis=-1)
    t = np.clip(((px - v[:, 0]) * e[:, 0] + (py - v[:, 1]) * e[:, 1]) / ll, 0.0, 1.0)
    qx = v[:, 0] + t * e[:, 0]
    qy = v[:, 1] + t * e[:, 1]
    d = np.sqrt((px - qx) ** 2 + (py - qy) ** 2)
    j = d.argmin(axis=-1)
    rows = np.arange(len(pts))
    q = np.stack([qx[rows, j], qy[rows, j]], axis=-1)
    return np.where(inside <= 0.0, inside, d[rows, j]), q


def polygon_columns(verts, normals) -> tuple:
    """Per-edge arrays ``(vx, vy, nx, ny, ex, ey, ll)`` for :func:`polygon_sdf_fast`."""
    v = np.asarray(verts, dtype=float)
    nrm = np.asarray(normals, dtype=float)
    e, ll = polygon_edges(v)
    return tuple(np.ascontiguousarray(a) for a in (v[:, 0], v[:, 1], nrm[:, 0], nrm[:, 1], e[:, 0], e[:, 1], ll))


def polygon_sdf_fast(pts: np.ndarray, cols: tuple) -> np.ndarray:
    """Signed distance for points ``(m, 2)`` given :func:`polygon_columns`;
    the distance-only core of :func:`polygon_closest`."""
    vx, vy, nx, ny, ex, ey, ll = cols
    dx = pts[:, 0, None] - vx
    dy = pts[:, 1, None] - vy
    inside = (dx * nx + dy * ny).max(axis=-1)
    t = np.minimum(np.maximum((dx * ex + dy * ey) / ll, 0.0), 1.0)
    ux = dx - t * ex
    uy = dy - t * ey
    d = np.sqrt((ux * ux + uy * uy).min(axis=-1))
    return np.where(inside <= 0.0, inside, d)


def polygon_closest_fast(pts: np.ndarray, cols: tuple) -> np.ndarray:
    """Closest boundary point for points ``(m, 2)`` given :func:`polygon_columns`."""
    vx, vy, _, _, ex, ey, ll = cols
    dx = pts[:, 0, None] - vx
    dy = pts[:, 1, None] - vy
    t = np.minimum(np.maximum((dx * ex + dy * ey) / ll, 0.0), 1.0)
    ux = dx - t * ex
    uy = dy - t * ey
    j = (ux * ux + uy * uy).argmin(axis=-1)
    tj = t[np.arange(len(pts)), j]
    return np.stack([vx[j] + tj * ex[j], vy[j] + tj * ey[j]], axis=-1)


def polygon_sdf(points, verts, normals) -> np.ndarray:
    """Vectorised exact signed distance from points ``(..., 2)`` to a convex
    polygon (negative inside)."""
    pts = np.asarray(points, dtype=float)
    d, _ = polygon_closest(pts, verts, normals)
    return d.reshape(pts.shape[:-1])


# --------------------------------------------------------------------------
# contact manifolds


class Manifold(NamedTuple):
    """Contact between two shapes; ``normal`` points from A to B."""
    normal: Point
    points: tuple  # ((x, y), separation, feature_id) entries


def collide_circle_polygon(c, r, verts, normals, margin: float = 0.0):
    """Contact of a circle (B) against a polygon (A).

    Returns ``(normal, point, separation, feature)`` with the normal
    pointing from the polygon toward the circle centre, or ``None``.
    """
    n = len(verts)
    cx, cy = c
    best_sep = -math.inf
    i1 = 0
    for i in range(n):
        vx, vy = verts[i]
        nx, ny = normals[i]
        s = nx * (cx - vx) + ny * (cy - vy)
        if s > r + margin:
            return None
        if s > best_sep:
            best_sep, i1 = s, i
    i2 = (i1 + 1) % n
    v1, v2 = verts[i1], verts[i2]
    if best_sep < EPS:
        nx, ny = normals[i1]
        return (nx, ny), (cx - nx * best_sep, cy - ny * best_sep), best_sep - r, ("edge", i1)
    u1 = (cx - v1[0]) * (v2[0] - v1[0]) + (cy - v1[1]) * (v2[1] - v1[1])
    u2 = (cx - v2[0]) * (v1[0] - v2[0]) + (cy - v2[1]) * (v1[1] - v2[1])
    if u1 <= 0.0:
        dx, dy = cx - v1[0], cy - v1[1]
        d = math.hypot(dx, dy)
        if d > r + margin or d == 0.0:
            return None
        return (dx / d, dy / d), v1, d - r, ("vertex", i1)
    if u2 <= 0.0:
        dx, dy = cx - v2[0], cy - v2[1]
        d = math.hypot(dx, dy)
        if d > r + margin or d == 0.0:
            return None
        return (dx / d, dy / d), v2, d - r, ("vertex", i2)
    nx, ny = normals[i1]
    s = nx * (cx - v1[0]) + ny * (cy - v1[1])
    if s > r + margin:
        return None
    return (nx, ny), (cx - nx * s, cy - ny * s), s - r, ("edge", i1)


def _max_separation(va, na, vb):
    best = -math.inf
    idx = 0
    for i, ((nx, ny), (vx, vy)) in enumerate(zip(na, va)):
        s = math.inf
        for x, y in vb:
            d = nx * (x - vx) + ny * (y - vy)
            if d < s:
                s = d
        if s > best:
            best, idx = s, i
    return best, idx


def _clip(p0, p1, nx, ny, offset, vidx):
    """Keep the part of segment (p0,p1) with n.p <= offset."""
    out = []
    d0 = nx * p0[0][0] + ny * p0[0][1] - offset
    d1 = nx * p1[0][0] + ny * p1[0][1] - offset
    if d0 <= 0.0:
        out.append(p0)
    if d1 <= 0.0:
        out.append(p1)
    if d0 * d1 < 0.0:
        t = d0 / (d0 - d1)
        x = p0[0][0] + t * (p1[0][0] - p0[0][0])
        y = p0[0][1] + t * (p1[0][1] - p0[0][1])
        out.append(((x, y), ("clip", vidx)))
    return out


def collide_polygons(va, na, vb, nb, margin: float = 0.0):
    """Polygon-polygon manifold (reference face clipping).

    Returns a :class:`Manifold` whose normal points from A to B, with up
    to two points, each ``(point_on_B_side, separation, feature_id)``.
    """
    sep_a, edge_a = _max_separation(va, na, vb)
    if sep_a > margin:
        return None
    sep_b, edge_b = _max_separation(vb, nb, va)
    if sep_b > margin:
        return None
    if sep_b > sep_a + 0.05:
        ref_v, ref_n, inc_v, inc_n, edge, flip = vb, nb, va, na, edge_b, True
    else:
        ref_v, ref_n, inc_v, inc_n, edge, flip = va, na, vb, nb, edge_a, False
    rnx, rny = ref_n[edge]
    # incident edge: most anti-parallel normal
    best = math.inf
    inc = 0
    for i, (mx, my) in enumerate(inc_n):
        d = rnx * mx + rny * my
        if d < best:
            best, inc = d, i
    i1, i2 = inc, (inc + 1) % len(inc_v)
    seg = [(inc_v[i1], ("v", i1)), (inc_v[i2], ("v", i2))]
    r1 = ref_v[edge]
    r2 = ref_v[(edge + 1) % len(ref_v)]
    tx, ty = r2[0] - r1[0], r2[1] - r1[1]
    tl = math.hypot(tx, ty)
    tx, ty = tx / tl, ty / tl
    seg = _clip(seg[0], seg[1], -tx, -ty, -(tx * r1[0] + ty * r1[1]), 0)
    if len(seg) < 2:
        return None
    seg = _clip(seg[0], seg[1], tx, ty, tx * r2[0] + ty * r2[1], 1)
    if len(seg) < 2:
        return None
    front = rnx * r1[0] + rny * r1[1]
    pts = []
    for (x, y), fid in seg:
        s = rnx * x + rny * y - front
        if s <= margin:
            pts.append(((x, y), s, (edge, inc, fid, flip)))
    if not pts:
        return None
    normal = (-rnx, -rny) if flip else (rnx, rny)
    return Manifold(normal, tuple(pts))


# --------------------------------------------------------------------------
# sweeps


def sweep_distance(moving_local, x, y, angle, direction, obstacles, max_dist: float, tol: float = 1e-6) -> float:
    """Largest distance a rigid polygon can translate along ``direction``
    before touching any obstacle ``(verts, normals)``.

    Returns ``max_dist`` if nothing is hit, ``0.0`` if already overlapping.
    Uses stepping plus bisection on the strict overlap predicate.
    """
    dx, dy = direction
    nl = rotate_normals(edge_normals(moving_local), angle)

    def hit(t: float) -> bool:
        verts = transform(moving_local, x + dx * t, y + dy * t, angle)
        box = aabb(verts)
        for ov, on, obox in obstacles:
            if aabb_overlap(box, obox) and polygons_overlap(verts, nl, ov, on):
                return True
        return False

    if hit(0.0):
        return 0.0
    step = 2.0
    lo = 0.0
    t = step
    while t < max_dist:
        if hit(t):
            hi = t
            break
        lo = t
        t += step
    else:
        if not hit(max_dist):
            return max_dist
        hi = max_dist
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if hit(mid):
            hi = mid
        else:
            lo = mid
    return lo
