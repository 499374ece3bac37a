"""Geometric guide path, deviation-based local regions and local targets.

The guide path is a purely geometric ball-centre route through free
space (obstacles inflated by the ball radius).  It ignores dynamics;
comparing it with a recorded trajectory tells the solver where the
ball first departs from the intended route.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import geometry as geo
from .geometry import Vec2
from .level import Level

GRID_CELL = 10.0
EPS1 = 10.0
EPS2 = 60.0
REGION_MARGIN = 40.0
FALLBACK_WINDOW = 10
LOCAL_TARGET_EPS = 20.0


class NoPathError(RuntimeError):
    """Free space does not connect the ball start to the target."""


@dataclass(frozen=True)
class GuidePath:
    waypoints: tuple  # of Vec2

    def __len__(self):
        return len(self.waypoints)

    def length(self) -> float:
        w = self.waypoints
        return sum(geo.dist(w[i], w[i + 1]) for i in range(len(w) - 1))

    def resampled(self, spacing: float) -> "GuidePath":
        """Same polyline with extra vertices at most ``spacing`` apart."""
        w = self.waypoints
        out = [w[0]]
        for a, b in zip(w, w[1:]):
            n = max(1, math.ceil(geo.dist(a, b) / spacing))
            for i in range(1, n + 1):
                t = i / n
                out.append(Vec2(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
        return GuidePath(tuple(out))


@dataclass(frozen=True)
class LocalRegion:
    rect: tuple  # (x0, y0, x1, y1) including margin
    core: tuple  # minimal AABB over qualifying pair points
    k_loc: int
    gamma_in_loc: tuple  # ((k, Vec2), ...) contiguous run of samples inside rect
    gamma_g_loc: tuple  # (Vec2, ...) guide polyline clipped to rect
    fallback: bool = False

    def contains(self, p, tol: float = 1e-9) -> bool:
        x0, y0, x1, y1 = self.rect
        return x0 - tol <= p[0] <= x1 + tol and y0 - tol <= p[1] <= y1 + tol


@dataclass(frozen=True)
class LocalTargetSet:
    center: Vec2
    radius: float

    def __contains__(self, p) -> bool:
        # strict: a point exactly on the circle is outside
        return math.hypot(p[0] - self.center[0], p[1] - self.center[1]) < self.radius


# --------------------------------------------------------------------------
# planning


def occupancy_grid(level: Level, cell: float = GRID_CELL, inflate: Optional[float] = None):
    """Boolean grid of blocked cell centres plus the centre coordinates."""
    r = level.ball_radius if inflate is None else inflate
    x0, y0, x1, y1 = level.bounds
    nx = max(1, int(math.floor((x1 - x0) / cell)))
    ny = max(1, int(math.floor((y1 - y0) / cell)))
    cx = x0 + (np.arange(nx) + 0.5) * cell
    cy = y0 + (np.arange(ny) + 0.5) * cell
    X, Y = np.meshgrid(cx, cy)  # rows are y
    blocked = (X < x0 + r) | (X > x1 - r) | (Y < y0 + r) | (Y > y1 - r)
    for poly in (b.polygon for b in level.env):
        blocked |= geo.polygon_sdf(np.stack([X, Y], axis=-1), poly.verts, poly.normals) < r
    return blocked, cx, cy


def _segment_clear(a, b, level: Level, r: float) -> bool:
    x0, y0, x1, y1 = level.bounds
    for p in (a, b):
        if not (x0 + r <= p[0] <= x1 - r and y0 + r <= p[1] <= y1 - r):
            return False
    for poly in (e.polygon for e in level.env):
        if geo.segment_polygon_distance(a, b, poly.verts, poly.normals) < r:
            return False
    return True


def _nearest_free(blocked: np.ndarray, cx, cy, p) -> tuple[int, int]:
    free = np.argwhere(~blocked)
    if free.size == 0:
        raise NoPathError("no free cell in the occupancy grid")
    d = (cx[free[:, 1]] - p[0]) ** 2 + (cy[free[:, 0]] - p[1]) ** 2
    i = int(np.argmin(d))  # argmin returns the first minimum: row-major tie-break
    return int(free[i, 0]), int(free[i, 1])


_MOVES = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def astar(blocked: np.ndarray, start: tuple[int, int], goal: tuple[int, int]) -> list[tuple[int, int]]:
    """8-connected A* with the octile heuristic; no corner cutting.

    Ties on f are broken by larger g, then by cell index, so the result
    is fully deterministic.
    """
    rows, cols = blocked.shape
    sq2 = math.sqrt(2.0)

    def h(c):
        dr, dc = abs(c[0] - goal[0]), abs(c[1] - goal[1])
        return (sq2 - 1.0) * min(dr, dc) + max(dr, dc)

    g = {start: 0.0}
    parent = {start: None}
    heap = [(h(start), 0.0, start)]
    closed = set()
    while heap:
        _, neg_g, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == goal:
            path = []
            while cur is not None:
                path.append(cur)
                cur = parent[cur]
            return path[::-1]
        closed.add(cur)
        for dr, dc in _MOVES:
            nr, nc = cur[0] + dr, cur[1] + dc
            if not (0 <= nr < rows and 0 <= nc < cols) or blocked[nr, nc]:
                continue
            if dr and dc and (blocked[cur[0] + dr, cur[1]] or blocked[cur[0], cur[1] + dc]):
                continue
            ng = g[cur] + (sq2 if dr and dc else 1.0)
            nxt = (nr, nc)
            if ng < g.get(nxt, math.inf) - 1e-12:
                g[nxt] = ng
                parent[nxt] = cur
                heapq.heappush(heap, (ng + h(nxt), -ng, nxt))
    raise NoPathError("free space does not connect the ball start to the target")


def shortcut(points: Sequence, clear) -> list:
    """Greedy line-of-sight smoothing: from each kept point jump to the
    farthest later point that is directly visible."""
    out = [points[0]]
    i = 0
    n = len(points)
    while i < n - 1:
        j = n - 1
        while j > i + 1 and not clear(points[i], points[j]):
            j -= 1
        out.append(points[j])
        i = j
    return out


def plan_guide_path(level: Level, cell: float = GRID_CELL, seed: int = 0) -> GuidePath:
    """Collision-free ball-centre polyline from the start to the flag.

    ``seed`` is accepted for interface symmetry; the grid planner is
    deterministic and does not consume randomness.
    """
    del seed
    r = level.ball_radius
    blocked, cx, cy = occupancy_grid(level, cell)
    start = level.ball_start.pos
    goal = level.target
    s = _nearest_free(blocked, cx, cy, start)
    t = _nearest_free(blocked, cx, cy, goal)
    cells = astar(blocked, s, t)
    pts = [Vec2(float(start[0]), float(start[1]))]
    pts += [Vec2(float(cx[c]), float(cy[rw])) for rw, c in cells]
    pts.append(Vec2(float(goal[0]), float(goal[1])))
    # drop grid points that coincide with the exact endpoints
    dedup = [pts[0]]
    for p in pts[1:]:
        if p != dedup[-1]:
            dedup.append(p)

    def clear(a, b):
        return _segment_clear(a, b, level, r)

    # the snapped endpoints may sit slightly inside the inflated band; keep
    # them connected through their grid cells if the direct hop is blocked
    smooth = shortcut(dedup, clear)
    return GuidePath(tuple(smooth))


# --------------------------------------------------------------------------
# local region


def nearest_on_polyline(p, poly: Sequence) -> tuple[Vec2, float, int, float]:
    """Exact nearest point on a polyline: ``(point, distance, segment, t)``.

    Ties go to the earliest segment.
    """
    if len(poly) == 1:
        q = poly[0]
        return Vec2(q[0], q[1]), geo.dist(p, q), 0, 0.0
    best = None
    for i in range(len(poly) - 1):
        q, t = geo.closest_on_segment(p, poly[i], poly[i + 1])
        d = math.hypot(p[0] - q[0], p[1] - q[1])
        if best is None or d < best[1]:
            best = (Vec2(q[0], q[1]), d, i, t)
    return best


def progress(p, poly: Sequence) -> float:
    """Arc length along ``poly`` up to the point nearest to ``p``."""
    _, _, seg, t = nearest_on_polyline(p, poly)
    done = sum(geo.dist(poly[i], poly[i + 1]) for i in range(seg))
    if len(poly) > 1:
        done += t * geo.dist(poly[seg], poly[seg + 1])
    return done


def deviations(gamma_in: Sequence, gamma_g: Sequence) -> list[tuple[float, Vec2]]:
    out = []
    for v in gamma_in:
        q, d, _, _ = nearest_on_polyline(v, gamma_g)
        out.append((d, q))
    return out


def _aabb_of(points) -> tuple:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return min(xs), min(ys), max(xs), max(ys)


def _clip_segment(a, b, rect) -> Optional[tuple[float, float]]:
    """Liang-Barsky: parameter interval of segment ab inside rect, or None."""
    x0, y0, x1, y1 = rect
    dx, dy = b[0] - a[0], b[1] - a[1]
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, a[0] - x0), (dx, x1 - a[0]), (-dy, a[1] - y0), (dy, y1 - a[1])):
        if p == 0.0:
            if q < 0.0:
                return None
            continue
        t = q / p
        if p < 0.0:
            if t > t1:
                return None
            t0 = max(t0, t)
        else:
            if t < t0:
                return None
            t1 = min(t1, t)
    return t0, t1


def clip_polyline(poly: Sequence, rect, anchor_segment: int = 0) -> tuple:
    """Connected piece of a polyline inside ``rect`` containing the given
    segment (or the first piece after it when that segment misses)."""
    pieces = []
    cur = []
    for i in range(len(poly) - 1):
        a, b = poly[i], poly[i + 1]
        iv = _clip_segment(a, b, rect)
        if iv is None:
            if cur:
                pieces.append(cur)
                cur = []
            continue
        t0, t1 = iv
        p0 = Vec2(a[0] + t0 * (b[0] - a[0]), a[1] + t0 * (b[1] - a[1]))
        p1 = Vec2(a[0] + t1 * (b[0] - a[0]), a[1] + t1 * (b[1] - a[1]))
        if cur and cur[-1][1] != p0:
            pieces.append(cur)
            cur = []
        if not cur:
            cur.append((i, p0))
        cur.append((i, p1))
        if t1 < 1.0:
            pieces.append(cur)
            cur = []
    if cur:
        pieces.append(cur)
    if not pieces:
        if len(poly) == 1 and rect[0] <= poly[0][0] <= rect[2] and rect[1] <= poly[0][1] <= rect[3]:
            return (Vec2(*poly[0]),)
        return ()
    chosen = pieces[-1]
    for pc in pieces:
        if pc[-1][0] >= anchor_segment:
            chosen = pc
            break
    return tuple(p for _, p in chosen)


def qualifying_pairs(gamma_in: Sequence, gamma_g: Sequence, eps1: float, eps2: float) -> list:
    """``(k, v_k, u_k)`` for every sample whose nearest-point deviation lies in [eps1, eps2]."""
    out = []
    for k, v in enumerate(gamma_in):
        q, d, _, _ = nearest_on_polyline(v, gamma_g)
        if eps1 <= d <= eps2:
            out.append((k, Vec2(v[0], v[1]), q))
    return out


def compute_local_region(gamma_in: Sequence, gamma_g, eps1: float = EPS1, eps2: float = EPS2,
                         margin: float = REGION_MARGIN, fallback: bool = True,
                         window: int = FALLBACK_WINDOW) -> Optional[LocalRegion]:
    """Smallest rectangle covering every in-band (trajectory, guide) pair.

    ``gamma_in`` holds trajectory positions indexed by step; ``gamma_g`` is a
    :class:`GuidePath` or a plain point sequence.  Each sample is paired
    with its nearest point on the guide polyline.  When no sample falls in
    the band but some exceed ``eps1`` the region is built from a window of
    samples around the earliest such sample (``fallback``).
    """
    if not eps2 > eps1 > 0:
        raise ValueError("need eps2 > eps1 > 0")
    poly = gamma_g.waypoints if isinstance(gamma_g, GuidePath) else tuple(gamma_g)
    if not gamma_in or not poly:
        raise ValueError("both paths must be nonempty")
    pairs = qualifying_pairs(gamma_in, poly, eps1, eps2)
    used_fallback = False
    if pairs:
        k_loc = pairs[0][0]
        pts = [p for _, v, u in pairs for p in (v, u)]
    else:
        if not fallback:
            return None
        dev = deviations(gamma_in, poly)
        far = [k for k, (d, _) in enumerate(dev) if d > eps1]
        if not far:
            return None
        k_loc = far[0]
        lo, hi = max(0, k_loc - window), min(len(gamma_in) - 1, k_loc + window)
        pts = []
        for k in range(lo, hi + 1):
            pts += [Vec2(gamma_in[k][0], gamma_in[k][1]), dev[k][1]]
        used_fallback = True
    core = _aabb_of(pts)
    rect = (core[0] - margin, core[1] - margin, core[2] + margin, core[3] + margin)
    run = _run_inside(gamma_in, rect, k_loc)
    _, _, seg, _ = nearest_on_polyline(gamma_in[k_loc], poly)
    g_loc = clip_polyline(poly, rect, seg)
    if not g_loc:
        g_loc = (nearest_on_polyline(gamma_in[k_loc], poly)[0],)
    return LocalRegion(rect, core, k_loc, run, g_loc, used_fallback)


def _run_inside(gamma_in, rect, k: int) -> tuple:
    x0, y0, x1, y1 = rect

    def inside(p):
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1

    lo = hi = k
    while lo > 0 and inside(gamma_in[lo - 1]):
        lo -= 1
    while hi + 1 < len(gamma_in) and inside(gamma_in[hi + 1]):
        hi += 1
    return tuple((i, Vec2(gamma_in[i][0], gamma_in[i][1])) for i in range(lo, hi + 1))


def local_target(region: LocalRegion, eps: float = LOCAL_TARGET_EPS) -> LocalTargetSet:
    if not eps > 0:
        raise ValueError("eps must be > 0")
    return LocalTargetSet(region.gamma_g_loc[-1], eps)
