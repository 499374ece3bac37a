"""Trajectory CSV and SVG plot export."""
from __future__ import annotations

import csv
import io
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import escape

from .level import Level, Placement
from .physics import TrialRecord, step_labels

CSV_COLUMNS = ("k", "x", "y", "vx", "vy", "event_kind", "object_id")


def object_id(obj: Optional[tuple]) -> str:
    """``("block", 3)`` -> ``"block:3"``; ``None`` -> empty string."""
    if obj is None:
        return ""
    return ":".join(str(v) for v in obj)


def trajectory_rows(tr: TrialRecord) -> list[tuple]:
    labels = [None] + step_labels(tr)
    rows = []
    for k, s in enumerate(tr.trajectory):
        kind, obj = ("free_fall", None) if labels[k] is None else (labels[k][0].value, labels[k][1])
        rows.append((k, s.pos.x, s.pos.y, s.vel.x, s.vel.y, kind, object_id(obj)))
    return rows


def trajectory_csv(tr: TrialRecord) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for k, x, y, vx, vy, kind, obj in trajectory_rows(tr):
        w.writerow((k, f"{x:.6f}", f"{y:.6f}", f"{vx:.6f}", f"{vy:.6f}", kind, obj))
    return buf.getvalue()


# --------------------------------------------------------------------------
# SVG


def _points(pts: Iterable) -> str:
    return " ".join(f"{p[0]:.2f},{p[1]:.2f}" for p in pts)


class SvgCanvas:
    """Minimal SVG 1.1 writer in level coordinates (y down, as in SVG)."""

    def __init__(self, bounds: Sequence[float], title: str = ""):
        self.bounds = tuple(bounds)
        self.title = title
        self.items: list[str] = []

    def polygon(self, verts, fill: str, stroke: str = "#333", opacity: float = 1.0, cls: str = ""):
        self.items.append(f'<polygon class="{cls}" points="{_points(verts)}" fill="{fill}" stroke="{stroke}" '
                          f'fill-opacity="{opacity}"/>')

    def polyline(self, pts, stroke: str, width: float = 2.0, dash: str = "", cls: str = ""):
        if len(pts) < 2:
            return
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline class="{cls}" points="{_points(pts)}" fill="none" stroke="{stroke}" '
                          f'stroke-width="{width}"{extra}/>')

    def rect(self, r, stroke: str, cls: str = ""):
        x0, y0, x1, y1 = r
        self.items.append(f'<rect class="{cls}" x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" '
                          f'height="{y1 - y0:.2f}" fill="none" stroke="{stroke}" stroke-width="1.5"/>')

    def circle(self, c, r: float, fill: str, stroke: str = "none", cls: str = ""):
        self.items.append(f'<circle class="{cls}" cx="{c[0]:.2f}" cy="{c[1]:.2f}" r="{r:.2f}" fill="{fill}" '
                          f'stroke="{stroke}"/>')

    def render(self) -> str:
        x0, y0, x1, y1 = self.bounds
        head = ('<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
                f'width="{x1 - x0:g}" height="{y1 - y0:g}" viewBox="{x0:g} {y0:g} {x1 - x0:g} {y1 - y0:g}">\n')
        title = f"<title>{escape(self.title)}</title>\n" if self.title else ""
        return head + title + "\n".join(self.items) + "\n</svg>\n"


def level_canvas(level: Level, placement: Placement = Placement()) -> SvgCanvas:
    """Environment, placed blocks, ball start and target set."""
    cv = SvgCanvas(level.bounds, level.name)
    x0, y0, x1, y1 = level.bounds
    cv.rect((x0, y0, x1, y1), "#999", cls="bounds")
    for e in level.env:
        cv.polygon(e.polygon.verts, "#8a8a8a", cls="env")
    for pb in placement:
        t = level.template(pb.id)
        fill = "#9fb6cc" if t.material == "metal" else "#c8a26a"
        cv.polygon(t.polygon(pb.pos.x, pb.pos.y, pb.angle).verts, fill, cls="block")
    cv.circle(level.target, level.target_eps, "#3c3", cls="target")
    cv.circle(level.ball_start.pos, level.ball_radius, "#d33", cls="ball")
    return cv


def plot_svg(level: Level, placement: Placement = Placement(), guide: Sequence = (),
             trajectories: Sequence[Sequence] = (), regions: Sequence[tuple] = ()) -> str:
    """Level overlay with the guide path (dashed), trajectories and region rectangles."""
    cv = level_canvas(level, placement)
    for r in regions:
        cv.rect(r, "#e08000", cls="region")
    cv.polyline(list(guide), "#2255cc", dash="6,4", cls="guide")
    for i, traj in enumerate(trajectories):
        last = i == len(trajectories) - 1
        cv.polyline(list(traj), "#cc2222" if last else "#aaaaaa", width=1.5, cls="trajectory")
    return cv.render()
