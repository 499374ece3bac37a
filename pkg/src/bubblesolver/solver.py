"""Outer loop: trial, compare with the guide path, optimise one local
region, learn from the failed trial, repeat until solved or out of budget."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

from . import guide as gd
from .guide import GuidePath, LocalRegion
from .kinematics import KinParams
from .learner import extract_samples, learn
from .level import Level, Placement
from .optimizer import EmptyGridError, LocalProblem, UnsolvableRegionError, solve_local
from .physics import TrialRecord, precontact_drift, simulate

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 10
DRIFT_PX = 2.0
DRIFT_DEG = 2.0
RIDGE = 1.0  # one virtual sample at the prior
STALL_LIMIT = 2  # failed trials in a row before the latest accepted region is re-solved


def _rounded(v: Optional[float]) -> Optional[float]:
    return None if v is None else round(v, 6)


@dataclass
class RegionRecord:
    trial: int
    rect: tuple
    k_loc: int
    local_target: tuple
    main_block: Optional[int] = None
    pose: Optional[tuple] = None
    supports: tuple = ()
    predicted_cost: Optional[float] = None
    cg_cost: Optional[float] = None  # best coarse-pass cost
    fg_cost: Optional[float] = None  # best fine-pass cost
    outcome: str = ""  # reached_target | accepted | kept | drifted
    cg_time: float = 0.0
    fg_time: float = 0.0
    n_cg: int = 0
    n_fg: int = 0

    def to_dict(self) -> dict:
        return {
            "trial": self.trial,
            "rect": [round(v, 6) for v in self.rect],
            "k_loc": self.k_loc,
            "local_target": [round(v, 6) for v in self.local_target],
            "main_block": self.main_block,
            "pose": None if self.pose is None else [round(v, 6) for v in self.pose],
            "supports": [s.to_dict() for s in self.supports],
            "predicted_cost": _rounded(self.predicted_cost),
            "cg_cost": _rounded(self.cg_cost),
            "fg_cost": _rounded(self.fg_cost),
            "outcome": self.outcome,
            "candidates": [self.n_cg, self.n_fg],
        }


@dataclass
class SessionState:
    level: Level
    guide: Optional[GuidePath]
    gamma_in: TrialRecord
    placements: Placement
    beta: KinParams
    trial_count: int = 0
    region_history: list = field(default_factory=list)
    status: str = "running"
    reason: str = ""
    k_min: int = 0
    best_approach: float = math.inf
    samples: list = field(default_factory=list)  # transition samples pooled over the session


@dataclass
class SolveReport:
    level: str
    status: str  # solved | failed
    reason: str
    trials: int
    regions: list
    placement: Placement
    beta: KinParams
    outcome: str
    tau: Optional[int]
    guide: tuple = ()
    trajectory: tuple = ()
    timings: list = field(default_factory=list)  # (cg, fg) seconds per region; kept out of the JSON
    trajectory_csv: Optional[str] = None

    @property
    def solved(self) -> bool:
        return self.status == "solved"

    @property
    def n_regions(self) -> int:
        return len({tuple(r.rect) for r in self.regions})

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "status": self.status,
            "reason": self.reason,
            "trials": self.trials,
            "regions": [r.to_dict() for r in self.regions],
            "n_regions": self.n_regions,
            "blocks": len(self.placement),
            "placement": self.placement.to_dict(),
            "beta": self.beta.to_dict(),
            "outcome": self.outcome,
            "tau": self.tau,
            "guide": [[round(p.x, 6), round(p.y, 6)] for p in self.guide],
            "trajectory_csv": self.trajectory_csv,
        }

    def to_json(self) -> str:
        # wall times are left out so identical runs give identical bytes
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------


def closest_approach(tr: TrialRecord, level: Level) -> float:
    t = level.target
    return min(math.hypot(s.pos.x - t.x, s.pos.y - t.y) for s in tr.trajectory)


def last_block_contact(tr: TrialRecord) -> int:
    """Last step at which the ball touches a placed block (0 if never)."""
    last = 0
    for k, cs in enumerate(tr.contacts):
        if any(c.is_ball and c.body_a[0] == "block" for c in cs):
            last = k
    return last


def region_window(positions, guide: GuidePath, k_min: int, eps2: float = gd.EPS2) -> list:
    """Trajectory from ``k_min`` up to the first sample that strays more than
    ``eps2`` from the guide path; later samples belong to later regions."""
    pts = positions[k_min:]
    poly = guide.waypoints
    for i, p in enumerate(pts):
        if gd.nearest_on_polyline(p, poly)[1] > eps2:
            return pts[:i + 1]
    return pts


def find_region(tr: TrialRecord, guide: GuidePath, k_min: int) -> Optional[LocalRegion]:
    pos = [(s.pos.x, s.pos.y) for s in tr.trajectory]
    window = region_window(pos, guide, k_min)
    reg = gd.compute_local_region(window, guide)
    if reg is None:
        return None
    # indices back on the full trajectory
    return dataclasses.replace(reg, k_loc=reg.k_loc + k_min,
                               gamma_in_loc=tuple((k + k_min, p) for k, p in reg.gamma_in_loc))


def _report(st: SessionState, tr: TrialRecord, timings, name: str) -> SolveReport:
    return SolveReport(name, "solved" if st.status == "solved" else "failed", st.reason, max(st.trial_count, 1),
                       list(st.region_history), st.placements, st.beta,
                       tr.outcome, tr.tau, st.guide.waypoints if st.guide else (),
                       tuple(s.pos for s in tr.trajectory), timings)


def solve(level: Level, budget: int = DEFAULT_BUDGET, seed: int = 0, jobs: int = 1, mode: str = "grid",
          fit_log=None, dump=None) -> SolveReport:
    """Iterate trials until the ball reaches the target or ``budget``
    placement trials have been spent.

    Trial 0 is the empty placement; it only counts toward the reported
    trials when it already solves the level.
    """
    name = level.name
    tr = simulate(level, Placement())
    st = SessionState(level, None, tr, Placement(), KinParams())
    timings = []
    if tr.outcome == "reached_target":
        st.status = "solved"
        return _report(st, tr, timings, name)
    st.guide = gd.plan_guide_path(level, seed=seed)
    st.best_approach = closest_approach(tr, level)
    last_tr = tr
    tried: dict = {}  # rect -> {(block kind, pose)} already simulated there
    accepted: list = []  # session snapshots taken before each accepted placement
    stall = 0  # consecutive trials without a new best approach
    while st.trial_count < budget:
        region = find_region(st.gamma_in, st.guide, st.k_min)
        if region is None:
            st.status, st.reason = "failed", "no-region"
            break
        target = gd.local_target(region)
        remaining = [t.id for t in level.inventory if t.id not in st.placements.ids()]
        rec = RegionRecord(st.trial_count + 1, region.rect, region.k_loc, tuple(target.center))
        if accepted and (not remaining or stall >= STALL_LIMIT):
            # free the blocks of the latest accepted region and re-solve it with the refit model
            st.gamma_in, st.placements, st.k_min, st.best_approach = accepted.pop()
            stall = 0
            log.info("rollback: %s", "inventory exhausted" if not remaining else "stalled")
            continue
        if not remaining:
            st.status, st.reason = "failed", "unsolvable-region: inventory exhausted"
            break
        problem = LocalProblem.from_trial(level, region, target, st.gamma_in, st.placements, remaining, st.beta,
                                          st.k_min, st.guide.waypoints)
        key = tuple(round(v, 6) for v in region.rect)
        try:
            sol = solve_local(problem, jobs=jobs, mode=mode, seed=seed,
                              exclude=frozenset(tried.get(key, ())), dump=dump)
        except (EmptyGridError, UnsolvableRegionError) as exc:
            if accepted:  # dead end downstream: revisit the previous region
                st.gamma_in, st.placements, st.k_min, st.best_approach = accepted.pop()
                stall = 0
                log.info("rollback: %s", exc)
                continue
            st.status, st.reason = "failed", f"unsolvable-region: {exc}"
            break
        c = sol.best
        tried.setdefault(key, set()).add((level.template(c.main_block).kind, c.pose))
        rec.main_block, rec.pose, rec.supports = c.main_block, c.pose, sol.supporting
        rec.predicted_cost = sol.cost
        rec.cg_cost, rec.fg_cost = sol.cg_best.cost, sol.fg_best.cost
        rec.cg_time, rec.fg_time, rec.n_cg, rec.n_fg = sol.cg_time, sol.fg_time, sol.n_cg, sol.n_fg
        timings.append((sol.cg_time, sol.fg_time))
        placement = sol.m0_patch
        tr = simulate(level, placement)
        last_tr = tr
        st.trial_count += 1
        log.info("trial %d: block %d at (%.1f, %.1f, %.3f) -> %s", st.trial_count, c.main_block, c.x, c.y,
                 c.angle, tr.outcome)
        if tr.outcome == "reached_target":
            rec.outcome = "reached_target"
            st.region_history.append(rec)
            st.placements = placement
            st.gamma_in = tr
            st.status = "solved"
            break
        # refit on every sample so far, anchored at the prior
        st.samples.extend(extract_samples(tr))
        st.beta, _ = learn(st.samples, KinParams(), ridge=RIDGE, radius=level.ball_radius,
                           trial=st.trial_count, log_stream=fit_log)
        d_px, d_deg = precontact_drift(tr, placement)
        if d_px > DRIFT_PX or d_deg > DRIFT_DEG:
            rec.outcome = "drifted"
            st.region_history.append(rec)
            stall += 1
            continue
        approach = closest_approach(tr, level)
        if approach < st.best_approach:
            rec.outcome = "accepted"
            accepted.append((st.gamma_in, st.placements, st.k_min, st.best_approach))
            st.best_approach = approach
            st.gamma_in = tr
            st.placements = placement
            st.k_min = last_block_contact(tr)
            stall = 0
        else:
            rec.outcome = "kept"
            stall += 1
        st.region_history.append(rec)
    else:
        st.status, st.reason = "failed", "budget"
    if st.status == "solved":
        return _report(st, last_tr, timings, name)
    return _report(st, st.gamma_in, timings, name)
