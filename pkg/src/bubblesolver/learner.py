"""Least-squares refit of the kinematic surrogate parameters from trials.

Each adjacent pair of detected events yields one transition sample:
the ball state entering a contact event and the state entering the
next event.  Samples are pooled per contact type; bounce parameters are
linear in the model and solved in closed form, the rolling deceleration
enters piecewise and is found by a bracketed golden-section search.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import Vec2
from .kinematics import (GRAVITY, ContactParams, ContactType, KinParams, Surface, freefall_at, predict_bounce,
                         predict_roll, predict_slide)
from .level import BallState
from .physics import DT, TrialRecord, detect_events, event_first_contact

log = logging.getLogger(__name__)

A_ROLL_RANGE = (0.0, 200.0)
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class DegenerateDataError(ValueError):
    """The samples carry no information about the parameters being fit."""


@dataclass(frozen=True)
class EventSample:
    s_in: BallState
    surface: Surface
    j: ContactType
    y: BallState
    duration: float = 0.0  # seconds between the two boundary states
    k_in: int = 0
    k_out: int = 0


@dataclass(frozen=True)
class FitReport:
    j: ContactType
    beta_before: KinParams
    beta_new: KinParams
    residual_before: float
    residual_after: float
    n_samples: int
    accepted: bool = True
    note: str = ""

    def to_json(self, trial: Optional[int] = None) -> str:
        return json.dumps({
            "trial": trial,
            "type": self.j.value,
            "beta_before": self.beta_before.to_dict()[self.j.value],
            "beta_after": self.beta_new.to_dict()[self.j.value],
            "residual_before": self.residual_before,
            "residual_after": self.residual_after,
            "n_samples": self.n_samples,
            "accepted": self.accepted,
            "note": self.note,
        }, sort_keys=True)


# --------------------------------------------------------------------------
# samples


def boundary_state(tr: TrialRecord, k: int) -> BallState:
    """State at which the event starting at step ``k`` takes over."""
    return tr.trajectory[max(k - 1, 0)]


def extract_samples(tr: TrialRecord, events=None) -> list[EventSample]:
    """One sample per adjacent event pair whose first member is a contact."""
    events = detect_events(tr) if events is None else events
    out = []
    for ev, nxt in zip(events, events[1:]):
        if ev.kind == ContactType.FREE_FALL:
            continue
        c = event_first_contact(tr, ev)
        if c is None or c.surface is None:
            continue
        if ev.kind.is_along and c.surface.kind != "segment":
            continue  # rolling over a corner has no along-surface model
        k_in = max(ev.start - 1, 0)
        k_out = max(nxt.start - 1, 0)
        s_in = tr.trajectory[k_in]
        out.append(EventSample(s_in, c.surface, ev.kind, tr.trajectory[k_out], (k_out - k_in) * DT, k_in, k_out))
    return out


def group_samples(samples: Iterable[EventSample]) -> dict:
    out: dict = {}
    for s in samples:
        out.setdefault(s.j, []).append(s)
    return out


# --------------------------------------------------------------------------
# model and residual


def predict_sample(s: EventSample, p: ContactParams, radius: float = 15.0) -> BallState:
    if s.j.is_bounce:
        after = predict_bounce(s.s_in, s.surface, p)
        if not s.duration:
            return after
        # the normal impulse cancels gravity during the impact step
        lead = min(s.duration, DT)
        moved = BallState(after.pos + after.vel * lead, after.vel)
        return freefall_at(moved, s.duration - lead)
    if s.j == ContactType.ROLL_ON_SEGMENT:
        return predict_roll(s.s_in, s.surface, p, radius).state
    if s.j == ContactType.SLIDE_ON_SEGMENT:
        return predict_slide(s.s_in, s.surface, p, radius).state
    raise ValueError(f"no transition model for {s.j.value}")


def state_residual(pred: BallState, obs: BallState, dt: float = DT) -> float:
    """Squared error in px: position plus velocity scaled by one timestep."""
    dx, dy = pred.pos.x - obs.pos.x, pred.pos.y - obs.pos.y
    du, dv = (pred.vel.x - obs.vel.x) * dt, (pred.vel.y - obs.vel.y) * dt
    return dx * dx + dy * dy + du * du + dv * dv


def total_residual(samples: Sequence[EventSample], p: ContactParams, radius: float = 15.0) -> float:
    # math.fsum makes the sum independent of sample order
    return math.fsum(state_residual(predict_sample(s, p, radius), s.y) for s in samples)


# --------------------------------------------------------------------------
# fitting


def _bounce_design(s: EventSample):
    """Rows of the linear map (e_n, e_t) -> residual vector, plus offset."""
    n = s.surface.normal_toward(s.s_in.pos)
    v = s.s_in.vel
    vn = v.dot(n)
    if vn >= 0.0:
        # not approaching: the model leaves the state unchanged
        a = np.zeros(2)
        b = np.zeros(2)
        base_v = np.array([v.x, v.y])
    else:
        a = np.array([-vn * n.x, -vn * n.y])
        b = np.array([v.x - vn * n.x, v.y - vn * n.y])
        base_v = np.zeros(2)
    lead = min(s.duration, DT)
    t = s.duration - lead
    g = np.array([0.0, GRAVITY])
    p0 = np.array([s.s_in.pos.x, s.s_in.pos.y]) + base_v * (lead + t) + 0.5 * g * t * t
    v0 = base_v + g * t
    # residual = M @ [e_n, e_t] + c
    M = np.vstack([np.column_stack([a * (lead + t), b * (lead + t)]), np.column_stack([a * DT, b * DT])])
    c = np.concatenate([p0 - [s.y.pos.x, s.y.pos.y], (v0 - [s.y.vel.x, s.y.vel.y]) * DT])
    return M, c


def _fit_bounce(samples, prior: ContactParams, ridge: float) -> ContactParams:
    rows = [_bounce_design(s) for s in samples]
    M = np.vstack([m for m, _ in rows])
    c = np.concatenate([cc for _, cc in rows])
    A = M.T @ M
    rhs = -M.T @ c
    if not np.any(np.abs(A) > 0):
        raise DegenerateDataError("bounce samples carry no velocity information")
    x0 = np.array([prior.e_n, prior.e_t])
    if ridge > 0:
        # one virtual sample at the prior, scaled like an average real sample
        w = ridge * np.diag(A) / len(samples)
        A = A + np.diag(w)
        rhs = rhs + w * x0
    # unidentified directions stay at the prior
    free = np.diag(A) > 0
    x = x0.copy()
    if free.all():
        x = np.linalg.solve(A, rhs)
    elif free.any():
        i = int(np.argmax(free))
        x[i] = (rhs[i] - A[i, 1 - i] * x0[1 - i]) / A[i, i]
    return ContactParams.clamped(float(x[0]), float(x[1]), prior.a_roll)


def golden_section(f, lo: float, hi: float, tol: float = 1e-9, scan: int = 41) -> float:
    """Minimise ``f`` on [lo, hi]: coarse scan to bracket, then golden section."""
    xs = np.linspace(lo, hi, scan)
    vals = [f(float(x)) for x in xs]
    i = int(np.argmin(vals))
    a = float(xs[max(i - 1, 0)])
    b = float(xs[min(i + 1, scan - 1)])
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    best = min([(vals[i], float(xs[i])), (fc, c), (fd, d)])
    return best[1]


def _fit_roll(samples, prior: ContactParams, ridge: float, radius: float) -> ContactParams:
    if all(s.duration == 0.0 and s.s_in.vel == Vec2(0.0, 0.0) for s in samples):
        raise DegenerateDataError("roll samples never move")
    span = math.fsum(s.duration for s in samples) / len(samples)
    w = ridge * (0.5 * span * span) ** 2

    def obj(a):
        p = ContactParams(prior.e_n, prior.e_t, a)
        return total_residual(samples, p, radius) + w * (a - prior.a_roll) ** 2

    a = golden_section(obj, *A_ROLL_RANGE)
    return ContactParams.clamped(prior.e_n, prior.e_t, a)


def fit(samples: Sequence[EventSample], beta_prior: KinParams, ridge: float = 0.0,
        radius: float = 15.0) -> FitReport:
    """Least-squares refit of the parameters of one contact type.

    All samples must share the same type.  With ``ridge > 0`` the prior is
    kept as ``ridge`` virtual samples.  The prior is kept whenever the fit
    would not lower the residual.
    """
    if not samples:
        raise ValueError("need at least one sample")
    j = samples[0].j
    if any(s.j != j for s in samples):
        raise ValueError("samples mix contact types")
    # canonical order so the result does not depend on sample order
    samples = sorted(samples, key=lambda s: (s.s_in.as_tuple(), s.y.as_tuple(), s.duration))
    prior = beta_prior[j]
    before = total_residual(samples, prior, radius)
    if j.is_bounce:
        new = _fit_bounce(samples, prior, ridge)
    elif j.is_along:
        new = _fit_roll(samples, prior, ridge, radius)
    else:
        raise ValueError(f"{j.value} has no parameters")
    after = total_residual(samples, new, radius)
    if after > before:
        return FitReport(j, beta_prior, beta_prior, before, before, len(samples), False, "fit worse than prior")
    return FitReport(j, beta_prior, beta_prior.with_params(j, new), before, after, len(samples))


def learn(samples: Iterable[EventSample], beta: KinParams, ridge: float = 0.0, radius: float = 15.0,
          trial: Optional[int] = None, log_stream=None) -> tuple[KinParams, list[FitReport]]:
    """Refit every contact type present in ``samples``; returns the new snapshot."""
    reports = []
    groups = group_samples(samples)
    for j in sorted(groups, key=lambda t: t.value):
        try:
            rep = fit(groups[j], beta, ridge, radius)
        except DegenerateDataError as exc:
            r = total_residual(groups[j], beta[j], radius)
            rep = FitReport(j, beta, beta, r, r, len(groups[j]), False, str(exc))
        beta = rep.beta_new
        reports.append(rep)
        line = rep.to_json(trial)
        log.debug("fit %s", line)
        if log_stream is not None:
            log_stream.write(line + "\n")
    return beta, reports
