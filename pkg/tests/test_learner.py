import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubblesolver.geometry import Vec2
from bubblesolver.kinematics import ContactParams, ContactType, KinParams, Surface
from bubblesolver.learner import (EventSample, extract_samples, fit, golden_section, learn, predict_sample,
                                  total_residual)
from bubblesolver.level import BallState
from bubblesolver.physics import PhysicsParams, simulate

from conftest import make_level
from oracles import planted_bounce_samples

BOUNCE = ContactType.BOUNCE_OFF_SEGMENT
ROLL = ContactType.ROLL_ON_SEGMENT


def ledge_trial():
    env = [{"shape": "rectangle", "pos": [400, 580], "angle": 0, "w": 800, "h": 40},
           {"shape": "rectangle", "pos": [200, 450], "angle": 0, "w": 400, "h": 40}]
    lv = make_level(env=env, ball={"start": [100, 380, 200, 0], "radius": 15}, horizon=170)
    return simulate(lv, params=PhysicsParams(restitution_env=0.0))


def test_free_fall_trial_has_no_samples():
    tr = simulate(make_level(env=[], horizon=30, bounds=[0, 0, 800, 2000]))
    assert extract_samples(tr) == []


def test_drop_bounce_roll_gives_one_bounce_and_one_roll():
    samples = extract_samples(ledge_trial())
    assert [s.j for s in samples] == [BOUNCE, ROLL]
    assert all(s.k_out > s.k_in for s in samples)


def test_planted_restitution_recovered():
    samples = planted_bounce_samples(np.random.default_rng(0), 0.7, 0.9, 12)
    rep = fit(samples, KinParams())
    p = rep.beta_new[BOUNCE]
    assert abs(p.e_n - 0.7) <= 1e-6 and abs(p.e_t - 0.9) <= 1e-6
    assert rep.residual_after <= 1e-18 and rep.residual_after <= rep.residual_before


def test_single_sample_interpolated():
    rep = fit(planted_bounce_samples(np.random.default_rng(1), 0.3, 0.8, 1), KinParams())
    assert rep.residual_after == pytest.approx(0.0, abs=1e-18)


def test_noisy_fits_never_increase_residual():
    rng = np.random.default_rng(2)
    for _ in range(100):
        samples = planted_bounce_samples(rng, 0.55, 0.85, int(rng.integers(1, 10)), noise=5.0)
        rep = fit(samples, KinParams())
        assert rep.residual_after <= rep.residual_before


def test_simulator_samples_improve_on_prior():
    samples = [s for s in extract_samples(ledge_trial()) if s.j == BOUNCE]
    rep = fit(samples, KinParams())
    assert rep.residual_after <= rep.residual_before


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_fit_invariant_to_sample_order(seed):
    samples = planted_bounce_samples(np.random.default_rng(seed), 0.6, 0.9, 8, noise=5.0)
    shuffled = samples[:]
    random.Random(seed).shuffle(shuffled)
    assert fit(samples, KinParams()).beta_new == fit(shuffled, KinParams()).beta_new


def test_bounce_self_consistency_with_flight():
    rng = np.random.default_rng(4)
    truth = ContactParams(0.35, 0.75, 0.0)
    base = planted_bounce_samples(rng, 0.5, 0.5, 6)
    samples = []
    for i, s in enumerate(base):
        s = EventSample(s.s_in, s.surface, BOUNCE, s.y, duration=0.05 * (i + 1))
        samples.append(EventSample(s.s_in, s.surface, BOUNCE, predict_sample(s, truth), s.duration))
    p = fit(samples, KinParams()).beta_new[BOUNCE]
    assert (p.e_n, p.e_t) == pytest.approx((0.35, 0.75), abs=1e-9)


def test_roll_self_consistency():
    seg = Surface.segment((0.0, 500.0), (600.0, 500.0))
    truth = ContactParams(0.0, 1.0, 35.0)
    samples = []
    for v in (80.0, 120.0, 200.0):
        s = EventSample(BallState(Vec2(20.0, 485.0), Vec2(v, 0.0)), seg, ROLL, BallState(Vec2(0, 0), Vec2(0, 0)))
        y = predict_sample(s, truth)
        samples.append(EventSample(s.s_in, seg, ROLL, y, 1.0))
    p = fit(samples, KinParams()).beta_new[ROLL]
    assert p.a_roll == pytest.approx(35.0, abs=1e-6)
    assert total_residual(samples, p) <= 1e-12


def test_ridge_pulls_toward_prior():
    samples = planted_bounce_samples(np.random.default_rng(5), 0.9, 0.9, 1)
    free = fit(samples, KinParams()).beta_new[BOUNCE].e_n
    damped = fit(samples, KinParams(), ridge=1.0).beta_new[BOUNCE].e_n
    prior = KinParams()[BOUNCE].e_n
    assert abs(damped - prior) < abs(free - prior)


def test_fit_rejects_mixed_types():
    a = planted_bounce_samples(np.random.default_rng(6), 0.5, 0.5, 1)[0]
    b = EventSample(a.s_in, a.surface, ROLL, a.y)
    with pytest.raises(ValueError):
        fit([a, b], KinParams())


def test_learn_updates_every_present_type_and_logs():
    import io
    buf = io.StringIO()
    beta, reports = learn(extract_samples(ledge_trial()), KinParams(), trial=3, log_stream=buf)
    assert {r.j for r in reports} == {BOUNCE, ROLL}
    assert len(buf.getvalue().splitlines()) == 2 and '"trial": 3' in buf.getvalue()


def test_golden_section_quadratic():
    assert golden_section(lambda x: (x - 42.0) ** 2, 0.0, 200.0) == pytest.approx(42.0, abs=1e-6)
