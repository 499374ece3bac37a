"""Independent reference implementations used as test oracles."""
import numpy as np


def nearest_points_bruteforce(samples, poly):
    """Nearest point on a polyline for every sample, over all segments at once.

    Returns ``(points, distances)``; ties go to the earliest segment.
    """
    P = np.asarray(samples, dtype=float)[:, None, :]
    A = np.asarray(poly[:-1], dtype=float)[None, :, :]
    B = np.asarray(poly[1:], dtype=float)[None, :, :]
    E = B - A
    ll = (E ** 2).sum(-1)
    t = ((P - A) * E).sum(-1) / np.where(ll == 0, 1.0, ll)
    t = np.clip(np.where(ll == 0, 0.0, t), 0.0, 1.0)
    Q = A + t[..., None] * E
    d = np.sqrt(((P - Q) ** 2).sum(-1))
    j = np.argmin(d, axis=1)
    rows = np.arange(len(samples))
    return Q[rows, j], d[rows, j]


def minimal_aabb_oracle(samples, poly, eps1, eps2):
    """Pre-margin rectangle of the in-band (sample, nearest point) pairs, or None."""
    q, d = nearest_points_bruteforce(samples, poly)
    keep = (d >= eps1) & (d <= eps2)
    if not keep.any():
        return None
    pts = np.concatenate([np.asarray(samples, dtype=float)[keep], q[keep]])
    return (float(pts[:, 0].min()), float(pts[:, 1].min()), float(pts[:, 0].max()), float(pts[:, 1].max()))


def random_pair(rng, n_guide=None, n_traj=None):
    """A random guide polyline and a trajectory that wanders off it."""
    n_guide = n_guide or int(rng.integers(2, 9))
    n_traj = n_traj or int(rng.integers(20, 120))
    xs = np.sort(rng.uniform(0, 800, n_guide))
    guide = [(float(x), float(y)) for x, y in zip(xs, rng.uniform(100, 500, n_guide))]
    t = np.linspace(0, 1, n_traj)
    gx = np.interp(t, np.linspace(0, 1, n_guide), [p[0] for p in guide])
    gy = np.interp(t, np.linspace(0, 1, n_guide), [p[1] for p in guide])
    drift = np.cumsum(rng.normal(0, rng.uniform(2, 12), (n_traj, 2)), axis=0)
    traj = [(float(x), float(y)) for x, y in zip(gx + drift[:, 0], gy + drift[:, 1])]
    return traj, guide


def planted_bounce_samples(rng, e_n, e_t, n, noise=0.0):
    """Zero-duration bounce samples off random segments, built by hand from the
    restitution definition: v_out = -e_n v_n n + e_t v_t."""
    from bubblesolver.geometry import Vec2
    from bubblesolver.kinematics import ContactType, Surface
    from bubblesolver.learner import EventSample
    from bubblesolver.level import BallState

    out = []
    for _ in range(n):
        a = float(rng.uniform(-0.6, 0.6))
        surf = Surface.segment((0.0, 500.0), (100.0 * np.cos(a), 500.0 + 100.0 * np.sin(a)))
        pos = Vec2(50.0, 300.0)
        nrm = surf.normal_toward(pos)
        v = np.array([rng.uniform(-300, 300), rng.uniform(50, 500)])
        vn = v @ np.array([nrm.x, nrm.y])
        if vn >= 0:
            v = -v
            vn = -vn
        vt = v - vn * np.array([nrm.x, nrm.y])
        w = -e_n * vn * np.array([nrm.x, nrm.y]) + e_t * vt + rng.normal(0.0, noise, 2) * (noise > 0)
        out.append(EventSample(BallState(pos, Vec2(*v)), surf, ContactType.BOUNCE_OFF_SEGMENT,
                               BallState(pos, Vec2(float(w[0]), float(w[1])))))
    return out
