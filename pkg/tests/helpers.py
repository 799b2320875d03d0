"""Random scene fragments for tests."""

import numpy as np

from crowdpath import ObstaclePolygon, Trajectory, make_query, make_structure


def random_walk(rng, n, start=(0.0, 0.0), speed=1.2, dt=0.4, first=0, turn=0.3):
    heading = rng.uniform(0, 2 * np.pi)
    pts = [np.asarray(start, dtype=np.float64)]
    for _ in range(n - 1):
        heading += rng.normal(0, turn)
        step = speed * dt * rng.uniform(0.5, 1.5)
        pts.append(pts[-1] + step * np.array([np.cos(heading), np.sin(heading)]))
    return Trajectory(np.arange(first, first + n), np.array(pts), dt)


def random_scene_window(rng, config, n_neighbors=None, n_obstacles=None, future=True, f=None):
    """Scene-frame history, neighbors and obstacles around a random walker."""
    f = f or config.f_obs
    total = f + (config.p_pred if future else 0)
    central = random_walk(rng, total, start=rng.uniform(-5, 5, 2), first=10)
    now = central.xy[f - 1]
    nbs = []
    for _ in range(rng.integers(0, 5) if n_neighbors is None else n_neighbors):
        nbs.append(random_walk(rng, int(rng.integers(3, total + 3)),
                               start=now + rng.uniform(-3, 3, 2),
                               first=int(rng.integers(8, 14))))
    obs = []
    for _ in range(rng.integers(0, 3) if n_obstacles is None else n_obstacles):
        c = now + rng.uniform(-4, 4, 2)
        w, h = rng.uniform(0.3, 1.5, 2)
        obs.append(ObstaclePolygon([(c[0], c[1]), (c[0] + w, c[1]), (c[0] + w, c[1] + h), (c[0], c[1] + h)]))
    history = central.between(central.start, central.start + f - 1)
    fut = central.between(history.end + 1, central.end) if future else None
    return history, fut, nbs, obs


def random_query(rng, config, **kw):
    h, _, nbs, obs = random_scene_window(rng, config, future=False, **kw)
    return make_query(h, nbs, obs, config, ("q", int(rng.integers(1e6)), 0))


def random_structure(rng, config, source_id, **kw):
    h, fut, nbs, obs = random_scene_window(rng, config, **kw)
    return make_structure(h, fut, nbs, obs, config, source_id)
