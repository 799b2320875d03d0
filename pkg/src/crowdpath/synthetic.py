"""Seeded synthetic crowd scenes in the ETH/UCY annotation format.

Pedestrians follow waypoint routes across a rectangular plaza (some routes
turn around obstacles), steer with a small social-force model and are
sampled every ``dt`` seconds. The output is meant for tests and demos, not
as a stand-in for real recordings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .core import ObstaclePolygon, Trajectory
from .ingest import Scene


@dataclass(frozen=True)
class Layout:
    size: Tuple[float, float] = (24.0, 16.0)
    obstacles: Tuple[Tuple[float, float, float, float], ...] = ((9.0, 6.5, 12.0, 9.0),)
    routes: Tuple[Tuple[Tuple[float, float], ...], ...] = (
        ((0.0, 4.0), (24.0, 4.0)),
        ((24.0, 5.0), (0.0, 5.0)),
        ((0.0, 12.0), (24.0, 12.0)),
        ((24.0, 11.0), (0.0, 11.0)),
        ((5.0, 0.0), (5.0, 16.0)),
        ((17.0, 16.0), (17.0, 0.0)),
        ((0.0, 7.8), (7.5, 7.8), (10.5, 13.5), (10.5, 16.0)),
        ((10.5, 0.0), (10.5, 4.5), (14.0, 7.8), (24.0, 7.8)),
        ((24.0, 8.5), (14.0, 10.5), (8.0, 14.0), (0.0, 14.0)),
        ((0.0, 2.0), (13.0, 2.0), (20.0, 9.0), (20.0, 16.0)),
    )


def _rect(x0, y0, x1, y1):
    return np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], dtype=np.float64)


@dataclass
class _Walker:
    pid: int
    route: np.ndarray
    offset: float
    speed: float
    pos: np.ndarray
    vel: np.ndarray
    leg: int = 1
    track: List[Tuple[int, float, float]] = field(default_factory=list)


def _lateral(route, leg):
    d = route[leg] - route[leg - 1]
    n = np.hypot(*d)
    return np.array([-d[1], d[0]]) / n if n > 0 else np.zeros(2)


def simulate_scene(name="synthetic", seed=0, duration=240.0, spawn_rate=0.6, layout=None,
                   dt=0.4, frame_stride=10, substeps=4, group_prob=0.25, turn_radius=2.0):
    """Run the crowd model for ``duration`` seconds and return the recorded Scene."""
    layout = layout or Layout()
    rng = np.random.default_rng(seed)
    h = dt / substeps
    rects = [np.array(r, dtype=np.float64) for r in layout.obstacles]
    routes = [np.array(r, dtype=np.float64) for r in layout.routes]
    width, height = layout.size
    active: List[_Walker] = []
    finished: List[_Walker] = []
    next_id = 1
    n_frames = int(round(duration / dt))
    for frame in range(n_frames):
        arrivals = rng.poisson(spawn_rate * dt)
        for _ in range(arrivals):
            r = int(rng.integers(len(routes)))
            route = routes[r]
            speed = float(np.clip(rng.normal(1.25, 0.22), 0.6, 1.9))
            members = 2 if rng.random() < group_prob else 1
            base = float(rng.normal(0.0, 0.35))
            for g in range(members):
                off = base + 0.6 * g
                start = route[0] + off * _lateral(route, 1)
                heading = route[1] - route[0]
                heading = heading / np.hypot(*heading)
                active.append(_Walker(next_id, route, off, speed, start.copy(), heading * speed))
                next_id += 1
        for _ in range(substeps):
            if not active:
                break
            pos = np.array([w.pos for w in active])
            forces = np.zeros_like(pos)
            for i, w in enumerate(active):
                target = w.route[w.leg] + w.offset * _lateral(w.route, w.leg)
                to = target - w.pos
                dist = np.hypot(*to)
                if dist < turn_radius and w.leg < len(w.route) - 1:
                    w.leg += 1
                    target = w.route[w.leg] + w.offset * _lateral(w.route, w.leg)
                    to = target - w.pos
                    dist = np.hypot(*to)
                desired = to / max(dist, 1e-9) * w.speed
                forces[i] += (desired - w.vel) / 0.5
            diff = pos[:, None, :] - pos[None, :, :]
            d = np.hypot(diff[..., 0], diff[..., 1])
            np.fill_diagonal(d, np.inf)
            push = 2.0 * np.exp((0.45 - d) / 0.3)
            push[d > 3.0] = 0.0
            forces += (push[..., None] * diff / np.maximum(d, 1e-6)[..., None]).sum(axis=1)
            for rect in rects:
                nearest = np.clip(pos, rect[:2], rect[2:])
                away = pos - nearest
                dd = np.hypot(away[:, 0], away[:, 1])
                f = 6.0 * np.exp((0.25 - dd) / 0.25)
                f[dd > 2.0] = 0.0
                forces += f[:, None] * away / np.maximum(dd, 1e-6)[:, None]
            noise = rng.normal(0.0, 0.15, size=pos.shape)
            for i, w in enumerate(active):
                w.vel = w.vel + h * (forces[i] + noise[i])
                top = 1.3 * w.speed
                sp = np.hypot(*w.vel)
                if sp > top:
                    w.vel *= top / sp
                w.pos = w.pos + h * w.vel
        still = []
        for w in active:
            w.track.append((frame, float(w.pos[0]), float(w.pos[1])))
            done = w.leg == len(w.route) - 1 and np.hypot(*(w.route[-1] - w.pos)) < 1.0
            outside = not (-1.0 <= w.pos[0] <= width + 1.0 and -1.0 <= w.pos[1] <= height + 1.0)
            (finished if done or outside else still).append(w)
        active = still
    finished.extend(active)

    trajectories = {}
    for w in sorted(finished, key=lambda w: w.pid):
        if len(w.track) < 2:
            continue
        steps = np.array([f for f, _, _ in w.track])
        xy = np.array([(x, y) for _, x, y in w.track])
        trajectories[w.pid] = Trajectory(steps, xy, dt)
    obstacles = tuple(ObstaclePolygon(_rect(*r)) for r in layout.obstacles)
    return Scene(name, trajectories, obstacles, dt, 0, frame_stride)


def scene_to_text(scene):
    """Serialise to ``frame ped x y`` lines, ordered by frame then pedestrian."""
    rows = []
    for pid, traj in scene.trajectories.items():
        for s, (x, y) in zip(traj.steps, traj.xy):
            rows.append((scene.frame_of(int(s)), int(pid), float(x), float(y)))
    rows.sort()
    return "".join(f"{f}\t{p}\t{x!r}\t{y!r}\n" for f, p, x, y in rows)


def obstacles_to_text(obstacles):
    return "".join(" ".join(repr(float(v)) for v in poly.vertices.ravel()) + "\n"
                   for poly in obstacles)


def synthetic_scenes(names=("alpha", "beta", "gamma", "delta"), seed=0, **kwargs):
    """Several independent recordings of the same plaza."""
    return [simulate_scene(name, seed=seed * 1000 + i, **kwargs) for i, name in enumerate(names)]
