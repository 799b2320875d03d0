"""Personality features (l, v, d) from an agent's long-term history.

``l`` measures how far the agent strays from straight chords (percent),
``v`` its mean walking speed (m/s), and ``d`` the mean distance it keeps to
its nearest neighbor (m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientHistoryError, ShapeError

STATIONARY = -1.0


@dataclass(frozen=True)
class PersonalityVector:
    l: float = 0.0
    v: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        for name in ("l", "v", "d"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value!r}")


def linearity_of_point(p, origin, dest):
    """Deviation of ``p`` from the origin->dest chord as a percentage of the chord's x-extent.

    Returns 0 for a vertical chord and -1 when origin and dest coincide.
    """
    dx = abs(dest[0] - origin[0])
    if dx != 0:
        y_line = origin[1] + (dest[1] - origin[1]) * (p[0] - origin[0]) / (dest[0] - origin[0])
        return 100.0 * abs(p[1] - y_line) / dx
    if (dest[1] - origin[1]) ** 2 > 0:
        return 0.0
    return STATIONARY


def linearity_of_segment(xy):
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    if len(xy) < 2:
        raise ShapeError("a segment needs at least 2 points")
    if np.all(xy == xy[0]):
        return STATIONARY
    origin, dest = xy[0], xy[-1]
    if dest[0] == origin[0] and dest[1] == origin[1]:
        # closed loop: the chord is a point but the agent did move
        return 0.0
    return max(linearity_of_point(p, origin, dest) for p in xy)


def split_segments(n, f_obs):
    """Index ranges of consecutive f_obs-point segments; a tail of >= 2 points is kept."""
    bounds = []
    for lo in range(0, n, f_obs):
        hi = min(lo + f_obs, n)
        if hi - lo >= 2:
            bounds.append((lo, hi))
    return bounds


def mean_linearity(xy, f_obs):
    values = [linearity_of_segment(xy[lo:hi]) for lo, hi in split_segments(len(xy), f_obs)]
    values = [v for v in values if v != STATIONARY]
    return float(np.mean(values)) if values else 0.0


def mean_speed(xy, dt):
    xy = np.asarray(xy, dtype=np.float64)
    steps = np.hypot(*np.diff(xy, axis=0).T)
    return float(steps.sum() / ((len(xy) - 1) * dt))


def mean_min_distance(xy, neighbor_positions):
    """Average over steps having neighbors of the distance to the nearest one."""
    minima = []
    for p, others in zip(np.asarray(xy, dtype=np.float64), neighbor_positions):
        others = np.asarray(others, dtype=np.float64).reshape(-1, 2)
        if len(others):
            minima.append(float(np.min(np.hypot(others[:, 0] - p[0], others[:, 1] - p[1]))))
    return float(np.mean(minima)) if minima else 0.0


def extract_personality(history, neighbor_positions=None, dt=0.4, f_obs=8):
    """Personality vector from a position history.

    ``history`` is an (n, 2) array or a Trajectory; ``neighbor_positions``
    holds, per history step, an array of co-present pedestrians' positions.
    """
    xy = np.asarray(getattr(history, "xy", history), dtype=np.float64).reshape(-1, 2)
    if len(xy) < 2:
        raise InsufficientHistoryError("personality needs at least 2 history points")
    if neighbor_positions is None:
        neighbor_positions = [()] * len(xy)
    elif len(neighbor_positions) != len(xy):
        raise ShapeError("need one neighbor-position set per history step")
    return PersonalityVector(mean_linearity(xy, f_obs), mean_speed(xy, dt),
                             mean_min_distance(xy, neighbor_positions))
