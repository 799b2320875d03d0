"""Trajectories, obstacles, structures and the canonical local frame.

The canonical frame is the local window around the central agent: x runs
along the agent's mean heading over the observation window, y to its left,
and the origin is the rear-right corner of the ``window_length x
window_width`` rectangle. The agent's current position sits at
``Config.anchor``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from shapely.geometry import Polygon, box

from .config import Config
from .errors import InsufficientHistoryError, InvalidGeometryError, ShapeError

_EPS = 1e-12

SourceId = Tuple[str, int, int]


class TrackPoint(NamedTuple):
    t: int
    x: float
    y: float


def _frozen(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Positions at consecutive integer timesteps ``steps`` (``dt`` seconds apart)."""

    steps: np.ndarray
    xy: np.ndarray
    dt: float = 0.4

    def __post_init__(self):
        steps = np.array(self.steps, dtype=np.int64).reshape(-1)
        xy = np.array(self.xy, dtype=np.float64).reshape(-1, 2)
        if len(steps) == 0:
            raise ShapeError("a trajectory needs at least one point")
        if len(steps) != len(xy):
            raise ShapeError(f"{len(steps)} steps but {len(xy)} positions")
        if np.any(np.diff(steps) != 1):
            raise ShapeError("timestep indices must increase by exactly 1")
        if steps[0] < 0:
            raise ShapeError("timestep indices must be non-negative")
        if not np.all(np.isfinite(xy)):
            raise ShapeError("positions must be finite")
        if not self.dt > 0:
            raise ShapeError("dt must be positive")
        object.__setattr__(self, "steps", _frozen(steps))
        object.__setattr__(self, "xy", _frozen(xy))

    @classmethod
    def from_xy(cls, xy, start=0, dt=0.4):
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        return cls(np.arange(start, start + len(xy)), xy, dt)

    def __len__(self):
        return len(self.steps)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.dt == other.dt and np.array_equal(self.steps, other.steps)
                and np.array_equal(self.xy, other.xy))

    __hash__ = None

    def __repr__(self):
        return f"Trajectory(steps={self.start}..{self.end}, dt={self.dt})"

    @property
    def start(self):
        return int(self.steps[0])

    @property
    def end(self):
        return int(self.steps[-1])

    @property
    def points(self):
        return [TrackPoint(int(t), float(x), float(y)) for t, (x, y) in zip(self.steps, self.xy)]

    def between(self, first, last):
        """Sub-trajectory restricted to steps ``first..last`` inclusive, or None."""
        lo = max(first, self.start)
        hi = min(last, self.end)
        if lo > hi:
            return None
        i, j = lo - self.start, hi - self.start + 1
        return Trajectory(self.steps[i:j], self.xy[i:j], self.dt)

    def shifted(self, step_offset):
        return Trajectory(self.steps + step_offset, self.xy, self.dt)


# --------------------------------------------------------------------------
# polygons

def signed_area(vertices):
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p):
    return (min(a[0], b[0]) - _EPS <= p[0] <= max(a[0], b[0]) + _EPS
            and min(a[1], b[1]) - _EPS <= p[1] <= max(a[1], b[1]) + _EPS)


def _segments_intersect(p1, p2, p3, p4):
    d1, d2 = _orient(p3, p4, p1), _orient(p3, p4, p2)
    d3, d4 = _orient(p1, p2, p3), _orient(p1, p2, p4)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True
    return ((d1 == 0 and _on_segment(p3, p4, p1)) or (d2 == 0 and _on_segment(p3, p4, p2))
            or (d3 == 0 and _on_segment(p1, p2, p3)) or (d4 == 0 and _on_segment(p1, p2, p4)))


def is_simple(vertices):
    v = [tuple(p) for p in np.asarray(vertices, dtype=np.float64)]
    n = len(v)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if _segments_intersect(a, b, v[j], v[(j + 1) % n]):
                return False
    return True


@dataclass(frozen=True, eq=False)
class ObstaclePolygon:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 2)
        if len(v) < 3:
            raise InvalidGeometryError(f"a polygon needs at least 3 vertices, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise InvalidGeometryError("polygon vertices must be finite")
        if abs(signed_area(v)) <= _EPS:
            raise InvalidGeometryError("polygon has zero area")
        if not is_simple(v):
            raise InvalidGeometryError("polygon is self-intersecting")
        object.__setattr__(self, "vertices", _frozen(v))

    def __eq__(self, other):
        if not isinstance(other, ObstaclePolygon):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices)

    __hash__ = None

    @property
    def area(self):
        return abs(signed_area(self.vertices))


def points_in_polygon(points, vertices):
    """Boundary-inclusive containment of each row of ``points`` (ray casting)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    v = np.asarray(vertices, dtype=np.float64)
    px, py = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    boundary = np.zeros(len(pts), dtype=bool)
    n = len(v)
    for i in range(n):
        ax, ay = v[i]
        bx, by = v[(i + 1) % n]
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        boundary |= ((np.abs(cross) <= _EPS)
                     & (px >= min(ax, bx) - _EPS) & (px <= max(ax, bx) + _EPS)
                     & (py >= min(ay, by) - _EPS) & (py <= max(ay, by) + _EPS))
        straddles = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
        inside ^= straddles & (px < x_cross)
    return inside | boundary


def point_in_polygon(p, poly):
    """True iff ``p`` lies inside ``poly`` or on its boundary."""
    if isinstance(poly, ObstaclePolygon):
        vertices = poly.vertices
    else:
        vertices = np.asarray(poly, dtype=np.float64).reshape(-1, 2)
        if len(vertices) < 3 or abs(signed_area(vertices)) <= _EPS:
            raise InvalidGeometryError("degenerate polygon")
    return bool(points_in_polygon(np.asarray(p, dtype=np.float64)[None, :], vertices)[0])


def clip_polygon(poly, xmin, ymin, xmax, ymax):
    """Parts of ``poly`` inside the rectangle, as valid polygons (possibly none)."""
    piece = Polygon(poly.vertices).intersection(box(xmin, ymin, xmax, ymax))
    parts = getattr(piece, "geoms", [piece])
    out = []
    for part in parts:
        if part.geom_type != "Polygon" or part.is_empty or part.area <= _EPS:
            continue
        ring = np.asarray(part.exterior.coords)[:-1]
        keep = np.ones(len(ring), dtype=bool)
        keep[1:] = np.any(ring[1:] != ring[:-1], axis=1)
        try:
            out.append(ObstaclePolygon(ring[keep]))
        except InvalidGeometryError:
            continue
    return out


# --------------------------------------------------------------------------
# frames

@dataclass(frozen=True)
class FrameTransform:
    """Maps scene coordinates to canonical ones: ``R(rotation) @ p + translation``."""

    translation: Tuple[float, float] = (0.0, 0.0)
    rotation: float = 0.0

    @property
    def matrix(self):
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return np.array([[c, -s], [s, c]])

    def apply(self, xy):
        xy = np.asarray(xy, dtype=np.float64)
        return xy @ self.matrix.T + np.asarray(self.translation)

    def invert(self, xy):
        xy = np.asarray(xy, dtype=np.float64)
        return (xy - np.asarray(self.translation)) @ self.matrix

    def inverse(self):
        r = self.matrix
        t = -(r.T @ np.asarray(self.translation))
        return FrameTransform((float(t[0]), float(t[1])), -self.rotation)


def heading_rotation(xy):
    """Rotation taking the mean displacement of ``xy`` onto +x (0 if stationary)."""
    xy = np.asarray(xy, dtype=np.float64)
    d = xy[-1] - xy[0]
    if len(xy) < 2 or math.hypot(d[0], d[1]) <= _EPS:
        return 0.0
    return -math.atan2(d[1], d[0])


def in_window(xy, window):
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    length, width = window
    return (xy[:, 0] >= 0) & (xy[:, 0] < length) & (xy[:, 1] >= 0) & (xy[:, 1] < width)


def clip_trajectory_to_window(traj, window):
    """Maximal runs of consecutive points lying inside the window."""
    inside = in_window(traj.xy, window)
    fragments = []
    i, n = 0, len(inside)
    while i < n:
        if not inside[i]:
            i += 1
            continue
        j = i
        while j < n and inside[j]:
            j += 1
        fragments.append(Trajectory(traj.steps[i:j], traj.xy[i:j], traj.dt))
        i = j
    return fragments


def transform_trajectory(traj, transform, step_offset=0):
    return Trajectory(traj.steps + step_offset, transform.apply(traj.xy), traj.dt)


# --------------------------------------------------------------------------
# structures

@dataclass(frozen=True, eq=False)
class QueryStructure:
    """Central agent history plus surroundings, all in the canonical frame.

    Steps are re-indexed so the history covers ``1..f_obs``.
    """

    central_history: Trajectory
    neighbors: Tuple[Trajectory, ...]
    obstacles: Tuple[ObstaclePolygon, ...]
    transform: FrameTransform
    source_id: Optional[SourceId] = None

    @property
    def f_obs(self):
        return len(self.central_history)

    @property
    def current_position(self):
        return self.central_history.xy[-1]

    def _eq_fields(self, other):
        return (type(self) is type(other)
                and self.central_history == other.central_history
                and self.transform == other.transform
                and self.source_id == other.source_id
                and len(self.neighbors) == len(other.neighbors)
                and all(a == b for a, b in zip(self.neighbors, other.neighbors))
                and len(self.obstacles) == len(other.obstacles)
                and all(a == b for a, b in zip(self.obstacles, other.obstacles)))

    def __eq__(self, other):
        return self._eq_fields(other)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DatabaseStructure(QueryStructure):
    future: Optional[Trajectory] = None

    def __post_init__(self):
        if self.future is None:
            raise ShapeError("a database structure needs its future trajectory")

    def __eq__(self, other):
        return self._eq_fields(other) and self.future == other.future

    __hash__ = None

    @property
    def p_pred(self):
        return len(self.future)

    def as_query(self):
        return QueryStructure(self.central_history, self.neighbors, self.obstacles,
                              self.transform, self.source_id)


class Canonical(NamedTuple):
    central_history: Trajectory
    neighbors: Tuple[Trajectory, ...]
    obstacles: Tuple[ObstaclePolygon, ...]
    transform: FrameTransform
    step_offset: int


def canonicalize(history: Trajectory, neighbors: Sequence[Trajectory],
                 obstacles: Sequence[ObstaclePolygon], config: Config) -> Canonical:
    """Express an observation window in the central agent's local frame.

    The last ``f_obs`` points of ``history`` are used. Neighbors are cut to the
    observation steps and split into in-window fragments; obstacles are
    clipped to the map extent.
    """
    f_obs = config.f_obs
    if len(history) < f_obs:
        raise InsufficientHistoryError(f"need {f_obs} observed steps, got {len(history)}")
    hist = history.between(history.end - f_obs + 1, history.end)
    rotation = heading_rotation(hist.xy)
    c, s = math.cos(rotation), math.sin(rotation)
    now = hist.xy[-1]
    ax, ay = config.anchor
    translation = (ax - (c * now[0] - s * now[1]), ay - (s * now[0] + c * now[1]))
    transform = FrameTransform((float(translation[0]), float(translation[1])), rotation)
    offset = 1 - hist.start
    window = (config.window_length, config.window_width)

    frags = []
    for nb in neighbors:
        part = nb.between(hist.start, hist.end)
        if part is None:
            continue
        frags.extend(clip_trajectory_to_window(transform_trajectory(part, transform, offset), window))

    rows, cols = config.grid_shape
    extent = (0.0, 0.0, cols * config.cell_size, rows * config.cell_size)
    clipped = []
    for poly in obstacles:
        moved = ObstaclePolygon(transform.apply(poly.vertices))
        clipped.extend(clip_polygon(moved, *extent))

    return Canonical(transform_trajectory(hist, transform, offset), tuple(frags),
                     tuple(clipped), transform, offset)


def make_query(history, neighbors, obstacles, config, source_id=None):
    canon = canonicalize(history, neighbors, obstacles, config)
    return QueryStructure(canon.central_history, canon.neighbors, canon.obstacles,
                          canon.transform, source_id)


def make_structure(history, future, neighbors, obstacles, config, source_id):
    canon = canonicalize(history, neighbors, obstacles, config)
    fut = transform_trajectory(future, canon.transform, canon.step_offset)
    return DatabaseStructure(canon.central_history, canon.neighbors, canon.obstacles,
                             canon.transform, source_id, fut)
