"""Shortest-path prediction over the feature map."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .config import Config
from .core import Trajectory
from .errors import InsufficientHistoryError, NoPathError, PredictionError
from .featuremap import Destination, FeatureMap, build_feature_map
from .grid import GridGeometry, cell_center, cell_of
from .matching import QueryStats, query_top_k
from .personality import PersonalityVector, extract_personality

SQRT2 = math.sqrt(2.0)
_MOVES = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc]


@dataclass(frozen=True, eq=False)
class CostGrid:
    """Per-cell entry cost (> 0); ``inf`` marks impassable cells."""

    cost: np.ndarray

    @property
    def shape(self):
        return self.cost.shape

    def passable(self, cell):
        return bool(np.isfinite(self.cost[cell]))


def cost_grid(fmap, kappa=10.0, target=None):
    """``1 + kappa * (1 - normalised weight)``; the target cell is left out of the
    normalisation (its huge bonus would flatten everything else) and costs 1."""
    w = fmap.weights
    free = np.isfinite(w)
    if not free.any():
        raise NoPathError("every cell of the map is blocked")
    ref = free.copy()
    if target is not None:
        ref[target] = False
    cost = np.full(w.shape, np.inf)
    if ref.any():
        lo, hi = w[ref].min(), w[ref].max()
        if hi > lo:
            norm = np.clip((w - lo) / (hi - lo), 0.0, 1.0)
        else:
            norm = np.ones(w.shape)
        cost[free] = 1.0 + kappa * (1.0 - norm[free])
    else:
        cost[free] = 1.0
    if target is not None and free[target]:
        cost[target] = 1.0
    return CostGrid(cost)


def dijkstra(grid, start):
    """Single-source costs and predecessors on the 8-connected grid.

    Diagonal moves are refused when both orthogonal cells beside them are
    impassable. Among equal-cost predecessors the lexicographically smallest
    ``(row, col)`` is kept.
    """
    cost = grid.cost
    rows, cols = cost.shape
    dist = np.full((rows, cols), np.inf)
    pred = {}
    dist[start] = 0.0
    heap = [(0.0, start)]
    done = np.zeros((rows, cols), dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        r, c = u
        for dr, dc in _MOVES:
            v = (r + dr, c + dc)
            if not (0 <= v[0] < rows and 0 <= v[1] < cols) or done[v]:
                continue
            cv = cost[v]
            if not np.isfinite(cv):
                continue
            if dr and dc:
                if not np.isfinite(cost[r + dr, c]) and not np.isfinite(cost[r, c + dc]):
                    continue
                nd = d + SQRT2 * cv
            else:
                nd = d + cv
            if nd < dist[v] or (nd == dist[v] and u < pred[v]):
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, pred


def _trace(pred, start, dest):
    path = [dest]
    while path[-1] != start:
        path.append(pred[path[-1]])
    path.reverse()
    return path


def shortest_path(grid, start, dest):
    """Minimum-cost cell path from ``start`` to ``dest`` and its cost."""
    start, dest = tuple(start), tuple(dest)
    if not grid.passable(start) or not grid.passable(dest):
        raise NoPathError("start or destination cell is impassable")
    if start == dest:
        return [start], 0.0
    dist, pred = dijkstra(grid, start)
    if not np.isfinite(dist[dest]):
        raise NoPathError(f"cell {dest} is unreachable from {start}")
    return _trace(pred, start, dest), float(dist[dest])


def resample_path(cells, geom, p_pred, transform=None, start_point=None, end_point=None,
                  first_step=1, dt=0.4):
    """Walk the path at uniform speed and take ``p_pred`` equally spaced samples.

    The polyline starts at ``start_point`` (default: first cell center), goes
    through the remaining cell centers and, if given, ends at ``end_point``
    instead of the last center. Samples are mapped back through ``transform``.
    """
    pts = [cell_center(r, c, geom) for r, c in cells]
    if start_point is not None:
        pts[0] = tuple(start_point)
    if end_point is not None and len(pts) > 1:
        pts[-1] = tuple(end_point)
    pts = np.asarray(pts, dtype=np.float64)
    seg = np.hypot(*np.diff(pts, axis=0).T) if len(pts) > 1 else np.zeros(0)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0:
        out = np.repeat(pts[:1], p_pred, axis=0)
    else:
        s = total * np.arange(1, p_pred + 1) / p_pred
        out = np.column_stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])])
    if transform is not None:
        out = transform.invert(out)
    return Trajectory(np.arange(first_step, first_step + p_pred), out, dt)


@dataclass(frozen=True, eq=False)
class PredictionResult:
    trajectory: Trajectory
    destination: Destination
    candidates: list
    personality: Optional[PersonalityVector]
    stats: QueryStats
    path_cost: float
    path: List[Tuple[int, int]] = field(default_factory=list)
    retargeted: bool = False
    feature_map: Optional[FeatureMap] = None
    layers: object = None


def query_personality(q, config, history=None, neighbor_positions=None):
    """Personality from a long-term scene-frame history, or from the query itself."""
    if history is not None:
        xy = q.transform.apply(np.asarray(getattr(history, "xy", history), dtype=np.float64))
        nbs = neighbor_positions
        if nbs is not None:
            nbs = [q.transform.apply(np.asarray(n, dtype=np.float64).reshape(-1, 2)) for n in nbs]
        return extract_personality(xy, nbs, config.dt, config.f_obs)
    first = q.central_history.start
    per_step = [[] for _ in range(len(q.central_history))]
    for frag in q.neighbors:
        for step, pos in zip(frag.steps, frag.xy):
            per_step[int(step) - first].append(pos)
    return extract_personality(q.central_history.xy, per_step, config.dt, config.f_obs)


def plan(q, candidates, pers, config, p_pred=None, stats=None):
    """Feature map -> cost grid -> Dijkstra -> resampled trajectory (scene frame)."""
    p = config.p_pred if p_pred is None else p_pred
    fmap, layers = build_feature_map(q, candidates, pers, config, p)
    geom = fmap.geometry
    start = cell_of(q.current_position, geom)
    dest = layers.dest
    target = cell_of(dest.point, geom)
    grid = cost_grid(fmap, config.kappa, target)
    if not grid.passable(start):
        # the agent stands in a blocked cell (annotation noise): let it leave
        grid.cost[start] = 1.0 + config.kappa
    dist, pred = dijkstra(grid, start)
    retargeted = False
    end_point = dest.point
    if not np.isfinite(dist[target]):
        reach = np.argwhere(np.isfinite(dist))
        centers = np.array([cell_center(r, c, geom) for r, c in reach])
        d2 = ((centers - np.asarray(dest.point)) ** 2).sum(axis=1)
        target = tuple(int(v) for v in reach[int(np.argmin(d2))])
        end_point = None
        retargeted = True
    path = [start] if target == start else _trace(pred, start, target)
    traj = resample_path(path, geom, p, q.transform, q.current_position, end_point,
                         first_step=q.central_history.end + 1, dt=q.central_history.dt)
    return PredictionResult(traj, dest, list(candidates), pers,
                            stats or QueryStats(0, 0, 0), float(dist[target]), path,
                            retargeted, fmap, layers)


def predict(q, index, config=None, history=None, neighbor_positions=None, p_pred=None,
            use_personality=None, candidates=None, stats=None):
    """Full pipeline for one query structure.

    ``history``/``neighbor_positions`` are the agent's long-term scene-frame
    track and, per step, the co-present pedestrians; without them personality
    comes from the query window. Pre-computed ``candidates`` skip retrieval.
    """
    if index is None or len(index) == 0:
        raise PredictionError("cannot predict from an empty database")
    config = config or index.config
    if len(q.central_history) != index.config.f_obs:
        raise InsufficientHistoryError(
            f"query has {len(q.central_history)} observed steps, index expects {index.config.f_obs}")
    p = config.p_pred if p_pred is None else p_pred
    if p > index.config.p_pred:
        raise PredictionError(f"horizon of {p} steps exceeds the database's {index.config.p_pred}")
    if candidates is None:
        candidates, stats = query_top_k(index, q, config.k, config.delta)
    use_personality = config.use_personality if use_personality is None else use_personality
    pers = query_personality(q, config, history, neighbor_positions) if use_personality else None
    return plan(q, candidates, pers, config, p, stats)
