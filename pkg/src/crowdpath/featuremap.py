"""The probabilistic feature map: a grid of passage weights built from layers.

Each layer returns a per-cell delta (or, for obstacles, a blocked mask).
``compose`` adds the deltas to the initial weight with ``math.fsum`` so the
result is independent of layer order, and forces blocked cells to -inf.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .config import Config
from .errors import NoPathError, ShapeError
from .grid import GridGeometry, blocked_mask, cell_center, cell_centers, cell_of
from .matching import agent_kinematics, front_or_behind, influence
from .personality import STATIONARY

__all__ = [
    "FeatureMap", "Destination", "MapLayers", "init_map", "cell_of", "cell_center",
    "layer_neighbors", "layer_obstacles", "layer_candidates", "predict_destination",
    "layer_destination", "layer_personality", "compose", "build_feature_map",
]


@dataclass(frozen=True, eq=False)
class FeatureMap:
    geometry: GridGeometry
    weights: np.ndarray      # (rows, cols); -inf marks blocked cells
    w_initial: float = 5.0

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.shape != self.geometry.shape:
            raise ShapeError(f"weights {w.shape} do not match grid {self.geometry.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def blocked(self):
        return np.isneginf(self.weights)

    @property
    def shape(self):
        return self.geometry.shape


class Destination(NamedTuple):
    point: Tuple[float, float]
    clamped: bool


def _future_xy(c):
    """Future positions of a candidate (Candidate, structure or Trajectory)."""
    obj = getattr(c, "structure", c)
    obj = getattr(obj, "future", obj)
    return np.asarray(getattr(obj, "xy", obj), dtype=np.float64)


def init_map(q, config):
    geom = GridGeometry.from_config(config)
    return FeatureMap(geom, np.full(geom.shape, float(config.w_initial)), config.w_initial)


def _cells_from(contributions, geom, sign=1.0):
    delta = np.zeros(geom.shape)
    for cell, values in contributions.items():
        delta[cell] = sign * math.fsum(values)
    return delta


def layer_neighbors(q, config):
    """Negative delta on cells occupied by neighbors, decayed by 0.1 per step of age."""
    geom = GridGeometry.from_config(config)
    central = q.central_history.xy
    f = len(central)
    first = q.central_history.start
    speeds, headings = agent_kinematics(central, q.central_history.dt, config.v_min)
    contributions = defaultdict(list)
    for frag in q.neighbors:
        for step, pos in zip(frag.steps, frag.xy):
            i = int(step) - first
            if not 0 <= i < f:
                continue
            cell = cell_of(pos, geom)
            if cell is None:
                continue
            m = central[i]
            d = math.hypot(pos[0] - m[0], pos[1] - m[1])
            imp = influence(speeds[i], d, front_or_behind(headings[i], m, pos))
            contributions[cell].append(0.1 ** (f - (i + 1)) * 3.0 * imp)
    return _cells_from(contributions, geom, -1.0)


def layer_obstacles(q, config):
    """Blocked-cell mask: cell centers inside (or on) any obstacle."""
    return blocked_mask(q.obstacles, GridGeometry.from_config(config))


def layer_candidates(candidates, config, p_pred=None):
    """Rank bonuses (alpha, beta, gamma, ...) once per future step on the cell it occupies."""
    geom = GridGeometry.from_config(config)
    p = config.p_pred if p_pred is None else p_pred
    contributions = defaultdict(list)
    for rank, cand in enumerate(candidates, 1):
        bonus = config.rank_bonus(rank)
        for pos in _future_xy(cand)[:p]:
            cell = cell_of(pos, geom)
            if cell is not None:
                contributions[cell].append(bonus)
    return _cells_from(contributions, geom)


def _dest_weights(config):
    return (config.ws1, config.ws2, config.ws3)


def predict_destination(q, candidates, config, blocked=None, p_pred=None):
    """Blend of candidate endpoints and the reflected start point, as displacements.

    With ``dest_normalize`` the weights of the terms present are rescaled to
    sum to one; with ``dcs_scale`` the reflected start is stretched from the
    observed duration to the prediction horizon.
    """
    geom = GridGeometry.from_config(config)
    p = config.p_pred if p_pred is None else p_pred
    hist = q.central_history.xy
    now = hist[-1]
    dcs = now - hist[0]
    if config.dcs_scale and len(hist) > 1:
        dcs = dcs * (p / (len(hist) - 1))
    terms = [(config.wcs, dcs)]
    for w, cand in zip(_dest_weights(config), candidates):
        fut = _future_xy(cand)[:p]
        terms.append((w, fut[-1] - now))
    total = sum(w for w, _ in terms)
    disp = np.zeros(2)
    for w, vec in terms:
        disp = disp + w * vec
    if config.dest_normalize and total > 0:
        disp = disp / total
    point = now + disp

    if blocked is None:
        blocked = blocked_mask(q.obstacles, geom)
    cell = cell_of(point, geom)
    if cell is not None and not blocked[cell]:
        return Destination((float(point[0]), float(point[1])), False)
    free = np.argwhere(~blocked)
    if len(free) == 0:
        raise NoPathError("every cell of the map is blocked")
    cx, cy = cell_centers(geom)
    d2 = (cx[~blocked] - point[0]) ** 2 + (cy[~blocked] - point[1]) ** 2
    r, c = free[int(np.argmin(d2))]
    return Destination(cell_center(int(r), int(c), geom), True)


def layer_destination(dest, config):
    geom = GridGeometry.from_config(config)
    delta = np.zeros(geom.shape)
    cell = cell_of(dest.point if isinstance(dest, Destination) else dest, geom)
    if cell is not None:
        delta[cell] = config.eps_dest
    return delta


class PersonalityLayers(NamedTuple):
    linearity: np.ndarray
    speed: np.ndarray
    distance: np.ndarray

    @property
    def total(self):
        out = np.empty_like(self.linearity)
        for idx in np.ndindex(out.shape):
            out[idx] = math.fsum((self.linearity[idx], self.speed[idx], self.distance[idx]))
        return out


def _present_neighbors(q):
    """Last positions of the neighbor fragments observed at the final step."""
    last = q.central_history.end
    return [frag.xy[-1] for frag in q.neighbors if frag.end == last]


def layer_personality(pers, dest, q, config, p_pred=None):
    geom = GridGeometry.from_config(config)
    p = config.p_pred if p_pred is None else p_pred
    cx, cy = cell_centers(geom)
    ox, oy = (float(v) for v in q.current_position)
    dx_, dy_ = (float(v) for v in (dest.point if isinstance(dest, Destination) else dest))

    chord = abs(dx_ - ox)
    if chord != 0:
        y_line = oy + (dy_ - oy) * (cx - ox) / (dx_ - ox)
        lin = 100.0 * np.abs(cy - y_line) / chord
    elif (dy_ - oy) ** 2 > 0:
        lin = np.zeros(geom.shape)
    else:
        lin = np.full(geom.shape, STATIONARY)
    phi_l = np.where((lin <= pers.l) & (lin != STATIONARY), float(config.mu), 0.0)

    reach = pers.v * (p * config.dt)
    ex, ey = cx - ox, cy - oy
    phi_v = np.where(ex * ex + ey * ey <= reach * reach, float(config.nu), 0.0)

    near = np.zeros(geom.shape, dtype=bool)
    if pers.d > 0:
        if config.n_factor_reference == "self":
            refs = [(ox, oy)]
        else:
            refs = _present_neighbors(q)
        for rx, ry in refs:
            ux, uy = cx - rx, cy - ry
            near |= ux * ux + uy * uy <= pers.d * pers.d
    phi_near = np.where(near, float(config.eta_near), 0.0)
    return PersonalityLayers(phi_l, phi_v, phi_near)


def compose(base, *layers):
    """Initial weights plus every delta layer; boolean layers mark blocked cells."""
    geom = base.geometry
    deltas, blocked = [], np.zeros(geom.shape, dtype=bool)
    for layer in layers:
        arr = np.asarray(layer)
        if arr.shape != geom.shape:
            raise ShapeError(f"layer shape {arr.shape} does not match grid {geom.shape}")
        if arr.dtype == bool:
            blocked |= arr
        else:
            deltas.append(arr.astype(np.float64))
    w0 = np.where(np.isneginf(base.weights), base.w_initial, base.weights)
    stack = np.stack([w0] + deltas).reshape(len(deltas) + 1, -1)
    weights = np.array([math.fsum(col) for col in stack.T]).reshape(geom.shape)
    weights[blocked | np.isneginf(base.weights)] = -np.inf
    return FeatureMap(geom, weights, base.w_initial)


class MapLayers(NamedTuple):
    neighbors: np.ndarray
    obstacles: np.ndarray
    candidates: np.ndarray
    destination: np.ndarray
    personality: Optional[PersonalityLayers]
    dest: Destination


def build_feature_map(q, candidates, pers, config, p_pred=None):
    """All layers for one query and the composed map. ``pers=None`` drops personality."""
    base = init_map(q, config)
    blocked = layer_obstacles(q, config)
    dest = predict_destination(q, candidates, config, blocked, p_pred)
    phi_in = layer_neighbors(q, config)
    phi_c = layer_candidates(candidates, config, p_pred)
    phi_d = layer_destination(dest, config)
    phi_p = None
    parts = [phi_in, blocked, phi_c, phi_d]
    if pers is not None:
        phi_p = layer_personality(pers, dest, q, config, p_pred)
        parts.append(phi_p.total)
    return compose(base, *parts), MapLayers(phi_in, blocked, phi_c, phi_d, phi_p, dest)
