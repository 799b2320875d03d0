"""Structure similarity and the representative-tree retrieval index.

Retrieval is two-stage. Every stored structure hangs off its nearest
representative, keyed by ``central_distance`` to it. Because that distance
is a metric, a query only needs to look at keys within ``delta`` of its own
distance to each representative; the survivors are then ranked by the
richer (non-metric) ``similarity`` score.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .config import Config
from .errors import ConfigError, DomainError, FormatError, ShapeError
from .grid import GridGeometry, blocked_mask, pack_mask

FRONT = "front"
BEHIND = "behind"


def influence(v, d, relative_position=FRONT):
    """Influence of a pedestrian at distance ``d`` on an agent walking at speed ``v``."""
    if not v > 0:
        raise DomainError(f"speed must be positive, got {v!r}")
    if not d >= 0:
        raise DomainError(f"distance must be non-negative, got {d!r}")
    lateral = math.exp(-0.5 * d * d / (2.0 / v))
    if relative_position == FRONT:
        return lateral * math.exp(-0.5 * d * d / v)
    if relative_position == BEHIND:
        return lateral * math.exp(-0.5 * d * d / (1.0 / (2.0 * v)))
    raise ValueError(f"relative_position must be 'front' or 'behind', not {relative_position!r}")


def front_or_behind(heading, m_pos, n_pos):
    """'front' iff n lies in the agent's forward half-plane (lateral counts as front)."""
    if heading is None or (heading[0] == 0 and heading[1] == 0):
        return FRONT
    dot = heading[0] * (n_pos[0] - m_pos[0]) + heading[1] * (n_pos[1] - m_pos[1])
    return FRONT if dot >= 0 else BEHIND


def agent_kinematics(xy, dt, v_min):
    """Per-step speed (m/s, floored at v_min) and heading of a position sequence.

    Step 0 reuses step 1's displacement; a zero displacement keeps the last
    non-zero heading (None if there was none yet).
    """
    xy = np.asarray(xy, dtype=np.float64)
    n = len(xy)
    speeds, headings = [], []
    last = None
    for i in range(n):
        if n < 2:
            disp = (0.0, 0.0)
        else:
            j = max(i, 1)
            disp = (xy[j, 0] - xy[j - 1, 0], xy[j, 1] - xy[j - 1, 1])
        speeds.append(max(math.hypot(disp[0], disp[1]) / dt, v_min))
        if disp[0] != 0 or disp[1] != 0:
            last = disp
        headings.append(last)
    return speeds, headings


def central_distance(a, b):
    """Mean pointwise Euclidean distance between two central histories (a metric)."""
    xa = a.central_history.xy
    xb = b.central_history.xy
    if xa.shape != xb.shape:
        raise ShapeError(f"histories differ in length: {len(xa)} vs {len(xb)}")
    diff = xa - xb
    return float(np.mean(np.sqrt(diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1])))


def central_distances(q_xy, stacked):
    """``central_distance`` from one history to each of an (N, f, 2) stack."""
    diff = stacked - q_xy[None]
    return np.mean(np.sqrt(diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]), axis=-1)


# --------------------------------------------------------------------------
# similarity

class Features(NamedTuple):
    central: np.ndarray          # (f, 2)
    nb_xy: np.ndarray            # (n, f, 2), NaN where a fragment has no point
    nb_present: np.ndarray       # (n, f) bool
    nb_weight: np.ndarray        # (n,) influence at each fragment's last point
    obstacle_bits: int


def structure_features(s, config):
    central = s.central_history.xy
    f = len(central)
    first = s.central_history.start
    n = len(s.neighbors)
    nb_xy = np.full((n, f, 2), np.nan)
    present = np.zeros((n, f), dtype=bool)
    weights = np.zeros(n)
    speeds, headings = agent_kinematics(central, s.central_history.dt, config.v_min)
    for i, frag in enumerate(s.neighbors):
        idx = frag.steps - first
        ok = (idx >= 0) & (idx < f)
        nb_xy[i, idx[ok]] = frag.xy[ok]
        present[i, idx[ok]] = True
        if ok.any():
            t = int(idx[ok][-1])
            pos = frag.xy[ok][-1]
            d = math.hypot(pos[0] - central[t, 0], pos[1] - central[t, 1])
            side = front_or_behind(headings[t], central[t], pos)
            weights[i] = influence(speeds[t], d, side)
    bits = pack_mask(blocked_mask(s.obstacles, GridGeometry.from_config(config)))
    return Features(central, nb_xy, present, weights, bits)


def _central_kernel(qc, ac, sigma):
    diff = qc - ac
    sq = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]
    return float(np.mean(np.exp(-sq / (2.0 * sigma * sigma))))


def _neighbor_kernel(fq, fa, sigma):
    nq, na = len(fq.nb_weight), len(fa.nb_weight)
    if nq == 0 and na == 0:
        return 1.0
    if nq == 0 or fq.nb_weight.sum() <= 0:
        return 0.0
    if na == 0:
        return 0.0
    diff = fq.nb_xy[:, None] - fa.nb_xy[None, :]
    sq = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]
    both = fq.nb_present[:, None] & fa.nb_present[None, :]
    either = fq.nb_present[:, None] | fa.nb_present[None, :]
    k = np.where(both, np.exp(-np.where(both, sq, 0.0) / (2.0 * sigma * sigma)), 0.0)
    pair = k.sum(axis=-1) / np.maximum(either.sum(axis=-1), 1)
    order = sorted(range(nq), key=lambda i: (-fq.nb_weight[i], i))
    used = np.zeros(na, dtype=bool)
    total = 0.0
    for i in order:
        row = np.where(used, -1.0, pair[i])
        j = int(np.argmax(row))
        if row[j] > 0:
            used[j] = True
            total += fq.nb_weight[i] * row[j]
    return float(total / fq.nb_weight.sum())


def _obstacle_kernel(bq, ba):
    union = (bq | ba).bit_count()
    if union == 0:
        return 1.0
    return (bq & ba).bit_count() / union


def similarity_from_features(fq, fa, config):
    if fq.central.shape != fa.central.shape:
        raise ShapeError(f"histories differ in length: {len(fq.central)} vs {len(fa.central)}")
    kc = _central_kernel(fq.central, fa.central, config.sigma)
    kn = _neighbor_kernel(fq, fa, config.sigma)
    ko = _obstacle_kernel(fq.obstacle_bits, fa.obstacle_bits)
    return 10.0 * (config.sim_w_central * kc + config.sim_w_neighbors * kn
                   + config.sim_w_obstacles * ko)


def similarity(q, a, config=None):
    """Score in [0, 10]: central-path, neighbor and obstacle agreement of two structures."""
    config = config or Config()
    return similarity_from_features(structure_features(q, config),
                                    structure_features(a, config), config)


# --------------------------------------------------------------------------
# index

@dataclass(frozen=True)
class Candidate:
    structure: object
    similarity: float
    rank: int
    db_index: int = -1


@dataclass(frozen=True)
class QueryStats:
    visited: int
    exact_evaluations: int
    total: int

    @property
    def visited_fraction(self):
        return self.visited / self.total if self.total else 0.0


def _stack_centrals(structures):
    return np.stack([s.central_history.xy for s in structures]) if structures else np.zeros((0, 0, 2))


def _chunked_distances(points, stacked, chunk=4096):
    """(len(points), len(stacked)) central distances, computed in row chunks."""
    out = np.empty((len(points), len(stacked)))
    for lo in range(0, len(stacked), chunk):
        block = stacked[lo:lo + chunk]
        for i, q in enumerate(points):
            out[i, lo:lo + chunk] = central_distances(q, block)
    return out


def select_representatives(db, m_rep, seed=0, sample_size=100):
    """Indices of ``m_rep`` mutually distant structures (greedy farthest-point)."""
    structures = getattr(db, "structures", db)
    n = len(structures)
    if m_rep < 1:
        raise ConfigError("m_rep must be at least 1")
    if m_rep > n:
        raise ConfigError(f"m_rep={m_rep} exceeds the database size {n}")
    stacked = _stack_centrals(structures)
    rng = np.random.default_rng(seed)
    sample = np.sort(rng.choice(n, size=min(sample_size, n), replace=False))
    spread = _chunked_distances(stacked[sample], stacked).mean(axis=0)
    chosen = [int(np.argmax(spread))]
    nearest = central_distances(stacked[chosen[0]], stacked)
    nearest[chosen[0]] = -1.0
    while len(chosen) < m_rep:
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, central_distances(stacked[nxt], stacked))
        nearest[chosen] = -1.0
    return chosen


class MatchIndex:
    """Representatives plus one key-sorted member list ("tree") per representative."""

    def __init__(self, db, representatives, trees, config=None, seed=None):
        self.db = db
        self.structures = db.structures
        self.config = config or db.params
        self.representatives = list(representatives)
        self.trees = trees          # list of (keys ascending, member indices)
        self.seed = seed
        self._stacked = _stack_centrals(self.structures)
        self._features = [None] * len(self.structures)

    def __len__(self):
        return len(self.structures)

    def features(self, i):
        feats = self._features[i]
        if feats is None:
            feats = self._features[i] = structure_features(self.structures[i], self.config)
        return feats

    def tree_sizes(self):
        return [len(keys) for keys, _ in self.trees]

    def query(self, q, k=None, delta=None):
        return query_top_k(self, q, k if k is not None else self.config.k,
                           delta if delta is not None else self.config.delta)

    # serialisation: uint32 m, int64 seed (-1 = unknown), m * int64 representative,
    # then per tree uint64 n, n * float64 key, n * int64 member
    def to_bytes(self):
        out = bytearray(struct.pack("<Iq", len(self.representatives),
                                    -1 if self.seed is None else self.seed))
        out += np.asarray(self.representatives, dtype="<i8").tobytes()
        for keys, members in self.trees:
            out += struct.pack("<Q", len(keys))
            out += np.asarray(keys, dtype="<f8").tobytes()
            out += np.asarray(members, dtype="<i8").tobytes()
        return bytes(out)

    @classmethod
    def from_bytes(cls, db, payload, config=None):
        try:
            m, seed = struct.unpack_from("<Iq", payload, 0)
            pos = 12
            reps = np.frombuffer(payload, dtype="<i8", count=m, offset=pos).astype(int).tolist()
            pos += 8 * m
            trees = []
            for _ in range(m):
                (n,) = struct.unpack_from("<Q", payload, pos)
                pos += 8
                keys = np.frombuffer(payload, dtype="<f8", count=n, offset=pos).astype(np.float64)
                pos += 8 * n
                members = np.frombuffer(payload, dtype="<i8", count=n, offset=pos).astype(np.int64)
                pos += 8 * n
                trees.append((keys, members))
        except (struct.error, ValueError) as exc:
            raise FormatError(f"corrupt index section: {exc}") from None
        if pos != len(payload):
            raise FormatError("trailing bytes in index section")
        covered = sorted(reps + [int(i) for _, mem in trees for i in mem])
        if covered != list(range(len(db))):
            raise FormatError("index does not cover the database exactly once")
        return cls(db, reps, trees, config, None if seed < 0 else seed)


def build_index(db, representatives=None, config=None, seed=None):
    """Assign every non-representative to its nearest representative's tree."""
    config = config or db.params
    seed = config.seed if seed is None else seed
    if representatives is None:
        representatives = select_representatives(db, min(config.m_rep, len(db)), seed)
    reps = [int(r) for r in representatives]
    stacked = _stack_centrals(db.structures)
    dist = _chunked_distances(stacked[reps], stacked)       # (m, N)
    owner = np.argmin(dist, axis=0)                          # first minimum wins ties
    is_rep = np.zeros(len(db), dtype=bool)
    is_rep[reps] = True
    trees = []
    for r in range(len(reps)):
        members = np.flatnonzero((owner == r) & ~is_rep)
        keys = dist[r, members]
        order = np.argsort(keys, kind="stable")
        trees.append((keys[order], members[order].astype(np.int64)))
    return MatchIndex(db, reps, trees, config, seed)


def _rank_key(item):
    sim, idx, sid = item
    return (-sim, sid, idx)


def query_top_k(index, q, k, delta):
    """Top-k structures by similarity among those the delta-range search visits.

    Any structure within ``delta * key_unit`` meters (central distance) of the
    query is guaranteed to be visited.
    """
    if k < 1:
        raise ConfigError("k must be at least 1")
    if not delta > 0:
        raise ConfigError("delta must be positive")
    n = len(index)
    if n == 0:
        return [], QueryStats(0, 0, 0)
    config = index.config
    fq = structure_features(q, config)
    if fq.central.shape != index._stacked.shape[1:]:
        raise ShapeError("query history length differs from the database's")
    radius = delta * config.key_unit
    eta = central_distances(fq.central, index._stacked[index.representatives])
    picked = [np.asarray(index.representatives, dtype=np.int64)]
    for r, (keys, members) in enumerate(index.trees):
        lo = np.searchsorted(keys, eta[r] - radius - 1e-9, side="left")
        hi = np.searchsorted(keys, eta[r] + radius + 1e-9, side="right")
        picked.append(members[lo:hi])
    visited = np.concatenate(picked)

    # cheap upper bound (neighbor and obstacle terms at their maximum) to skip exact scores
    diff = index._stacked[visited] - fq.central[None]
    sq = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]
    kc = np.mean(np.exp(-sq / (2.0 * config.sigma ** 2)), axis=-1)
    bound = 10.0 * (config.sim_w_central * kc + config.sim_w_neighbors
                    + config.sim_w_obstacles) + 1e-9
    order = np.argsort(-bound, kind="stable")

    best = []
    evaluations = 0
    for pos in order:
        if len(best) == k and bound[pos] < best[-1][0]:
            break
        i = int(visited[pos])
        sim = similarity_from_features(fq, index.features(i), config)
        evaluations += 1
        best.append((sim, i, index.structures[i].source_id))
        best.sort(key=_rank_key)
        del best[k:]
    cands = [Candidate(index.structures[i], sim, rank, i)
             for rank, (sim, i, _) in enumerate(best, 1)]
    return cands, QueryStats(len(visited), evaluations, n)


def linear_scan_top_k(structures, q, k, config):
    """Exhaustive reference ranking (same scoring and tie-break as the index)."""
    fq = structure_features(q, config)
    scored = [(similarity_from_features(fq, structure_features(s, config), config), i, s.source_id)
              for i, s in enumerate(structures)]
    scored.sort(key=_rank_key)
    return [Candidate(structures[i], sim, rank, i) for rank, (sim, i, _) in enumerate(scored[:k], 1)]
