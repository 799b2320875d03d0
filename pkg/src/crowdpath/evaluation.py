"""ADE/FDE metrics, baselines and the benchmark harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .config import Config
from .core import Trajectory, make_query
from .errors import InsufficientHistoryError, PredictionError, ShapeError
from .ingest import CrowdDatabase
from .matching import build_index, query_top_k
from .planner import predict

METHODS = ("full", "nopers", "linear", "sim1", "simk")
RETRIEVAL_METHODS = ("full", "nopers", "sim1", "simk")


def _xy(t):
    return np.asarray(getattr(t, "xy", t), dtype=np.float64).reshape(-1, 2)


def _check(pred, gt):
    a, b = _xy(pred), _xy(gt)
    if len(a) != len(b) or len(a) == 0:
        raise ShapeError(f"trajectories must have equal non-zero length ({len(a)} vs {len(b)})")
    return a, b


def ade(pred, gt):
    """Mean Euclidean distance over aligned steps."""
    a, b = _check(pred, gt)
    return float(np.mean(np.hypot(a[:, 0] - b[:, 0], a[:, 1] - b[:, 1])))


def fde(pred, gt):
    """Euclidean distance between final points."""
    a, b = _check(pred, gt)
    return float(math.hypot(a[-1, 0] - b[-1, 0], a[-1, 1] - b[-1, 1]))


@dataclass(frozen=True)
class Metrics:
    ade: float
    fde: float
    n_samples: int
    success_rate: Optional[float] = None


def linear_baseline(history, p_pred):
    """Least-squares straight-line fit of x(t) and y(t), extrapolated p_pred steps."""
    if not isinstance(history, Trajectory):
        history = Trajectory.from_xy(history)
    if len(history) < 2:
        raise InsufficientHistoryError("the linear baseline needs at least 2 points")
    t = history.steps.astype(np.float64)
    tm = t.mean()
    xy = history.xy
    centered = t - tm
    slope = (centered[:, None] * (xy - xy.mean(axis=0))).sum(axis=0) / (centered ** 2).sum()
    steps = np.arange(history.end + 1, history.end + p_pred + 1)
    out = xy.mean(axis=0) + slope * (steps.astype(np.float64) - tm)[:, None]
    return Trajectory(steps, out, history.dt)


def rank_weights(n, config):
    w = np.array([config.rank_bonus(r) for r in range(1, n + 1)], dtype=np.float64)
    return w / w.sum()


def blend_futures(q, candidates, config, p_pred=None):
    """Rank-weighted average of candidate futures, mapped to the query's scene frame."""
    if not candidates:
        raise PredictionError("no candidates to average")
    p = config.p_pred if p_pred is None else p_pred
    w = rank_weights(len(candidates), config)
    futures = np.stack([c.structure.future.xy[:p] for c in candidates])
    mean = np.tensordot(w, futures, axes=1)
    end = q.central_history.end
    return Trajectory(np.arange(end + 1, end + p + 1), q.transform.invert(mean),
                      q.central_history.dt)


def sim_k_baseline(q, index, k, config=None, p_pred=None):
    config = config or index.config
    if len(index) == 0:
        raise PredictionError("cannot retrieve from an empty database")
    cands, _ = query_top_k(index, q, k, config.delta)
    return blend_futures(q, cands, config, p_pred)


# --------------------------------------------------------------------------
# samples

class Sample(NamedTuple):
    scene: str
    ped: int
    frame: int
    query: object
    truth: Trajectory
    history: Trajectory                 # long-term track up to the current step
    neighbor_positions: list            # per history step, co-present positions


def make_sample(scene, ped, end_step, config, p_pred=None):
    """Observation window ending at ``end_step`` for pedestrian ``ped``.

    ``truth`` is None unless the track continues for ``p_pred`` more steps.
    """
    p = config.p_pred if p_pred is None else p_pred
    traj = scene.trajectories[ped]
    f = config.f_obs
    lo = end_step - f + 1
    if lo < traj.start or end_step > traj.end:
        raise InsufficientHistoryError(
            f"pedestrian {ped} has no {f}-step history ending at step {end_step}")
    others = [t for pid, t in scene.trajectories.items()
              if pid != ped and t.start <= end_step and t.end >= lo]
    q = make_query(traj.between(lo, end_step), others, scene.obstacles, config,
                   (scene.name, int(ped), scene.frame_of(end_step)))
    truth = traj.between(end_step + 1, end_step + p)
    if truth is not None and len(truth) < p:
        truth = None
    history = traj.between(traj.start, end_step)
    nbs = [scene.positions_at(int(s), exclude=ped) for s in history.steps]
    return Sample(scene.name, int(ped), scene.frame_of(end_step), q, truth, history, nbs)


def sample_keys(scene, config, p_pred=None, stride=1):
    """(pedestrian, end step) pairs with a full observation window and future."""
    p = config.p_pred if p_pred is None else p_pred
    f = config.f_obs
    return [(ped, e) for ped, traj in scene.trajectories.items()
            for e in range(traj.start + f - 1, traj.end - p + 1, stride)]


def evaluation_samples(scene, config, p_pred=None, stride=1, max_samples=None, seed=0):
    keys = _subsample(sample_keys(scene, config, p_pred, stride), max_samples, seed)
    return [make_sample(scene, ped, e, config, p_pred) for ped, e in keys]


# --------------------------------------------------------------------------
# benchmark

class MetricsRow(NamedTuple):
    method: str
    scene: str
    horizon: float
    ade: float
    fde: float
    n: int
    success_rate: Optional[float] = None
    mean_visited: Optional[float] = None
    db_size: Optional[int] = None


class SamplePrediction(NamedTuple):
    sample_id: str
    method: str
    horizon: float
    pred: Trajectory
    truth: Trajectory


@dataclass
class BenchmarkReport:
    rows: List[MetricsRow] = field(default_factory=list)
    skipped: List[Tuple[str, float]] = field(default_factory=list)
    predictions: List[SamplePrediction] = field(default_factory=list)

    def average(self, method, horizon):
        sel = [r for r in self.rows if r.method == method and r.horizon == horizon]
        if not sel:
            return None
        return Metrics(float(np.mean([r.ade for r in sel])), float(np.mean([r.fde for r in sel])),
                       sum(r.n for r in sel))

    def methods(self):
        return list(dict.fromkeys(r.method for r in self.rows))

    def horizons(self):
        return list(dict.fromkeys(r.horizon for r in self.rows))

    def table(self):
        lines = [f"{'method':8s} {'scene':12s} {'horizon':>7s} {'ADE':>7s} {'FDE':>7s} {'n':>6s}"]
        for r in self.rows:
            lines.append(f"{r.method:8s} {r.scene:12s} {r.horizon:7.1f} {r.ade:7.3f} {r.fde:7.3f} {r.n:6d}")
        for h in self.horizons():
            for m in self.methods():
                avg = self.average(m, h)
                lines.append(f"{m:8s} {'AVG':12s} {h:7.1f} {avg.ade:7.3f} {avg.fde:7.3f} {avg.n_samples:6d}")
        return "\n".join(lines)


def horizon_steps(horizon, dt):
    steps = horizon / dt
    if abs(steps - round(steps)) > 1e-6:
        raise ShapeError(f"horizon {horizon}s is not a multiple of dt={dt}s")
    return int(round(steps))


def _subsample(samples, max_samples, seed):
    if max_samples is None or len(samples) <= max_samples:
        return samples
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(samples), size=max_samples, replace=False))
    return [samples[i] for i in keep]


def run_benchmark(scenes, db, config=None, methods=METHODS, horizons=(3.2,),
                  leave_one_out=True, max_samples=None, success_threshold=None,
                  keep_predictions=False, index_cache=None):
    """Evaluate ``methods`` on every scene at every horizon.

    With ``leave_one_out`` the retrieval database for a scene excludes every
    structure extracted from that scene.
    """
    config = config or db.params
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    report = BenchmarkReport()
    index_cache = {} if index_cache is None else index_cache
    for scene in scenes:
        need_index = any(m in RETRIEVAL_METHODS for m in methods)
        index = None
        if need_index:
            key = scene.name if leave_one_out else None
            if key not in index_cache:
                sub = db.without_scene(scene.name) if leave_one_out else db
                index_cache[key] = build_index(sub, config=_index_config(config, sub)) if len(sub) else None
            index = index_cache[key]
        for horizon in horizons:
            p = horizon_steps(horizon, config.dt)
            if need_index and p > db.params.p_pred:
                raise PredictionError(f"horizon {horizon}s needs {p} future steps; "
                                      f"the database stores {db.params.p_pred}")
            samples = evaluation_samples(scene, config, p, max_samples=max_samples, seed=config.seed)
            if not samples or (need_index and index is None):
                report.skipped.append((scene.name, horizon))
                continue
            errors = {m: ([], []) for m in methods}
            visited = []
            for s in samples:
                preds = _predict_sample(s, index, config, methods, p, visited)
                sid = f"{s.scene}:{s.ped}:{s.frame}"
                for m, traj in preds.items():
                    errors[m][0].append(ade(traj, s.truth))
                    errors[m][1].append(fde(traj, s.truth))
                    if keep_predictions:
                        report.predictions.append(SamplePrediction(sid, m, horizon, traj, s.truth))
            for m in methods:
                a, f = errors[m]
                success = None
                if success_threshold is not None:
                    success = float(np.mean(np.asarray(f) < success_threshold))
                retrieval = m in RETRIEVAL_METHODS
                report.rows.append(MetricsRow(
                    m, scene.name, horizon, float(np.mean(a)), float(np.mean(f)), len(a), success,
                    float(np.mean(visited)) if retrieval and visited else None,
                    len(index) if retrieval else None))
    return report


def _index_config(config, db):
    return config.replace(m_rep=min(config.m_rep, len(db)))


def _predict_sample(sample, index, config, methods, p, visited):
    out = {}
    cands = stats = None
    if any(m in RETRIEVAL_METHODS for m in methods):
        k = max(config.k, 3 if "simk" in methods else 1)
        cands, stats = query_top_k(index, sample.query, k, config.delta)
        visited.append(stats.visited)
    for m in methods:
        if m == "linear":
            h = sample.history
            out[m] = linear_baseline(h.between(h.end - config.f_obs + 1, h.end), p)
        elif m == "sim1":
            out[m] = blend_futures(sample.query, cands[:1], config, p)
        elif m == "simk":
            out[m] = blend_futures(sample.query, cands[:config.k], config, p)
        elif m in ("full", "nopers"):
            res = predict(sample.query, index, config, sample.history, sample.neighbor_positions,
                          p, use_personality=(m == "full"), candidates=cands[:config.k], stats=stats)
            out[m] = res.trajectory
    return out


# --------------------------------------------------------------------------
# ablations and sweeps

def candidate_sweep(scenes, db, config=None, ks=(1, 2, 3, 4, 5), horizon=3.2, **kwargs):
    """Full-model average ADE/FDE for each candidate count k."""
    config = config or db.params
    cache = {}
    rows = []
    for k in ks:
        rep = run_benchmark(scenes, db, config.replace(k=k), ("full",), (horizon,),
                            index_cache=cache, **kwargs)
        avg = rep.average("full", horizon)
        rows.append((k, avg.ade, avg.fde))
    return rows


def destination_weight_sweep(scenes, db, config=None, values=(0.0, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0),
                             horizon=3.2, **kwargs):
    """Vary each destination weight alone; rows of (weight name, value, ADE, FDE)."""
    config = config or db.params
    cache = {}
    rows = []
    for name in ("ws1", "ws2", "ws3", "wcs"):
        for v in values:
            rep = run_benchmark(scenes, db, config.replace(**{name: v}), ("full",), (horizon,),
                                index_cache=cache, **kwargs)
            avg = rep.average("full", horizon)
            rows.append((name, v, avg.ade, avg.fde))
    return rows


def personality_ablation(scenes, db, config=None, horizons=(3.2,), **kwargs):
    """ADE with and without the personality layer, per scene and on average."""
    rep = run_benchmark(scenes, db, config, ("nopers", "full"), horizons, **kwargs)
    return rep


def index_efficiency(db, rep_counts=(5, 10, 15, 20, 25, 28, 30, 35, 40), queries=None,
                     config=None, n_probe=200, seed=0):
    """Mean visited count per query as a function of the representative count.

    Probe queries default to a seeded sample of the database's own structures.
    """
    config = config or db.params
    if queries is None:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(db), size=min(n_probe, len(db)), replace=False)
        queries = [db.structures[i].as_query() for i in np.sort(pick)]
    rows = []
    for m in rep_counts:
        if m > len(db):
            continue
        index = build_index(db, config=config.replace(m_rep=m), seed=seed)
        visited = [query_top_k(index, q, config.k, config.delta)[1].visited for q in queries]
        rows.append((m, float(np.mean(visited)), float(np.mean(visited)) / len(db)))
    return rows
