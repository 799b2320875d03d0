"""Command-line entry point: ``crowdpath <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import output
from .config import Config
from .errors import CrowdPathError
from .evaluation import (METHODS, SamplePrediction, horizon_steps, make_sample, run_benchmark)
from .featuremap import FeatureMap
from .grid import GridGeometry
from .ingest import (GEOMETRY_KEYS, CrowdDatabase, build_database, load_db, parse_obstacles,
                     read_container, read_scene, save_db)
from .matching import MatchIndex, build_index, query_top_k
from .planner import predict
from .synthetic import obstacles_to_text, scene_to_text, synthetic_scenes

log = logging.getLogger("crowdpath")


def _seed(args, default):
    env = os.environ.get("CROWDPATH_SEED")
    if env not in (None, ""):
        return int(env)
    return default if getattr(args, "seed", None) is None else args.seed


def _config(args):
    return Config.from_file(args.config) if getattr(args, "config", None) else Config()


def _pair_obstacles(scenes, obstacles):
    obstacles = list(obstacles or [])
    if obstacles and len(obstacles) not in (1, len(scenes)):
        raise CrowdPathError(f"got {len(obstacles)} obstacle files for {len(scenes)} scenes; "
                             "give one per scene (or a single shared file)")
    if len(obstacles) == 1 and len(scenes) > 1:
        obstacles = obstacles * len(scenes)
    return obstacles or [None] * len(scenes)


def _read_scenes(paths, obstacles, dt):
    return [read_scene(p, dt, obstacles_path=o) for p, o in zip(paths, _pair_obstacles(paths, obstacles))]


def open_database(path, config=None):
    """Database plus its stored index (built on the fly when the file has none)."""
    params, structures, payload = read_container(path)
    db = load_db(path, config) if config is not None else CrowdDatabase(structures, params)
    qconfig = _query_config(db.params, config)
    if payload is not None:
        return db, MatchIndex.from_bytes(db, payload, qconfig), True
    if len(db) == 0:
        return db, None, False
    return db, build_index(db, config=qconfig.replace(m_rep=min(qconfig.m_rep, len(db)))), False


def _query_config(params, config):
    """Stored geometry wins; the remaining (query-time) knobs come from ``config``."""
    if config is None:
        return params
    return config.replace(**{k: getattr(params, k) for k in GEOMETRY_KEYS})


# --------------------------------------------------------------------------
# subcommands

def cmd_build_db(args):
    config = _config(args)
    if args.stride is not None:
        config = config.replace(stride=args.stride)
    scenes = _read_scenes(args.scenes, args.obstacles, config.dt)
    db = build_database(scenes, config)
    save_db(db, args.out)
    print(f"{len(db)} structures from {len(scenes)} scene(s) -> {args.out}")
    return 0


def cmd_build_index(args):
    db = load_db(args.db)
    seed = _seed(args, db.params.seed)
    m = min(args.reps, len(db))
    index = build_index(db, config=db.params.replace(m_rep=m), seed=seed)
    save_db(db, args.out or args.db, index)
    print(f"index: {m} representatives, seed {seed}, tree sizes {index.tree_sizes()}")
    return 0


def cmd_inspect_index(args):
    db, index, stored = open_database(args.db)
    if index is None:
        print("database is empty")
        return 1
    sizes = index.tree_sizes()
    rng = np.random.default_rng(_seed(args, index.seed or 0))
    pick = np.sort(rng.choice(len(db), size=min(args.probes, len(db)), replace=False))
    visited = [query_top_k(index, db.structures[i].as_query(), index.config.k,
                           index.config.delta)[1].visited for i in pick]
    print(f"structures: {len(db)}")
    print(f"index: {'stored' if stored else 'not stored (built on the fly)'}")
    print(f"representatives: {len(index.representatives)}")
    print("tree sizes: " + " ".join(str(s) for s in sizes))
    print(f"probe queries: {len(pick)}")
    mean = float(np.mean(visited))
    print(f"mean visited: {mean:.1f} ({100.0 * mean / len(db):.2f}% of database)")
    return 0


def cmd_predict(args):
    config = _config(args) if args.config else None
    db, index, _ = open_database(args.db, config)
    config = index.config
    p = horizon_steps(args.horizon, config.dt)
    if args.no_personality:
        config = config.replace(use_personality=False)
    obstacles = [args.obstacles] if args.obstacles else None
    scene = _read_scenes([args.scene], obstacles, config.dt)[0]
    if args.ped not in scene.trajectories:
        raise CrowdPathError(f"pedestrian {args.ped} is not in {args.scene}")
    sample = make_sample(scene, args.ped, scene.step_of(args.frame), config, p)
    result = predict(sample.query, index, config, sample.history, sample.neighbor_positions, p)
    sid = f"{scene.name}:{args.ped}:{args.frame}"
    method = "full" if config.use_personality else "nopers"
    output.write_trajectory_csv([SamplePrediction(sid, method, args.horizon, result.trajectory,
                                                  sample.truth)], args.out)
    if args.svg:
        output.write_text(args.svg, output.overlay_svg(
            result.trajectory, sample.truth, sample.history.between(
                sample.history.end - config.f_obs + 1, sample.history.end),
            scene.obstacles, result.feature_map, sample.query.transform, title=sid))
    if args.dump_map:
        output.write_map_csv(result.feature_map, args.dump_map)
    end = result.trajectory.xy[-1]
    print(f"{sid}: {p} steps, endpoint ({end[0]:.3f}, {end[1]:.3f}), "
          f"{len(result.candidates)} candidates, visited {result.stats.visited}/{result.stats.total}"
          + (" (destination re-targeted)" if result.retargeted else ""))
    return 0


def cmd_evaluate(args):
    config = _config(args)
    db = load_db(args.db, config if args.config else None)
    config = _query_config(db.params, config).replace(seed=_seed(args, config.seed))
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    horizons = [float(h) for h in args.horizons.split(",") if h.strip()]
    scenes = _read_scenes(args.scenes, args.obstacles, config.dt)
    report = run_benchmark(scenes, db, config, methods, horizons,
                           leave_one_out=not args.no_leave_one_out,
                           max_samples=args.max_samples,
                           success_threshold=args.success_threshold,
                           keep_predictions=bool(args.trajectories or args.svg_dir))
    output.write_metrics_csv(report, args.out)
    if args.trajectories:
        output.write_trajectory_csv(report.predictions, args.trajectories)
    if args.svg_dir:
        output.emit_outputs(report, args.svg_dir, scenes, svg=True)
    for name, h in report.skipped:
        print(f"skipped {name} at {h:g}s: no valid samples")
    print(report.table())
    return 0


def cmd_plot(args):
    if args.map:
        w = output.read_map_csv(args.map)
        geom = GridGeometry(w.shape[0], w.shape[1], args.cell_size)
        output.write_text(args.out, output.map_svg(FeatureMap(geom, w)))
        return 0
    with open(args.trajectories, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.DictReader(fh) if not args.sample or r["sample_id"] == args.sample]
    if not rows:
        raise CrowdPathError("no matching rows in the trajectory CSV")
    sid, method = rows[0]["sample_id"], rows[0]["method"]
    rows = [r for r in rows if r["sample_id"] == sid and r["method"] == method]
    pred = np.array([(float(r["pred_x"]), float(r["pred_y"])) for r in rows])
    gt = None
    if all(r["gt_x"] for r in rows):
        gt = np.array([(float(r["gt_x"]), float(r["gt_y"])) for r in rows])
    obstacles = ()
    if args.obstacles:
        with open(args.obstacles, encoding="utf-8") as fh:
            obstacles = tuple(parse_obstacles(fh))
    output.write_text(args.out, output.overlay_svg(pred, gt, obstacles=obstacles,
                                                   title=f"{sid} {method}"))
    return 0


def cmd_synth(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [n.strip() for n in args.names.split(",")]
    for scene in synthetic_scenes(names, seed=_seed(args, 0), duration=args.duration):
        (out / f"{scene.name}.txt").write_text(scene_to_text(scene))
        (out / f"{scene.name}_obstacles.txt").write_text(obstacles_to_text(scene.obstacles))
        print(f"{scene.name}: {len(scene.trajectories)} pedestrians")
    return 0


# --------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="crowdpath",
                                 description="Example-based pedestrian trajectory prediction.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-db", help="extract structures from annotated scenes")
    p.add_argument("--scenes", nargs="+", required=True)
    p.add_argument("--obstacles", nargs="*", default=[])
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--stride", type=int)
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("build-index", help="select representatives and append the index")
    p.add_argument("--db", required=True)
    p.add_argument("--reps", type=int, default=28)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("predict", help="predict one pedestrian's future")
    p.add_argument("--db", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--obstacles")
    p.add_argument("--ped", type=int, required=True)
    p.add_argument("--frame", type=int, required=True, help="last observed frame")
    p.add_argument("--horizon", type=float, choices=(3.2, 4.8), default=3.2)
    p.add_argument("--no-personality", action="store_true")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.add_argument("--dump-map")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="ADE/FDE benchmark")
    p.add_argument("--db", required=True)
    p.add_argument("--scenes", nargs="+", required=True)
    p.add_argument("--obstacles", nargs="*", default=[])
    p.add_argument("--horizons", default="3.2")
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-samples", type=int)
    p.add_argument("--success-threshold", type=float)
    p.add_argument("--no-leave-one-out", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--trajectories", help="per-sample trajectory CSV")
    p.add_argument("--svg-dir", help="directory for per-sample SVG overlays")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect-index", help="summarise a database's index")
    p.add_argument("--db", required=True)
    p.add_argument("--probes", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_inspect_index)

    p = sub.add_parser("plot", help="render a map dump or trajectory CSV as SVG")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--map")
    src.add_argument("--trajectories")
    p.add_argument("--sample")
    p.add_argument("--obstacles")
    p.add_argument("--cell-size", type=float, default=0.2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("synth", help="write synthetic scenes in the annotation format")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--names", default="alpha,beta,gamma,delta")
    p.add_argument("--duration", type=float, default=240.0)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CrowdPathError, OSError) as exc:
        print(f"crowdpath {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
