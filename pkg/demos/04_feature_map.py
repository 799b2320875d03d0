"""Anatomy of a probabilistic feature map.

Builds one map from a held-out query and its retrieved candidates, prints
what each layer contributes and writes the map as CSV and SVG.
"""

import argparse
from pathlib import Path

import numpy as np

from crowdpath import Config, build_database, build_index, query_top_k
from crowdpath.evaluation import evaluation_samples
from crowdpath.featuremap import build_feature_map
from crowdpath.output import map_svg, write_map_csv, write_text
from crowdpath.planner import query_personality
from crowdpath.synthetic import synthetic_scenes


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_output")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(exist_ok=True)
    config = Config()
    train, test = synthetic_scenes(("alpha", "beta"), duration=90)
    index = build_index(build_database([train], config))
    sample = evaluation_samples(test, config, max_samples=1, seed=3)[0]
    cands, _ = query_top_k(index, sample.query, config.k, config.delta)
    pers = query_personality(sample.query, config, sample.history, sample.neighbor_positions)
    fmap, layers = build_feature_map(sample.query, cands, pers, config)

    print(f"grid {fmap.shape[0]} x {fmap.shape[1]} cells of {config.cell_size} m")
    print(f"neighbors:   {np.count_nonzero(layers.neighbors):4d} cells, total {layers.neighbors.sum():8.2f}")
    print(f"obstacles:   {layers.obstacles.sum():4d} cells blocked")
    print(f"candidates:  {np.count_nonzero(layers.candidates):4d} cells, total {layers.candidates.sum():8.1f}")
    print(f"personality: l={pers.l:.1f}% v={pers.v:.2f} m/s d={pers.d:.2f} m, "
          f"{np.count_nonzero(layers.personality.total)} cells touched")
    print(f"destination: {np.round(layers.dest.point, 3)} (clamped: {layers.dest.clamped})")

    write_map_csv(fmap, out / "map.csv")
    write_text(out / "map.svg", map_svg(fmap))
    print(f"wrote {out / 'map.csv'} and {out / 'map.svg'}")


if __name__ == "__main__":
    main()
