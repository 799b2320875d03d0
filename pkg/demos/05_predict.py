"""One prediction end to end, drawn next to the ground truth."""

import argparse
from pathlib import Path

from crowdpath import Config, ade, build_database, build_index, fde, linear_baseline, predict
from crowdpath.evaluation import evaluation_samples
from crowdpath.output import overlay_svg, write_text
from crowdpath.synthetic import synthetic_scenes


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo_output")
    ap.add_argument("--samples", type=int, default=5)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(exist_ok=True)
    config = Config()
    scenes = synthetic_scenes(("alpha", "beta", "gamma"), duration=90)
    index = build_index(build_database(scenes[:2], config))

    for i, s in enumerate(evaluation_samples(scenes[2], config, max_samples=args.samples, seed=7)):
        res = predict(s.query, index, config, s.history, s.neighbor_positions)
        h = s.history
        lin = linear_baseline(h.between(h.end - config.f_obs + 1, h.end), config.p_pred)
        print(f"ped {s.ped:4d} frame {s.frame:6d}: model ADE {ade(res.trajectory, s.truth):.3f} "
              f"FDE {fde(res.trajectory, s.truth):.3f} | linear ADE {ade(lin, s.truth):.3f}"
              + ("  (destination re-targeted)" if res.retargeted else ""))
        svg = overlay_svg(res.trajectory, s.truth, h.between(h.end - config.f_obs + 1, h.end),
                          scenes[2].obstacles, res.feature_map, s.query.transform,
                          title=f"ped {s.ped} frame {s.frame}")
        write_text(out / f"prediction_{i}.svg", svg)
    print(f"overlays in {out}/prediction_*.svg (truth solid, prediction dashed)")


if __name__ == "__main__":
    main()
