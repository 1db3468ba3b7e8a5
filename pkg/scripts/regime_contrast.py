#!/usr/bin/env python3
"""Train all four batch regimes on one toy dataset and collate their scores.

Mirrors the headline comparison: the 3D spatio-temporal translator against
the three framewise baselines (random frames, sequential frames, sequential
plus the consecutive-frame penalty), with parameter-parity-matched widths.
Produces one comparison CSV with a row per regime.
"""

import argparse
from pathlib import Path

from vvtlab import synth_data as sd
from vvtlab import training as tr
from vvtlab import translators as tl
from vvtlab.metrics import evaluate, write_comparison_csv


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("runs/regime_contrast"))
    parser.add_argument("--clips", type=int, default=32, help="clips per domain")
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=123)
    parser.add_argument("--colors", type=int, default=4)
    args = parser.parse_args()

    config = sd.MovingColorConfig(
        depth=8, height=28, width=28, clips_per_domain=args.clips,
        n_colors=args.colors, digit_size=14, train_fraction=0.5,
    )
    man_a, man_b = sd.build_dataset(sd.MOVING_COLOR, config, args.out / "data", seed=args.seed)
    print(f"generated moving-color data with {args.colors} colors under {args.out / 'data'}")

    gen3d = tl.GeneratorConfig(rank="3d", base_width=6, n_res_blocks=1)
    calibration = tl.calibrate_parity(gen3d)
    gen2d = calibration.config
    print(f"parity: 2D nf={gen2d.base_width} vs 3D nf={gen3d.base_width} "
          f"(ratio {calibration.ratio:.3f})")

    regimes = {
        "3d": (tr.BatchStrategy("volumetric_3d", window_depth=8), gen3d),
        "random": (tr.BatchStrategy("random_frames", frames_per_batch=8), gen2d),
        "sequence": (tr.BatchStrategy("sequential_frames", frames_per_batch=8), gen2d),
        "seq_const": (tr.BatchStrategy("sequential_const", frames_per_batch=8), gen2d),
    }

    reports = []
    for name, (strategy, gen_cfg) in regimes.items():
        trainer = tr.Trainer(
            config=tr.TrainConfig(
                steps=args.steps, seed=args.seed, pool_size=4, checkpoint_every=1000
            ),
            strategy=strategy,
            manifest_a=man_a,
            manifest_b=man_b,
            generator_config=gen_cfg,
            discriminator_config=tl.DiscriminatorConfig(
                rank=gen_cfg.rank, base_width=gen_cfg.base_width
            ),
            out_dir=args.out / f"run_{name}",
        )
        checkpoint = trainer.run()
        translate_fn, _ = tr.load_translator(checkpoint, "a2b")
        report = evaluate(translate_fn, man_a, "colorization", model_id=name)
        report.save(args.out / f"run_{name}/report.json")
        reports.append(report)
        stats = {k: round(v["mean"], 2) for k, v in report.metrics.items()}
        print(f"{name}: {stats}")

    table = write_comparison_csv(reports, args.out / "comparison.csv")
    print(f"wrote {table}")


if __name__ == "__main__":
    main()
