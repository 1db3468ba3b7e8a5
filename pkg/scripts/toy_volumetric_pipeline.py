#!/usr/bin/env python3
"""End-to-end toy experiment: generate eroded-digit volumes, train the 3D
translator, translate the test split, and score it.

Everything runs at desk scale (8x28x28 clips, small widths) so the full
pipeline finishes in minutes on CPU. Outputs land under --out:

    data/            the two domain manifests and clips
    run/             training log and checkpoints
    translated/      translated test clips plus GIF previews
    eval/            report.json and report.csv
"""

import argparse
from pathlib import Path

import numpy as np

from vvtlab import synth_data as sd
from vvtlab import training as tr
from vvtlab import translators as tl
from vvtlab.metrics import evaluate
from vvtlab.video_core import export_gif, load_clip, save_clip


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("runs/toy_volumetric"))
    parser.add_argument("--clips", type=int, default=32, help="clips per domain")
    parser.add_argument("--steps", type=int, default=600)
    parser.add_argument("--seed", type=int, default=123)
    parser.add_argument("--gen-width", type=int, default=8)
    parser.add_argument("--res-blocks", type=int, default=2)
    args = parser.parse_args()

    data_dir = args.out / "data"
    config = sd.VolumetricConfig(
        depth=8, canvas=28, clips_per_domain=args.clips, max_radius=2, train_fraction=0.5
    )
    man_a, man_b = sd.build_dataset(sd.VOLUMETRIC, config, data_dir, seed=args.seed)
    print(f"generated {args.clips} clips per domain under {data_dir}")

    trainer = tr.Trainer(
        config=tr.TrainConfig(
            steps=args.steps, seed=args.seed, pool_size=4, checkpoint_every=200
        ),
        strategy=tr.BatchStrategy("volumetric_3d", window_depth=8),
        manifest_a=man_a,
        manifest_b=man_b,
        generator_config=tl.GeneratorConfig(
            rank="3d", base_width=args.gen_width, n_res_blocks=args.res_blocks
        ),
        discriminator_config=tl.DiscriminatorConfig(rank="3d", base_width=args.gen_width),
        out_dir=args.out / "run",
    )
    checkpoint = trainer.run()
    print(f"trained {args.steps} steps -> {checkpoint}")

    translate_fn, _ = tr.load_translator(checkpoint, "a2b")
    translated_dir = args.out / "translated"
    target = np.array(man_b.metadata["max_radius"]) - np.array(man_b.metadata["schedule_radii"])
    hits = 0
    for entry in sorted(man_a.test_clips(), key=lambda e: e.clip_id):
        out = translate_fn(load_clip(man_a.clip_path(entry)))
        save_clip(out, translated_dir / f"{entry.clip_id}_a2b.vvt")
        export_gif(out, translated_dir / f"{entry.clip_id}_a2b.gif")
        profile = out.data.astype(np.float64).mean(axis=(1, 2, 3))
        if profile.std() > 0 and np.corrcoef(profile, target)[0, 1] >= 0.8:
            hits += 1
    n_test = len(man_a.test_clips())
    print(f"translated {n_test} test clips; {hits}/{n_test} match the target "
          f"intensity profile (Pearson >= 0.8)")

    report = evaluate(translate_fn, man_a, "volumetric", model_id="3d")
    report_path = report.save(args.out / "eval/report.json")
    print(f"volume L2 {report.metrics['volume_l2']['mean']:.2f} "
          f"+/- {report.metrics['volume_l2']['std']:.2f} -> {report_path}")


if __name__ == "__main__":
    main()
