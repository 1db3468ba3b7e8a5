"""Command-line entry point: generate -> train -> translate -> eval -> report.

Every subcommand writes into a run directory that records the resolved
configuration, the seed, and a content digest of its inputs, and refuses to
overwrite a completed run unless ``--force`` is given. Exit codes: 0 on
success, 2 for configuration errors, 3 for data errors, 4 when training
aborts on a non-finite loss.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import metrics as metrics_mod
from . import synth_data, training, translators, video_core
from .errors import ConfigError, DataError, NumericAbort

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

RUN_MARKER = "run.json"


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    except DataError as exc:
        _fail(EXIT_DATA, str(exc))
    except NumericAbort as exc:
        _fail(EXIT_NUMERIC, str(exc))


def _prepare_run_dir(out: Path, force: bool) -> Path:
    marker = out / RUN_MARKER
    if marker.exists() and not force:
        raise ConfigError(f"{out} already holds a completed run; pass --force to redo it")
    out.mkdir(parents=True, exist_ok=True)
    if marker.exists():
        marker.unlink()
    return out


def _digest_paths(paths: list[Path]) -> str:
    digest = hashlib.sha256()
    for path in sorted(set(map(Path, paths))):
        digest.update(str(path.name).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


def _digest_manifest(manifest: video_core.DatasetManifest) -> str:
    files = [manifest.root / "manifest.json"]
    files += [manifest.clip_path(c) for c in manifest.clips]
    files += [
        manifest.gt_clip_path(c) for c in manifest.clips if c.gt_path is not None
    ]
    return _digest_paths(files)


def _finish_run(out: Path, payload: dict) -> None:
    (out / RUN_MARKER).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


@click.group()
def main():
    """Unpaired video-to-video translation laboratory."""


# ---------------------------------------------------------------------------
# gen


@main.group()
def gen():
    """Generate a synthetic two-domain dataset."""


def _load_digit_option(mnist_images: str | None, mnist_labels: str | None):
    if mnist_images or mnist_labels:
        if not (mnist_images and mnist_labels):
            raise ConfigError("--mnist-images and --mnist-labels must be given together")
        return synth_data.load_digit_archive(mnist_images, mnist_labels)
    return None


@gen.command("volumetric")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--clips", default=20, show_default=True, help="Clips per domain.")
@click.option("--depth", "-d", default=30, show_default=True)
@click.option("--canvas", default=84, show_default=True)
@click.option("--max-radius", default=None, type=int, help="Peak erosion radius (default scales with canvas).")
@click.option("--train-fraction", default=0.70, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--mnist-images", default=None, type=click.Path(exists=True))
@click.option("--mnist-labels", default=None, type=click.Path(exists=True))
@click.option("--force", is_flag=True)
def gen_volumetric(out, clips, depth, canvas, max_radius, train_fraction, seed,
                   mnist_images, mnist_labels, force):
    """Eroded digit volumes: spherical domain A, sandglass domain B."""

    def body():
        _prepare_run_dir(out, force)
        digits = _load_digit_option(mnist_images, mnist_labels)
        config = synth_data.VolumetricConfig(
            depth=depth,
            canvas=canvas,
            clips_per_domain=clips,
            max_radius=max_radius,
            train_fraction=train_fraction,
        )
        man_a, man_b = synth_data.build_dataset(
            synth_data.VOLUMETRIC, config, out, seed, digits
        )
        _finish_run(
            out,
            {
                "subcommand": "gen volumetric",
                "seed": seed,
                "config": dataclasses.asdict(config),
                "manifests": [str(out / "domain_a/manifest.json"), str(out / "domain_b/manifest.json")],
                "input_digest": None,
            },
        )
        click.echo(str(out / "domain_a/manifest.json"))
        click.echo(str(out / "domain_b/manifest.json"))

    _guard(body)


@gen.command("moving-color")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--clips", default=20, show_default=True)
@click.option("--depth", "-d", default=8, show_default=True)
@click.option("--height", default=64, show_default=True)
@click.option("--width", default=64, show_default=True)
@click.option("--colors", default=20, show_default=True)
@click.option("--max-speed", default=3, show_default=True)
@click.option("--train-fraction", default=0.70, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--mnist-images", default=None, type=click.Path(exists=True))
@click.option("--mnist-labels", default=None, type=click.Path(exists=True))
@click.option("--force", is_flag=True)
def gen_moving_color(out, clips, depth, height, width, colors, max_speed,
                     train_fraction, seed, mnist_images, mnist_labels, force):
    """Moving digits: white domain A, per-clip tinted domain B."""

    def body():
        _prepare_run_dir(out, force)
        digits = _load_digit_option(mnist_images, mnist_labels)
        config = synth_data.MovingColorConfig(
            depth=depth,
            height=height,
            width=width,
            clips_per_domain=clips,
            n_colors=colors,
            max_speed=max_speed,
            train_fraction=train_fraction,
        )
        synth_data.build_dataset(synth_data.MOVING_COLOR, config, out, seed, digits)
        _finish_run(
            out,
            {
                "subcommand": "gen moving-color",
                "seed": seed,
                "config": dataclasses.asdict(config),
                "manifests": [str(out / "domain_a/manifest.json"), str(out / "domain_b/manifest.json")],
                "input_digest": None,
            },
        )
        click.echo(str(out / "domain_a/manifest.json"))
        click.echo(str(out / "domain_b/manifest.json"))

    _guard(body)


# ---------------------------------------------------------------------------
# train


@main.command("train")
@click.option("--data-a", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--data-b", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--strategy", required=True,
              type=click.Choice(sorted(training.STRATEGY_ALIASES)), help="Batch regime.")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, path_type=Path),
              help="JSON or YAML training config; flags and --set override it.")
@click.option("--steps", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--frames", default=8, show_default=True, help="Frames per 2D batch (m).")
@click.option("--window-depth", default=8, show_default=True, help="3D window depth.")
@click.option("--lambda-const", default=None, type=float)
@click.option("--gen-width", default=None, type=int,
              help="Generator base width; 2D regimes default to the parity-calibrated width.")
@click.option("--res-blocks", default=9, show_default=True)
@click.option("--disc-width", default=None, type=int)
@click.option("--disc-layers", default=3, show_default=True)
@click.option("--set", "overrides", multiple=True, help="Config override key=value.")
@click.option("--resume", "resume_path", default=None, type=click.Path(exists=True, path_type=Path))
@click.option("--force", is_flag=True)
def cmd_train(data_a, data_b, strategy, out, config_path, steps, seed, frames,
              window_depth, lambda_const, gen_width, res_blocks, disc_width,
              disc_layers, overrides, resume_path, force):
    """Train the two generator/discriminator pairs under one batch regime."""

    def body():
        _prepare_run_dir(out, force)
        manifest_a = video_core.DatasetManifest.load(data_a)
        manifest_b = video_core.DatasetManifest.load(data_b)

        if resume_path is not None:
            trainer = training.Trainer.resume(
                resume_path, manifest_a, manifest_b, out, steps=steps
            )
        else:
            config = (
                training.TrainConfig.from_file(config_path)
                if config_path
                else training.TrainConfig()
            )
            override_map = {}
            for item in overrides:
                if "=" not in item:
                    raise ConfigError(f"--set expects key=value, got {item!r}")
                key, value = item.split("=", 1)
                override_map[key] = value
            if steps is not None:
                override_map["steps"] = str(steps)
            if seed is not None:
                override_map["seed"] = str(seed)
            if lambda_const is not None:
                override_map["lambda_const"] = str(lambda_const)
            config = config.with_overrides(override_map)

            batch_strategy = training.BatchStrategy.from_name(
                strategy, frames_per_batch=frames, window_depth=window_depth
            )
            gen_config = _resolve_generator_config(
                batch_strategy, gen_width, res_blocks
            )
            disc_config = translators.DiscriminatorConfig(
                rank=batch_strategy.rank,
                base_width=disc_width if disc_width is not None else gen_config.base_width,
                n_layers=disc_layers,
            )
            trainer = training.Trainer(
                config=config,
                strategy=batch_strategy,
                manifest_a=manifest_a,
                manifest_b=manifest_b,
                generator_config=gen_config,
                discriminator_config=disc_config,
                out_dir=out,
            )

        resolved = {
            "train_config": dataclasses.asdict(trainer.config),
            "strategy": dataclasses.asdict(trainer.strategy),
            "generator_config": dataclasses.asdict(trainer.generator_config),
            "discriminator_config": dataclasses.asdict(trainer.discriminator_config),
        }
        (out / "resolved_config.json").write_text(
            json.dumps(resolved, indent=2, sort_keys=True) + "\n"
        )
        final = trainer.run()
        _finish_run(
            out,
            {
                "subcommand": "train",
                "seed": trainer.config.seed,
                "config": resolved,
                "init_digest": trainer.init_digest,
                "input_digest": _digest_paths(
                    [data_a, data_b]
                ),
                "final_checkpoint": str(final),
                "steps": trainer.step,
            },
        )
        click.echo(str(final))

    _guard(body)


def _resolve_generator_config(strategy, gen_width, res_blocks):
    if strategy.rank == translators.RANK_3D:
        width = gen_width if gen_width is not None else 16
        return translators.GeneratorConfig(
            rank=translators.RANK_3D, base_width=width, n_res_blocks=res_blocks
        )
    if gen_width is not None:
        return translators.GeneratorConfig(
            rank=translators.RANK_2D, base_width=gen_width, n_res_blocks=res_blocks
        )
    # parity against the 3D default so regimes stay comparable
    reference = translators.GeneratorConfig(
        rank=translators.RANK_3D, base_width=16, n_res_blocks=res_blocks
    )
    return translators.calibrate_parity(reference).config


# ---------------------------------------------------------------------------
# translate


@main.command("translate")
@click.option("--checkpoint", required=True, type=click.Path(path_type=Path))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, path_type=Path),
              help="A .vvt clip or a manifest.json.")
@click.option("--direction", required=True, type=click.Choice(["a2b", "b2a"]))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--gif/--no-gif", default=True, show_default=True)
@click.option("--cycle-preview", is_flag=True, help="Also translate back for inspection.")
@click.option("--force", is_flag=True)
def cmd_translate(checkpoint, input_path, direction, out, gif, cycle_preview, force):
    """Translate a clip or every clip of a manifest; writes clips and GIFs."""

    def body():
        translate_fn, _ = training.load_translator(checkpoint, direction)
        reverse_fn = None
        if cycle_preview:
            reverse_fn, _ = training.load_translator(
                checkpoint, "b2a" if direction == "a2b" else "a2b"
            )
        _prepare_run_dir(out, force)

        if input_path.suffix == ".json":
            manifest = video_core.DatasetManifest.load(input_path)
            sources = [
                (entry.clip_id, video_core.load_clip(manifest.clip_path(entry)))
                for entry in sorted(manifest.clips, key=lambda e: e.clip_id)
            ]
        else:
            sources = [(input_path.stem, video_core.load_clip(input_path))]

        written = []
        for clip_id, clip in sources:
            translated = translate_fn(clip)
            path = out / f"{clip_id}_{direction}.vvt"
            video_core.save_clip(translated, path)
            written.append(str(path))
            if gif:
                video_core.export_gif(translated, out / f"{clip_id}_{direction}.gif")
            if reverse_fn is not None:
                cycled = reverse_fn(translated)
                video_core.save_clip(cycled, out / f"{clip_id}_cycle.vvt")
                if gif:
                    video_core.export_gif(cycled, out / f"{clip_id}_cycle.gif")
        _finish_run(
            out,
            {
                "subcommand": "translate",
                "seed": None,
                "config": {"direction": direction, "checkpoint": str(checkpoint)},
                "input_digest": _digest_paths([input_path]),
                "outputs": written,
            },
        )
        for path in written:
            click.echo(path)

    _guard(body)


# ---------------------------------------------------------------------------
# eval


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(path_type=Path))
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--task", required=True,
              type=click.Choice([metrics_mod.TASK_COLORIZATION,
                                 metrics_mod.TASK_VOLUMETRIC,
                                 metrics_mod.TASK_SEGMENTATION]))
@click.option("--direction", default="a2b", show_default=True,
              type=click.Choice(["a2b", "b2a"]))
@click.option("--model-id", default=None, help="Row label in reports (default: strategy name).")
@click.option("--denoise-levels", default="0,1,2", show_default=True)
@click.option("--palette-file", default=None, type=click.Path(exists=True, path_type=Path),
              help="JSON list of [r, g, b]; defaults to the manifest's palette metadata.")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--force", is_flag=True)
def cmd_eval(checkpoint, manifest_path, task, direction, model_id, denoise_levels,
             palette_file, out, force):
    """Score a checkpoint on a manifest's test split; writes JSON and CSV."""

    def body():
        translate_fn, meta = training.load_translator(checkpoint, direction)
        _prepare_run_dir(out, force)
        manifest = video_core.DatasetManifest.load(manifest_path)
        levels = [int(v) for v in denoise_levels.split(",") if v != ""]
        palette = None
        if task == metrics_mod.TASK_SEGMENTATION:
            if palette_file is not None:
                palette = np.asarray(json.loads(Path(palette_file).read_text()), dtype=np.uint8)
            elif "palette" in manifest.metadata:
                palette = np.asarray(manifest.metadata["palette"], dtype=np.uint8)
            else:
                raise ConfigError(
                    "segmentation evaluation needs --palette-file or palette metadata"
                )
        label = model_id or meta["strategy"]["variant"]
        report = metrics_mod.evaluate(
            translate_fn,
            manifest,
            task,
            model_id=label,
            palette=palette,
            denoise_levels=levels,
        )
        report_path = report.save(out / "report.json")
        csv_path = metrics_mod.write_comparison_csv([report], out / "report.csv")
        _finish_run(
            out,
            {
                "subcommand": "eval",
                "seed": None,
                "config": {
                    "task": task,
                    "direction": direction,
                    "model_id": label,
                    "denoise_levels": levels,
                },
                "input_digest": _digest_manifest(manifest),
                "outputs": [str(report_path), str(csv_path)],
            },
        )
        click.echo(str(report_path))
        click.echo(str(csv_path))

    _guard(body)


# ---------------------------------------------------------------------------
# report


@main.command("report")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.argument("reports", nargs=-1, required=True,
                type=click.Path(exists=True, path_type=Path))
def cmd_report(out, reports):
    """Collate several report.json files into one comparison CSV."""

    def body():
        loaded = [metrics_mod.MetricReport.load(p) for p in reports]
        path = metrics_mod.write_comparison_csv(loaded, out)
        click.echo(str(path))

    _guard(body)


if __name__ == "__main__":
    main()
