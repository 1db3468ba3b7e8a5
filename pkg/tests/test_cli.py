import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from vvtlab.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, _guard
from vvtlab.cli import main
from vvtlab.errors import ConfigError, DataError, NumericAbort
from vvtlab.training import LossReport
from vvtlab.video_core import DatasetManifest, load_clip


class TestExitCodes:
    @pytest.mark.parametrize(
        "exc,code",
        [
            (ConfigError("bad"), EXIT_CONFIG),
            (DataError("broken"), EXIT_DATA),
            (NumericAbort(7), EXIT_NUMERIC),
        ],
    )
    def test_error_mapping(self, exc, code):
        def body():
            raise exc

        with pytest.raises(SystemExit) as excinfo:
            _guard(body)
        assert excinfo.value.code == code


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


def _gen_tiny(runner, out, seed=3, clips=4):
    result = runner.invoke(
        main,
        [
            "gen", "volumetric", "--out", str(out), "--clips", str(clips),
            "--depth", "8", "--canvas", "28", "--max-radius", "2",
            "--train-fraction", "0.5", "--seed", str(seed),
        ],
    )
    assert result.exit_code == 0, result.output
    return out / "domain_a/manifest.json", out / "domain_b/manifest.json"


TRAIN_ARGS = ["--gen-width", "4", "--res-blocks", "1", "--disc-width", "4"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory, runner):
    out = tmp_path_factory.mktemp("cli_data")
    return _gen_tiny(runner, out)


@pytest.fixture(scope="module")
def trained(tmp_path_factory, runner, dataset):
    man_a, man_b = dataset
    out = tmp_path_factory.mktemp("cli_train")
    result = runner.invoke(
        main,
        [
            "train", "--data-a", str(man_a), "--data-b", str(man_b),
            "--strategy", "3d", "--window-depth", "8", "--out", str(out),
            "--steps", "2", "--seed", "1", *TRAIN_ARGS,
        ],
    )
    assert result.exit_code == 0, result.output
    checkpoint = Path(result.output.strip().splitlines()[-1])
    return checkpoint, out


class TestGen:
    def test_rerun_is_byte_identical(self, runner, tmp_path):
        _gen_tiny(runner, tmp_path / "one", seed=7)
        _gen_tiny(runner, tmp_path / "two", seed=7)
        one = sorted(p for p in (tmp_path / "one").rglob("*") if p.is_file() and p.name != "run.json")
        two = sorted(p for p in (tmp_path / "two").rglob("*") if p.is_file() and p.name != "run.json")
        assert [p.relative_to(tmp_path / "one") for p in one] == [
            p.relative_to(tmp_path / "two") for p in two
        ]
        for a, b in zip(one, two):
            assert a.read_bytes() == b.read_bytes()

    def test_depth_one_is_config_error(self, runner, tmp_path):
        result = runner.invoke(
            main, ["gen", "volumetric", "--out", str(tmp_path / "x"), "--depth", "1"]
        )
        assert result.exit_code == 2

    def test_moving_color_records_palette(self, runner, tmp_path):
        result = runner.invoke(
            main,
            [
                "gen", "moving-color", "--out", str(tmp_path / "mc"), "--clips", "3",
                "--depth", "4", "--height", "32", "--width", "32", "--colors", "20",
            ],
        )
        assert result.exit_code == 0, result.output
        manifest = DatasetManifest.load(tmp_path / "mc/domain_b/manifest.json")
        assert len(manifest.metadata["palette"]) == 20

    def test_refuses_clobber_without_force(self, runner, tmp_path):
        _gen_tiny(runner, tmp_path / "d", seed=1)
        result = runner.invoke(
            main,
            ["gen", "volumetric", "--out", str(tmp_path / "d"), "--depth", "8",
             "--canvas", "28", "--max-radius", "2"],
        )
        assert result.exit_code == 2
        result = runner.invoke(
            main,
            ["gen", "volumetric", "--out", str(tmp_path / "d"), "--depth", "8",
             "--canvas", "28", "--max-radius", "2", "--clips", "4",
             "--train-fraction", "0.5", "--seed", "1", "--force"],
        )
        assert result.exit_code == 0, result.output


class TestTrain:
    def test_writes_log_checkpoint_and_config(self, trained):
        checkpoint, out = trained
        assert checkpoint.exists()
        assert (out / "resolved_config.json").exists()
        assert (out / "run.json").exists()
        lines = (out / "train_log.jsonl").read_text().strip().splitlines()
        assert len(lines) == 2

    def test_seq_const_logs_const_term(self, runner, dataset, tmp_path):
        man_a, man_b = dataset
        result = runner.invoke(
            main,
            [
                "train", "--data-a", str(man_a), "--data-b", str(man_b),
                "--strategy", "seq-const", "--frames", "4", "--out", str(tmp_path / "sc"),
                "--steps", "2", "--lambda-const", "1.0", *TRAIN_ARGS,
            ],
        )
        assert result.exit_code == 0, result.output
        for line in (tmp_path / "sc/train_log.jsonl").read_text().strip().splitlines():
            assert LossReport.from_json_line(line).l_const is not None

    def test_regimes_share_init_but_not_batches(self, runner, dataset, tmp_path):
        man_a, man_b = dataset
        digests, batch_ids = [], []
        for name in ("random", "sequence"):
            out = tmp_path / name
            result = runner.invoke(
                main,
                [
                    "train", "--data-a", str(man_a), "--data-b", str(man_b),
                    "--strategy", name, "--frames", "4", "--out", str(out),
                    "--steps", "2", "--seed", "9", "--gen-width", "4",
                    "--res-blocks", "1", "--disc-width", "4",
                ],
            )
            assert result.exit_code == 0, result.output
            digests.append(json.loads((out / "run.json").read_text())["init_digest"])
            lines = (out / "train_log.jsonl").read_text().strip().splitlines()
            batch_ids.append([LossReport.from_json_line(l).batch_id for l in lines])
        assert digests[0] == digests[1]
        assert batch_ids[0] != batch_ids[1]

    def test_resume_from_checkpoint(self, runner, dataset, trained, tmp_path):
        man_a, man_b = dataset
        checkpoint, _ = trained
        result = runner.invoke(
            main,
            [
                "train", "--data-a", str(man_a), "--data-b", str(man_b),
                "--strategy", "3d", "--out", str(tmp_path / "res"),
                "--resume", str(checkpoint), "--steps", "4",
            ],
        )
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "res/train_log.jsonl").read_text().strip().splitlines()
        assert len(lines) == 2  # steps 2 and 3

    def test_bad_config_key_is_config_error(self, runner, dataset, tmp_path):
        man_a, man_b = dataset
        result = runner.invoke(
            main,
            [
                "train", "--data-a", str(man_a), "--data-b", str(man_b),
                "--strategy", "3d", "--out", str(tmp_path / "bad"),
                "--set", "gammma=3", *TRAIN_ARGS,
            ],
        )
        assert result.exit_code == 2


class TestTranslate:
    def test_manifest_translation_writes_all_clips(self, runner, dataset, trained, tmp_path):
        man_a, _ = dataset
        checkpoint, _ = trained
        out = tmp_path / "tr"
        result = runner.invoke(
            main,
            [
                "translate", "--checkpoint", str(checkpoint), "--input", str(man_a),
                "--direction", "a2b", "--out", str(out), "--cycle-preview",
            ],
        )
        assert result.exit_code == 0, result.output
        manifest = DatasetManifest.load(man_a)
        for entry in manifest.clips:
            clip_path = out / f"{entry.clip_id}_a2b.vvt"
            assert clip_path.exists()
            assert load_clip(clip_path).shape == (8, 28, 28, 1)
            assert (out / f"{entry.clip_id}_a2b.gif").exists()
            assert (out / f"{entry.clip_id}_cycle.vvt").exists()

    def test_single_clip_translation(self, runner, dataset, trained, tmp_path):
        man_a, _ = dataset
        checkpoint, _ = trained
        manifest = DatasetManifest.load(man_a)
        clip_path = manifest.clip_path(manifest.clips[0])
        result = runner.invoke(
            main,
            [
                "translate", "--checkpoint", str(checkpoint), "--input", str(clip_path),
                "--direction", "a2b", "--out", str(tmp_path / "one"), "--no-gif",
            ],
        )
        assert result.exit_code == 0, result.output

    def test_missing_checkpoint_no_partial_outputs(self, runner, dataset, tmp_path):
        man_a, _ = dataset
        out = tmp_path / "never"
        result = runner.invoke(
            main,
            [
                "translate", "--checkpoint", str(tmp_path / "ghost.pt"),
                "--input", str(man_a), "--direction", "a2b", "--out", str(out),
            ],
        )
        assert result.exit_code == 3
        assert not out.exists()


class TestEvalAndReport:
    def test_eval_writes_reports(self, runner, dataset, trained, tmp_path):
        man_a, _ = dataset
        checkpoint, _ = trained
        out = tmp_path / "ev"
        result = runner.invoke(
            main,
            [
                "eval", "--checkpoint", str(checkpoint), "--manifest", str(man_a),
                "--task", "volumetric", "--out", str(out), "--model-id", "3d",
            ],
        )
        assert result.exit_code == 0, result.output
        report = json.loads((out / "report.json").read_text())
        assert report["model_id"] == "3d"
        assert "volume_l2" in report["metrics"]
        header = (out / "report.csv").read_text().splitlines()[0]
        assert header.startswith("method,")

    def test_eval_rerun_is_byte_identical(self, runner, dataset, trained, tmp_path):
        man_a, _ = dataset
        checkpoint, _ = trained
        outputs = []
        for name in ("e1", "e2"):
            out = tmp_path / name
            result = runner.invoke(
                main,
                [
                    "eval", "--checkpoint", str(checkpoint), "--manifest", str(man_a),
                    "--task", "volumetric", "--out", str(out), "--model-id", "3d",
                ],
            )
            assert result.exit_code == 0, result.output
            outputs.append((out / "report.json").read_bytes())
        assert outputs[0] == outputs[1]

    def test_contaminated_manifest_is_data_error(self, runner, dataset, trained, tmp_path):
        man_a, _ = dataset
        checkpoint, _ = trained
        doc = json.loads(Path(man_a).read_text())
        doc["clips"][0]["id"] = doc["clips"][1]["id"]
        bad = tmp_path / "bad_manifest"
        bad.mkdir()
        (bad / "manifest.json").write_text(json.dumps(doc))
        result = runner.invoke(
            main,
            [
                "eval", "--checkpoint", str(checkpoint),
                "--manifest", str(bad / "manifest.json"),
                "--task", "volumetric", "--out", str(tmp_path / "evbad"),
            ],
        )
        assert result.exit_code == 3

    def test_report_collates_rows(self, runner, dataset, trained, tmp_path):
        man_a, _ = dataset
        checkpoint, _ = trained
        report_paths = []
        for name in ("ra", "rb"):
            out = tmp_path / name
            result = runner.invoke(
                main,
                [
                    "eval", "--checkpoint", str(checkpoint), "--manifest", str(man_a),
                    "--task", "volumetric", "--out", str(out), "--model-id", name,
                ],
            )
            assert result.exit_code == 0, result.output
            report_paths.append(str(out / "report.json"))
        result = runner.invoke(
            main, ["report", "--out", str(tmp_path / "table.csv"), *report_paths]
        )
        assert result.exit_code == 0, result.output
        lines = (tmp_path / "table.csv").read_text().strip().splitlines()
        assert len(lines) == 3
        assert lines[1].startswith("ra,") and lines[2].startswith("rb,")
