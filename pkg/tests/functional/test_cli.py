import csv
import io
import json

import pytest

from src.cli import create_parser, main
from src.services.checkpoint import load
from src.services.pgm import read_pgm
from src.services.sampler import RUN_MANIFEST_FILE
from src.settings.config import TestingConfig


class TestParser:
    def test_subcommands(self):
        args = create_parser().parse_args(["sample", "--ckpt", "a", "--ckpt", "b", "--out", "x"])
        assert args.ckpt == ["a", "b"]
        assert args.n == 1
        assert args.fast is False

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit):
            create_parser().parse_args([])

    def test_unknown_environment(self, capsys):
        assert main(["--env", "staging", "check"]) == 1
        assert "unknown environment 'staging'" in capsys.readouterr().err


class TestDatasetCommand:
    def test_renders_requested_count(self, tmp_path, capsys):
        out = tmp_path / "data"
        code = main(["--env", "testing", "dataset", "--out", str(out), "--per-subtype", "2"])
        assert code == 0
        assert len(list(out.glob("*.pgm"))) == 16
        assert "wrote 16 images" in capsys.readouterr().out

    def test_testing_defaults(self, tmp_path):
        out = tmp_path / "data"
        assert main(["--env", "testing", "dataset", "--out", str(out), "--width", "96", "--height", "24"]) == 0
        assert len(list(out.glob("*.pgm"))) == 16
        assert read_pgm(next(out.glob("*.pgm"))).pixels.shape == (24, 96)

    def test_defaults_to_data_dir(self, tmp_path, mocker):
        out = tmp_path / "configured"
        mocker.patch.object(TestingConfig, "DATA_DIR", str(out))
        assert main(["--env", "testing", "dataset", "--per-subtype", "1"]) == 0
        assert len(list(out.glob("*.pgm"))) == 8

    def test_unwritable_output(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("")
        code = main(["--env", "testing", "dataset", "--out", str(blocker / "data")])
        assert code == 2
        assert capsys.readouterr().err.startswith("error: ")


class TestEvalCommand:
    def test_untrained_table(self, data_dir, checkpoint_path, capsys):
        code = main(["--env", "testing", "eval", "--ckpt", str(checkpoint_path), "--data", str(data_dir)])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[1].split() == ["overall", str(8 * 24 * 96), "8.00"]
        assert len(lines) == 1 + 1 + 8

    def test_csv(self, data_dir, checkpoint_path, capsys):
        main(["--env", "testing", "eval", "--ckpt", str(checkpoint_path), "--data", str(data_dir), "--csv"])
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert rows[0]["subtype"] == "overall"
        assert float(rows[0]["bits_per_dim"]) == pytest.approx(8.0, abs=0.01)

    def test_json(self, data_dir, checkpoint_path, capsys):
        main(["--env", "testing", "eval", "--ckpt", str(checkpoint_path), "--data", str(data_dir), "--json"])
        payload = json.loads(capsys.readouterr().out)
        assert payload["overall"]["bits_per_dim"] == pytest.approx(8.0, abs=0.01)
        assert len(payload["subtypes"]) == 8

    def test_missing_checkpoint(self, data_dir, tmp_path, capsys):
        code = main(["--env", "testing", "eval", "--ckpt", str(tmp_path / "none.ckpt"), "--data", str(data_dir)])
        assert code == 2
        assert "none.ckpt" in capsys.readouterr().err

    def test_corrupt_checkpoint(self, data_dir, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not a checkpoint")
        assert main(["--env", "testing", "eval", "--ckpt", str(path), "--data", str(data_dir)]) == 2

    def test_defaults_to_data_dir(self, data_dir, checkpoint_path, mocker, capsys):
        mocker.patch.object(TestingConfig, "DATA_DIR", str(data_dir))
        assert main(["--env", "testing", "eval", "--ckpt", str(checkpoint_path)]) == 0
        assert capsys.readouterr().out.splitlines()[1].split()[0] == "overall"

    def test_corrupt_manifest(self, checkpoint_path, tmp_path, capsys):
        (tmp_path / "manifest.json").write_text('[{"file": "a.pgm", "subtype": "truss", "seed": 1}]')
        code = main(["--env", "testing", "eval", "--ckpt", str(checkpoint_path), "--data", str(tmp_path)])
        assert code == 2
        assert "manifest.json" in capsys.readouterr().err


class TestSampleCommand:
    def test_writes_samples(self, checkpoint_path, tmp_path, capsys):
        out = tmp_path / "samples"
        code = main(
            ["--env", "testing", "sample", "--ckpt", str(checkpoint_path), "--n", "3", "--out", str(out), "--fast"]
        )
        assert code == 0
        assert len(list(out.glob("sample_*.pgm"))) == 3
        manifest = json.loads((out / RUN_MANIFEST_FILE).read_text())
        assert manifest["temperature"] == 1.0
        assert len(manifest["seeds"]) == 3

    def test_nearest_distances(self, checkpoint_path, data_dir, tmp_path):
        out = tmp_path / "samples"
        argv = ["--env", "testing", "sample", "--ckpt", str(checkpoint_path), "--out", str(out)]
        assert main(argv + ["--fast", "--train-dir", str(data_dir), "--temperature", "0"]) == 0
        manifest = json.loads((out / RUN_MANIFEST_FILE).read_text())
        assert manifest["temperature"] == 0.0
        assert manifest["nearest_train_l1"][0] is not None

    def test_negative_temperature(self, checkpoint_path, tmp_path):
        argv = ["--env", "testing", "sample", "--ckpt", str(checkpoint_path), "--out", str(tmp_path)]
        assert main(argv + ["--temperature", "-1"]) == 1


class TestTrainCommand:
    def write_config(self, path, data_dir, **extra):
        payload = {
            "data_dir": str(data_dir),
            "model": {
                "image_h": 12,
                "image_w": 24,
                "num_resnet": 1,
                "num_filters": 4,
                "receptive_field": [2, 3],
                "dropout_p": 0.0,
                "head": {"kind": "categorical", "num_categories": 4},
            },
            "batch_size": 4,
            "epochs": 1,
            "crop": [12, 24],
            "crop_origin": [12, 30],
        }
        payload.update(extra)
        path.write_text(json.dumps(payload))
        return path

    def test_trains_and_saves(self, data_dir, tmp_path, capsys):
        config = self.write_config(tmp_path / "train.json", data_dir)
        out = tmp_path / "final.ckpt"
        assert main(["--env", "testing", "train", "--config", str(config), "--out", str(out)]) == 0
        assert load(out).step == 2
        assert "trained 2 steps" in capsys.readouterr().out

    def test_resume(self, data_dir, tmp_path):
        first = self.write_config(tmp_path / "a.json", data_dir)
        main(["--env", "testing", "train", "--config", str(first), "--out", str(tmp_path / "a.ckpt")])
        second = self.write_config(tmp_path / "b.json", data_dir, epochs=2)
        argv = ["--env", "testing", "train", "--config", str(second), "--resume", str(tmp_path / "a.ckpt")]
        assert main(argv + ["--out", str(tmp_path / "b.ckpt")]) == 0
        assert load(tmp_path / "b.ckpt").step == 4

    def test_invalid_config(self, data_dir, tmp_path, capsys):
        config = self.write_config(tmp_path / "bad.json", data_dir, batch_size=0)
        assert main(["--env", "testing", "train", "--config", str(config)]) == 1
        assert "batch_size" in capsys.readouterr().err

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{")
        assert main(["--env", "testing", "train", "--config", str(path)]) == 2

    def test_corrupt_manifest(self, tmp_path, capsys):
        data_dir = tmp_path / "data"
        data_dir.mkdir()
        (data_dir / "manifest.json").write_text('[{"file": "a.pgm", "seed": 1}]')
        config = self.write_config(tmp_path / "train.json", data_dir)
        assert main(["--env", "testing", "train", "--config", str(config)]) == 2
        assert "manifest.json" in capsys.readouterr().err


class TestCheckCommand:
    def test_all_groups_pass(self, capsys):
        assert main(["--env", "testing", "check"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines == [
            f"PASS {name}" for name in ("masks", "causality", "gradients", "pmf", "pgm", "fast_mode")
        ]

    def test_failure_exits_nonzero(self, mocker, capsys):
        mocker.patch("src.cli.commands.run_checks", return_value=False)
        assert main(["--env", "testing", "check"]) == 1
        assert "invariant" in capsys.readouterr().err
