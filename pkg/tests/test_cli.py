"""
Tests for the command-line interface
====================================

Exit codes, the single ERROR line, ``--key=value`` overrides, and an
end-to-end gen/train/eval/infer run at tiny geometry.
"""

import os

import pytest

from texture_refine.cli import load_config, main, parse_args, split_overrides
from texture_refine.data.dataset import DATASET_FILE

from conftest import tiny_overrides

pytestmark = pytest.mark.usefixtures("reset_logging")

TINY_GEN = ["--num_views=2", "--image_height=32", "--image_width=16", "--texture_size=16", "--log_file="]


def error_lines(text):
    return [line for line in text.splitlines() if line.startswith("ERROR:")]


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


# ============================================================================
# Argument handling
# ============================================================================


class TestArguments:

    def test_overrides_collected(self):
        args, overrides = parse_args(["train", "--use_url=false", "--width=8"])
        assert args.command == "train"
        assert overrides == ["use_url=false", "width=8"]

    def test_override_beats_config_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text('{"width": 16, "lr": 0.01}', encoding="utf-8")
        args, overrides = parse_args(["train", "--config", str(path), "--width=8"])
        config = load_config(args, overrides)
        assert config.model.width == 8
        assert config.train.lr == 0.01

    def test_log_flags_become_overrides(self):
        args, overrides = parse_args(["gen", "--log-level", "DEBUG", "--log-file", "x.log"])
        config = load_config(args, overrides)
        assert config.log_level == "DEBUG"
        assert config.log_file == "x.log"

    def test_stray_token_rejected(self):
        with pytest.raises(ValueError):
            split_overrides(["train", "--width=8"])

    def test_usage_errors_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            parse_args([])
        assert exc.value.code == 2
        with pytest.raises(SystemExit) as exc:
            parse_args(["gen", "stray"])
        assert exc.value.code == 2


# ============================================================================
# Failures
# ============================================================================


class TestFailures:
    """Every failure is one ERROR line and exit status 1."""

    @pytest.mark.parametrize("argv,error", [
        (["eval", "--ckpt", "missing", "--log_file="], "ERROR: CheckpointError:"),
        (["train", "--widht=8", "--log_file="], "ERROR: ValueError:"),
        (["train", "--width=0", "--log_file="], "ERROR: ValueError:"),
        (["train", "--config", "nothing.json"], "ERROR: ValueError:"),
        (["train", "--dataset_dir=nowhere", "--log_file="], "ERROR: DatasetError:"),
        (["ablate", "--seeds", "a,b", "--log_file="], "ERROR: ValueError:"),
    ])
    def test_single_error_line(self, argv, error, capsys):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1
        lines = error_lines(capsys.readouterr().out)
        assert len(lines) == 1
        assert lines[0].startswith(error)


# ============================================================================
# Commands
# ============================================================================


class TestCommands:

    def test_gen(self, tmp_path, capsys):
        out = str(tmp_path / "data")
        assert main(["gen", "--n", "2", "--seed", "3", "--out", out, "-q"] + TINY_GEN) == 0
        assert os.path.exists(os.path.join(out, DATASET_FILE))
        assert sorted(d for d in os.listdir(out) if d.startswith("id_")) == ["id_0000", "id_0001"]
        assert "Dataset written to" in capsys.readouterr().out

    def test_train_eval_infer_offsets(self, tiny_dataset_dir, tmp_path, capsys):
        run = str(tmp_path / "run")
        overrides = ["--" + item for item in tiny_overrides(tiny_dataset_dir, run)]
        assert main(["train", "-q"] + overrides) == 0
        checkpoint = os.path.join(run, "checkpoint")
        assert os.path.exists(os.path.join(checkpoint, "model.txrf"))

        assert main(["eval", "--ckpt", checkpoint, "--log_file="]) == 0
        assert os.path.exists(os.path.join(checkpoint, "eval_test", "report.json"))
        assert "SSIM" in capsys.readouterr().out

        view_dir = os.path.join(tiny_dataset_dir, "id_0000", "views", "1")
        assert main(["infer", "--ckpt", checkpoint, "--image-dir", view_dir, "--log_file="]) == 0
        assert len(os.listdir(os.path.join(checkpoint, "infer", "id_0000_1"))) == 11

        assert main(["offsets", "--ckpt", checkpoint, "--image", view_dir,
                     "--uv-points", "0.3,0.3;0.7,0.6", "--log_file="]) == 0
        assert os.path.exists(os.path.join(checkpoint, "offsets.png"))

        assert main(["train", "-q", "--resume", checkpoint] + overrides + ["--max_steps=3"]) == 0
        assert "Steps: 3" in capsys.readouterr().out
