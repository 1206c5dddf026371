"""
Tests for the infrastructure package
====================================

- RunConfig loading, validation, overrides and fingerprints
- TXRF encoding and checkpoint directories
- Loss log and application logging
- JSON and PNG persistence
- Signal handling
"""

import logging
import os
import signal

import numpy as np
import pytest

from texture_refine.domain.errors import CheckpointError, DatasetError
from texture_refine.infrastructure.checkpoint import (
    CONFIDENCE_FILE,
    META_FILE,
    MODEL_FILE,
    OPTIMIZER_FILE,
    decode_txrf,
    encode_txrf,
    load_checkpoint,
    save_checkpoint,
    snap_to_f32,
)
from texture_refine.infrastructure.config import RunConfig
from texture_refine.infrastructure.logging import LossLog, read_loss_log, setup_logging
from texture_refine.infrastructure.persistence import (
    from_uint8,
    load_gray,
    load_json,
    load_rgb,
    quantize,
    save_json,
    save_rgb,
    save_unit_gray,
    to_uint8,
)
from texture_refine.infrastructure.signals import SignalHandler

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


def sample_records(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "conv.weight": rng.normal(size=(4, 3, 3, 3)),
        "conv.bias": rng.normal(size=(4,)),
        "step": np.array(7.0),
    }


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


# ============================================================================
# Configuration
# ============================================================================


class TestRunConfig:
    """Flat JSON configuration with nested sections."""

    def test_defaults_round_trip(self):
        config = RunConfig()
        assert RunConfig.from_dict(config.to_dict()) == config

    def test_flat_keys(self):
        flat = RunConfig().to_dict()
        for key in ("seed", "width", "lambda_reid", "dataset_dir", "lr", "output_dir", "log_level"):
            assert key in flat
        assert flat["lambda_cycle"] == 0.1
        assert flat["lambda_url"] == 1e-3

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="Unknown configuration keys"):
            RunConfig.from_dict({"widht": 8})

    @pytest.mark.parametrize("key,value", [
        ("width", 0),
        ("refine_mode", "dilated"),
        ("lambda_style", -1.0),
        ("num_views", 1),
        ("image_height", 30),
        ("texture_size", 12),
        ("test_fraction", 1.0),
        ("lr", 0.0),
        ("beta1", 1.0),
        ("log_level", "LOUD"),
    ])
    def test_invalid_values(self, key, value):
        with pytest.raises(ValueError):
            RunConfig.from_dict({key: value})

    def test_overrides_are_typed(self):
        config = RunConfig().with_overrides(["use_url=false", "--lr=0.01", "width=8", "refine-mode=conv"])
        assert config.loss.use_url is False
        assert config.train.lr == 0.01
        assert config.model.width == 8
        assert config.model.refine_mode == "conv"

    @pytest.mark.parametrize("override", ["use_url=maybe", "width=eight", "width", "colour=red"])
    def test_bad_overrides(self, override):
        with pytest.raises(ValueError):
            RunConfig().with_overrides([override])

    def test_overrides_win_over_file(self, tmp_path):
        path = tmp_path / "config.json"
        save_json(str(path), {"width": 16, "epochs": 3})
        config = RunConfig.from_file(str(path)).with_overrides(["width=4"])
        assert config.model.width == 4
        assert config.train.epochs == 3

    def test_fingerprint(self):
        base = RunConfig()
        fingerprint = base.fingerprint()
        assert len(fingerprint) == 12
        int(fingerprint, 16)
        assert base.with_overrides(["output_dir=elsewhere", "log_level=DEBUG"]).fingerprint() == fingerprint
        assert base.with_overrides(["use_url=false"]).fingerprint() != fingerprint

    def test_presets(self):
        desk = RunConfig.from_file(os.path.join(CONFIG_DIR, "desk.json"))
        full = RunConfig.from_file(os.path.join(CONFIG_DIR, "full.json"))
        assert (desk.model.width, desk.train.epochs, desk.train.batch_size) == (32, 30, 8)
        assert (full.model.width, full.train.epochs, full.train.batch_size) == (128, 200, 16)
        assert desk.data.num_identities == 32
        assert desk.fingerprint() != full.fingerprint()


# ============================================================================
# Checkpoints
# ============================================================================


class TestTxrf:
    """Binary weight records."""

    def test_decode_restores_float32_values(self):
        records = sample_records()
        decoded = decode_txrf(encode_txrf(records))
        assert list(decoded) == list(records)
        for name, array in records.items():
            assert decoded[name].shape == array.shape
            np.testing.assert_array_equal(decoded[name], array.astype(np.float32))

    def test_re_encoding_is_byte_identical(self):
        payload = encode_txrf(sample_records(1))
        assert encode_txrf(decode_txrf(payload)) == payload

    def test_header(self):
        payload = encode_txrf({})
        assert payload == b"TXRF" + (1).to_bytes(4, "little")

    def test_bad_magic(self):
        payload = encode_txrf(sample_records())
        with pytest.raises(CheckpointError, match="magic"):
            decode_txrf(b"XXXX" + payload[4:])

    def test_truncated(self):
        payload = encode_txrf(sample_records())
        with pytest.raises(CheckpointError):
            decode_txrf(payload[:-3])

    def test_snap_is_in_place(self):
        records = {"x": np.array([0.1, 1.0 / 3.0])}
        live = records["x"]
        snap_to_f32(records)
        assert live is records["x"]
        np.testing.assert_array_equal(live, np.array([0.1, 1.0 / 3.0], dtype=np.float32))


class TestCheckpointDirectory:
    """save -> load -> save writes the same bytes."""

    def test_round_trip_is_byte_identical(self, tmp_path):
        first, second = str(tmp_path / "a"), str(tmp_path / "b")
        save_checkpoint(first, sample_records(0), sample_records(1), sample_records(2), 12, {"width": 4}, "abc123")
        loaded = load_checkpoint(first)
        assert loaded.step == 12
        assert loaded.fingerprint == "abc123"
        assert loaded.config == {"width": 4}
        save_checkpoint(second, loaded.model, loaded.confidence, loaded.optimizer, loaded.step,
                        loaded.config, loaded.fingerprint)
        for name in (MODEL_FILE, CONFIDENCE_FILE, OPTIMIZER_FILE, META_FILE):
            assert read_bytes(os.path.join(first, name)) == read_bytes(os.path.join(second, name))

    def test_optional_parts(self, tmp_path):
        save_checkpoint(str(tmp_path), sample_records(), None, None, 0, {}, "")
        loaded = load_checkpoint(str(tmp_path))
        assert loaded.confidence is None
        assert loaded.optimizer is None

    def test_missing_directory(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(str(tmp_path / "nothing"))

    def test_missing_model_file(self, tmp_path):
        save_checkpoint(str(tmp_path), sample_records(), None, None, 0, {}, "")
        os.remove(os.path.join(str(tmp_path), MODEL_FILE))
        with pytest.raises(CheckpointError):
            load_checkpoint(str(tmp_path))


# ============================================================================
# Logging
# ============================================================================


class TestLossLog:
    """CSV with one row per step."""

    def test_rows(self, tmp_path):
        path = str(tmp_path / "losses.csv")
        log = LossLog(path, ["base_sv", "cycle"])
        log.append(1, {"base_sv": 2.5, "cycle": 0.25, "total": 2.525})
        log.append(2, {"base_sv": 2.0, "total": 2.0})
        log.close()
        rows = read_loss_log(path)
        assert rows == [
            {"step": 1.0, "base_sv": 2.5, "cycle": 0.25, "total": 2.525},
            {"step": 2.0, "base_sv": 2.0, "cycle": 0.0, "total": 2.0},
        ]

    def test_append_keeps_single_header(self, tmp_path):
        path = str(tmp_path / "losses.csv")
        for step in (1, 2):
            log = LossLog(path, ["url"], append=True)
            log.append(step, {"url": 1.0, "total": 1.0})
            log.close()
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        assert lines[0] == "step,url,total"
        assert len(lines) == 3


@pytest.mark.usefixtures("reset_logging")
class TestSetupLogging:

    def test_file_handler(self, tmp_path):
        path = str(tmp_path / "logs" / "run.log")
        setup_logging(path, "INFO")
        logging.getLogger("texture_refine.tests").info("step finished")
        logging.getLogger("texture_refine.tests").debug("hidden detail")
        for handler in logging.getLogger().handlers:
            handler.flush()
        with open(path, encoding="utf-8") as f:
            text = f.read()
        assert "texture_refine.tests - INFO - step finished" in text
        assert "hidden detail" not in text

    def test_repeated_setup_replaces_handlers(self):
        setup_logging(None)
        setup_logging(None)
        ours = [h for h in logging.getLogger().handlers if getattr(h, "_texture_refine", False)]
        assert len(ours) == 1


# ============================================================================
# Persistence
# ============================================================================


class TestPersistence:
    """8-bit images and atomic JSON."""

    def test_uint8_mapping(self):
        np.testing.assert_array_equal(to_uint8(np.array([-1.0, 0.0, 1.0, 2.0, -3.0])), [0, 128, 255, 255, 0])
        np.testing.assert_allclose(from_uint8(np.array([0, 255])), [-1.0, 1.0])

    def test_quantize_is_idempotent(self, rng):
        x = quantize(rng.uniform(-1, 1, size=(3, 5, 5)))
        np.testing.assert_array_equal(quantize(x), x)

    def test_rgb_round_trip(self, tmp_path, rng):
        image = rng.uniform(-1, 1, size=(3, 6, 4))
        path = str(tmp_path / "img" / "x.png")
        save_rgb(path, image)
        np.testing.assert_array_equal(load_rgb(path), quantize(image))

    def test_unit_gray(self, tmp_path):
        path = str(tmp_path / "mask.png")
        save_unit_gray(path, np.array([[0.0, 0.5], [1.0, 2.0]]))
        np.testing.assert_array_equal(load_gray(path), [[0, 128], [255, 255]])

    def test_json_is_atomic(self, tmp_path):
        path = str(tmp_path / "deep" / "data.json")
        save_json(path, {"a": [1, 2]})
        assert load_json(path) == {"a": [1, 2]}
        assert not os.path.exists(path + ".tmp")

    def test_missing_and_invalid_json(self, tmp_path):
        with pytest.raises(DatasetError):
            load_json(str(tmp_path / "none.json"))
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        with pytest.raises(DatasetError):
            load_json(str(bad))

    def test_missing_image(self, tmp_path):
        with pytest.raises(DatasetError):
            load_rgb(str(tmp_path / "none.png"))


class TestSignalHandler:

    def test_callback_and_restore(self):
        before = signal.getsignal(signal.SIGTERM)
        calls = []
        handler = SignalHandler()
        handler.register(lambda: calls.append(1))
        assert signal.getsignal(signal.SIGTERM) == handler._handle_signal
        handler._handle_signal(signal.SIGTERM, None)
        assert calls == [1]
        handler.restore()
        assert signal.getsignal(signal.SIGTERM) == before
