"""
Tests for the service layer
===========================

Short training runs on the tiny dataset (width 4, two steps), then the
commands that consume their checkpoints: evaluation, inference, offset
visualization and the ablation grid.
"""

import math
import os

import numpy as np
import pytest

from texture_refine.autograd.tensor import Tensor
from texture_refine.data.dataset import Dataset
from texture_refine.domain.errors import ContractViolation, DatasetError, NonFiniteLossError
from texture_refine.infrastructure.checkpoint import (
    CONFIDENCE_FILE,
    META_FILE,
    MODEL_FILE,
    OPTIMIZER_FILE,
)
from texture_refine.infrastructure.logging import read_loss_log
from texture_refine.infrastructure.persistence import load_json, load_rgb, to_uint8
from texture_refine.losses.features import FeaturePyramid
from texture_refine.losses.objectives import total_loss
from texture_refine.losses.schedule import LossWeights
from texture_refine.nn.deformable import base_grid
from texture_refine.presentation.formatters import (
    ABLATION_METRICS,
    ablation_columns,
    ablation_csv,
    ablation_markdown,
    parse_ablation_csv,
)
from texture_refine.rendering.rasterizer import rasterize
from texture_refine.rendering.texturing import render_texture
from texture_refine.services.ablation_service import ABLATION_ROWS, AblationService, ablation_configs
from texture_refine.services.evaluation_service import EvaluationService
from texture_refine.services.inference_service import InferenceService, load_input
from texture_refine.services.model_service import ModelService
from texture_refine.services.offsets_service import OffsetsService, parse_uv_points, uv_to_texel
from texture_refine.services.training_service import CHECKPOINT_DIR, LOSS_LOG, TrainingService, check_finite


@pytest.fixture(scope="module")
def features():
    return FeaturePyramid()


def train(config, features, steps=None):
    """Build and train a bundle; returns (bundle, result)."""
    if steps is not None:
        config = config.with_overrides([f"max_steps={steps}"])
    models = ModelService()
    bundle = models.build(config)
    trainer = TrainingService(bundle, Dataset(config.data.dataset_dir), models, features=features, progress=False)
    return bundle, trainer.train()


def first_view_dir(dataset_dir):
    return os.path.join(dataset_dir, "id_0000", "views", "0")


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


# ============================================================================
# Model service
# ============================================================================


class TestModelService:
    """Bundles in and out of checkpoint directories."""

    def test_build_follows_switches(self, tiny_config):
        models = ModelService()
        assert models.build(tiny_config).confidence is not None
        assert models.build(tiny_config.with_overrides(["use_url=false"])).confidence is None

    def test_build_is_seeded(self, tiny_config):
        a = ModelService().build(tiny_config)
        b = ModelService().build(tiny_config)
        for (name, pa), (_, pb) in zip(a.named_parameters().items(), b.named_parameters().items()):
            np.testing.assert_array_equal(pa.data, pb.data, err_msg=name)

    def test_save_load_save_is_byte_identical(self, tiny_config, tmp_path):
        models = ModelService()
        bundle = models.build(tiny_config)
        bundle.step = 5
        models.save(bundle, str(tmp_path / "a"), models.optimizer(bundle))
        loaded, adam = models.load(str(tmp_path / "a"), optimizer=True)
        assert loaded.step == 5
        assert loaded.fingerprint == bundle.fingerprint
        models.save(loaded, str(tmp_path / "b"), adam)
        for name in (MODEL_FILE, CONFIDENCE_FILE, OPTIMIZER_FILE, META_FILE):
            assert read_bytes(str(tmp_path / "a" / name)) == read_bytes(str(tmp_path / "b" / name))


# ============================================================================
# Training
# ============================================================================


class TestTrainingService:
    """The optimization loop and its artifacts."""

    def test_smoke_run(self, tiny_config, features):
        bundle, result = train(tiny_config, features)
        assert result.steps == 2
        assert not result.interrupted
        assert math.isfinite(result.last_losses["total"])

        rows = read_loss_log(os.path.join(tiny_config.output_dir, LOSS_LOG))
        assert [row["step"] for row in rows] == [1.0, 2.0]
        assert all(math.isfinite(v) for row in rows for v in row.values())
        assert all(row["base_nv"] != 0.0 for row in rows)

        checkpoint = os.path.join(tiny_config.output_dir, CHECKPOINT_DIR)
        for name in (MODEL_FILE, CONFIDENCE_FILE, OPTIMIZER_FILE, META_FILE):
            assert os.path.exists(os.path.join(checkpoint, name))
        meta = load_json(os.path.join(checkpoint, META_FILE))
        assert meta["fingerprint"] == tiny_config.fingerprint()
        assert meta["step"] == 2

    def test_parameters_change(self, tiny_config, features):
        before = {k: p.data.copy() for k, p in ModelService().build(tiny_config).named_parameters().items()}
        bundle, _ = train(tiny_config, features, steps=1)
        after = bundle.named_parameters()
        assert any(not np.array_equal(before[k], after[k].data) for k in before)

    def test_single_view_drops_novel_terms(self, tiny_config, features):
        config = tiny_config.with_overrides(["multi_view=false"])
        train(config, features)
        rows = read_loss_log(os.path.join(config.output_dir, LOSS_LOG))
        assert all(row["base_nv"] == 0.0 and row["cycle"] == 0.0 for row in rows)

    def test_baseline_configuration(self, tiny_config, features):
        config = tiny_config.with_overrides(["use_refine=false", "use_url=false", "use_cycle=false"])
        bundle, result = train(config, features)
        assert bundle.confidence is None
        assert result.steps == 2
        rows = read_loss_log(os.path.join(config.output_dir, LOSS_LOG))
        assert all(row["url"] == 0.0 and row["cycle"] == 0.0 for row in rows)

    def test_resume_continues_step_and_log(self, tiny_config, features):
        train(tiny_config, features)
        config = tiny_config.with_overrides(["max_steps=3"])
        models = ModelService()
        bundle = models.build(config)
        trainer = TrainingService(bundle, Dataset(config.data.dataset_dir), models, features=features, progress=False)
        trainer.resume(os.path.join(config.output_dir, CHECKPOINT_DIR))
        assert bundle.step == 2
        assert trainer.optimizer.state.step == 2
        result = trainer.train()
        assert result.steps == 3
        rows = read_loss_log(os.path.join(config.output_dir, LOSS_LOG))
        assert [row["step"] for row in rows] == [1.0, 2.0, 3.0]

    def test_stop_before_first_step(self, tiny_config, features):
        models = ModelService()
        bundle = models.build(tiny_config)
        trainer = TrainingService(bundle, Dataset(tiny_config.data.dataset_dir), models, features=features,
                                  progress=False)
        trainer.stop()
        result = trainer.train()
        assert result.interrupted
        assert result.steps == 0
        assert os.path.exists(os.path.join(result.checkpoint_dir, MODEL_FILE))

    def test_validation_renders(self, tiny_config, features):
        config = tiny_config.with_overrides(["val_every=1", "max_steps=1"])
        train(config, features)
        for suffix in ("texture", "sv", "nv"):
            assert os.path.exists(os.path.join(config.output_dir, "val", f"step_000001_{suffix}.png"))

    def test_geometry_mismatch(self, tiny_config, features):
        config = tiny_config.with_overrides(["texture_size=64"])
        models = ModelService()
        with pytest.raises(DatasetError):
            TrainingService(models.build(config), Dataset(config.data.dataset_dir), models, features=features,
                            progress=False)

    def test_non_finite_loss_names_term(self):
        breakdown = total_loss(LossWeights(), float("nan"), 1.0, 0.0, 0.0)
        with pytest.raises(NonFiniteLossError, match="base_sv"):
            check_finite(breakdown, 4)


# ============================================================================
# Evaluation, inference, offsets
# ============================================================================


@pytest.fixture
def trained(tiny_config, features):
    """Two-step run; returns (bundle, checkpoint directory)."""
    bundle, result = train(tiny_config, features)
    return bundle, result.checkpoint_dir


class TestEvaluationService:

    def test_checkpoint_reproduces_in_memory_report(self, trained, tiny_dataset, features, tmp_path):
        bundle, checkpoint = trained
        service = EvaluationService(ModelService(), features)
        live = service.evaluate(bundle, tiny_dataset)
        loaded = service.evaluate_checkpoint(checkpoint, out_dir=str(tmp_path / "eval"))
        assert loaded.summary() == live.summary()
        assert loaded.fingerprint == bundle.fingerprint
        report = load_json(str(tmp_path / "eval" / "report.json"))
        assert report["fingerprint"] == bundle.fingerprint
        assert report["num_novel"] == live.num_inputs * 3

    def test_default_report_location(self, trained, features):
        _, checkpoint = trained
        EvaluationService(ModelService(), features).evaluate_checkpoint(checkpoint, split="all")
        assert os.path.exists(os.path.join(checkpoint, "eval_all", "report_rows.csv"))


class TestInferenceService:
    """Texture, SV render, turntable and mask of one view."""

    def test_eleven_images(self, trained, tiny_dataset_dir, tmp_path):
        bundle, _ = trained
        result = InferenceService(bundle).run(first_view_dir(tiny_dataset_dir), str(tmp_path / "out"))
        assert len(result.paths) == 11
        assert sorted(os.listdir(str(tmp_path / "out"))) == sorted(
            ["texture.png", "sv.png", "mask.png"] + [f"nv_{k}.png" for k in range(8)]
        )
        assert result.texture.shape == (3, 32, 32)
        assert np.all((result.mask >= 0.0) & (result.mask <= 1.0))

    def test_texture_png_reproduces_sv_render(self, trained, tiny_dataset_dir, tmp_path):
        bundle, _ = trained
        view_dir = first_view_dir(tiny_dataset_dir)
        out = str(tmp_path / "out")
        InferenceService(bundle).run(view_dir, out)
        view, mesh = load_input(view_dir)
        texture = load_rgb(os.path.join(out, "texture.png"))
        rendered = render_texture(rasterize(mesh, view.pose, view.camera), Tensor(texture)).data
        np.testing.assert_array_equal(to_uint8(rendered), to_uint8(load_rgb(os.path.join(out, "sv.png"))))

    def test_missing_view(self, trained, tmp_path):
        bundle, _ = trained
        with pytest.raises(DatasetError):
            InferenceService(bundle).run(str(tmp_path / "nowhere"), str(tmp_path / "out"))


class TestOffsetsService:
    """Deformable tap positions drawn onto the input view."""

    def test_zero_offsets_form_unit_grid(self, trained, tiny_dataset_dir):
        bundle, _ = trained
        refinement = bundle.estimator.refinement
        refinement.offset_conv.weight.data[...] = 0.0
        refinement.offset_conv.bias.data[...] = 0.0
        view, marks = OffsetsService(bundle).marks(first_view_dir(tiny_dataset_dir), [(0.5, 0.5), (0.2, 0.8)])
        gy, gx = base_grid(view.image.shape[1:], (32, 32))
        expected = np.array([(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)], dtype=float)
        for mark in marks:
            row, col = mark.texel
            centre = np.array([gy[row, col], gx[row, col]])
            np.testing.assert_allclose(mark.positions - centre, expected, atol=1e-12)
        assert not np.allclose(marks[0].centroid, marks[1].centroid)

    def test_marks_stay_in_image(self, trained, tiny_dataset_dir, tmp_path):
        bundle, _ = trained
        out = str(tmp_path / "offsets.png")
        marks = OffsetsService(bundle).run(first_view_dir(tiny_dataset_dir), [(0.0, 0.0), (1.0, 1.0)], out)
        assert os.path.exists(out)
        assert load_json(str(tmp_path / "offsets.json"))["fingerprint"] == bundle.fingerprint
        for mark in marks:
            assert np.all(mark.positions[:, 0] >= 0) and np.all(mark.positions[:, 0] <= 31)
            assert np.all(mark.positions[:, 1] >= 0) and np.all(mark.positions[:, 1] <= 15)

    def test_needs_deformable_refinement(self, tiny_config):
        bundle = ModelService().build(tiny_config.with_overrides(["refine_mode=conv"]))
        with pytest.raises(ContractViolation):
            OffsetsService(bundle)

    def test_uv_points(self):
        assert parse_uv_points("0.25,0.5; 1,0") == [(0.25, 0.5), (1.0, 0.0)]
        assert uv_to_texel((1.0, 0.0), 32) == (0, 31)
        for text in ("", "0.5", "1.5,0.2", "a,b"):
            with pytest.raises(ContractViolation):
                parse_uv_points(text)


# ============================================================================
# Ablation
# ============================================================================


class TestAblation:
    """Five configurations, one table."""

    def test_rows_differ_only_in_switches(self, tiny_config):
        configs = ablation_configs(tiny_config, seed=2)
        assert list(configs) == [name for name, _ in ABLATION_ROWS]
        flat = {name: config.to_dict() for name, config in configs.items()}
        changed = {k for k in flat["BL"] if flat["BL"][k] != flat["BL+URL"][k]}
        assert changed == {"use_url"}
        assert len({config.fingerprint() for config in configs.values()}) == 5
        assert all(config.seed == 2 for config in configs.values())

    def test_table_round_trip(self):
        seeds = [1, 2, 3]
        columns = ablation_columns(seeds)
        assert len(columns) == len(ABLATION_METRICS) * (len(seeds) + 1)
        rng = np.random.default_rng(0)
        table = {name: {c: float(rng.uniform()) for c in columns} for name, _ in ABLATION_ROWS}
        fingerprints = {name: ["a", "b", "c"] for name in table}
        assert parse_ablation_csv(ablation_csv(table, seeds, fingerprints)) == table
        markdown = ablation_markdown(table, seeds, fingerprints)
        assert all(f"| {name} |" in markdown for name in table)

    def test_grid_run(self, tiny_config, tiny_dataset_dir, features, tmp_path):
        base = tiny_config.with_overrides(["max_steps=1"])
        result = AblationService(ModelService(), features, progress=False).run(
            base, tiny_dataset_dir, [5], str(tmp_path / "ablation")
        )
        assert set(result.table) == {name for name, _ in ABLATION_ROWS}
        with open(result.paths["csv"], encoding="utf-8") as f:
            assert parse_ablation_csv(f.read()) == result.table
        for name, values in result.table.items():
            assert set(values) == set(ablation_columns([5]))
            assert "inv_mse" in result.summaries[name][5]
        assert os.path.exists(str(tmp_path / "ablation" / "bl_url" / "seed_5" / CHECKPOINT_DIR / MODEL_FILE))
