"""
Long training reproductions
===========================

Marked ``slow``; select with ``pytest -m slow``. They train at desk width on
full-size mannequins and check orderings between configurations rather
than absolute numbers.
"""

import os

import numpy as np
import pytest

from texture_refine.data.dataset import Dataset, render_dataset
from texture_refine.data.generator import GeneratorSettings
from texture_refine.infrastructure.config import RunConfig
from texture_refine.infrastructure.logging import read_loss_log
from texture_refine.losses.features import FeaturePyramid
from texture_refine.services.ablation_service import AblationService
from texture_refine.services.evaluation_service import EvaluationService
from texture_refine.services.model_service import ModelService
from texture_refine.services.training_service import LOSS_LOG, TrainingService

pytestmark = pytest.mark.slow

SEEDS = (1, 2, 3)
# steps per comparison run at desk width
COMPARISON_STEPS = 1500


@pytest.fixture(scope="module")
def features():
    return FeaturePyramid()


@pytest.fixture(scope="module")
def desk_dataset_dir(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("desk"))
    render_dataset(32, 1, out, GeneratorSettings(), test_fraction=0.25, progress=False)
    return out


def desk_config(dataset_dir, output_dir, *overrides):
    return RunConfig().with_overrides([
        "width=32",
        f"max_steps={COMPARISON_STEPS}",
        "val_every=0",
        "checkpoint_every=0",
        "log_file=",
        f"dataset_dir={dataset_dir}",
        f"output_dir={output_dir}",
    ] + list(overrides))


def train_and_evaluate(config, features, split="test"):
    models = ModelService()
    bundle = models.build(config)
    dataset = Dataset(config.data.dataset_dir)
    TrainingService(bundle, dataset, models, features=features, progress=False).train()
    return EvaluationService(models, features).evaluate(bundle, dataset, split)


def wins(pairs):
    """How many (better, worse) pairs are strictly ordered."""
    return sum(1 for better, worse in pairs if better > worse)


class TestOverfit:
    """One identity, eight views, every loss on."""

    def test_reaches_high_same_view_ssim(self, tmp_path, features):
        data = str(tmp_path / "one")
        render_dataset(1, 9, data, GeneratorSettings(), test_fraction=0.0, progress=False)
        config = desk_config(data, str(tmp_path / "run"), "max_steps=500", "num_identities=1")
        report = train_and_evaluate(config, features, split="train")
        assert report.ssim_sv >= 0.95

        totals = np.array([row["total"] for row in read_loss_log(os.path.join(config.output_dir, LOSS_LOG))])
        window = np.convolve(totals[:200], np.ones(50) / 50, mode="valid")
        assert window[-1] < window[0]


class TestViewSupervision:
    """Single-view training fits the input view; multi-view generalizes to the others."""

    def test_single_vs_multi_view(self, desk_dataset_dir, tmp_path, features):
        sv_pairs, nv_pairs = [], []
        for seed in SEEDS:
            multi = train_and_evaluate(
                desk_config(desk_dataset_dir, str(tmp_path / f"multi_{seed}"), f"seed={seed}"), features)
            single = train_and_evaluate(
                desk_config(desk_dataset_dir, str(tmp_path / f"single_{seed}"), f"seed={seed}",
                            "multi_view=false"), features)
            sv_pairs.append((single.ssim_sv, multi.ssim_sv))
            nv_pairs.append((multi.ssim_nv, single.ssim_nv))
        assert wins(sv_pairs) >= 2
        assert wins(nv_pairs) >= 2


class TestAblationTrends:
    """Directional effects of each component over the baseline."""

    @pytest.fixture(scope="class")
    def result(self, desk_dataset_dir, tmp_path_factory, features):
        base = desk_config(desk_dataset_dir, str(tmp_path_factory.mktemp("unused")))
        out = str(tmp_path_factory.mktemp("ablation"))
        return AblationService(ModelService(), features, progress=False).run(base, desk_dataset_dir, SEEDS, out)

    def test_deformable_refinement_lowers_pdist(self, result):
        s = result.summaries
        assert wins([(s["BL"][k]["pdist_sv"], s["BL+Deformable Refine"][k]["pdist_sv"]) for k in SEEDS]) >= 2
        assert wins([(s["BL+Conv Refine"][k]["pdist_sv"], s["BL+Deformable Refine"][k]["pdist_sv"])
                     for k in SEEDS]) >= 2

    def test_uncertainty_loss_raises_ssim(self, result):
        s = result.summaries
        assert wins([(s["BL+URL"][k]["ssim_sv"], s["BL"][k]["ssim_sv"]) for k in SEEDS]) >= 2

    def test_cycle_loss_improves_invisible_texels(self, result):
        s = result.summaries
        assert wins([(s["BL"][k]["inv_mse"], s["BL+Cycle"][k]["inv_mse"]) for k in SEEDS]) >= 2
