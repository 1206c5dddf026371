"""
Tests for the losses package
============================

- Re-identification and part-style losses on the frozen feature pyramid
- Face-structure loss against a face bank
- Laplacian reconstruction loss and its optimal scale
- Cycle loss, loss assembly and the intermediate-supervision schedule
"""

import math

import numpy as np
import pytest

from texture_refine.autograd import ops
from texture_refine.autograd.gradcheck import finite_diff_check
from texture_refine.autograd.tensor import Tape, Tensor
from texture_refine.domain.errors import ContractViolation
from texture_refine.domain.models import FaceBank
from texture_refine.losses.features import FeaturePyramid
from texture_refine.losses.objectives import (
    BaseTerms,
    cycle_loss,
    face_structure_loss,
    gram,
    part_style_loss,
    reid_loss,
    resize_nearest,
    total_loss,
    uncertainty_recon_loss,
)
from texture_refine.losses.schedule import LossWeights, intermediate_weight
from texture_refine.rendering.mannequin import ATLAS

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="module")
def features():
    return FeaturePyramid()


@pytest.fixture(scope="module")
def small_features():
    """Narrow pyramid for finite-difference checks."""
    return FeaturePyramid(seed=7, channels=(4, 4, 4, 4))


@pytest.fixture
def image_pair():
    rng = np.random.default_rng(21)
    return rng.uniform(-1, 1, size=(2, 3, 32, 16)), rng.uniform(-1, 1, size=(2, 3, 32, 16))


def bank_of(*textures):
    return FaceBank(textures=[np.asarray(t) for t in textures], face_mask=ATLAS.face_mask(textures[0].shape[-1]))


# ============================================================================
# Feature pyramid
# ============================================================================


class TestFeaturePyramid:
    """Frozen random conv stages."""

    def test_stage_shapes(self, features):
        out = features.extract(Tensor(np.zeros((1, 3, 32, 16))))
        assert sorted(out) == [1, 2, 3, 4]
        assert out[1].shape == (1, 16, 16, 8)
        assert out[4].shape == (1, 128, 2, 1)

    def test_frozen(self, features):
        assert all(not p.requires_grad for p in features.parameters())

    def test_seeded(self, image_pair):
        a = FeaturePyramid(seed=3).pooled(image_pair[0])
        b = FeaturePyramid(seed=3).pooled(image_pair[0])
        np.testing.assert_array_equal(a, b)

    def test_indivisible_image(self, features):
        with pytest.raises(ContractViolation):
            features.extract(Tensor(np.zeros((1, 3, 24, 16))))


# ============================================================================
# Re-identification and style
# ============================================================================


class TestReidLoss:

    def test_identical_images(self, features, image_pair):
        a, _ = image_pair
        assert reid_loss(Tensor(a), Tensor(a), features).item() == 0.0

    def test_symmetric(self, features, image_pair):
        a, b = image_pair
        assert reid_loss(Tensor(a), Tensor(b), features).item() == pytest.approx(
            reid_loss(Tensor(b), Tensor(a), features).item(), rel=1e-12)

    def test_matches_feature_dump(self, features, image_pair):
        a, b = image_pair
        fa = {j: t.data for j, t in features.extract(Tensor(a)).items()}
        fb = {j: t.data for j, t in features.extract(Tensor(b)).items()}
        expected = sum(np.sum((fa[j] - fb[j]) ** 2) for j in (1, 2, 3, 4)) / 2
        assert reid_loss(Tensor(a), Tensor(b), features).item() == pytest.approx(expected, rel=1e-10)

    def test_shape_mismatch(self, features):
        with pytest.raises(ContractViolation):
            reid_loss(Tensor(np.zeros((1, 3, 16, 16))), Tensor(np.zeros((1, 3, 32, 16))), features)

    def test_gradient(self, small_features):
        rng = np.random.default_rng(1)
        target = Tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))
        rendered = rng.uniform(-1, 1, size=(1, 3, 16, 16))
        assert finite_diff_check(lambda t: reid_loss(target, t, small_features), rendered) <= 1e-4


class TestGram:

    def test_hand_computed(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]], [[0.0, 1.0], [0.0, 1.0]]]])
        expected = np.array([[30.0, 6.0], [6.0, 2.0]]) / 8.0
        np.testing.assert_allclose(gram(Tensor(x)).data[0], expected)

    def test_resize_nearest(self):
        masks = np.arange(16.0).reshape(1, 1, 4, 4)
        np.testing.assert_array_equal(resize_nearest(masks, (2, 2))[0, 0], [[5.0, 7.0], [13.0, 15.0]])


class TestPartStyleLoss:

    def setup_method(self):
        rng = np.random.default_rng(3)
        labels = rng.integers(0, 3, size=(2, 32, 16))
        self.parts = np.stack([(labels == p) for p in range(3)], axis=1).astype(np.float64)

    def test_identical(self, features, image_pair):
        a, _ = image_pair
        assert part_style_loss(Tensor(a), Tensor(a), self.parts, self.parts, features).item() == 0.0

    def test_empty_masks_contribute_nothing(self, features, image_pair):
        a, b = image_pair
        empty = np.zeros_like(self.parts)
        assert part_style_loss(Tensor(a), Tensor(b), empty, empty, features).item() == 0.0

    def test_positive_for_different_images(self, features, image_pair):
        a, b = image_pair
        assert part_style_loss(Tensor(a), Tensor(b), self.parts, self.parts, features).item() > 0.0

    def test_part_count_mismatch(self, features, image_pair):
        a, b = image_pair
        with pytest.raises(ContractViolation):
            part_style_loss(Tensor(a), Tensor(b), self.parts, self.parts[:, :2], features)

    def test_gradient(self, small_features):
        rng = np.random.default_rng(2)
        target = Tensor(rng.uniform(-1, 1, size=(1, 3, 4, 4)))
        parts = np.zeros((1, 2, 4, 4))
        parts[0, 0, :2] = 1.0
        parts[0, 1, 2:] = 1.0
        rendered = rng.uniform(-1, 1, size=(1, 3, 4, 4))
        f = lambda t: part_style_loss(target, t, parts, parts, small_features)  # noqa: E731
        assert finite_diff_check(f, rendered) <= 1e-4


# ============================================================================
# Face structure
# ============================================================================


class TestFaceStructureLoss:

    def setup_method(self):
        rng = np.random.default_rng(4)
        self.textures = rng.uniform(-1, 1, size=(3, 3, 32, 32))

    def test_bank_of_itself(self):
        t = self.textures[0]
        loss = face_structure_loss(Tensor(t[None]), bank_of(t)).item()
        assert loss == pytest.approx(-1.0, abs=1e-9)

    def test_mean_over_bank(self):
        t = Tensor(self.textures[0][None])
        one = face_structure_loss(t, bank_of(self.textures[1])).item()
        two = face_structure_loss(t, bank_of(self.textures[2])).item()
        both = face_structure_loss(t, bank_of(self.textures[1], self.textures[2])).item()
        assert both == pytest.approx((one + two) / 2, rel=1e-12)
        assert -1.0 <= both <= 1.0

    def test_empty_bank(self):
        bank = FaceBank(textures=[], face_mask=ATLAS.face_mask(32))
        with pytest.raises(ContractViolation):
            face_structure_loss(Tensor(self.textures[:1]), bank)

    def test_gradient(self):
        x = np.random.default_rng(6).uniform(-1, 1, size=(1, 3, 16, 16))
        bank = bank_of(self.textures[1][:, :16, :16])
        assert finite_diff_check(lambda t: face_structure_loss(t, bank), x) <= 1e-4


class TestBaseLoss:
    """lambda1 * L_reid + lambda2 * L_style + lambda3 * L_face."""

    def test_coefficients(self):
        terms = BaseTerms(reid=Tensor(0.5), style=Tensor(2.0), face=Tensor(-0.75))
        assert terms.combined(LossWeights()).item() == pytest.approx(5000 * 0.5 + 0.4 * 2.0 + 0.01 * -0.75)

    def test_zero_terms(self):
        terms = BaseTerms(reid=Tensor(0.0), style=Tensor(0.0), face=Tensor(0.0))
        assert terms.combined(LossWeights()).item() == 0.0

    def test_doubling_reid_weight(self):
        terms = BaseTerms(reid=Tensor(0.3), style=Tensor(1.0), face=Tensor(0.2))
        base = terms.combined(LossWeights()).item()
        doubled = terms.combined(LossWeights(reid=10000.0)).item()
        assert doubled - base == pytest.approx(5000 * 0.3)

    def test_negative_weight_rejected(self):
        with pytest.raises(ContractViolation):
            LossWeights(style=-0.1)


# ============================================================================
# Laplacian reconstruction
# ============================================================================


class TestUncertaintyReconLoss:
    """sum ln(sqrt2 sigma) + sqrt2 |r| / sigma."""

    @staticmethod
    def single_pixel(residual, sigma):
        image = Tensor(np.zeros((1, 3, 1, 1)))
        rendered = Tensor(np.full((1, 3, 1, 1), residual))
        return uncertainty_recon_loss(image, rendered, Tensor(np.full((1, 1, 1, 1), sigma))).item()

    @pytest.mark.parametrize("residual", [0.01, 0.1, 0.25, 1.0])
    def test_grid_search_finds_optimal_sigma(self, residual):
        coarse = np.logspace(-3, 1, 401)
        best = coarse[int(np.argmin([self.single_pixel(residual, s) for s in coarse]))]
        fine = np.linspace(best / 1.05, best * 1.05, 401)
        best = fine[int(np.argmin([self.single_pixel(residual, s) for s in fine]))]
        assert abs(best - SQRT2 * residual) <= 1e-3

    @pytest.mark.parametrize("residual", [0.01, 0.1, 0.25, 1.0])
    def test_gradient_vanishes_at_optimum(self, residual):
        sigma = Tensor(np.full((1, 1, 1, 1), SQRT2 * residual), requires_grad=True)
        with Tape() as tape:
            loss = uncertainty_recon_loss(Tensor(np.zeros((1, 3, 1, 1))), Tensor(np.full((1, 3, 1, 1), residual)), sigma)
            tape.backward(loss)
        assert abs(sigma.grad.item()) <= 1e-6

    def test_zero_at_unit_scale(self, rng):
        image = Tensor(rng.uniform(-1, 1, size=(2, 3, 4, 4)))
        sigma = Tensor(np.full((2, 1, 4, 4), 1.0 / SQRT2))
        assert uncertainty_recon_loss(image, image, sigma).item() == pytest.approx(0.0, abs=1e-12)

    def test_monotone_in_sigma_at_zero_residual(self):
        values = [self.single_pixel(0.0, s) for s in (0.01, 0.1, 1.0, 5.0)]
        assert values == sorted(values)
        assert len(set(values)) == 4

    def test_batch_mean(self):
        image = Tensor(np.zeros((2, 3, 1, 1)))
        rendered = Tensor(np.full((2, 3, 1, 1), 0.25))
        sigma = Tensor(np.full((2, 1, 1, 1), 0.5))
        assert uncertainty_recon_loss(image, rendered, sigma).item() == pytest.approx(self.single_pixel(0.25, 0.5))

    def test_sigma_below_floor(self):
        with pytest.raises(ContractViolation):
            self.single_pixel(0.1, 1e-4)

    def test_gradients(self):
        rng = np.random.default_rng(12)
        image = Tensor(rng.uniform(-1, 1, size=(1, 3, 4, 4)))
        rendered = rng.uniform(-1, 1, size=(1, 3, 4, 4))
        sigma = rng.uniform(0.2, 1.0, size=(1, 1, 4, 4))
        assert finite_diff_check(lambda t: uncertainty_recon_loss(image, t, Tensor(sigma)), rendered) <= 1e-4
        assert finite_diff_check(lambda t: uncertainty_recon_loss(image, Tensor(rendered), t), sigma) <= 1e-4


# ============================================================================
# Cycle loss and assembly
# ============================================================================


class TestCycleLoss:

    def test_single_texel_difference(self):
        first = np.zeros((1, 3, 4, 4))
        second = first.copy()
        second[0, 1, 2, 3] = 0.3
        assert cycle_loss(Tensor(first), Tensor(second)).item() == pytest.approx(0.3)

    def test_idempotent(self, rng):
        t = rng.uniform(-1, 1, size=(2, 3, 4, 4))
        assert cycle_loss(Tensor(t), Tensor(t.copy())).item() == 0.0

    def test_stopgrad_blocks_second_branch(self, rng):
        first = Tensor(rng.uniform(-1, 1, size=(1, 3, 4, 4)), requires_grad=True)
        second = Tensor(rng.uniform(-1, 1, size=(1, 3, 4, 4)), requires_grad=True)
        with Tape() as tape:
            tape.backward(cycle_loss(first, second, stopgrad=True))
        assert first.grad is not None and np.any(first.grad)
        assert second.grad is None

    def test_full_backprop_reaches_both(self, rng):
        first = Tensor(rng.uniform(-1, 1, size=(1, 3, 4, 4)), requires_grad=True)
        second = Tensor(rng.uniform(-1, 1, size=(1, 3, 4, 4)), requires_grad=True)
        with Tape() as tape:
            tape.backward(cycle_loss(first, second))
        np.testing.assert_allclose(first.grad, -second.grad)


class TestTotalLoss:
    """L_base-sv + L_base-nv + l4 L_cyc + l5 L_url + w_int * intermediate."""

    def test_coefficients(self):
        breakdown = total_loss(LossWeights(), 1.5, 2.0, 3.0, 400.0)
        assert breakdown.total.item() == pytest.approx(1.5 + 2.0 + 0.1 * 3.0 + 0.001 * 400.0)

    def test_all_zero(self):
        assert total_loss(LossWeights(), 0.0, 0.0, 0.0, 0.0).total.item() == 0.0

    def test_single_view_drops_terms(self):
        breakdown = total_loss(LossWeights(), 1.5, None, None, 400.0)
        assert breakdown.total.item() == pytest.approx(1.5 + 0.4)
        assert breakdown.values()["base_nv"] == 0.0
        assert breakdown.values()["cycle"] == 0.0

    def test_intermediate_branch(self):
        breakdown = total_loss(LossWeights(), 1.0, 1.0, intermediate_sv=2.0, intermediate_nv=4.0,
                               intermediate_weight=0.25)
        assert breakdown.total.item() == pytest.approx(2.0 + 0.25 * 6.0)
        assert breakdown.values()["w_int"] == 0.25

    def test_cycle_weight_linearity(self):
        a = total_loss(LossWeights(cycle=0.1), 1.0, 1.0, 2.0).total.item()
        b = total_loss(LossWeights(cycle=0.2), 1.0, 1.0, 2.0).total.item()
        assert b - a == pytest.approx(0.1 * 2.0)

    def test_breakdown_keys(self):
        values = total_loss(LossWeights(), 1.0, extra={"reid_sv": 0.5}).values()
        assert set(values) == {"base_sv", "base_nv", "cycle", "url", "int_sv", "int_nv", "w_int", "total", "reid_sv"}

    def test_gradients_flow_to_tensors(self):
        sv = Tensor(1.0, requires_grad=True)
        url = Tensor(5.0, requires_grad=True)
        with Tape() as tape:
            tape.backward(total_loss(LossWeights(), ops.mul(sv, 1.0), url=ops.mul(url, 1.0)).total)
        assert sv.grad.item() == 1.0
        assert url.grad.item() == pytest.approx(1e-3)


class TestIntermediateSchedule:
    """w_int(t) = max(0, 1 - 2t/T)."""

    @pytest.mark.parametrize("step,expected", [(0, 1.0), (25, 0.5), (50, 0.0), (75, 0.0), (100, 0.0)])
    def test_values(self, step, expected):
        assert intermediate_weight(step, 100) == pytest.approx(expected)

    def test_non_increasing(self):
        values = [intermediate_weight(t, 40) for t in range(41)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_no_training(self):
        assert intermediate_weight(0, 0) == 0.0
