"""
Training Service Module

Runs the optimization loop: samples (input, novel) view pairs, estimates
textures, assembles the total loss, steps Adam, logs every term, writes
validation renders and checkpoints, and stops cleanly on SIGINT/SIGTERM.
"""

import logging
import math
import os
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from tqdm import tqdm

from texture_refine.autograd.optim import Adam
from texture_refine.autograd.tensor import Tape, Tensor
from texture_refine.data.dataset import Dataset, PairSampler, TrainingBatch, ViewBatch, network_parts
from texture_refine.data.generator import face_bank
from texture_refine.domain.errors import DatasetError, NonFiniteLossError
from texture_refine.domain.models import FaceBank, TextureOutput
from texture_refine.infrastructure.logging import LossLog, setup_losses_logger
from texture_refine.infrastructure.persistence import save_rgb
from texture_refine.infrastructure.signals import SignalHandler
from texture_refine.losses.features import FeaturePyramid
from texture_refine.losses.objectives import LossBreakdown, base_terms, cycle_loss, total_loss, uncertainty_recon_loss
from texture_refine.losses.schedule import LossWeights, intermediate_weight
from texture_refine.rendering.texturing import part_map, render_batch
from texture_refine.services.model_service import ModelBundle, ModelService

LOSS_TERMS = (
    "base_sv", "base_nv", "cycle", "url", "int_sv", "int_nv", "w_int",
    "reid_sv", "style_sv", "face",
)
CHECKPOINT_DIR = "checkpoint"
VAL_DIR = "val"
LOSS_LOG = "losses.csv"


@dataclass
class TrainingResult:
    steps: int
    last_losses: Dict[str, float]
    checkpoint_dir: str
    interrupted: bool


def loss_weights(bundle: ModelBundle) -> LossWeights:
    loss = bundle.config.loss
    return LossWeights(
        reid=loss.lambda_reid,
        style=loss.lambda_style,
        face=loss.lambda_face,
        cycle=loss.lambda_cycle,
        url=loss.lambda_url,
    )


def check_dataset(dataset: Dataset, bundle: ModelBundle):
    """The dataset geometry must be the one the networks were built for."""
    data = bundle.config.data
    expected = (data.image_height, data.image_width, data.texture_size, data.num_views)
    found = dataset.image_size + (dataset.texture_size, dataset.num_views)
    if expected != found:
        raise DatasetError(
            f"dataset geometry (H, W, S, K) = {found} does not match the configuration {expected}"
        )


def check_finite(breakdown: LossBreakdown, step: int):
    values = breakdown.values()
    for term, value in values.items():
        if term != "total" and not math.isfinite(value):
            raise NonFiniteLossError(term, value, step)
    if not math.isfinite(values["total"]):
        raise NonFiniteLossError("total", values["total"], step)


class TrainingService:
    """Trains one ModelBundle on the train split of a dataset."""

    def __init__(
        self,
        bundle: ModelBundle,
        dataset: Dataset,
        model_service: ModelService,
        signal_handler: Optional[SignalHandler] = None,
        features: Optional[FeaturePyramid] = None,
        bank: Optional[FaceBank] = None,
        progress: bool = True,
    ):
        self.bundle = bundle
        self.config = bundle.config
        self.dataset = dataset
        self.model_service = model_service
        self.signal_handler = signal_handler or SignalHandler()
        self.features = features or FeaturePyramid()
        self.bank = bank or face_bank(self.config.seed, self.config.loss.face_bank_size, self.config.data.texture_size)
        self.progress = progress
        self.weights = loss_weights(bundle)
        self.logger = logging.getLogger(__name__)
        check_dataset(dataset, bundle)

        self.output_dir = self.config.output_dir
        self.checkpoint_dir = os.path.join(self.output_dir, CHECKPOINT_DIR)
        self.optimizer: Adam = model_service.optimizer(bundle)
        self.sampler = PairSampler(
            dataset,
            dataset.split("train"),
            self.config.train.batch_size,
            np.random.default_rng([self.config.seed, 1]),
            multi_view=self.config.loss.multi_view,
            jitter_deg=self.config.data.camera_jitter_deg,
        )
        self.running = True

    @property
    def total_steps(self) -> int:
        if self.config.train.max_steps > 0:
            return self.config.train.max_steps
        return self.config.train.epochs * len(self.sampler)

    def stop(self):
        """Finish the current step, then checkpoint and return."""
        self.running = False

    def resume(self, checkpoint_dir: str):
        self.model_service.restore_into(self.bundle, checkpoint_dir, self.optimizer)

    def train(self) -> TrainingResult:
        os.makedirs(self.output_dir, exist_ok=True)
        self._log_startup_info()
        self.signal_handler.register(self.stop)
        loss_log = LossLog(os.path.join(self.output_dir, LOSS_LOG), list(LOSS_TERMS), append=self.bundle.step > 0)
        losses_logger = setup_losses_logger(os.path.join(self.output_dir, "losses.log"))
        last: Dict[str, float] = {}
        bar = tqdm(total=self.total_steps, initial=self.bundle.step, desc="train", disable=not self.progress)
        try:
            self.bundle.train(True)
            while self.running and self.bundle.step < self.total_steps:
                for batch in self.sampler.epoch():
                    breakdown = self.train_step(batch)
                    self.bundle.step += 1
                    last = breakdown.values()
                    loss_log.append(self.bundle.step, last)
                    losses_logger.info(
                        f"step {self.bundle.step} " + " ".join(f"{k}={v:.6g}" for k, v in last.items())
                    )
                    bar.update(1)
                    bar.set_postfix(loss=f"{last['total']:.4g}")
                    self._periodic()
                    if not self.running or self.bundle.step >= self.total_steps:
                        break
        finally:
            bar.close()
            loss_log.close()
            self.signal_handler.restore()
            self.bundle.train(False)
            self.model_service.save(self.bundle, self.checkpoint_dir, self.optimizer)

        self.logger.info(f"Training stopped at step {self.bundle.step} (total {last.get('total', float('nan')):.6g})")
        return TrainingResult(
            steps=self.bundle.step,
            last_losses=last,
            checkpoint_dir=self.checkpoint_dir,
            interrupted=not self.running,
        )

    def _base(self, image: np.ndarray, views: ViewBatch, output: TextureOutput):
        rendered = render_batch(views.rasters, output.texture)
        terms = base_terms(
            Tensor(image), rendered, views.part_masks, views.render_masks,
            output.texture, self.bank, self.features,
        )
        return terms, rendered

    def compute_losses(self, batch: TrainingBatch) -> LossBreakdown:
        """Forward pass and loss assembly for one batch (records on the active tape)."""
        loss = self.config.loss
        model = self.bundle.estimator
        source = batch.source
        image = Tensor(source.images)
        final, intermediate = model(image, Tensor(source.parts))

        sv_terms, rendered_sv = self._base(source.images, source, final)
        base_sv = sv_terms.combined(self.weights)
        extra = {
            "reid_sv": sv_terms.reid.item(),
            "style_sv": sv_terms.style.item(),
            "face": sv_terms.face.item(),
        }

        base_nv = cycle = url = None
        rendered_nv = None
        if batch.novel is not None:
            nv_terms, rendered_nv = self._base(batch.novel.images, batch.novel, final)
            base_nv = nv_terms.combined(self.weights)
            if loss.use_cycle:
                rerender_parts = network_parts(np.stack([part_map(r) for r in batch.novel.rasters]))
                second, _ = model(rendered_nv, Tensor(rerender_parts))
                cycle = cycle_loss(final.texture, second.texture, stopgrad=loss.cycle_stopgrad)

        if loss.use_url and self.bundle.confidence is not None:
            sigma = self.bundle.confidence(image)
            url = uncertainty_recon_loss(image, rendered_sv, sigma)

        w_int = intermediate_weight(self.bundle.step, self.total_steps) if loss.use_intermediate else 0.0
        int_sv = int_nv = None
        if w_int > 0.0 and intermediate is not final:
            int_sv = self._base(source.images, source, intermediate)[0].combined(self.weights)
            if batch.novel is not None:
                int_nv = self._base(batch.novel.images, batch.novel, intermediate)[0].combined(self.weights)

        return total_loss(
            self.weights,
            base_sv=base_sv,
            base_nv=base_nv,
            cycle=cycle,
            url=url,
            intermediate_sv=int_sv,
            intermediate_nv=int_nv,
            intermediate_weight=w_int,
            extra=extra,
        )

    def train_step(self, batch: TrainingBatch) -> LossBreakdown:
        self.optimizer.zero_grad()
        with Tape() as tape:
            breakdown = self.compute_losses(batch)
            check_finite(breakdown, self.bundle.step + 1)
            tape.backward(breakdown.total)
        self.optimizer.step()
        self.logger.debug(f"step {self.bundle.step + 1}: total={breakdown.total.item():.6g}")
        return breakdown

    def _periodic(self):
        train = self.config.train
        step = self.bundle.step
        if train.val_every and step % train.val_every == 0:
            self.validation_renders()
        if train.checkpoint_every and step % train.checkpoint_every == 0:
            self.model_service.save(self.bundle, self.checkpoint_dir, self.optimizer)

    def validation_renders(self):
        """SV and one NV render of view 0 of the first validation identity into ``<out>/val/``."""
        ids = self.dataset.split("test") or self.dataset.split("train")
        identity_id = ids[0]
        nv = self.dataset.num_views // 2
        views = self.dataset.view_batch([(identity_id, 0)])
        novel = self.dataset.view_batch([(identity_id, nv)])

        self.bundle.train(False)
        final, _ = self.bundle.estimator(Tensor(views.images), Tensor(views.parts))
        self.bundle.train(True)
        texture = final.texture
        prefix = os.path.join(self.output_dir, VAL_DIR, f"step_{self.bundle.step:06d}")
        save_rgb(f"{prefix}_texture.png", texture.data[0])
        save_rgb(f"{prefix}_sv.png", render_batch(views.rasters, texture).data[0])
        save_rgb(f"{prefix}_nv.png", render_batch(novel.rasters, texture).data[0])
        self.logger.debug(f"Validation renders written to {prefix}_*.png")

    def _log_startup_info(self):
        config = self.config
        self.logger.info("=" * 70)
        self.logger.info(f"Training run {config.fingerprint()} -> {self.output_dir}")
        self.logger.info(
            f"Model: width={config.model.width} refine="
            f"{config.model.refine_mode if config.model.use_refine else 'none'}"
        )
        self.logger.info(
            f"Losses: multi_view={config.loss.multi_view} url={config.loss.use_url} "
            f"cycle={config.loss.use_cycle} intermediate={config.loss.use_intermediate}"
        )
        self.logger.info(
            f"Schedule: {self.total_steps} steps, batch {config.train.batch_size}, lr {config.train.lr}"
        )
        if config.data.camera_jitter_deg > 0:
            self.logger.info(f"Camera jitter: ±{config.data.camera_jitter_deg} degrees")
        self.logger.info("=" * 70)
