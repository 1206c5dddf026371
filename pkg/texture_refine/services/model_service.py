"""
Model Service Module

Builds the estimator and confidence networks from a RunConfig and moves
them in and out of checkpoint directories.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from texture_refine.autograd.optim import Adam
from texture_refine.infrastructure.checkpoint import load_checkpoint, save_checkpoint
from texture_refine.infrastructure.config import RunConfig
from texture_refine.model.confidence import ConfidenceNet
from texture_refine.model.estimator import TextureEstimator


@dataclass
class ModelBundle:
    """Everything a run trains, plus where it stands."""
    config: RunConfig
    estimator: TextureEstimator
    confidence: Optional[ConfidenceNet]
    step: int = 0

    @property
    def fingerprint(self) -> str:
        return self.config.fingerprint()

    def named_parameters(self):
        params = {f"model.{name}": p for name, p in self.estimator.named_parameters()}
        if self.confidence is not None:
            params.update({f"confidence.{name}": p for name, p in self.confidence.named_parameters()})
        return params

    def train(self, mode: bool = True):
        self.estimator.train(mode)
        if self.confidence is not None:
            self.confidence.train(mode)


class ModelService:
    """Creates, saves and restores model bundles."""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def build(self, config: RunConfig) -> ModelBundle:
        """Fresh networks seeded from ``config.seed``."""
        rng = np.random.default_rng(config.seed)
        estimator = TextureEstimator(
            width=config.model.width,
            texture_size=config.data.texture_size,
            rng=rng,
            use_refine=config.model.use_refine,
            refine_mode=config.model.refine_mode,
        )
        confidence = ConfidenceNet(config.model.width, rng) if config.loss.use_url else None
        bundle = ModelBundle(config=config, estimator=estimator, confidence=confidence)
        self.logger.info(
            f"Built estimator with {estimator.num_parameters():,} parameters"
            + (f" and confidence net with {confidence.num_parameters():,}" if confidence else "")
        )
        return bundle

    def optimizer(self, bundle: ModelBundle) -> Adam:
        train = bundle.config.train
        return Adam(bundle.named_parameters(), lr=train.lr, betas=(train.beta1, train.beta2))

    def save(self, bundle: ModelBundle, directory: str, optimizer: Optional[Adam] = None):
        save_checkpoint(
            directory,
            model_state=bundle.estimator.state_dict(),
            confidence_state=bundle.confidence.state_dict() if bundle.confidence is not None else None,
            optimizer_state=optimizer.state_arrays() if optimizer is not None else None,
            step=bundle.step,
            config=bundle.config.to_dict(),
            fingerprint=bundle.fingerprint,
        )

    def load(self, directory: str, optimizer: bool = False):
        """Rebuild the bundle stored in ``directory``.

        Returns:
            (bundle, optimizer or None); the optimizer is only built on request
        """
        checkpoint = load_checkpoint(directory)
        config = RunConfig.from_dict(checkpoint.config)
        bundle = self.build(config)
        bundle.estimator.load_state_dict(checkpoint.model)
        if bundle.confidence is not None and checkpoint.confidence is not None:
            bundle.confidence.load_state_dict(checkpoint.confidence)
        bundle.step = checkpoint.step
        if checkpoint.fingerprint and checkpoint.fingerprint != bundle.fingerprint:
            self.logger.warning(
                f"Checkpoint fingerprint {checkpoint.fingerprint} differs from its config ({bundle.fingerprint})"
            )
        adam = None
        if optimizer:
            adam = self.optimizer(bundle)
            if checkpoint.optimizer is not None:
                adam.load_state_arrays(checkpoint.optimizer)
        return bundle, adam

    def restore_into(self, bundle: ModelBundle, directory: str, optimizer: Adam):
        """Resume: load weights, moments and step of ``directory`` into a live bundle."""
        checkpoint = load_checkpoint(directory)
        bundle.estimator.load_state_dict(checkpoint.model)
        if bundle.confidence is not None and checkpoint.confidence is not None:
            bundle.confidence.load_state_dict(checkpoint.confidence)
        if checkpoint.optimizer is not None:
            optimizer.load_state_arrays(checkpoint.optimizer)
        bundle.step = checkpoint.step
        if checkpoint.fingerprint != bundle.fingerprint:
            self.logger.warning(
                f"Resuming from {checkpoint.fingerprint} with config {bundle.fingerprint}"
            )
        self.logger.info(f"Resumed from {directory} at step {bundle.step}")
