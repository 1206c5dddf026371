"""
Evaluation Service Module

Loads a checkpoint, runs the SV/NV protocol on a dataset split and writes
the report files.
"""

import logging
import os
from typing import Optional

from texture_refine.data.dataset import Dataset
from texture_refine.domain.models import MetricReport
from texture_refine.losses.features import FeaturePyramid
from texture_refine.metrics.evaluation import estimator_predictor, evaluate_sv_nv, write_report
from texture_refine.services.model_service import ModelBundle, ModelService
from texture_refine.services.training_service import check_dataset


class EvaluationService:
    """Evaluates trained bundles."""

    def __init__(self, model_service: ModelService, features: Optional[FeaturePyramid] = None):
        self.model_service = model_service
        self.features = features or FeaturePyramid()
        self.logger = logging.getLogger(__name__)

    def evaluate(self, bundle: ModelBundle, dataset: Dataset, split: str = "test") -> MetricReport:
        check_dataset(dataset, bundle)
        bundle.train(False)
        return evaluate_sv_nv(
            estimator_predictor(bundle.estimator),
            dataset,
            split=split,
            features=self.features,
            fingerprint=bundle.fingerprint,
            batch_size=bundle.config.train.batch_size,
        )

    def evaluate_checkpoint(
        self,
        checkpoint_dir: str,
        dataset_dir: Optional[str] = None,
        split: str = "test",
        out_dir: Optional[str] = None,
    ) -> MetricReport:
        """Evaluate ``checkpoint_dir`` and write ``report.json``/``report_rows.csv``.

        Args:
            checkpoint_dir: Checkpoint directory written by training
            dataset_dir: Dataset to evaluate on (default: the one the run trained on)
            split: Split name (train, test or all)
            out_dir: Where to write the report (default: ``<checkpoint>/eval_<split>``)
        """
        bundle, _ = self.model_service.load(checkpoint_dir)
        dataset = Dataset(dataset_dir or bundle.config.data.dataset_dir)
        report = self.evaluate(bundle, dataset, split)
        write_report(report, out_dir or os.path.join(checkpoint_dir, f"eval_{split}"))
        return report
