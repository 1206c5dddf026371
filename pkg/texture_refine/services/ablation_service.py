"""
Ablation Service Module

Trains and evaluates the five ablation rows (baseline, conv refinement,
deformable refinement, uncertainty loss, cycle loss) for several seeds and
writes the comparison as Markdown and CSV.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from texture_refine.data.dataset import Dataset
from texture_refine.infrastructure.config import RunConfig
from texture_refine.losses.features import FeaturePyramid
from texture_refine.presentation.formatters import ABLATION_METRICS, ablation_csv, ablation_markdown
from texture_refine.services.evaluation_service import EvaluationService
from texture_refine.services.model_service import ModelService
from texture_refine.services.training_service import TrainingService

BASELINE = ("use_refine=false", "use_url=false", "use_cycle=false")

ABLATION_ROWS: Tuple[Tuple[str, Tuple[str, ...]], ...] = (
    ("BL", BASELINE),
    ("BL+Conv Refine", ("use_refine=true", "refine_mode=conv", "use_url=false", "use_cycle=false")),
    ("BL+Deformable Refine", ("use_refine=true", "refine_mode=deformable", "use_url=false", "use_cycle=false")),
    ("BL+URL", ("use_refine=false", "use_url=true", "use_cycle=false")),
    ("BL+Cycle", ("use_refine=false", "use_url=false", "use_cycle=true")),
)


def slug(name: str) -> str:
    return name.lower().replace("+", "_").replace(" ", "_")


def ablation_configs(base: RunConfig, seed: int, out_dir: str = "") -> Dict[str, RunConfig]:
    """One config per ablation row; rows differ only in their switches."""
    configs = {}
    for name, switches in ABLATION_ROWS:
        overrides = list(switches) + [f"seed={seed}"]
        if out_dir:
            overrides.append(f"output_dir={os.path.join(out_dir, slug(name), f'seed_{seed}')}")
        configs[name] = base.with_overrides(overrides)
    return configs


@dataclass
class AblationResult:
    seeds: List[int]
    table: Dict[str, Dict[str, float]]
    fingerprints: Dict[str, List[str]] = field(default_factory=dict)
    paths: Dict[str, str] = field(default_factory=dict)
    # full report summary per row and seed, including the metrics left out of the table
    summaries: Dict[str, Dict[int, Dict[str, float]]] = field(default_factory=dict)


class AblationService:
    """Runs the ablation grid."""

    def __init__(self, model_service: ModelService, features: Optional[FeaturePyramid] = None, progress: bool = True):
        self.model_service = model_service
        self.features = features or FeaturePyramid()
        self.progress = progress
        self.logger = logging.getLogger(__name__)

    def run_one(self, config: RunConfig, dataset: Dataset) -> Dict[str, float]:
        bundle = self.model_service.build(config)
        TrainingService(
            bundle, dataset, self.model_service, features=self.features, progress=self.progress,
        ).train()
        report = EvaluationService(self.model_service, self.features).evaluate(bundle, dataset, "test")
        return report.summary()

    def run(self, base: RunConfig, dataset_dir: str, seeds: Sequence[int], out_dir: str) -> AblationResult:
        dataset = Dataset(dataset_dir)
        seeds = list(seeds)
        table: Dict[str, Dict[str, float]] = {name: {} for name, _ in ABLATION_ROWS}
        fingerprints: Dict[str, List[str]] = {name: [] for name, _ in ABLATION_ROWS}
        summaries: Dict[str, Dict[int, Dict[str, float]]] = {name: {} for name, _ in ABLATION_ROWS}

        for seed in seeds:
            for name, config in ablation_configs(base, seed, out_dir).items():
                self.logger.info(f"Ablation row '{name}', seed {seed} ({config.fingerprint()})")
                summary = self.run_one(config, dataset)
                fingerprints[name].append(config.fingerprint())
                summaries[name][seed] = summary
                for metric in ABLATION_METRICS:
                    table[name][f"{metric}@s{seed}"] = summary[metric]

        for values in table.values():
            for metric in ABLATION_METRICS:
                values[f"{metric}@mean"] = float(np.mean([values[f"{metric}@s{s}"] for s in seeds]))

        os.makedirs(out_dir, exist_ok=True)
        paths = {"markdown": os.path.join(out_dir, "ablation.md"), "csv": os.path.join(out_dir, "ablation.csv")}
        with open(paths["markdown"], 'w', encoding='utf-8') as f:
            f.write(ablation_markdown(table, seeds, fingerprints))
        with open(paths["csv"], 'w', encoding='utf-8', newline='') as f:
            f.write(ablation_csv(table, seeds, fingerprints))
        self.logger.info(f"Ablation table written to {paths['markdown']} and {paths['csv']}")
        return AblationResult(seeds=seeds, table=table, fingerprints=fingerprints, paths=paths, summaries=summaries)
