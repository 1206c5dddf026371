"""
Service Layer Package

Orchestrates training, evaluation, inference and diagnostics on top of the
model, data and loss packages.
"""

from texture_refine.services.ablation_service import AblationService
from texture_refine.services.evaluation_service import EvaluationService
from texture_refine.services.inference_service import InferenceService
from texture_refine.services.model_service import ModelBundle, ModelService
from texture_refine.services.offsets_service import OffsetsService
from texture_refine.services.training_service import TrainingService

__all__ = [
    'AblationService',
    'EvaluationService',
    'InferenceService',
    'ModelBundle',
    'ModelService',
    'OffsetsService',
    'TrainingService',
]
