"""Texture estimation with deformable refinement.

Estimates the UV texture of an articulated mannequin from a single view,
trained with multi-view, cycle-consistency and uncertainty losses on
synthetic renders.
"""

__version__ = "1.0.0"

from texture_refine.infrastructure.config import RunConfig
from texture_refine.services.training_service import TrainingService

__all__ = ["RunConfig", "TrainingService"]
