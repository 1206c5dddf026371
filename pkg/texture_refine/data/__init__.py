"""Synthetic multi-view mannequin data."""

from texture_refine.data.dataset import Dataset, PairSampler, render_dataset
from texture_refine.data.generator import GeneratorSettings, face_bank, generate_identity

__all__ = [
    "Dataset",
    "GeneratorSettings",
    "PairSampler",
    "face_bank",
    "generate_identity",
    "render_dataset",
]
