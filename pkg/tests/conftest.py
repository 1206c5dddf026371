"""
Shared fixtures for the texture_refine test suite.

Geometry is shrunk everywhere (32x16 images, 32x32 textures, 4 views,
width 4 networks) so the whole suite runs on a laptop CPU; the full-size
geometry is only used by renderer/dataset invariants and slow tests.
"""

import logging
import os

import numpy as np
import pytest

from texture_refine.data.dataset import Dataset, render_dataset
from texture_refine.data.generator import GeneratorSettings
from texture_refine.infrastructure.config import RunConfig

TINY_SETTINGS = GeneratorSettings(num_views=4, image_height=32, image_width=16, texture_size=32)


def tiny_overrides(dataset_dir: str, output_dir: str):
    return [
        "width=4",
        "num_views=4",
        "image_height=32",
        "image_width=16",
        "texture_size=32",
        "num_identities=2",
        "test_fraction=0.5",
        "batch_size=2",
        "max_steps=2",
        "face_bank_size=2",
        "val_every=0",
        "checkpoint_every=0",
        "log_file=",
        f"dataset_dir={dataset_dir}",
        f"output_dir={output_dir}",
    ]


@pytest.fixture
def rng():
    """Seeded generator; every test gets the same stream."""
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory):
    """Two identities, four views each, one train and one test identity."""
    out = str(tmp_path_factory.mktemp("mannequins"))
    render_dataset(2, 7, out, TINY_SETTINGS, test_fraction=0.5, progress=False)
    return out


@pytest.fixture
def tiny_dataset(tiny_dataset_dir):
    return Dataset(tiny_dataset_dir)


@pytest.fixture
def tiny_config(tiny_dataset_dir, tmp_path):
    """RunConfig matching the tiny dataset, writing into tmp_path/run."""
    return RunConfig().with_overrides(tiny_overrides(tiny_dataset_dir, os.path.join(str(tmp_path), "run")))


@pytest.fixture
def reset_logging():
    """Drop the handlers setup_logging installed on the root logger."""
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_texture_refine", False):
            root.removeHandler(handler)
            handler.close()
