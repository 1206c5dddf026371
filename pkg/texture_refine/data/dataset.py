"""On-disk mannequin datasets.

Layout written by ``render_dataset``::

    <out>/dataset.json                    manifest with geometry and splits
    <out>/<id>/texture_gt.png             ground-truth atlas
    <out>/<id>/mesh.json
    <out>/<id>/identity.json              seed and painted patterns
    <out>/<id>/views/<k>/image.png
    <out>/<id>/views/<k>/parts.png        0 = background, 1..6 = part + 1
    <out>/<id>/views/<k>/camera.json      view_id, camera, pose
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from texture_refine.data.generator import FACE_SEED_BASE, GeneratorSettings, generate_identity
from texture_refine.domain.errors import ContractViolation, DatasetError
from texture_refine.domain.models import NUM_PARTS, Camera, Mesh, RasterMap, SyntheticIdentity, View
from texture_refine.infrastructure.persistence import load_gray, load_json, load_rgb, save_gray, save_json, save_rgb
from texture_refine.rendering.geometry import (
    camera_from_dict,
    camera_to_dict,
    mesh_from_dict,
    mesh_to_dict,
    pose_from_dict,
    pose_to_dict,
)
from texture_refine.rendering.rasterizer import rasterize
from texture_refine.rendering.texturing import render_part_masks

DATASET_FILE = "dataset.json"
FORMAT_VERSION = 1
SPLITS = ("train", "test")

logger = logging.getLogger(__name__)


def identity_name(index: int) -> str:
    return f"id_{index:04d}"


def identity_seed(seed: int, index: int) -> int:
    return seed * 1000 + index


def split_identities(ids: Sequence[str], test_fraction: float, seed: int) -> Dict[str, List[str]]:
    """Disjoint train/test lists; both non-empty whenever there are two identities."""
    order = list(ids)
    np.random.default_rng(seed).shuffle(order)
    n_test = int(round(len(order) * test_fraction))
    if len(order) >= 2 and test_fraction > 0:
        n_test = min(max(n_test, 1), len(order) - 1)
    else:
        n_test = 0
    return {"train": sorted(order[n_test:]), "test": sorted(order[:n_test])}


def write_identity(identity: SyntheticIdentity, directory: str):
    save_rgb(os.path.join(directory, "texture_gt.png"), identity.texture)
    save_json(os.path.join(directory, "mesh.json"), mesh_to_dict(identity.mesh))
    save_json(os.path.join(directory, "identity.json"), {
        "identity_id": identity.identity_id,
        "seed": identity.seed,
        "patterns": identity.patterns,
    })
    for view in identity.views:
        view_dir = os.path.join(directory, "views", str(view.view_id))
        save_rgb(os.path.join(view_dir, "image.png"), view.image)
        save_gray(os.path.join(view_dir, "parts.png"), view.parts.astype(np.uint8))
        save_json(os.path.join(view_dir, "camera.json"), {
            "view_id": view.view_id,
            "camera": camera_to_dict(view.camera),
            "pose": pose_to_dict(view.pose),
        })


def render_dataset(
    num_identities: int,
    seed: int,
    out_dir: str,
    settings: GeneratorSettings = GeneratorSettings(),
    test_fraction: float = 0.25,
    progress: bool = True,
) -> Dict:
    """Generate and write ``num_identities`` identities; returns the manifest.

    Raises:
        ContractViolation: If the seed range would reach the face bank seeds
        DatasetError: If ``out_dir`` cannot be written
    """
    if num_identities < 1:
        raise ContractViolation(f"num_identities must be at least 1, got {num_identities}")
    if seed < 0 or identity_seed(seed, num_identities - 1) >= FACE_SEED_BASE:
        raise ContractViolation(f"seed {seed} with {num_identities} identities overlaps the face bank seeds")
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise DatasetError(f"Cannot create dataset directory {out_dir}: {e}") from e
    if not os.access(out_dir, os.W_OK):
        raise DatasetError(f"Dataset directory is not writable: {out_dir}")

    logger.info(f"Rendering {num_identities} identities x {settings.num_views} views into {out_dir}")
    ids = []
    for index in tqdm(range(num_identities), desc="identities", disable=not progress):
        name = identity_name(index)
        identity = generate_identity(identity_seed(seed, index), settings, identity_id=name)
        write_identity(identity, os.path.join(out_dir, name))
        ids.append(name)

    manifest = {
        "format": "mannequins",
        "version": FORMAT_VERSION,
        "seed": seed,
        "num_identities": num_identities,
        "num_views": settings.num_views,
        "image_height": settings.image_height,
        "image_width": settings.image_width,
        "texture_size": settings.texture_size,
        "distance": settings.distance,
        "identities": ids,
        "splits": split_identities(ids, test_fraction, seed),
    }
    save_json(os.path.join(out_dir, DATASET_FILE), manifest)
    logger.info(
        f"Dataset written: {len(manifest['splits']['train'])} train / "
        f"{len(manifest['splits']['test'])} test identities"
    )
    return manifest


def load_view(view_dir: str) -> View:
    record = load_json(os.path.join(view_dir, "camera.json"))
    try:
        view_id = int(record["view_id"])
        camera = camera_from_dict(record["camera"])
        pose = pose_from_dict(record["pose"])
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetError(f"invalid view record in {view_dir}: {e}") from e
    image = load_rgb(os.path.join(view_dir, "image.png"))
    parts = load_gray(os.path.join(view_dir, "parts.png"))
    if image.shape[1:] != (camera.height, camera.width) or parts.shape != image.shape[1:]:
        raise DatasetError(f"image size in {view_dir} disagrees with its camera")
    return View(view_id=view_id, pose=pose, camera=camera, image=image, parts=parts)


def load_mesh(identity_dir: str) -> Mesh:
    return mesh_from_dict(load_json(os.path.join(identity_dir, "mesh.json")))


def network_parts(labels: np.ndarray) -> np.ndarray:
    """Label image(s) (..., H, W) -> network channel (..., 1, H, W) = label / P."""
    labels = np.asarray(labels, dtype=np.float64)
    return labels[..., None, :, :] / NUM_PARTS


def label_masks(labels: np.ndarray, num_parts: int = NUM_PARTS) -> np.ndarray:
    """(H, W) labels -> (P, H, W) binary masks."""
    return (np.asarray(labels)[None] == np.arange(1, num_parts + 1)[:, None, None]).astype(np.float64)


def jitter_camera(camera: Camera, rng: np.random.Generator, degrees: float) -> Camera:
    """Camera with azimuth and elevation perturbed uniformly by up to ``degrees``."""
    if degrees <= 0:
        return camera
    limit = math.radians(degrees)
    return Camera(
        azimuth=camera.azimuth + float(rng.uniform(-limit, limit)),
        elevation=camera.elevation + float(rng.uniform(-limit, limit)),
        distance=camera.distance,
        focal=camera.focal,
        height=camera.height,
        width=camera.width,
        target=camera.target,
    )


@dataclass
class ViewBatch:
    """Stacked observations plus the rasters used to render predictions for them."""
    images: np.ndarray          # (B, 3, H, W)
    parts: np.ndarray           # (B, 1, H, W) network encoding
    part_masks: np.ndarray      # (B, P, H, W) of the observed images
    rasters: List[RasterMap]
    render_masks: np.ndarray    # (B, P, H, W) of the rasters

    def __len__(self) -> int:
        return len(self.rasters)


@dataclass
class TrainingBatch:
    identity_ids: List[str]
    view_ids: List[int]
    novel_view_ids: Optional[List[int]]
    source: ViewBatch
    novel: Optional[ViewBatch]
    textures: np.ndarray        # (B, 3, S, S) ground truth


class Dataset:
    """Read access to a rendered dataset, with cached identities and rasters."""

    def __init__(self, root: str):
        self.logger = logging.getLogger(__name__)
        self.root = root
        manifest_path = os.path.join(root, DATASET_FILE)
        if not os.path.exists(manifest_path):
            raise DatasetError(f"No dataset at {root} (missing {DATASET_FILE})")
        self.manifest = load_json(manifest_path)
        try:
            self.identities: List[str] = list(self.manifest["identities"])
            self.splits: Dict[str, List[str]] = {k: list(v) for k, v in self.manifest["splits"].items()}
            self.num_views = int(self.manifest["num_views"])
            self.image_size = (int(self.manifest["image_height"]), int(self.manifest["image_width"]))
            self.texture_size = int(self.manifest["texture_size"])
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"Invalid manifest {manifest_path}: {e}") from e
        self._identities: Dict[str, SyntheticIdentity] = {}
        self._rasters: Dict[Tuple[str, int], RasterMap] = {}
        self.logger.info(f"Opened dataset {root}: {len(self.identities)} identities, {self.num_views} views")

    def split(self, name: str) -> List[str]:
        if name == "all":
            return list(self.identities)
        if name not in self.splits:
            raise DatasetError(f"Unknown split '{name}' (have {', '.join(sorted(self.splits))})")
        return list(self.splits[name])

    def identity_dir(self, identity_id: str) -> str:
        return os.path.join(self.root, identity_id)

    def identity(self, identity_id: str) -> SyntheticIdentity:
        if identity_id not in self._identities:
            self._identities[identity_id] = self._load_identity(identity_id)
        return self._identities[identity_id]

    def _load_identity(self, identity_id: str) -> SyntheticIdentity:
        directory = self.identity_dir(identity_id)
        if not os.path.isdir(directory):
            raise DatasetError(f"Missing identity directory {directory}")
        record = load_json(os.path.join(directory, "identity.json"))
        views = [load_view(os.path.join(directory, "views", str(k))) for k in range(self.num_views)]
        texture = load_rgb(os.path.join(directory, "texture_gt.png"))
        if texture.shape != (3, self.texture_size, self.texture_size):
            raise DatasetError(f"texture_gt.png of {identity_id} has shape {texture.shape}")
        return SyntheticIdentity(
            identity_id=identity_id,
            seed=int(record.get("seed", -1)),
            texture=texture,
            mesh=load_mesh(directory),
            views=views,
            patterns=record.get("patterns", {}),
        )

    def raster(self, identity_id: str, view_id: int) -> RasterMap:
        key = (identity_id, view_id)
        if key not in self._rasters:
            identity = self.identity(identity_id)
            view = identity.views[view_id]
            self._rasters[key] = rasterize(identity.mesh, view.pose, view.camera)
        return self._rasters[key]

    def view_batch(
        self,
        samples: Sequence[Tuple[str, int]],
        rng: Optional[np.random.Generator] = None,
        jitter_deg: float = 0.0,
    ) -> ViewBatch:
        """Stack (identity, view) samples; with jitter the render rasters use perturbed cameras."""
        images, labels, rasters = [], [], []
        for identity_id, view_id in samples:
            identity = self.identity(identity_id)
            view = identity.views[view_id]
            images.append(view.image)
            labels.append(view.parts)
            if jitter_deg > 0 and rng is not None:
                camera = jitter_camera(view.camera, rng, jitter_deg)
                rasters.append(rasterize(identity.mesh, view.pose, camera))
            else:
                rasters.append(self.raster(identity_id, view_id))
        labels = np.stack(labels)
        return ViewBatch(
            images=np.stack(images),
            parts=network_parts(labels),
            part_masks=np.stack([label_masks(label) for label in labels]),
            rasters=rasters,
            render_masks=np.stack([render_part_masks(r) for r in rasters]),
        )


class PairSampler:
    """Batches of (input view, novel view) pairs from a list of identities.

    Every (identity, view) pair is an input once per epoch; its novel view
    is drawn uniformly from the other views of the same identity.
    """

    def __init__(
        self,
        dataset: Dataset,
        identity_ids: Sequence[str],
        batch_size: int,
        rng: np.random.Generator,
        multi_view: bool = True,
        jitter_deg: float = 0.0,
    ):
        if not identity_ids:
            raise DatasetError("No identities to sample from")
        if dataset.num_views < 2 and multi_view:
            raise DatasetError("Multi-view training needs at least 2 views per identity")
        self.dataset = dataset
        self.identity_ids = list(identity_ids)
        self.batch_size = batch_size
        self.rng = rng
        self.multi_view = multi_view
        self.jitter_deg = jitter_deg
        self.pairs = [(i, k) for i in self.identity_ids for k in range(dataset.num_views)]

    def __len__(self) -> int:
        return math.ceil(len(self.pairs) / self.batch_size)

    def novel_view(self, view_id: int) -> int:
        other = int(self.rng.integers(0, self.dataset.num_views - 1))
        return other + 1 if other >= view_id else other

    def epoch(self) -> Iterator[TrainingBatch]:
        order = self.rng.permutation(len(self.pairs))
        for start in range(0, len(order), self.batch_size):
            chosen = [self.pairs[i] for i in order[start:start + self.batch_size]]
            yield self.batch(chosen)

    def batch(self, chosen: Sequence[Tuple[str, int]]) -> TrainingBatch:
        ids = [i for i, _ in chosen]
        views = [k for _, k in chosen]
        novel_views = [self.novel_view(k) for k in views] if self.multi_view else None
        source = self.dataset.view_batch(chosen, self.rng, self.jitter_deg)
        novel = None
        if novel_views is not None:
            novel = self.dataset.view_batch(list(zip(ids, novel_views)), self.rng, self.jitter_deg)
        return TrainingBatch(
            identity_ids=ids,
            view_ids=views,
            novel_view_ids=novel_views,
            source=source,
            novel=novel,
            textures=np.stack([self.dataset.identity(i).texture for i in ids]),
        )
