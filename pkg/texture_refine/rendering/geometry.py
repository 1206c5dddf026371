"""Posing, camera projection and JSON (de)serialization of geometry."""

from __future__ import annotations

import math
from typing import Any, Dict, Tuple

import numpy as np

from texture_refine.domain.errors import ContractViolation, DatasetError
from texture_refine.domain.models import Camera, Mesh, Part, Pose

NEAR = 1e-2


def rotation_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def validate_mesh(mesh: Mesh) -> None:
    n = mesh.vertices.shape[0]
    if mesh.vertices.ndim != 2 or mesh.vertices.shape[1] != 3:
        raise ContractViolation(f"vertices must be (N,3), got {mesh.vertices.shape}")
    if mesh.triangles.ndim != 2 or mesh.triangles.shape[1] != 3:
        raise ContractViolation(f"triangles must be (M,3), got {mesh.triangles.shape}")
    if mesh.triangles.size and (mesh.triangles.min() < 0 or mesh.triangles.max() >= n):
        raise ContractViolation("triangle index out of range")
    if mesh.uvs.shape != (n, 2):
        raise ContractViolation(f"uvs must be ({n},2), got {mesh.uvs.shape}")
    if mesh.uvs.size and (mesh.uvs.min() < 0.0 or mesh.uvs.max() > 1.0):
        raise ContractViolation("uvs must lie in [0, 1]")
    if mesh.triangle_parts.shape != (mesh.triangles.shape[0],):
        raise ContractViolation("every triangle needs exactly one part label")
    if mesh.vertex_parts.shape != (n,):
        raise ContractViolation("every vertex needs exactly one part label")


def pose_vertices(mesh: Mesh, pose: Pose) -> np.ndarray:
    """Apply the per-part rigid rotations of ``pose`` about the mesh pivots."""
    vertices = mesh.vertices.copy()
    for key, angle in pose.angles.items():
        if key not in mesh.pivots:
            raise ContractViolation(f"pose names unknown pivot '{key}'")
        if angle == 0.0:
            continue
        point, axis = mesh.pivots[key]
        label = _part_label(key)
        selected = mesh.vertex_parts == label
        rot = rotation_matrix(np.asarray(axis), angle)
        p = np.asarray(point, dtype=np.float64)
        vertices[selected] = (vertices[selected] - p) @ rot.T + p
    return vertices


def _part_label(key: str) -> int:
    try:
        return Part[key.upper()].value
    except KeyError as e:
        raise ContractViolation(f"unknown part '{key}'") from e


def camera_position(camera: Camera) -> np.ndarray:
    target = np.asarray(camera.target, dtype=np.float64)
    ce = math.cos(camera.elevation)
    offset = camera.distance * np.array([
        ce * math.sin(camera.azimuth),
        math.sin(camera.elevation),
        ce * math.cos(camera.azimuth),
    ])
    return target + offset


def camera_basis(camera: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """World-to-camera rotation (rows: right, up, forward) and camera centre."""
    if camera.distance <= 0:
        raise ContractViolation(f"camera distance must be > 0, got {camera.distance}")
    eye = camera_position(camera)
    forward = np.asarray(camera.target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise ContractViolation("camera looks straight up or down")
    right /= norm
    up = np.cross(right, forward)
    return np.stack([right, up, forward]), eye


def project(points: np.ndarray, camera: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """World points (N,3) -> continuous pixel coords (N,2) as (col, row) and depth (N,).

    Pixel (i, j) has its centre at (col, row) = (j + 0.5, i + 0.5).
    Points with depth <= NEAR get NaN screen coordinates.
    """
    rot, eye = camera_basis(camera)
    cam = (np.asarray(points, dtype=np.float64) - eye) @ rot.T
    depth = cam[:, 2]
    safe = np.where(depth > NEAR, depth, np.nan)
    col = 0.5 * camera.width + camera.focal * cam[:, 0] / safe
    row = 0.5 * camera.height - camera.focal * cam[:, 1] / safe
    return np.stack([col, row], axis=1), depth


# JSON

def mesh_to_dict(mesh: Mesh) -> Dict[str, Any]:
    return {
        "vertices": mesh.vertices.tolist(),
        "triangles": mesh.triangles.tolist(),
        "uvs": mesh.uvs.tolist(),
        "triangle_parts": mesh.triangle_parts.tolist(),
        "vertex_parts": mesh.vertex_parts.tolist(),
        "pivots": {
            key: {"point": list(point), "axis": list(axis)}
            for key, (point, axis) in mesh.pivots.items()
        },
    }


def mesh_from_dict(data: Dict[str, Any]) -> Mesh:
    try:
        mesh = Mesh(
            vertices=np.array(data["vertices"], dtype=np.float64).reshape(-1, 3),
            triangles=np.array(data["triangles"], dtype=np.int64).reshape(-1, 3),
            uvs=np.array(data["uvs"], dtype=np.float64).reshape(-1, 2),
            triangle_parts=np.array(data["triangle_parts"], dtype=np.int64),
            vertex_parts=np.array(data["vertex_parts"], dtype=np.int64),
            pivots={
                key: (tuple(value["point"]), tuple(value["axis"]))
                for key, value in data.get("pivots", {}).items()
            },
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetError(f"invalid mesh record: {e}") from e
    validate_mesh(mesh)
    return mesh


def camera_to_dict(camera: Camera) -> Dict[str, Any]:
    return {
        "azimuth": camera.azimuth,
        "elevation": camera.elevation,
        "distance": camera.distance,
        "focal": camera.focal,
        "height": camera.height,
        "width": camera.width,
        "target": list(camera.target),
    }


def camera_from_dict(data: Dict[str, Any]) -> Camera:
    try:
        return Camera(
            azimuth=float(data["azimuth"]),
            elevation=float(data["elevation"]),
            distance=float(data["distance"]),
            focal=float(data["focal"]),
            height=int(data["height"]),
            width=int(data["width"]),
            target=tuple(float(v) for v in data.get("target", (0.0, 0.0, 0.0))),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetError(f"invalid camera record: {e}") from e


def pose_to_dict(pose: Pose) -> Dict[str, Any]:
    return {"angles": dict(pose.angles)}


def pose_from_dict(data: Dict[str, Any]) -> Pose:
    return Pose(angles={str(k): float(v) for k, v in data.get("angles", {}).items()})
