"""TXRF binary weight files and checkpoint directories.

A TXRF file is the magic ``TXRF``, a u32 format version, then records
up to the end of the file, each: u32 name length, UTF-8 name, u8 dtype code
(0 = float32), u8 rank, u32 dims, and the little-endian float32 payload.

A checkpoint directory holds ``model.txrf``, ``confidence.txrf``,
``optimizer.txrf`` and ``meta.json`` (step, config, fingerprint).
"""

import io
import logging
import os
import struct
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional

import numpy as np

from texture_refine.domain.errors import CheckpointError
from texture_refine.infrastructure.persistence import load_json, save_json

MAGIC = b"TXRF"
VERSION = 1
DTYPE_F32 = 0

MODEL_FILE = "model.txrf"
CONFIDENCE_FILE = "confidence.txrf"
OPTIMIZER_FILE = "optimizer.txrf"
META_FILE = "meta.json"

logger = logging.getLogger(__name__)


def encode_txrf(records: Mapping[str, np.ndarray]) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", VERSION))
    for name, array in records.items():
        data = np.asarray(array, dtype="<f4")
        encoded = name.encode("utf-8")
        out.write(struct.pack("<I", len(encoded)))
        out.write(encoded)
        out.write(struct.pack("<BB", DTYPE_F32, data.ndim))
        out.write(struct.pack(f"<{data.ndim}I", *data.shape))
        out.write(data.tobytes(order="C"))
    return out.getvalue()


def decode_txrf(payload: bytes) -> Dict[str, np.ndarray]:
    view = memoryview(payload)
    pos = 0

    def take(count: int) -> memoryview:
        nonlocal pos
        if pos + count > len(view):
            raise CheckpointError("truncated TXRF payload")
        chunk = view[pos:pos + count]
        pos += count
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not a TXRF file (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"unsupported TXRF version {version}")

    records: Dict[str, np.ndarray] = {}
    while pos < len(view):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        dtype, rank = struct.unpack("<BB", take(2))
        if dtype != DTYPE_F32:
            raise CheckpointError(f"record '{name}' has unknown dtype code {dtype}")
        dims = struct.unpack(f"<{rank}I", take(4 * rank)) if rank else ()
        size = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(bytes(take(4 * size)), dtype="<f4").reshape(dims)
        records[name] = data.astype(np.float64)
    return records


def write_txrf(path: str, records: Mapping[str, np.ndarray]):
    temp_filename = f"{path}.tmp"
    with open(temp_filename, "wb") as f:
        f.write(encode_txrf(records))
    os.replace(temp_filename, path)


def read_txrf(path: str) -> Dict[str, np.ndarray]:
    if not os.path.exists(path):
        raise CheckpointError(f"Missing checkpoint file: {path}")
    with open(path, "rb") as f:
        return decode_txrf(f.read())


def snap_to_f32(arrays: Mapping[str, np.ndarray]):
    """Round arrays in place to float32 values, so saved and live weights agree."""
    for array in arrays.values():
        array[...] = np.asarray(array, dtype=np.float32)


@dataclass
class Checkpoint:
    model: Dict[str, np.ndarray]
    confidence: Optional[Dict[str, np.ndarray]]
    optimizer: Optional[Dict[str, np.ndarray]]
    step: int
    config: Dict[str, Any]
    fingerprint: str


def save_checkpoint(
    directory: str,
    model_state: Dict[str, np.ndarray],
    confidence_state: Optional[Dict[str, np.ndarray]],
    optimizer_state: Optional[Dict[str, np.ndarray]],
    step: int,
    config: Dict[str, Any],
    fingerprint: str,
):
    """Write a checkpoint directory.

    The state dicts must hold the live arrays: they are snapped to float32
    in place before writing.
    """
    os.makedirs(directory, exist_ok=True)
    snap_to_f32(model_state)
    write_txrf(os.path.join(directory, MODEL_FILE), model_state)
    if confidence_state is not None:
        snap_to_f32(confidence_state)
        write_txrf(os.path.join(directory, CONFIDENCE_FILE), confidence_state)
    if optimizer_state is not None:
        snap_to_f32(optimizer_state)
        write_txrf(os.path.join(directory, OPTIMIZER_FILE), optimizer_state)
    save_json(os.path.join(directory, META_FILE), {
        "format": "TXRF",
        "version": VERSION,
        "step": int(step),
        "fingerprint": fingerprint,
        "config": config,
    })
    logger.info(f"Saved checkpoint at step {step} to {directory}")


def load_checkpoint(directory: str) -> Checkpoint:
    if not os.path.isdir(directory):
        raise CheckpointError(f"Checkpoint directory not found: {directory}")
    meta_path = os.path.join(directory, META_FILE)
    try:
        meta = load_json(meta_path)
    except Exception as e:
        raise CheckpointError(f"Cannot read {meta_path}: {e}") from e

    def optional(name: str) -> Optional[Dict[str, np.ndarray]]:
        path = os.path.join(directory, name)
        return read_txrf(path) if os.path.exists(path) else None

    checkpoint = Checkpoint(
        model=read_txrf(os.path.join(directory, MODEL_FILE)),
        confidence=optional(CONFIDENCE_FILE),
        optimizer=optional(OPTIMIZER_FILE),
        step=int(meta.get("step", 0)),
        config=meta.get("config", {}),
        fingerprint=meta.get("fingerprint", ""),
    )
    logger.info(f"Loaded checkpoint from {directory} (step {checkpoint.step}, config {checkpoint.fingerprint})")
    return checkpoint
