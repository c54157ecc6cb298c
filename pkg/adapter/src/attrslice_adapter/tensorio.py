"""Standalone reader/writer for the engine's .atsc tensor format.

Implemented from the byte-layout contract alone (16-byte header: magic
"ATSC", uint32 version=1, uint32 dtype=1 for float32, uint32 ndim, then
uint64 dims and a row-major little-endian payload), deliberately sharing no
code with the engine so the two sides cross-check each other.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sIII")


def save_tensor(path: str | Path, values: np.ndarray) -> None:
    arr = np.ascontiguousarray(values, dtype="<f4")
    if not 1 <= arr.ndim <= 3:
        raise ValueError(f"ndim must be 1..3, got {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise ValueError(f"dims must be >= 1, got {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(b"ATSC", 1, 1, arr.ndim))
        fh.write(np.asarray(arr.shape, dtype="<u8").tobytes())
        fh.write(arr.tobytes(order="C"))


def load_tensor(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, version, dtype, ndim = _HEADER.unpack_from(raw, 0)
    if magic != b"ATSC" or version != 1 or dtype != 1:
        raise ValueError(f"{path}: not a v1 float32 ATSC tensor")
    dims = np.frombuffer(raw, dtype="<u8", count=ndim, offset=_HEADER.size)
    count = int(np.prod(dims))
    payload = np.frombuffer(
        raw, dtype="<f4", count=count, offset=_HEADER.size + 8 * ndim
    )
    return payload.reshape(tuple(int(d) for d in dims)).copy()


def load_manifest(root: str | Path) -> dict:
    return json.loads((Path(root) / "manifest.json").read_text(encoding="utf-8"))


def load_bundle_arrays(root: str | Path) -> dict:
    """Images, labels and ids of a bundle, for training and inference."""
    root = Path(root)
    doc = load_manifest(root)
    ids, labels, images, attributions = [], [], [], []
    for rec in doc["samples"]:
        ids.append(rec["id"])
        labels.append(int(rec["label"]))
        attributions.append(load_tensor(root / rec["attribution_path"]))
        if rec.get("image_path"):
            images.append(load_tensor(root / rec["image_path"]))
    return {
        "ids": ids,
        "labels": np.array(labels, dtype=np.int64),
        "images": np.stack(images) if images else None,
        "attributions": np.stack(attributions),
        "class_names": doc["class_names"],
        "positive_class": doc["positive_class"],
    }
