"""Validation-bundle container.

A bundle is a plain directory that carries everything the engine needs from a
model run, so the engine never has to touch a model runtime:

    <root>/
      manifest.json          UTF-8 JSON, schema below
      tensors/*.atsc         feature maps and attribution masks
      images/*.atsc          optional raw images

Tensor files (".atsc") use a fixed little-endian layout so that any language
can read and write them byte-for-byte:

    offset  size        field
    0       4           magic, ASCII "ATSC"
    4       4           version, uint32 LE, currently 1
    8       4           dtype, uint32 LE, 1 = IEEE-754 binary32
    12      4           ndim, uint32 LE, 1..3
    16      8 * ndim    dims, uint64 LE each, all >= 1
    ...     4 * prod    payload, row-major float32 LE

The manifest schema (unknown keys are ignored for forward compatibility):

    dataset_name    str
    class_names     [str, ...]
    positive_class  int, index into class_names
    samples         [{id, label, prediction, confidence,
                      feature_path, attribution_path, image_path?}, ...]
    embedding_path  str, optional, path to an N x 2 tensor of
                    precomputed 2D coordinates

All validation happens eagerly at read time: a bundle that loads is a bundle
the rest of the pipeline can trust.
"""

from __future__ import annotations

import json
import os
import shutil
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"ATSC"
FORMAT_VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sIII")


class BundleError(Exception):
    """Base class for bundle container errors."""


class MissingManifest(BundleError):
    pass


class ManifestError(BundleError):
    pass


class BadMagic(BundleError):
    pass


class TensorFormatError(BundleError):
    pass


class ZeroDimension(BundleError):
    pass


class ShapeMismatch(BundleError):
    pass


class DanglingPath(BundleError):
    pass


def write_tensor(path: str | Path, values) -> None:
    """Write ``values`` (1- to 3-D, cast to float32) in the .atsc layout."""
    arr = np.ascontiguousarray(np.asarray(values), dtype="<f4")
    if arr.ndim < 1 or arr.ndim > 3:
        raise TensorFormatError(f"ndim must be 1..3, got {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise ZeroDimension(f"all dims must be >= 1, got {arr.shape}")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_F32, arr.ndim))
        fh.write(np.asarray(arr.shape, dtype="<u8").tobytes())
        fh.write(arr.tobytes(order="C"))


def read_tensor(path: str | Path) -> np.ndarray:
    """Read an .atsc file back into a float32 array, checking every header field.

    Raises BadMagic / TensorFormatError / ZeroDimension on any layout
    violation; payload length must equal 4 * prod(dims) exactly.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise TensorFormatError(f"{path}: truncated header")
    magic, version, dtype, ndim = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise BadMagic(f"{path}: magic {magic!r} != {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_F32:
        raise TensorFormatError(f"{path}: unsupported dtype code {dtype}")
    if not 1 <= ndim <= 3:
        raise TensorFormatError(f"{path}: ndim {ndim} outside 1..3")
    dims_end = _HEADER.size + 8 * ndim
    if len(raw) < dims_end:
        raise TensorFormatError(f"{path}: truncated dims")
    dims = np.frombuffer(raw, dtype="<u8", count=ndim, offset=_HEADER.size)
    if (dims < 1).any():
        raise ZeroDimension(f"{path}: dims {dims.tolist()} contain zero")
    count = int(np.prod(dims))
    expected = dims_end + 4 * count
    if len(raw) != expected:
        raise TensorFormatError(
            f"{path}: payload is {len(raw) - dims_end} bytes, expected {4 * count}"
        )
    payload = np.frombuffer(raw, dtype="<f4", count=count, offset=dims_end)
    return payload.reshape(tuple(int(d) for d in dims)).copy()


@dataclass
class AttributionSample:
    """One sample: feature map F (d,m,n), raw attribution mask W (m,n)."""

    id: str
    label: int
    prediction: int
    confidence: float
    features: np.ndarray
    attribution: np.ndarray
    image: np.ndarray | None = None

    def equals(self, other: "AttributionSample") -> bool:
        if (self.id, self.label, self.prediction, self.confidence) != (
            other.id,
            other.label,
            other.prediction,
            other.confidence,
        ):
            return False
        if not np.array_equal(self.features, other.features):
            return False
        if not np.array_equal(self.attribution, other.attribution):
            return False
        if (self.image is None) != (other.image is None):
            return False
        return self.image is None or np.array_equal(self.image, other.image)


@dataclass
class ValidationBundle:
    dataset_name: str
    class_names: list[str]
    positive_class: int
    samples: list[AttributionSample]
    embedding: np.ndarray | None = None
    root: Path | None = field(default=None, compare=False)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def feature_shape(self) -> tuple[int, int, int]:
        d, m, n = self.samples[0].features.shape
        return d, m, n

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def predictions(self) -> np.ndarray:
        return np.array([s.prediction for s in self.samples], dtype=np.int64)

    def confidences(self) -> np.ndarray:
        return np.array([s.confidence for s in self.samples], dtype=np.float64)

    def equals(self, other: "ValidationBundle") -> bool:
        if (self.dataset_name, self.class_names, self.positive_class) != (
            other.dataset_name,
            other.class_names,
            other.positive_class,
        ):
            return False
        if len(self.samples) != len(other.samples):
            return False
        if (self.embedding is None) != (other.embedding is None):
            return False
        if self.embedding is not None and not np.array_equal(
            self.embedding, other.embedding
        ):
            return False
        return all(a.equals(b) for a, b in zip(self.samples, other.samples))


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ManifestError(message)


def read_bundle(root: str | Path) -> ValidationBundle:
    """Load and eagerly validate a bundle directory.

    Raises MissingManifest, ManifestError, DanglingPath, BadMagic or
    ShapeMismatch; a returned bundle has passed every container invariant.
    """
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise MissingManifest(f"no manifest.json under {root}")
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest.json is not valid JSON: {exc}") from exc

    for key in ("dataset_name", "class_names", "positive_class", "samples"):
        _require(key in doc, f"manifest missing required key {key!r}")
    class_names = list(doc["class_names"])
    _require(len(class_names) >= 2, "need at least two class names")
    positive = int(doc["positive_class"])
    _require(0 <= positive < len(class_names), "positive_class out of range")

    def load(rel: str) -> np.ndarray:
        p = root / rel
        if not p.is_file():
            raise DanglingPath(f"manifest references missing file {rel!r}")
        return read_tensor(p)

    samples: list[AttributionSample] = []
    seen_ids: set[str] = set()
    shape: tuple[int, int, int] | None = None
    for i, rec in enumerate(doc["samples"]):
        for key in ("id", "label", "prediction", "confidence", "feature_path",
                    "attribution_path"):
            _require(key in rec, f"sample {i} missing key {key!r}")
        sid = str(rec["id"])
        _require(sid not in seen_ids, f"duplicate sample id {sid!r}")
        seen_ids.add(sid)
        label = int(rec["label"])
        prediction = int(rec["prediction"])
        confidence = float(rec["confidence"])
        _require(0 <= label < len(class_names), f"sample {sid}: label out of range")
        _require(
            0 <= prediction < len(class_names),
            f"sample {sid}: prediction out of range",
        )
        _require(0.0 <= confidence <= 1.0, f"sample {sid}: confidence not in [0,1]")
        features = load(rec["feature_path"])
        attribution = load(rec["attribution_path"])
        if features.ndim != 3:
            raise ShapeMismatch(f"sample {sid}: feature tensor must be d x m x n")
        if attribution.ndim != 2:
            raise ShapeMismatch(f"sample {sid}: attribution tensor must be m x n")
        if shape is None:
            shape = features.shape
        elif features.shape != shape:
            raise ShapeMismatch(
                f"sample {sid}: feature shape {features.shape} != bundle shape {shape}"
            )
        if attribution.shape != shape[1:]:
            raise ShapeMismatch(
                f"sample {sid}: mask shape {attribution.shape} != {shape[1:]}"
            )
        image = None
        if rec.get("image_path"):
            image = load(rec["image_path"])
        samples.append(
            AttributionSample(sid, label, prediction, confidence, features,
                              attribution, image)
        )
    _require(len(samples) > 0, "bundle has no samples")

    embedding = None
    if doc.get("embedding_path"):
        embedding = load(doc["embedding_path"])
        if embedding.ndim != 2 or embedding.shape != (len(samples), 2):
            raise ShapeMismatch(
                f"embedding must be {len(samples)} x 2, got {embedding.shape}"
            )

    return ValidationBundle(
        dataset_name=str(doc["dataset_name"]),
        class_names=class_names,
        positive_class=positive,
        samples=samples,
        embedding=embedding,
        root=root,
    )


def write_bundle(bundle: ValidationBundle, root: str | Path,
                 overwrite: bool = False) -> Path:
    """Write a bundle atomically: stage to a temp dir, then rename into place."""
    root = Path(root)
    if root.exists():
        if not overwrite:
            raise BundleError(f"{root} already exists (pass overwrite=True)")
    root.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=root.name + ".tmp-", dir=root.parent))
    try:
        (tmp / "tensors").mkdir()
        has_images = any(s.image is not None for s in bundle.samples)
        if has_images:
            (tmp / "images").mkdir()
        records = []
        for s in bundle.samples:
            fpath = f"tensors/{s.id}_f.atsc"
            apath = f"tensors/{s.id}_a.atsc"
            write_tensor(tmp / fpath, s.features)
            write_tensor(tmp / apath, s.attribution)
            rec = {
                "id": s.id,
                "label": int(s.label),
                "prediction": int(s.prediction),
                "confidence": float(s.confidence),
                "feature_path": fpath,
                "attribution_path": apath,
            }
            if s.image is not None:
                ipath = f"images/{s.id}.atsc"
                write_tensor(tmp / ipath, s.image)
                rec["image_path"] = ipath
            records.append(rec)
        doc = {
            "dataset_name": bundle.dataset_name,
            "class_names": list(bundle.class_names),
            "positive_class": int(bundle.positive_class),
            "samples": records,
        }
        if bundle.embedding is not None:
            write_tensor(tmp / "embedding.atsc", bundle.embedding)
            doc["embedding_path"] = "embedding.atsc"
        (tmp / "manifest.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        if root.exists():
            shutil.rmtree(root)
        os.replace(tmp, root)
    except Exception:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return root


def bundle_digest(root: str | Path) -> str:
    """Deterministic sha256 over the manifest and every referenced tensor."""
    import hashlib

    root = Path(root)
    doc = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    h = hashlib.sha256()
    h.update((root / "manifest.json").read_bytes())
    paths = []
    for rec in doc.get("samples", []):
        for key in ("feature_path", "attribution_path", "image_path"):
            if rec.get(key):
                paths.append(rec[key])
    if doc.get("embedding_path"):
        paths.append(doc["embedding_path"])
    for rel in paths:
        p = root / rel
        if p.is_file():
            h.update(p.read_bytes())
    return h.hexdigest()
