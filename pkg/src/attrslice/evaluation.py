"""Noise corruption of attended regions and the robustness metric suite.

Corruption adds mask-shaped Gaussian noise to an image, x' = x + m * z, where
m is the (upsampled, max-normalized) attribution mask and z is drawn from a
counter-based generator keyed on (seed, sample id), so every sample's noise
field is reproducible in isolation.

The metrics consume plain prediction files (``id<TAB>class<TAB>confidence``)
so no model runtime is ever needed on this side:

    clean accuracy      on the original images
    core accuracy       on images whose attended (spurious) regions are noised
    spurious accuracy   on images whose complementary (core) regions are noised
    RCS                 (core - spurious) / (2 min(a, 1-a)),
                        a = (core + spurious) / 2

RCS is computed with the signed numerator; swapping the accuracies flips its
sign, and the degenerate case a in {0, 1} is defined as 0.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bundle as bundle_io
from .attribution import normalize_mask, upsample_mask

TARGETS = ("spurious_regions", "core_regions")


class EvaluationError(ValueError):
    pass


class MissingImages(EvaluationError):
    pass


class PredictionFileError(EvaluationError):
    pass


@dataclass(frozen=True)
class NoiseConfig:
    sigma_z: float = 0.25
    seed: int = 0
    target: str = "spurious_regions"

    def __post_init__(self):
        if self.sigma_z <= 0:
            raise EvaluationError("sigma_z must be positive")
        if self.target not in TARGETS:
            raise EvaluationError(f"target must be one of {TARGETS}")


@dataclass(frozen=True)
class EvaluationReport:
    clean_acc: float
    core_acc: float
    spurious_acc: float
    rcs: float
    provenance: dict

    def as_dict(self) -> dict:
        return {
            "clean_acc": self.clean_acc,
            "core_acc": self.core_acc,
            "spurious_acc": self.spurious_acc,
            "rcs": self.rcs,
            "provenance": self.provenance,
        }


def noise_field(shape: tuple[int, ...], noise: NoiseConfig,
                sample_id: str) -> np.ndarray:
    """Deterministic Gaussian field for one sample, N(0, sigma_z^2)."""
    digest = hashlib.sha256(sample_id.encode("utf-8")).digest()
    sub = int.from_bytes(digest[:8], "little")
    key = np.array([noise.seed & 0xFFFFFFFFFFFFFFFF, sub], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return rng.standard_normal(shape) * noise.sigma_z


def corrupt(image: np.ndarray, mask: np.ndarray, noise: NoiseConfig,
            sample_id: str) -> np.ndarray:
    """x' = x + m * z with the mask broadcast across channels."""
    x = np.asarray(image, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    if x.ndim != 3:
        raise EvaluationError(f"image must be C x H x W, got {x.shape}")
    if m.shape != x.shape[1:]:
        raise EvaluationError(
            f"mask shape {m.shape} != image spatial shape {x.shape[1:]}"
        )
    if m.min() < 0.0 or m.max() > 1.0 + 1e-9:
        raise EvaluationError("mask must lie in [0, 1]")
    z = noise_field(x.shape, noise, sample_id)
    return x + m[None, :, :] * z


def corruption_mask(attribution: np.ndarray, height: int, width: int,
                    target: str) -> np.ndarray:
    """Attribution mask prepared for corruption: upsampled, peak-normalized.

    ``spurious_regions`` noises where the model attended (high mask values);
    ``core_regions`` noises the complement (1 - m).
    """
    m = upsample_mask(normalize_mask(attribution), height, width)
    peak = m.max()
    if peak > 0:
        m = m / peak
    m = np.clip(m, 0.0, 1.0)
    if target == "core_regions":
        m = 1.0 - m
    return m


def select_samples(slice_set, *, slice_ids=None, field=None,
                   tau: float | None = None) -> tuple[np.ndarray, dict]:
    """Resolve a slice selection into member sample indices plus provenance."""
    if slice_ids is not None:
        chosen = sorted(int(s) for s in slice_ids)
        known = {s.id for s in slice_set.slices}
        unknown = [s for s in chosen if s not in known]
        if unknown:
            raise EvaluationError(f"unknown slice ids {unknown}")
        meta = {"mode": "slice_ids", "slice_ids": chosen}
    elif tau is not None:
        if field is None:
            raise EvaluationError("tau selection needs a propagated field")
        chosen = sorted(
            sid for sid, p in field.per_slice.items() if p >= tau
        )
        meta = {"mode": "tau", "tau": tau, "slice_ids": chosen}
    else:
        raise EvaluationError("provide slice_ids or tau")
    members: list[int] = []
    for sid in chosen:
        members.extend(slice_set.by_id(sid).member_ids.tolist())
    return np.array(sorted(members), dtype=np.int64), meta


def make_corrupted_bundle(bundle: bundle_io.ValidationBundle,
                          selected: np.ndarray, noise: NoiseConfig,
                          out_root: str | Path,
                          selection_meta: dict | None = None) -> Path:
    """Write a copy of the bundle with selected samples' images noised.

    Features, masks and the manifest metadata pass through unchanged; a
    ``corruption.json`` provenance record is placed in the output root.  The
    write is staged and renamed, and is bitwise deterministic for a fixed
    (bundle, selection, noise).
    """
    selected_set = set(int(i) for i in np.asarray(selected).ravel())
    for i in selected_set:
        if bundle.samples[i].image is None:
            raise MissingImages(
                f"sample {bundle.samples[i].id} has no image to corrupt"
            )

    out_root = Path(out_root)
    samples = []
    for i, s in enumerate(bundle.samples):
        image = s.image
        if i in selected_set:
            _, h, w = image.shape
            m = corruption_mask(s.attribution, h, w, noise.target)
            image = corrupt(image, m, noise, s.id).astype(np.float32)
        samples.append(
            bundle_io.AttributionSample(
                id=s.id,
                label=s.label,
                prediction=s.prediction,
                confidence=s.confidence,
                features=s.features,
                attribution=s.attribution,
                image=image,
            )
        )
    out = bundle_io.ValidationBundle(
        dataset_name=bundle.dataset_name,
        class_names=list(bundle.class_names),
        positive_class=bundle.positive_class,
        samples=samples,
        embedding=bundle.embedding,
    )
    bundle_io.write_bundle(out, out_root, overwrite=True)
    provenance = {
        "selection": selection_meta or {},
        "selected_sample_ids": sorted(
            bundle.samples[i].id for i in selected_set
        ),
        "noise": {
            "sigma_z": noise.sigma_z,
            "seed": noise.seed,
            "target": noise.target,
        },
        "source_bundle_hash": (
            bundle_io.bundle_digest(bundle.root) if bundle.root else None
        ),
    }
    tmp = out_root / "corruption.json.tmp"
    tmp.write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
    os.replace(tmp, out_root / "corruption.json")
    return out_root


def read_prediction_file(path: str | Path) -> dict[str, tuple[int, float]]:
    """Parse ``id<TAB>class<TAB>confidence`` lines into a mapping."""
    out: dict[str, tuple[int, float]] = {}
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), 1
    ):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise PredictionFileError(
                f"{path}: line {lineno}: expected id<TAB>class<TAB>confidence"
            )
        sid, cls, conf = parts
        if sid in out:
            raise PredictionFileError(f"{path}: line {lineno}: duplicate id {sid!r}")
        try:
            out[sid] = (int(cls), float(conf))
        except ValueError as exc:
            raise PredictionFileError(f"{path}: line {lineno}: {exc}") from exc
    return out


def write_prediction_file(path: str | Path,
                          rows: list[tuple[str, int, float]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid, cls, conf in rows:
            fh.write(f"{sid}\t{int(cls)}\t{conf:.6f}\n")


def accuracy_from_predictions(predictions: dict[str, tuple[int, float]],
                              labels: dict[str, int]) -> float:
    """Fraction of ids predicted correctly; id sets must match exactly."""
    missing = set(labels) - set(predictions)
    extra = set(predictions) - set(labels)
    if missing or extra:
        raise PredictionFileError(
            f"prediction ids mismatch: missing {sorted(missing)[:5]}, "
            f"extra {sorted(extra)[:5]}"
        )
    if not labels:
        raise PredictionFileError("empty prediction set")
    correct = sum(1 for sid, lab in labels.items() if predictions[sid][0] == lab)
    return correct / len(labels)


def rcs(acc_core: float, acc_spurious: float) -> float:
    """Relative core sensitivity with the signed numerator.

    The gap between core and spurious accuracy, normalized by the largest gap
    any model with the same mean accuracy could show.
    """
    for v in (acc_core, acc_spurious):
        if not 0.0 <= v <= 1.0:
            raise EvaluationError("accuracies must lie in [0, 1]")
    midpoint = 0.5 * (acc_core + acc_spurious)
    room = min(midpoint, 1.0 - midpoint)
    if room < 1e-12:
        return 0.0
    return (acc_core - acc_spurious) / (2.0 * room)


def _file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def build_report(clean_path: str | Path, core_path: str | Path,
                 spurious_path: str | Path,
                 labels: dict[str, int]) -> EvaluationReport:
    """Assemble the four-metric report from three prediction files."""
    clean = read_prediction_file(clean_path)
    core = read_prediction_file(core_path)
    spurious = read_prediction_file(spurious_path)
    clean_acc = accuracy_from_predictions(clean, labels)
    core_acc = accuracy_from_predictions(core, labels)
    spurious_acc = accuracy_from_predictions(spurious, labels)
    return EvaluationReport(
        clean_acc=clean_acc,
        core_acc=core_acc,
        spurious_acc=spurious_acc,
        rcs=rcs(core_acc, spurious_acc),
        provenance={
            "clean": {"path": str(clean_path), "sha256": _file_sha256(clean_path)},
            "core": {"path": str(core_path), "sha256": _file_sha256(core_path)},
            "spurious": {
                "path": str(spurious_path),
                "sha256": _file_sha256(spurious_path),
            },
            "n_samples": len(labels),
        },
    )
