"""Project build and persistence: the glue between bundle and service layers.

A "project" is a plain directory of artifacts derived from one bundle:

    project.json        config snapshot + bundle reference
    embedding.atsc      N x 2 coordinates (computed or passed through)
    weighted.atsc       N x d attribution-weighted vectors
    pooled.atsc         N x d globally average-pooled feature vectors
    slices.json         slice membership, geometry, metrics, confusion cells
    annotations.log     append-only slice annotations (created on first use)
    spuriousness.json   latest propagated field, versioned
    audit.log           append-only mutation trail
    tiles/tiles.json    optional mosaic tile registry (written by adapters)
    report.json         optional evaluation report

Builds are deterministic: identical bundle + configs + seeds produce
byte-identical artifacts, which makes projects diffable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import bundle as bundle_io
from .attribution import normalize_mask, pooled_vector, weighted_vector
from .bundle import ValidationBundle, read_bundle, read_tensor, write_tensor
from .embedding import (Embedding2D, EmbeddingConfig, embed,
                        precomputed_embedding)
from .evaluation import NoiseConfig
from .slicing import (Slice, SliceConfig, SliceSet, attach_hulls, find_slices,
                      slice_metrics, subdivide_confusion)
from .spuriousness import (Annotation, SpreadConfig, SpuriousnessField,
                           append_annotation, propagate, replay_annotations)


class ProjectError(RuntimeError):
    pass


def _dump_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def now_rfc3339() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f+00:00")


def compute_vectors(bundle: ValidationBundle) -> tuple[np.ndarray, np.ndarray]:
    """(weighted, pooled) vector matrices for every sample, in bundle order."""
    weighted = []
    pooled = []
    for s in bundle.samples:
        w = normalize_mask(s.attribution)
        weighted.append(weighted_vector(s.features, w))
        pooled.append(pooled_vector(s.features))
    return np.asarray(weighted), np.asarray(pooled)


def _slice_doc(s: Slice) -> dict:
    return {
        "id": s.id,
        "member_ids": [int(i) for i in s.member_ids],
        "centroid_2d": [float(v) for v in s.centroid_2d],
        "centroid_wv": [float(v) for v in s.centroid_wv],
        "coherence": s.coherence,
        "hull": [[float(a), float(b)] for a, b in s.hull],
        "degenerate": s.degenerate,
        "accuracy": s.accuracy,
        "mean_confidence": s.mean_confidence,
        "confusion_cells": s.confusion_cells,
    }


def _slice_from_doc(doc: dict) -> Slice:
    return Slice(
        id=int(doc["id"]),
        member_ids=np.array(doc["member_ids"], dtype=np.int64),
        centroid_2d=np.array(doc["centroid_2d"]),
        centroid_wv=np.array(doc["centroid_wv"]),
        coherence=float(doc["coherence"]),
        hull=np.array(doc["hull"]),
        degenerate=bool(doc["degenerate"]),
        accuracy=doc["accuracy"],
        mean_confidence=doc["mean_confidence"],
        confusion_cells=doc["confusion_cells"],
    )


def build_project(bundle_root: str | Path, project_dir: str | Path,
                  embed_config: EmbeddingConfig | None = None,
                  slice_config: SliceConfig | None = None,
                  spread_config: SpreadConfig | None = None,
                  noise_config: NoiseConfig | None = None) -> Path:
    """Run bundle -> vectors -> embedding -> slices -> metrics and persist.

    Uses the bundle's precomputed coordinates when present, otherwise embeds
    the weighted vectors.  Idempotent: rebuilding with identical inputs and
    seeds rewrites byte-identical artifacts.
    """
    embed_config = embed_config or EmbeddingConfig()
    slice_config = slice_config or SliceConfig()
    spread_config = spread_config or SpreadConfig()
    noise_config = noise_config or NoiseConfig()

    bundle = read_bundle(bundle_root)
    weighted, pooled = compute_vectors(bundle)

    if bundle.embedding is not None:
        embedding = precomputed_embedding(bundle.embedding)
    else:
        embedding = embed(weighted, embed_config)

    slice_set = find_slices(embedding, weighted, slice_config)
    attach_hulls(slice_set, embedding.coords)
    labels = bundle.labels()
    predictions = bundle.predictions()
    confidences = bundle.confidences()
    for s in slice_set.slices:
        s.accuracy, s.mean_confidence = slice_metrics(
            s, labels, predictions, confidences
        )
        s.confusion_cells = subdivide_confusion(
            s, labels, predictions, bundle.positive_class, bundle.n_classes
        )

    project_dir = Path(project_dir)
    project_dir.mkdir(parents=True, exist_ok=True)
    write_tensor(project_dir / "embedding.atsc", embedding.coords)
    write_tensor(project_dir / "weighted.atsc", weighted)
    write_tensor(project_dir / "pooled.atsc", pooled)
    _dump_json(
        project_dir / "slices.json",
        {
            "slices": [_slice_doc(s) for s in slice_set.slices],
            "assignment": [int(a) for a in slice_set.assignment],
            "converged": slice_set.converged,
            "incoherent_ids": slice_set.incoherent_ids,
            "k_trace": slice_set.k_trace,
        },
    )
    _dump_json(
        project_dir / "project.json",
        {
            "format": "attrslice-project-v1",
            "bundle_root": str(Path(bundle_root).resolve()),
            "dataset_name": bundle.dataset_name,
            "class_names": bundle.class_names,
            "positive_class": bundle.positive_class,
            "n_samples": len(bundle.samples),
            "embedding_source": embedding.source,
            "config": {
                "embedding": asdict(embed_config),
                "slicing": asdict(slice_config),
                "spread": asdict(spread_config),
                "noise": asdict(noise_config),
            },
        },
    )
    return project_dir


@dataclass
class ProjectState:
    """In-memory view of a built project.  Mutations go through methods."""

    project_dir: Path
    bundle: ValidationBundle
    embedding: Embedding2D
    weighted: np.ndarray
    pooled: np.ndarray
    slice_set: SliceSet
    configs: dict
    field_: SpuriousnessField | None = None
    tile_registry: dict[int, dict] = field(default_factory=dict)

    @property
    def annotations_path(self) -> Path:
        return self.project_dir / "annotations.log"

    @property
    def audit_path(self) -> Path:
        return self.project_dir / "audit.log"

    @property
    def spuriousness_version(self) -> int:
        return self.field_.version if self.field_ else 0

    def spread_config(self) -> SpreadConfig:
        return SpreadConfig(**self.configs["spread"])

    def noise_config(self, **overrides) -> NoiseConfig:
        doc = dict(self.configs["noise"])
        doc.update(overrides)
        return NoiseConfig(**doc)

    def _audit(self, op: str, payload: dict) -> None:
        entry = {"timestamp": now_rfc3339(), "op": op, "payload": payload}
        with open(self.audit_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def annotate(self, slice_id: int, verdict: str, note: str = "",
                 author: str = "", timestamp: str | None = None) -> Annotation:
        self.slice_set.by_id(slice_id)  # raises KeyError for unknown ids
        ann = Annotation(
            timestamp=timestamp or now_rfc3339(),
            slice_id=slice_id,
            verdict=verdict,
            note=note,
            author=author,
        )
        append_annotation(self.annotations_path, ann)
        self._audit(
            "annotate",
            {
                "slice_id": slice_id,
                "verdict": verdict,
                "note": note,
                "author": author,
                "timestamp": ann.timestamp,
            },
        )
        return ann

    def run_propagation(self) -> SpuriousnessField:
        annotations = replay_annotations(self.annotations_path)
        field_ = propagate(
            annotations,
            self.slice_set,
            self.embedding,
            self.spread_config(),
            previous_version=self.spuriousness_version,
        )
        doc = {
            "version": field_.version,
            "per_point": [float(p) for p in field_.per_point],
            "per_slice": {str(k): float(v) for k, v in field_.per_slice.items()},
            "config": asdict(field_.config),
            "n_annotations": len(field_.annotations),
        }
        _dump_json(self.project_dir / "spuriousness.json", doc)
        self.field_ = field_
        self._audit("propagate", {"version": field_.version})
        return field_

    def export_corruption(self, out_root: str | Path, *, slice_ids=None,
                          tau: float | None = None, target: str | None = None,
                          sigma_z: float | None = None,
                          seed: int | None = None) -> tuple[Path, int]:
        from .evaluation import make_corrupted_bundle, select_samples

        overrides = {}
        if target is not None:
            overrides["target"] = target
        if sigma_z is not None:
            overrides["sigma_z"] = sigma_z
        if seed is not None:
            overrides["seed"] = seed
        noise = self.noise_config(**overrides)
        selected, meta = select_samples(
            self.slice_set, slice_ids=slice_ids, field=self.field_, tau=tau
        )
        make_corrupted_bundle(self.bundle, selected, noise, out_root, meta)
        self._audit(
            "export_corruption",
            {
                "out_root": str(out_root),
                "selection": meta,
                "target": noise.target,
                "sigma_z": noise.sigma_z,
                "seed": noise.seed,
                "n_selected": int(len(selected)),
            },
        )
        return Path(out_root), int(len(selected))


def load_project(project_dir: str | Path) -> ProjectState:
    """Load a built project, validating cross-references eagerly."""
    project_dir = Path(project_dir)
    meta_path = project_dir / "project.json"
    if not meta_path.is_file():
        raise ProjectError(f"{project_dir} is not a built project")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    bundle = read_bundle(meta["bundle_root"])

    coords = read_tensor(project_dir / "embedding.atsc").astype(np.float64)
    weighted = read_tensor(project_dir / "weighted.atsc").astype(np.float64)
    pooled = read_tensor(project_dir / "pooled.atsc").astype(np.float64)
    embedding = Embedding2D(
        coords=coords, config=None, source=meta.get("embedding_source", "computed")
    )

    slices_doc = json.loads(
        (project_dir / "slices.json").read_text(encoding="utf-8")
    )
    slice_set = SliceSet(
        slices=[_slice_from_doc(d) for d in slices_doc["slices"]],
        assignment=np.array(slices_doc["assignment"], dtype=np.int64),
        config=SliceConfig(**meta["config"]["slicing"]),
        converged=bool(slices_doc["converged"]),
        incoherent_ids=list(slices_doc["incoherent_ids"]),
        k_trace=list(slices_doc["k_trace"]),
    )

    state = ProjectState(
        project_dir=project_dir,
        bundle=bundle,
        embedding=embedding,
        weighted=weighted,
        pooled=pooled,
        slice_set=slice_set,
        configs=meta["config"],
    )

    spur_path = project_dir / "spuriousness.json"
    if spur_path.is_file():
        doc = json.loads(spur_path.read_text(encoding="utf-8"))
        state.field_ = SpuriousnessField(
            per_point=np.array(doc["per_point"]),
            per_slice={int(k): float(v) for k, v in doc["per_slice"].items()},
            version=int(doc["version"]),
            config=SpreadConfig(**doc["config"]),
        )
        known = {s.id for s in slice_set.slices}
        bad = set(state.field_.per_slice) - known
        if bad:
            raise ProjectError(f"spuriousness references unknown slices {sorted(bad)}")

    tiles_path = project_dir / "tiles" / "tiles.json"
    if tiles_path.is_file():
        doc = json.loads(tiles_path.read_text(encoding="utf-8"))
        known = {s.id for s in slice_set.slices}
        for key, rec in doc.items():
            sid = int(key)
            if sid not in known:
                raise ProjectError(f"tile registry references unknown slice {sid}")
            state.tile_registry[sid] = rec

    return state


def replay_audit(project_dir: str | Path) -> ProjectState:
    """Re-apply the audit trail to a freshly loaded project.

    Annotation entries are replayed with their original timestamps into a new
    log, propagation and corruption exports re-run with recorded settings, so
    the resulting state reproduces the mutations deterministically.
    """
    project_dir = Path(project_dir)
    audit_path = project_dir / "audit.log"
    entries = []
    if audit_path.is_file():
        for line in audit_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                entries.append(json.loads(line))

    # Reset mutable artifacts, then replay.
    for name in ("annotations.log", "spuriousness.json"):
        p = project_dir / name
        if p.exists():
            p.unlink()
    audit_path.unlink(missing_ok=True)

    state = load_project(project_dir)
    state.field_ = None
    for entry in entries:
        op, payload = entry["op"], entry["payload"]
        if op == "annotate":
            state.annotate(
                payload["slice_id"],
                payload["verdict"],
                payload.get("note", ""),
                payload.get("author", ""),
                timestamp=payload.get("timestamp"),
            )
        elif op == "propagate":
            state.run_propagation()
        elif op == "export_corruption":
            sel = payload["selection"]
            state.export_corruption(
                payload["out_root"],
                slice_ids=(
                    sel.get("slice_ids") if sel.get("mode") == "slice_ids" else None
                ),
                tau=sel.get("tau") if sel.get("mode") == "tau" else None,
                target=payload["target"],
                sigma_z=payload["sigma_z"],
                seed=payload["seed"],
            )
    return state
