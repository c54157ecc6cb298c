"""Data-slice identification on the 2D embedding.

Slices come from seeded k-means on the embedded coordinates.  The cluster
count is over-grown until every slice's attribution coherence (mean cosine of
member weighted vectors to their centroid, measured in the original
d-dimensional space) clears a threshold, so each slice represents one model
behavior.  Because k-means partitions the plane into Voronoi cells, the
convex hulls of converged slices never overlap, which is what makes the
mosaic layout possible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attribution import slice_coherence
from .geometry import convex_hull, degenerate_triangle

CONFUSION_CELLS = ("TP", "FN", "FP", "TN")


class SlicingError(ValueError):
    pass


@dataclass(frozen=True)
class SliceConfig:
    initial_k: int = 20
    coherence_threshold: float = 0.8
    k_step: int = 5
    k_max: int = 200
    seed: int = 0
    override_k: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.coherence_threshold <= 1.0:
            raise SlicingError("coherence_threshold must be in [0, 1]")
        if self.initial_k > self.k_max:
            raise SlicingError("initial_k must not exceed k_max")
        if self.initial_k < 1 or self.k_step < 1:
            raise SlicingError("initial_k and k_step must be >= 1")


@dataclass
class Slice:
    id: int
    member_ids: np.ndarray           # sample indices, sorted
    centroid_2d: np.ndarray          # (2,)
    centroid_wv: np.ndarray          # (d,)
    coherence: float
    hull: np.ndarray | None = None   # (V, 2) counterclockwise
    degenerate: bool = False
    accuracy: float | None = None
    mean_confidence: float | None = None
    confusion_cells: dict[str, list[int]] | None = None

    @property
    def size(self) -> int:
        return len(self.member_ids)


@dataclass
class SliceSet:
    slices: list[Slice]
    assignment: np.ndarray
    config: SliceConfig
    converged: bool
    incoherent_ids: list[int] = field(default_factory=list)
    k_trace: list[int] = field(default_factory=list)

    def by_id(self, slice_id: int) -> Slice:
        for s in self.slices:
            if s.id == slice_id:
                return s
        raise KeyError(f"no slice with id {slice_id}")


def _kmeans_pp_init(coords: np.ndarray, k: int,
                    rng: np.random.Generator) -> np.ndarray:
    n = len(coords)
    centroids = np.empty((k, 2))
    centroids[0] = coords[int(rng.integers(0, n))]
    d2 = np.sum((coords - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # All remaining mass at distance zero: duplicate an existing point.
            centroids[c] = coords[int(rng.integers(0, n))]
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
        idx = min(idx, n - 1)
        centroids[c] = coords[idx]
        d2 = np.minimum(d2, np.sum((coords - centroids[c]) ** 2, axis=1))
    return centroids


def kmeans_2d(coords: np.ndarray, k: int,
              seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded k-means++ plus Lloyd iterations run to an exact fixed point.

    Ties in the nearest-centroid assignment break toward the lowest centroid
    index; empty clusters are re-seeded to the point currently farthest from
    its own centroid (skipped when every distance is zero, so duplicate-point
    inputs converge with some clusters legitimately empty).
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = len(coords)
    if k > n:
        raise SlicingError(f"k={k} exceeds number of points {n}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(coords, k, rng)

    assignment = None
    for _ in range(10_000):
        d2 = np.sum((coords[:, None, :] - centroids[None, :, :]) ** 2, axis=-1)
        new_assignment = np.argmin(d2, axis=1)  # argmin takes the lowest index on ties
        if assignment is not None and np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        point_d2 = d2[np.arange(n), assignment]
        for c in range(k):
            members = assignment == c
            if members.any():
                centroids[c] = coords[members].mean(axis=0)
            else:
                far = int(np.argmax(point_d2))
                if point_d2[far] > 0.0:
                    centroids[c] = coords[far]
                    point_d2[far] = 0.0
    return assignment, centroids


def find_slices(embedding, weighted_vectors: np.ndarray,
                config: SliceConfig) -> SliceSet:
    """Over-cluster the 2D space until every slice is attribution-coherent.

    Starts at ``initial_k`` (or runs exactly once at ``override_k``) and grows
    k by ``k_step`` while any slice's coherence is below the threshold and the
    next k would not exceed ``k_max``.  The last clustering is returned either
    way, with ``converged`` and ``incoherent_ids`` reporting the outcome.
    """
    coords = np.asarray(embedding.coords, dtype=np.float64)
    wv = np.asarray(weighted_vectors, dtype=np.float64)
    if len(coords) != len(wv):
        raise SlicingError("embedding and weighted vectors disagree on N")

    k_trace: list[int] = []
    k = config.override_k if config.override_k is not None else config.initial_k
    while True:
        k_trace.append(k)
        assignment, centroids = kmeans_2d(coords, k, config.seed)
        slices = []
        incoherent = []
        for c in range(k):
            members = np.flatnonzero(assignment == c)
            if len(members) == 0:
                continue
            coherence = slice_coherence(wv[members])
            slices.append(
                Slice(
                    id=c,
                    member_ids=members,
                    centroid_2d=centroids[c].copy(),
                    centroid_wv=wv[members].mean(axis=0),
                    coherence=coherence,
                )
            )
            if coherence < config.coherence_threshold:
                incoherent.append(c)
        if config.override_k is not None:
            break
        if not incoherent or k + config.k_step > config.k_max:
            break
        k += config.k_step

    return SliceSet(
        slices=slices,
        assignment=assignment,
        config=config,
        converged=not incoherent,
        incoherent_ids=incoherent,
        k_trace=k_trace,
    )


def attach_hulls(slice_set: SliceSet, coords: np.ndarray) -> None:
    """Fill each slice's hull polygon from its members' 2D coordinates.

    Slices with fewer than three distinct points (or collinear members) get a
    tiny display-only triangle around their centroid, flagged degenerate.
    """
    coords = np.asarray(coords, dtype=np.float64)
    for s in slice_set.slices:
        hull = convex_hull(coords[s.member_ids])
        if len(hull) < 3:
            s.hull = degenerate_triangle(s.centroid_2d)
            s.degenerate = True
        else:
            s.hull = hull
            s.degenerate = False


def subdivide_confusion(slice_: Slice, labels: np.ndarray,
                        predictions: np.ndarray, positive_class: int,
                        n_classes: int) -> dict[str, list[int]]:
    """Partition slice members by confusion outcome.

    Binary tasks produce TP/FN/FP/TN against ``positive_class``; multi-class
    tasks fall back to correct/incorrect.
    """
    members = slice_.member_ids
    lab = np.asarray(labels)[members]
    pred = np.asarray(predictions)[members]
    if n_classes == 2:
        cells = {
            "TP": members[(lab == positive_class) & (pred == positive_class)],
            "FN": members[(lab == positive_class) & (pred != positive_class)],
            "FP": members[(lab != positive_class) & (pred == positive_class)],
            "TN": members[(lab != positive_class) & (pred != positive_class)],
        }
    else:
        cells = {
            "correct": members[lab == pred],
            "incorrect": members[lab != pred],
        }
    return {name: idx.tolist() for name, idx in cells.items()}


def slice_metrics(slice_: Slice, labels: np.ndarray, predictions: np.ndarray,
                  confidences: np.ndarray) -> tuple[float, float]:
    """(accuracy, mean confidence) over the slice members."""
    members = slice_.member_ids
    if len(members) == 0:
        raise SlicingError("metrics need a non-empty slice")
    lab = np.asarray(labels)[members]
    pred = np.asarray(predictions)[members]
    conf = np.asarray(confidences, dtype=np.float64)[members]
    return float(np.mean(lab == pred)), float(conf.mean())
