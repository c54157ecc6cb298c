"""Attribution-weighted feature vectors and the similarity measures built on them.

The central quantity is the mask-weighted spatial average of a feature map:
given a channel-major map F (d x m x n) and a normalized mask W (m x n),

    out[c] = sum_ij F[c, i, j] * W[i, j]

which collapses the map to a d-vector that carries both what the model saw
and where it looked.  Everything else here measures how consistent those
vectors and masks are across neighbors and within slices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Cap applied to 1/distance when two masks coincide; the raw reciprocal is
# singular at zero distance.
SIMILARITY_CAP = 1e8
_NORM_EPS = 1e-12


class AttributionError(ValueError):
    pass


def normalize_mask(raw: np.ndarray) -> np.ndarray:
    """Clamp negatives to zero and rescale so the mask sums to one.

    An all-zero (or all-negative) mask falls back to the uniform mask, which
    makes the weighted average degrade to plain average pooling.  Idempotent.
    """
    w = np.asarray(raw, dtype=np.float64)
    if w.ndim != 2:
        raise AttributionError(f"mask must be 2-D, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise AttributionError("mask contains non-finite entries")
    w = np.maximum(w, 0.0)
    total = w.sum()
    if total <= 0.0:
        return np.full(w.shape, 1.0 / w.size)
    return w / total


def weighted_vector(features: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Mask-weighted spatial average: out[c] = sum_ij F[c,i,j] W[i,j]."""
    f = np.asarray(features, dtype=np.float64)
    w = np.asarray(mask, dtype=np.float64)
    if f.ndim != 3:
        raise AttributionError(f"features must be d x m x n, got {f.shape}")
    if w.shape != f.shape[1:]:
        raise AttributionError(f"mask shape {w.shape} != spatial shape {f.shape[1:]}")
    return np.einsum("cij,ij->c", f, w)


def pooled_vector(features: np.ndarray) -> np.ndarray:
    """Spatial mean of the feature map (global average pooling), per channel."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 3:
        raise AttributionError(f"features must be d x m x n, got {f.shape}")
    return f.mean(axis=(1, 2))


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between u and v; 0.0 when either is ~zero."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise AttributionError(f"vector shapes differ: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu < _NORM_EPS or nv < _NORM_EPS:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def _wasserstein_1d(p: np.ndarray, q: np.ndarray) -> float:
    # Exact W1 between two distributions on the integer grid 0..len-1:
    # sum of absolute CDF differences (unit spacing).
    return float(np.abs(np.cumsum(p - q)[:-1]).sum()) if len(p) > 1 else 0.0


def mask_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Transport distance between two normalized masks, in grid cells.

    Computed as the average of the exact 1-D Wasserstein-1 distances between
    the row marginals and between the column marginals.  This is a
    pseudometric and a lower bound on the full 2-D transport distance.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise AttributionError(f"mask shapes differ: {a.shape} vs {b.shape}")
    rows = _wasserstein_1d(a.sum(axis=1), b.sum(axis=1))
    cols = _wasserstein_1d(a.sum(axis=0), b.sum(axis=0))
    return 0.5 * (rows + cols)


def attribution_similarity(a: np.ndarray, b: np.ndarray,
                           eps: float = 1e-8) -> float:
    """Reciprocal mask distance, capped at 1/eps for coincident masks."""
    return 1.0 / max(mask_distance(a, b), eps)


@dataclass(frozen=True)
class NeighborConsistency:
    """Per-point and global neighbor-consistency scores for one space."""

    feature_sim: np.ndarray      # per point, mean cosine over neighbors
    attribution_sim: np.ndarray  # per point, mean reciprocal mask distance
    feature_sim_global: float
    attribution_sim_global: float


def neighbor_consistency(space: np.ndarray, pooled: np.ndarray,
                         masks: list[np.ndarray] | np.ndarray,
                         k_neighbors: int = 10) -> NeighborConsistency:
    """Average feature and attribution similarity over k nearest neighbors.

    Neighbors are found in ``space`` (any N x k real coordinates, typically a
    2D embedding); similarities are then measured on the pooled feature
    vectors and the normalized masks of those neighbors.
    """
    space = np.asarray(space, dtype=np.float64)
    pooled = np.asarray(pooled, dtype=np.float64)
    n = len(space)
    if n <= k_neighbors:
        raise AttributionError(f"need more than {k_neighbors} points, got {n}")
    d2 = np.sum((space[:, None, :] - space[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k_neighbors]

    fsim = np.empty(n)
    asim = np.empty(n)
    for i in range(n):
        neigh = order[i]
        fsim[i] = np.mean([cosine_similarity(pooled[i], pooled[j]) for j in neigh])
        asim[i] = np.mean(
            [attribution_similarity(masks[i], masks[j]) for j in neigh]
        )
    return NeighborConsistency(fsim, asim, float(fsim.mean()), float(asim.mean()))


def slice_centroid(members: np.ndarray) -> np.ndarray:
    """Arithmetic mean of member vectors (rows of an M x d array)."""
    members = np.asarray(members, dtype=np.float64)
    if members.ndim != 2 or len(members) == 0:
        raise AttributionError("centroid needs a non-empty M x d array")
    return members.mean(axis=0)


def slice_coherence(members: np.ndarray) -> float:
    """Mean cosine similarity of member vectors to the member centroid."""
    members = np.asarray(members, dtype=np.float64)
    if members.ndim != 2 or len(members) == 0:
        raise AttributionError("coherence needs a non-empty M x d array")
    c = members.mean(axis=0)
    return float(np.mean([cosine_similarity(row, c) for row in members]))


def upsample_mask(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear corner-aligned interpolation of a mask to (height, width).

    The target must be at least as large as the source in both axes; the
    output maximum equals the input maximum (corners are sample points).
    """
    w = np.asarray(mask, dtype=np.float64)
    if w.ndim != 2:
        raise AttributionError(f"mask must be 2-D, got {w.shape}")
    m, n = w.shape
    if height < m or width < n:
        raise AttributionError(
            f"target {height}x{width} smaller than source {m}x{n}"
        )
    if (height, width) == (m, n):
        return w.copy()
    # Corner-aligned source coordinates for each output pixel.
    ys = np.linspace(0.0, m - 1.0, height) if m > 1 else np.zeros(height)
    xs = np.linspace(0.0, n - 1.0, width) if n > 1 else np.zeros(width)
    y0 = np.clip(np.floor(ys).astype(int), 0, m - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, n - 1)
    y1 = np.minimum(y0 + 1, m - 1)
    x1 = np.minimum(x0 + 1, n - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = w[y0][:, x0] * (1 - fx) + w[y0][:, x1] * fx
    bot = w[y1][:, x0] * (1 - fx) + w[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy
