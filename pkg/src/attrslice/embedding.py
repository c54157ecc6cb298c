"""Deterministic 2D neighbor embedding of attribution-weighted vectors.

The layout follows the UMAP recipe at desk scale: an exact k-NN graph with
per-point bandwidths calibrated so each point has log2(k) effective
neighbors, fuzzy-union symmetrization, and an attraction/repulsion descent
whose output kernel is fit from ``min_dist``.  Two departures from the usual
implementations buy reproducibility:

* all randomness comes from counter-based streams keyed on the seed and a
  content-derived canonical point order, so equal (input, seed) gives
  bitwise-equal coordinates and permuting input rows permutes output rows;
* neighbor search is exact (O(N^2)), acceptable for bundle-sized data.

Bundles may instead ship precomputed coordinates, which pass through
untouched and are tagged ``source="precomputed"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import curve_fit

_CLIP = 4.0
_REPULSION_EPS = 1e-3


class EmbeddingError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingConfig:
    n_neighbors: int = 15
    min_dist: float = 0.1
    n_components: int = 2
    seed: int = 0
    epochs: int = 200
    negative_samples: int = 20

    def __post_init__(self):
        if self.n_neighbors < 2:
            raise EmbeddingError("n_neighbors must be >= 2")
        if not 0.0 < self.min_dist < 1.0:
            raise EmbeddingError("min_dist must be in (0, 1)")
        if self.n_components != 2:
            raise EmbeddingError("only 2 output components are supported")
        if self.epochs < 1:
            raise EmbeddingError("epochs must be >= 1")


# Named presets used in the reference case studies.
PRESETS = {
    "celeba": EmbeddingConfig(n_neighbors=5, min_dist=0.01),
    "waterbirds": EmbeddingConfig(n_neighbors=20, min_dist=0.05),
}


def preset(name: str, **overrides) -> EmbeddingConfig:
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise EmbeddingError(
            f"unknown preset {name!r}; available: {sorted(PRESETS)}"
        ) from None
    return replace(cfg, **overrides) if overrides else cfg


@dataclass(frozen=True)
class Embedding2D:
    coords: np.ndarray
    config: EmbeddingConfig | None
    source: str = "computed"  # "computed" | "precomputed"

    def __post_init__(self):
        if not np.isfinite(self.coords).all():
            raise EmbeddingError("embedding coordinates must be finite")


def precomputed_embedding(coords: np.ndarray) -> Embedding2D:
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise EmbeddingError(f"coordinates must be N x 2, got {coords.shape}")
    return Embedding2D(coords=coords, config=None, source="precomputed")


def _canonical_order(x: np.ndarray) -> np.ndarray:
    # Row-lexicographic order: makes every downstream index-keyed random
    # stream a function of point content, not input position.
    return np.lexsort(tuple(x.T[::-1]))


def _exact_knn(x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    idx = np.argsort(d2, axis=1, kind="stable")[:, :k]
    dist = np.sqrt(np.take_along_axis(d2, idx, axis=1))
    return idx, dist


def _calibrate_bandwidths(dist: np.ndarray, k: int,
                          n_iter: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Per-point (rho, sigma) so that sum_j exp(-(d-rho)/sigma) = log2(k)."""
    target = np.log2(k)
    n = len(dist)
    rho = np.zeros(n)
    sigma = np.ones(n)
    for i in range(n):
        row = dist[i]
        nonzero = row[row > 0.0]
        rho[i] = nonzero[0] if len(nonzero) else 0.0
        lo, hi, mid = 0.0, np.inf, 1.0
        for _ in range(n_iter):
            val = np.exp(-np.maximum(row - rho[i], 0.0) / mid).sum()
            if abs(val - target) < 1e-5:
                break
            if val > target:
                hi = mid
                mid = 0.5 * (lo + hi)
            else:
                lo = mid
                mid = mid * 2.0 if hi == np.inf else 0.5 * (lo + hi)
        sigma[i] = max(mid, 1e-12)
    return rho, sigma


def _fuzzy_edges(idx: np.ndarray, dist: np.ndarray, rho: np.ndarray,
                 sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Symmetrized fuzzy-union edge list (i < j) from directed kNN weights."""
    n, k = idx.shape
    w = np.exp(-np.maximum(dist - rho[:, None], 0.0) / sigma[:, None])
    directed: dict[tuple[int, int], float] = {}
    for i in range(n):
        for t in range(k):
            directed[(i, int(idx[i, t]))] = float(w[i, t])
    undirected: dict[tuple[int, int], float] = {}
    for (i, j), wij in directed.items():
        key = (i, j) if i < j else (j, i)
        if key in undirected:
            continue
        wji = directed.get((j, i), 0.0)
        undirected[key] = wij + wji - wij * wji
    keys = sorted(undirected)
    ei = np.array([k[0] for k in keys], dtype=np.int64)
    ej = np.array([k[1] for k in keys], dtype=np.int64)
    ew = np.array([undirected[k] for k in keys], dtype=np.float64)
    return ei, ej, ew


def _pca_init(xc: np.ndarray, seed: int) -> np.ndarray:
    """Principal-plane init, scaled to a +-10 canvas, with a seeded jitter.

    Deterministic and permutation-equivariant: the projection is a function
    of the data alone (component signs fixed by the largest loading), and the
    jitter that untangles coincident projections is keyed per canonical index.
    """
    centered = xc - xc.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    basis = np.zeros((xc.shape[1], 2))
    for comp in range(min(2, vt.shape[0])):
        v = vt[comp]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        basis[:, comp] = v
    y = centered @ basis
    span = np.abs(y).max()
    if span > 0:
        y *= 10.0 / span
    jitter_rng = np.random.Generator(
        np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, 0x1])
    )
    y += jitter_rng.uniform(-1e-4, 1e-4, size=y.shape)
    return y


def _fit_output_kernel(min_dist: float, spread: float = 1.0) -> tuple[float, float]:
    """Fit (a, b) of 1/(1 + a d^(2b)) to the min_dist plateau curve."""
    xs = np.linspace(0.0, spread * 3.0, 300)
    ys = np.where(xs < min_dist, 1.0, np.exp(-(xs - min_dist) / spread))

    def f(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    (a, b), _ = curve_fit(f, xs, ys, p0=(1.0, 1.0), maxfev=10000)
    return float(a), float(b)


def embed(vectors: np.ndarray, config: EmbeddingConfig) -> Embedding2D:
    """Embed N x d vectors into 2D.  Deterministic for fixed (input, seed)."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise EmbeddingError(f"vectors must be N x d, got {x.shape}")
    n = len(x)
    if n <= config.n_neighbors:
        raise EmbeddingError(
            f"need more than n_neighbors={config.n_neighbors} points, got {n}"
        )

    order = _canonical_order(x)
    xc = x[order]

    idx, dist = _exact_knn(xc, config.n_neighbors)
    rho, sigma = _calibrate_bandwidths(dist, config.n_neighbors)
    ei, ej, ew = _fuzzy_edges(idx, dist, rho, sigma)
    a, b = _fit_output_kernel(config.min_dist)

    y = _pca_init(xc, config.seed)
    neg_rng = np.random.Generator(
        np.random.Philox(key=[config.seed & 0xFFFFFFFFFFFFFFFF, 0x2])
    )

    epochs = config.epochs
    n_neg = config.negative_samples
    for epoch in range(epochs):
        lr = 1.0 - epoch / epochs

        diff = y[ei] - y[ej]
        d2 = np.sum(diff * diff, axis=1)
        pos = d2 > 0.0
        coef = np.zeros_like(d2)
        coef[pos] = (-2.0 * a * b * d2[pos] ** (b - 1.0)) / (
            1.0 + a * d2[pos] ** b
        )
        move = np.clip(coef[:, None] * diff, -_CLIP, _CLIP) * ew[:, None]
        force = np.zeros_like(y)
        np.add.at(force, ei, move)
        np.add.at(force, ej, -move)

        neg = neg_rng.integers(0, n, size=(n, n_neg))
        for t in range(n_neg):
            u = neg[:, t]
            rdiff = y - y[u]
            rd2 = np.sum(rdiff * rdiff, axis=1)
            valid = rd2 > 0.0
            rcoef = np.zeros_like(rd2)
            rcoef[valid] = (2.0 * b) / (
                (_REPULSION_EPS + rd2[valid]) * (1.0 + a * rd2[valid] ** b)
            )
            force += np.where(
                valid[:, None], np.clip(rcoef[:, None] * rdiff, -_CLIP, _CLIP), 0.0
            )

        y += lr * np.clip(force, -_CLIP, _CLIP)

    out = np.empty_like(y)
    out[order] = y
    return Embedding2D(coords=out, config=config, source="computed")


def trustworthiness(high_dim: np.ndarray, coords: np.ndarray, k: int) -> float:
    """Rank-based neighborhood preservation of a 2D embedding, in [0, 1].

    Penalizes points that are k-nearest in 2D but far by high-dimensional
    rank:  T = 1 - 2/(N k (2N - 3k - 1)) * sum_i sum_{j in U_i} (rank(i,j) - k).
    """
    high = np.asarray(high_dim, dtype=np.float64)
    low = np.asarray(coords, dtype=np.float64)
    n = len(high)
    if len(low) != n:
        raise EmbeddingError("high_dim and coords must have the same length")
    if not 0 < k < n / 2:
        raise EmbeddingError(f"k must satisfy 0 < k < N/2, got k={k}, N={n}")

    dh = np.sum((high[:, None, :] - high[None, :, :]) ** 2, axis=-1)
    dl = np.sum((low[:, None, :] - low[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(dh, np.inf)
    np.fill_diagonal(dl, np.inf)
    order_h = np.argsort(dh, axis=1, kind="stable")
    order_l = np.argsort(dl, axis=1, kind="stable")

    rank_h = np.empty((n, n), dtype=np.int64)
    rows = np.arange(n)[:, None]
    rank_h[rows, order_h] = np.arange(n)[None, :] + 1  # 1-based neighbor rank

    penalty = 0
    for i in range(n):
        knn_high = set(order_h[i, :k].tolist())
        for j in order_l[i, :k]:
            if int(j) not in knn_high:
                penalty += int(rank_h[i, j]) - k
    scale = 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0))
    return 1.0 - scale * penalty
