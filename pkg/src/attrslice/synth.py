"""Synthetic bundle generators for tests, demos and benchmarks.

These build small validation bundles entirely in memory through the public
container types, so every downstream stage can be exercised without a model
runtime.  The generators plant known structure (attribution modes, biased
groups) that tests can use as ground truth.
"""

from __future__ import annotations

import numpy as np

from .bundle import AttributionSample, ValidationBundle


def _bump_mask(m: int, n: int, center: tuple[int, int], peak: float = 0.9,
               rng: np.random.Generator | None = None) -> np.ndarray:
    """Mask with most mass at one cell, a little spread, optional jitter."""
    w = np.zeros((m, n))
    ci, cj = center
    w[ci, cj] = peak
    spread = (1.0 - peak) / 4.0
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        w[(ci + di) % m, (cj + dj) % n] += spread
    if rng is not None:
        w = w + rng.uniform(0.0, 0.02, size=w.shape)
    return w


def gaussian_blobs(n_per_blob: int = 100, d: int = 16, n_blobs: int = 3,
                   separation: float = 10.0, sigma: float = 0.01,
                   seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Well-separated Gaussian blobs; centers pairwise ``separation`` apart."""
    rng = np.random.default_rng(seed)
    centers = np.zeros((n_blobs, d))
    if n_blobs >= 2:
        centers[1, 0] = separation
    if n_blobs >= 3:
        centers[2, 0] = separation / 2.0
        centers[2, 1] = separation * np.sqrt(3.0) / 2.0
    for b in range(3, n_blobs):
        centers[b, b - 1] = separation
    xs = []
    labels = []
    for b in range(n_blobs):
        xs.append(centers[b] + sigma * rng.standard_normal((n_per_blob, d)))
        labels.extend([b] * n_per_blob)
    return np.concatenate(xs), np.array(labels)


def two_mode_bundle(n: int = 80, d: int = 16, grid: int = 6, seed: int = 0,
                    feature_noise: float = 0.02,
                    with_embedding: bool = False) -> tuple[ValidationBundle, np.ndarray]:
    """Bundle with two planted attribution modes over near-identical features.

    All samples share one base feature map plus noise, so plain pooled
    vectors cannot tell the modes apart.  Masks concentrate either top-left
    (mode 0) or bottom-right (mode 1); the two mask positions are made
    orthogonal in feature content, so slices that mix modes have coherence
    around 1/sqrt(2).  Returns the bundle and the planted mode labels.

    ``with_embedding`` plants precomputed 2D coordinates in which the two
    modes form adjacent lobes of a single cloud, so a one-cluster slicing
    merges them and over-clustering has to split them.
    """
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((d, grid, grid))
    top_left = (1, 1)
    bottom_right = (grid - 2, grid - 2)
    # Orthogonalize the two attended cells so merged slices stay incoherent.
    va = base[:, top_left[0], top_left[1]]
    vb = base[:, bottom_right[0], bottom_right[1]]
    vb = vb - va * (va @ vb) / (va @ va)
    vb *= np.linalg.norm(va) / np.linalg.norm(vb)
    base[:, bottom_right[0], bottom_right[1]] = vb

    modes = np.array([i % 2 for i in range(n)])
    samples = []
    coords = np.zeros((n, 2))
    for i in range(n):
        f = base + feature_noise * rng.standard_normal(base.shape)
        center = top_left if modes[i] == 0 else bottom_right
        w = _bump_mask(grid, grid, center, rng=rng)
        label = int(modes[i])
        samples.append(
            AttributionSample(
                id=f"s{i:04d}",
                label=label,
                prediction=label,
                confidence=float(rng.uniform(0.6, 0.99)),
                features=f.astype(np.float32),
                attribution=w.astype(np.float32),
            )
        )
        lobe = -2.0 if modes[i] == 0 else 2.0
        coords[i] = (lobe + 0.6 * rng.standard_normal(), 0.6 * rng.standard_normal())
    bundle = ValidationBundle(
        dataset_name="two-mode-fixture",
        class_names=["mode_a", "mode_b"],
        positive_class=1,
        samples=samples,
        embedding=coords.astype(np.float32) if with_embedding else None,
    )
    return bundle, modes


def biased_bundle(n_spurious: int = 120, n_core: int = 80, d: int = 12,
                  grid: int = 6, image_size: int = 32, seed: int = 0,
                  with_images: bool = True) -> tuple[ValidationBundle, np.ndarray]:
    """Bundle with a planted spurious group for the annotate/propagate loop.

    The spurious group's masks attend a corner cell (two sub-positions, so it
    spans several slices); the core group attends the center.  Returns the
    bundle and a boolean array marking the planted-spurious samples.
    """
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((d, grid, grid))
    n = n_spurious + n_core
    spurious = np.zeros(n, dtype=bool)
    spurious[:n_spurious] = True

    corner_cells = [(0, 0), (0, 1)]
    center_cells = [(grid // 2, grid // 2), (grid // 2 - 1, grid // 2)]
    samples = []
    for i in range(n):
        f = base + 0.02 * rng.standard_normal(base.shape)
        if spurious[i]:
            cell = corner_cells[i % len(corner_cells)]
        else:
            cell = center_cells[i % len(center_cells)]
        w = _bump_mask(grid, grid, cell, rng=rng)
        label = int(rng.integers(0, 2))
        correct = rng.random() < 0.9
        prediction = label if correct else 1 - label
        image = None
        if with_images:
            image = rng.uniform(0.0, 1.0, size=(3, image_size, image_size))
            image = image.astype(np.float32)
        samples.append(
            AttributionSample(
                id=f"b{i:04d}",
                label=label,
                prediction=prediction,
                confidence=float(rng.uniform(0.55, 0.99)),
                features=f.astype(np.float32),
                attribution=w.astype(np.float32),
                image=image,
            )
        )
    bundle = ValidationBundle(
        dataset_name="biased-fixture",
        class_names=["negative", "positive"],
        positive_class=1,
        samples=samples,
    )
    return bundle, spurious


def small_bundle(n: int = 8, d: int = 4, grid: int = 2, seed: int = 0,
                 with_images: bool = False,
                 with_embedding: bool = False) -> ValidationBundle:
    """Minimal well-formed bundle for container round-trip tests."""
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n):
        label = i % 2
        samples.append(
            AttributionSample(
                id=f"t{i:03d}",
                label=label,
                prediction=(label + (i % 3 == 0)) % 2,
                confidence=float(rng.uniform(0.5, 1.0)),
                features=rng.standard_normal((d, grid, grid)).astype(np.float32),
                attribution=rng.uniform(0, 1, (grid, grid)).astype(np.float32),
                image=(
                    rng.uniform(0, 1, (3, 8, 8)).astype(np.float32)
                    if with_images
                    else None
                ),
            )
        )
    return ValidationBundle(
        dataset_name="small-fixture",
        class_names=["neg", "pos"],
        positive_class=1,
        samples=samples,
        embedding=(
            rng.standard_normal((n, 2)).astype(np.float32)
            if with_embedding
            else None
        ),
    )
