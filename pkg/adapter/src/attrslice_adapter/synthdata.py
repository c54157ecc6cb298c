"""Synthetic biased image dataset with a known spurious cue.

Class is defined by a faint center shape (square vs cross); a bright corner
patch correlates with the class on the training split (the planted shortcut)
and is independent of it on the test split.  Ground-truth region masks are
exposed so evaluation bundles can corrupt exactly the right pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PATCH = 8          # corner patch side, pixels
SHAPE_HALF = 5     # half-extent of the center shape


@dataclass
class BiasedImageData:
    images: np.ndarray        # (N, 3, H, W) float32 in [0, 1]
    labels: np.ndarray        # (N,)
    ids: list[str]
    has_patch: np.ndarray     # (N,) bool, the spurious cue
    height: int
    width: int

    def spurious_mask(self) -> np.ndarray:
        """Ground-truth spurious-region mask (corner patch), H x W in [0,1]."""
        m = np.zeros((self.height, self.width), dtype=np.float32)
        m[:PATCH, :PATCH] = 1.0
        return m

    def spurious_mask_latent(self, m: int, n: int) -> np.ndarray:
        """The ground-truth mask block-averaged to a latent m x n grid.

        Bundles require attribution masks at the feature map's spatial size;
        the engine upsamples them back to pixels when corrupting.
        """
        full = self.spurious_mask()
        return full.reshape(m, self.height // m, n, self.width // n).mean(
            axis=(1, 3)
        )


def _draw(label: int, has_patch: bool, rng: np.random.Generator,
          size: int, contrast: float) -> np.ndarray:
    img = rng.uniform(0.35, 0.65, size=(3, size, size)).astype(np.float32)
    c = size // 2
    h = SHAPE_HALF
    if label == 1:
        img[:, c - h:c + h, c - h:c + h] += contrast            # filled square
    else:
        img[:, c - h:c + h, c - 1:c + 1] += contrast            # cross bars
        img[:, c - 1:c + 1, c - h:c + h] += contrast
    if has_patch:
        img[:, :PATCH, :PATCH] = 0.95
    return np.clip(img, 0.0, 1.0)


def make_biased_dataset(n: int = 600, size: int = 32, bias: float = 0.95,
                        contrast: float = 0.12, seed: int = 0,
                        split: str = "train") -> BiasedImageData:
    """Biased when split="train" (patch tracks class 1 with prob ``bias``);
    independent 50/50 patch when split="test"."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    if split == "train":
        follow = rng.random(n) < bias
        has_patch = np.where(follow, labels == 1, labels == 0)
    else:
        has_patch = rng.random(n) < 0.5
    images = np.stack(
        [
            _draw(int(labels[i]), bool(has_patch[i]), rng, size, contrast)
            for i in range(n)
        ]
    )
    return BiasedImageData(
        images=images,
        labels=labels.astype(np.int64),
        ids=[f"{split}{i:05d}" for i in range(n)],
        has_patch=has_patch.astype(bool),
        height=size,
        width=size,
    )
