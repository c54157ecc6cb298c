"""Desk-scale reference CNN: four conv blocks then a linear head.

The last conv block is the natural GradCAM target; any model exposing a
named convolutional layer with a d x m x n output works with the exporter.
"""

from __future__ import annotations

import torch
from torch import nn


class SmallCnn(nn.Module):
    def __init__(self, n_classes: int = 2, width: int = 16):
        super().__init__()
        w = width
        self.features = nn.Sequential(
            nn.Conv2d(3, w, 3, padding=1),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(w, w * 2, 3, padding=1),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(w * 2, w * 2, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(w * 2, w * 2, 3, padding=1),
            nn.ReLU(),
        )
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(w * 2, n_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        f = self.features(x)
        return self.head(self.pool(f).flatten(1))

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        """Pooled convolutional representation (the phi used for inversion)."""
        return self.pool(self.features(x)).flatten(1)


def named_conv_layers(model: nn.Module) -> dict[str, nn.Module]:
    return {
        name: mod
        for name, mod in model.named_modules()
        if isinstance(mod, nn.Conv2d)
    }


def resolve_layer(model: nn.Module, name: str) -> nn.Module:
    mods = dict(model.named_modules())
    if name not in mods:
        convs = sorted(named_conv_layers(model))
        raise KeyError(
            f"layer {name!r} not found; available conv layers: {convs}"
        )
    return mods[name]
