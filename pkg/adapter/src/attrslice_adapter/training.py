"""Seeded training and inference helpers shared by baseline and retraining."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch import nn

from .models import SmallCnn


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % (2**32))


def train_classifier(images: np.ndarray, labels: np.ndarray, seed: int = 0,
                     epochs: int = 8, lr: float = 1e-3, batch_size: int = 64,
                     model: nn.Module | None = None) -> nn.Module:
    seed_everything(seed)
    model = model if model is not None else SmallCnn()
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    x = torch.from_numpy(images)
    y = torch.from_numpy(labels)
    n = len(x)
    gen = torch.Generator().manual_seed(seed)
    for _ in range(epochs):
        order = torch.randperm(n, generator=gen)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            opt.zero_grad()
            loss = loss_fn(model(x[idx]), y[idx])
            if not torch.isfinite(loss):
                raise RuntimeError("training diverged: non-finite loss")
            loss.backward()
            opt.step()
    return model.eval()


@torch.no_grad()
def predict(model: nn.Module, images: np.ndarray,
            batch_size: int = 128) -> tuple[np.ndarray, np.ndarray]:
    model.eval()
    preds, confs = [], []
    for start in range(0, len(images), batch_size):
        logits = model(torch.from_numpy(images[start:start + batch_size]))
        probs = torch.softmax(logits, dim=1)
        conf, pred = probs.max(dim=1)
        preds.append(pred.numpy())
        confs.append(conf.numpy())
    return np.concatenate(preds), np.concatenate(confs)


def write_predictions(path: str | Path, ids: list[str], preds: np.ndarray,
                      confs: np.ndarray) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for sid, p, c in zip(ids, preds, confs):
            fh.write(f"{sid}\t{int(p)}\t{float(c):.6f}\n")
    return path
