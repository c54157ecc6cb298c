"""Retraining on noise-corrupted data and prediction-file emission.

The corrupted training bundle comes from the engine's corruption export; the
three evaluation bundles (clean / attended-regions-noised / complement-noised)
are plain bundles whose images this side runs inference on, producing the
prediction files the engine's report consumes.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from torch import nn

from .tensorio import load_bundle_arrays
from .training import predict, train_classifier, write_predictions


@dataclass
class CormResult:
    model: nn.Module
    prediction_files: dict[str, Path]
    checkpoint: Path | None = None


def retrain_corm(corrupted_root: str | Path, model: nn.Module,
                 eval_roots: dict[str, str | Path], out_dir: str | Path,
                 epochs: int = 6, lr: float = 5e-4, seed: int = 1,
                 save_checkpoint: bool = True) -> CormResult:
    """Fine-tune on the corrupted bundle, then score the evaluation bundles.

    ``eval_roots`` maps prediction-file stems (clean, core, spurious) to
    bundle roots; with ``epochs=0`` the incoming model is scored unchanged,
    reproducing its baseline metrics.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = copy.deepcopy(model)

    if epochs > 0:
        train = load_bundle_arrays(corrupted_root)
        if train["images"] is None:
            raise ValueError(f"{corrupted_root} has no images to retrain on")
        model = train_classifier(
            train["images"], train["labels"], seed=seed, epochs=epochs, lr=lr,
            model=model,
        )

    prediction_files = {}
    for stem, root in eval_roots.items():
        data = load_bundle_arrays(root)
        if data["images"] is None:
            raise ValueError(f"{root} has no images to score")
        preds, confs = predict(model, data["images"])
        prediction_files[stem] = write_predictions(
            out_dir / f"{stem}.tsv", data["ids"], preds, confs
        )

    checkpoint = None
    if save_checkpoint:
        import torch

        checkpoint = out_dir / "retrained.pt"
        torch.save(model.state_dict(), checkpoint)
    return CormResult(model=model, prediction_files=prediction_files,
                      checkpoint=checkpoint)
