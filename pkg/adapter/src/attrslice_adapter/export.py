"""Bundle export: target-layer activations, GradCAM masks, predictions.

GradCAM uses the canonical formulation: channel weights are the spatial mean
of the predicted-class gradient at the target layer, the weighted activation
sum is rectified, and the m x n map is exported raw (the engine normalizes).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .models import resolve_layer
from .synthdata import BiasedImageData
from .tensorio import save_tensor


@dataclass
class AdapterConfig:
    target_layer: str = "features.6"
    device: str = "cpu"
    batch_size: int = 32
    # Feature-inversion settings.
    tv_weight: float = 0.5
    inversion_steps: int = 150
    inversion_lr: float = 0.05
    tile_size: int = 64
    seed: int = 0


class _Recorder:
    """Forward/backward hooks capturing activations and gradients."""

    def __init__(self, layer: nn.Module):
        self.activations: torch.Tensor | None = None
        self.gradients: torch.Tensor | None = None
        self._h1 = layer.register_forward_hook(self._forward)
        self._h2 = layer.register_full_backward_hook(self._backward)

    def _forward(self, module, inputs, output):
        self.activations = output.detach()

    def _backward(self, module, grad_in, grad_out):
        self.gradients = grad_out[0].detach()

    def close(self):
        self._h1.remove()
        self._h2.remove()


def gradcam_batch(model: nn.Module, layer: nn.Module,
                  images: torch.Tensor) -> tuple[torch.Tensor, ...]:
    """(features, masks, predictions, confidences) for one image batch."""
    recorder = _Recorder(layer)
    try:
        model.zero_grad(set_to_none=True)
        images = images.requires_grad_(False)
        logits = model(images)
        probs = torch.softmax(logits, dim=1)
        conf, pred = probs.max(dim=1)
        score = logits.gather(1, pred[:, None]).sum()
        score.backward()
        acts = recorder.activations          # (B, d, m, n)
        grads = recorder.gradients           # (B, d, m, n)
        weights = grads.mean(dim=(2, 3), keepdim=True)
        cam = torch.relu((weights * acts).sum(dim=1))  # (B, m, n)
        return acts, cam, pred, conf
    finally:
        recorder.close()
        model.zero_grad(set_to_none=True)


def export_bundle(data: BiasedImageData, model: nn.Module,
                  config: AdapterConfig, out_root: str | Path,
                  dataset_name: str = "synthetic-biased",
                  class_names: tuple[str, str] = ("no_shape", "shape"),
                  attribution_override: np.ndarray | None = None,
                  include_images: bool = True) -> Path:
    """Run the model over the dataset and write a validation bundle.

    ``attribution_override`` replaces every exported mask with a fixed H x W
    array (used for ground-truth-region evaluation bundles).
    """
    device = torch.device(config.device)
    model = model.to(device).eval()
    layer = resolve_layer(model, config.target_layer)

    out_root = Path(out_root)
    (out_root / "tensors").mkdir(parents=True, exist_ok=True)
    if include_images:
        (out_root / "images").mkdir(exist_ok=True)

    records = []
    shape_seen = None
    n = len(data.ids)
    for start in range(0, n, config.batch_size):
        stop = min(start + config.batch_size, n)
        batch = torch.from_numpy(data.images[start:stop]).to(device)
        acts, cams, preds, confs = gradcam_batch(model, layer, batch)
        for b, i in enumerate(range(start, stop)):
            sid = data.ids[i]
            features = acts[b].cpu().numpy()
            if shape_seen is None:
                shape_seen = features.shape
            elif features.shape != shape_seen:
                raise RuntimeError(
                    f"target layer output drifted: {features.shape} vs {shape_seen}"
                )
            if attribution_override is not None:
                mask = np.asarray(attribution_override, dtype=np.float32)
            else:
                mask = cams[b].cpu().numpy()
            fpath = f"tensors/{sid}_f.atsc"
            apath = f"tensors/{sid}_a.atsc"
            save_tensor(out_root / fpath, features)
            save_tensor(out_root / apath, mask)
            rec = {
                "id": sid,
                "label": int(data.labels[i]),
                "prediction": int(preds[b].item()),
                "confidence": float(confs[b].item()),
                "feature_path": fpath,
                "attribution_path": apath,
            }
            if include_images:
                ipath = f"images/{sid}.atsc"
                save_tensor(out_root / ipath, data.images[i])
                rec["image_path"] = ipath
            records.append(rec)

    manifest = {
        "dataset_name": dataset_name,
        "class_names": list(class_names),
        "positive_class": 1,
        "samples": records,
    }
    (out_root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return out_root


def adapter_weighted_vector(features: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """The adapter's own mask-weighted average, for cross-implementation checks."""
    w = np.maximum(np.asarray(mask, dtype=np.float64), 0.0)
    total = w.sum()
    w = np.full(w.shape, 1.0 / w.size) if total <= 0 else w / total
    return (np.asarray(features, dtype=np.float64) * w[None]).sum(axis=(1, 2))
