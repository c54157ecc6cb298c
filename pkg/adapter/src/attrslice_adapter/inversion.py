"""Feature-inversion mosaic tiles.

Synthesizes the image whose target-layer representation best matches a
slice's mean attribution-weighted vector, under a total-variation penalty:

    minimize  || phi(x) - phi0 ||^2 + lambda * TV(x)

Only pixels inside the slice's hull polygon are free: the image is
parameterized in Fourier space (frequency-scaled spectrum, which biases the
search toward natural low-frequency structure), decoded, masked by the
polygon and added to an initialization image (the average of the slice's
original images works well).  The result is cropped to the polygon with
transparency outside.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .models import resolve_layer


class InversionDiverged(RuntimeError):
    pass


@dataclass
class TileResult:
    rgba: np.ndarray          # (H, W, 4) float32 in [0, 1]
    objective_history: list[float]
    tv_history: list[float]

    @property
    def initial_objective(self) -> float:
        return self.objective_history[0]

    @property
    def final_objective(self) -> float:
        return self.objective_history[-1]


def rasterize_convex_polygon(polygon: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """(mask, pixel_polygon): polygon scaled into a size x size raster.

    The polygon must be convex and counterclockwise (engine hulls are); a
    pixel is inside when it lies left of every directed edge.
    """
    poly = np.asarray(polygon, dtype=np.float64)
    lo = poly.min(axis=0)
    hi = poly.max(axis=0)
    span = max((hi - lo).max(), 1e-12)
    scaled = (poly - lo) / span * (size - 1)

    ys, xs = np.mgrid[0:size, 0:size]
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
    inside = np.ones(len(pts), dtype=bool)
    v = scaled
    for i in range(len(v)):
        a = v[i]
        b = v[(i + 1) % len(v)]
        cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (
            pts[:, 0] - a[0]
        )
        inside &= cross >= -1e-9
    return inside.reshape(size, size).astype(np.float32), scaled


def _decode_fourier(spectrum: torch.Tensor, size: int,
                    scale: torch.Tensor) -> torch.Tensor:
    complex_spec = torch.view_as_complex(spectrum) * scale
    return torch.fft.irfft2(complex_spec, s=(size, size), norm="ortho")


def total_variation(x: torch.Tensor) -> torch.Tensor:
    dy = (x[:, 1:, :] - x[:, :-1, :]).abs().mean()
    dx = (x[:, :, 1:] - x[:, :, :-1]).abs().mean()
    return dy + dx


def render_tile(model: nn.Module, target_layer: str, phi0: np.ndarray,
                polygon: np.ndarray, *, size: int = 64, steps: int = 150,
                lr: float = 0.05, tv_weight: float = 0.5, seed: int = 0,
                init_image: np.ndarray | None = None) -> TileResult:
    """Optimize the polygon's pixels toward the target representation."""
    device = torch.device("cpu")
    model = model.to(device).eval()
    layer = resolve_layer(model, target_layer)
    for p in model.parameters():
        p.requires_grad_(False)

    mask_np, _ = rasterize_convex_polygon(polygon, size)
    mask = torch.from_numpy(mask_np)[None]          # (1, H, W)
    if init_image is None:
        base = torch.full((3, size, size), 0.5)
    else:
        base = torch.from_numpy(np.asarray(init_image, dtype=np.float32))
        if base.shape[-2:] != (size, size):
            base = torch.nn.functional.interpolate(
                base[None], size=(size, size), mode="bilinear",
                align_corners=False,
            )[0]

    # Frequency-scaled Fourier parameterization, seeded near zero.
    gen = torch.Generator().manual_seed(seed)
    w_rfft = size // 2 + 1
    spectrum = torch.randn((3, size, w_rfft, 2), generator=gen) * 1e-3
    spectrum.requires_grad_(True)
    fy = torch.fft.fftfreq(size)[:, None]
    fx = torch.fft.rfftfreq(size)[None, :]
    freq = torch.sqrt(fy * fy + fx * fx).clamp_min(1.0 / size)
    scale = (1.0 / freq).to(torch.complex64)

    target = torch.from_numpy(np.asarray(phi0, dtype=np.float32))[None]

    captured: dict[str, torch.Tensor] = {}

    def hook(module, inputs, output):
        captured["acts"] = output

    handle = layer.register_forward_hook(hook)
    opt = torch.optim.Adam([spectrum], lr=lr)
    objective_history: list[float] = []
    tv_history: list[float] = []
    try:
        for step in range(steps + 1):
            opt.zero_grad()
            delta = _decode_fourier(spectrum, size, scale)
            x = base + mask * delta
            model(x[None])
            phi = captured["acts"].mean(dim=(2, 3))
            match = ((phi - target) ** 2).sum()
            tv = total_variation(x * mask)
            loss = match + tv_weight * tv
            if not torch.isfinite(loss):
                raise InversionDiverged(
                    f"non-finite objective at step {step}: "
                    f"match={float(match)!r} tv={float(tv)!r}"
                )
            objective_history.append(float(loss.detach()))
            tv_history.append(float(tv.detach()))
            if step == steps:
                break
            loss.backward()
            opt.step()
    finally:
        handle.remove()

    with torch.no_grad():
        delta = _decode_fourier(spectrum, size, scale)
        x = (base + mask * delta).clamp(0.0, 1.0)
    rgba = np.concatenate(
        [x.numpy().transpose(1, 2, 0), mask_np[:, :, None]], axis=2
    ).astype(np.float32)
    return TileResult(rgba, objective_history, tv_history)


def save_tile_png(result: TileResult, path: str | Path) -> Path:
    from PIL import Image

    arr = (result.rgba * 255.0).round().astype(np.uint8)
    Image.fromarray(arr, mode="RGBA").save(path)
    return Path(path)


def render_project_tiles(model: nn.Module, target_layer: str,
                         project_dir: str | Path, bundle_root: str | Path,
                         slice_ids: list[int] | None = None, *,
                         size: int = 64, steps: int = 150, lr: float = 0.05,
                         tv_weight: float = 0.5, seed: int = 0) -> Path:
    """Render tiles for a built project and register them in tiles/tiles.json.

    Reads hull polygons and weighted centroids from the engine's slices.json
    and initializes each tile with the mean of the slice's original images.
    """
    import json

    from .tensorio import load_bundle_arrays

    project_dir = Path(project_dir)
    doc = json.loads((project_dir / "slices.json").read_text(encoding="utf-8"))
    data = load_bundle_arrays(bundle_root)
    tiles_dir = project_dir / "tiles"
    tiles_dir.mkdir(exist_ok=True)
    registry = {}
    for rec in doc["slices"]:
        sid = rec["id"]
        if slice_ids is not None and sid not in slice_ids:
            continue
        init = None
        if data["images"] is not None:
            init = data["images"][np.array(rec["member_ids"])].mean(axis=0)
        result = render_tile(
            model, target_layer, np.array(rec["centroid_wv"]),
            np.array(rec["hull"]), size=size, steps=steps, lr=lr,
            tv_weight=tv_weight, seed=seed, init_image=init,
        )
        name = f"slice_{sid}.png"
        save_tile_png(result, tiles_dir / name)
        registry[str(sid)] = {"path": name, "media_type": "image/png"}
    (tiles_dir / "tiles.json").write_text(
        json.dumps(registry, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return tiles_dir
