"""HTTP service exposing a built project to the UI.

Read endpoints are pure functions of the loaded state and the query;
mutations (annotate, propagate, corruption export) run on a single
serialized writer path and swap in new versioned state atomically, so
readers never observe a half-updated field.
"""

from __future__ import annotations

import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .geometry import convex_hull, degenerate_triangle
from .pipeline import ProjectState, load_project
from .spuriousness import NoAnnotations

COLOR_METRICS = ("accuracy", "confidence", "spuriousness", "coherence")


class AnnotationIn(BaseModel):
    slice_id: int
    verdict: str
    note: str = ""
    author: str = ""


class CorruptionIn(BaseModel):
    out_root: str
    slice_ids: list[int] | None = None
    tau: float | None = None
    target: str | None = None
    sigma_z: float | None = None
    seed: int | None = None


def _slice_summary(state: ProjectState, s) -> dict:
    spur = None
    if state.field_ is not None:
        spur = state.field_.per_slice.get(s.id)
    return {
        "id": s.id,
        "size": int(s.size),
        "accuracy": s.accuracy,
        "mean_confidence": s.mean_confidence,
        "coherence": s.coherence,
        "spuriousness": spur,
    }


def _color_value(state: ProjectState, s, metric: str):
    if metric == "accuracy":
        return s.accuracy
    if metric == "confidence":
        return s.mean_confidence
    if metric == "coherence":
        return s.coherence
    if metric == "spuriousness":
        return state.field_.per_slice.get(s.id) if state.field_ else None
    return None


def create_app(project_dir: str | Path,
               frontend_dist: str | Path | None = None) -> FastAPI:
    state = load_project(project_dir)
    write_lock = threading.Lock()
    app = FastAPI(title="attrslice", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def get_slice(slice_id: int):
        try:
            return state.slice_set.by_id(slice_id)
        except KeyError:
            raise HTTPException(404, f"no slice {slice_id}") from None

    @app.get("/api/version")
    def version():
        return {
            "spuriousness_version": state.spuriousness_version,
            "n_slices": len(state.slice_set.slices),
            "n_samples": len(state.bundle.samples),
        }

    @app.get("/api/slices")
    def slices():
        out = [_slice_summary(state, s) for s in state.slice_set.slices]
        return sorted(out, key=lambda d: d["id"])

    @app.get("/api/slices/{slice_id}")
    def slice_detail(slice_id: int):
        s = get_slice(slice_id)
        doc = _slice_summary(state, s)
        doc.update(
            {
                "member_ids": [int(i) for i in s.member_ids],
                "member_sample_ids": [
                    state.bundle.samples[i].id for i in s.member_ids
                ],
                "hull": [[float(a), float(b)] for a, b in s.hull],
                "degenerate": s.degenerate,
                "confusion_cells": s.confusion_cells,
            }
        )
        return doc

    @app.get("/api/slices/{slice_id}/samples")
    def slice_samples(slice_id: int, view: str = Query("image")):
        if view not in ("image", "heatmap"):
            raise HTTPException(422, "view must be image or heatmap")
        s = get_slice(slice_id)
        samples = []
        for i in s.member_ids:
            sample = state.bundle.samples[i]
            if view == "heatmap":
                arr = sample.attribution
            else:
                arr = sample.image
            samples.append(
                {
                    "id": sample.id,
                    "index": int(i),
                    "label": sample.label,
                    "prediction": sample.prediction,
                    "confidence": sample.confidence,
                    "shape": list(arr.shape) if arr is not None else None,
                    "values": (
                        np.asarray(arr, dtype=float).ravel().tolist()
                        if arr is not None
                        else None
                    ),
                }
            )
        return {"slice_id": slice_id, "view": view, "samples": samples}

    @app.get("/api/mosaic")
    def mosaic(color: str = Query("accuracy"), layout: str = Query("combined")):
        if color not in COLOR_METRICS:
            raise HTTPException(422, f"color must be one of {COLOR_METRICS}")
        if layout not in ("combined", "confusion"):
            raise HTTPException(422, "layout must be combined or confusion")
        tiles = []
        coords = state.embedding.coords
        for s in state.slice_set.slices:
            tile = {
                "id": s.id,
                "hull": [[float(a), float(b)] for a, b in s.hull],
                "degenerate": s.degenerate,
                "color_value": _color_value(state, s, color),
                "tile_url": (
                    f"/api/tiles/{s.id}" if s.id in state.tile_registry else None
                ),
            }
            if layout == "confusion":
                cells = {}
                for cell, members in (s.confusion_cells or {}).items():
                    if not members:
                        cells[cell] = None
                        continue
                    hull = convex_hull(coords[np.array(members)])
                    if len(hull) < 3:
                        center = coords[np.array(members)].mean(axis=0)
                        hull = degenerate_triangle(center)
                    cells[cell] = {
                        "members": [int(m) for m in members],
                        "hull": [[float(a), float(b)] for a, b in hull],
                    }
                tile["cells"] = cells
            tiles.append(tile)
        return {
            "color": color,
            "layout": layout,
            "spuriousness_version": state.spuriousness_version,
            "slices": tiles,
        }

    @app.get("/api/spuriousness")
    def spuriousness():
        if state.field_ is None:
            return {"version": 0, "per_slice": {}, "per_point": None}
        return {
            "version": state.field_.version,
            "per_slice": {
                str(k): float(v) for k, v in state.field_.per_slice.items()
            },
            "per_point": [float(p) for p in state.field_.per_point],
        }

    @app.get("/api/report")
    def report():
        path = state.project_dir / "report.json"
        if not path.is_file():
            raise HTTPException(404, "no report has been generated")
        import json

        return json.loads(path.read_text(encoding="utf-8"))

    @app.get("/api/tiles/{slice_id}")
    def tile(slice_id: int):
        rec = state.tile_registry.get(slice_id)
        if rec is None:
            raise HTTPException(404, f"no tile registered for slice {slice_id}")
        path = state.project_dir / "tiles" / rec["path"]
        if not path.is_file():
            raise HTTPException(404, f"tile file missing for slice {slice_id}")
        return FileResponse(path, media_type=rec.get("media_type", "image/png"))

    @app.post("/api/annotations")
    def annotate(body: AnnotationIn):
        get_slice(body.slice_id)
        if body.verdict not in ("core", "spurious"):
            raise HTTPException(422, "verdict must be core or spurious")
        with write_lock:
            ann = state.annotate(body.slice_id, body.verdict, body.note, body.author)
        return {"ok": True, "timestamp": ann.timestamp}

    @app.post("/api/propagate")
    def run_propagate():
        with write_lock:
            try:
                field_ = state.run_propagation()
            except NoAnnotations as exc:
                raise HTTPException(409, str(exc)) from None
        return {"version": field_.version}

    @app.post("/api/export/corruption")
    def export_corruption(body: CorruptionIn):
        with write_lock:
            try:
                out_root, n = state.export_corruption(
                    body.out_root,
                    slice_ids=body.slice_ids,
                    tau=body.tau,
                    target=body.target,
                    sigma_z=body.sigma_z,
                    seed=body.seed,
                )
            except ValueError as exc:
                raise HTTPException(422, str(exc)) from None
        return {"out_root": str(out_root), "corrupted": n}

    if frontend_dist and Path(frontend_dist).is_dir():
        app.mount(
            "/", StaticFiles(directory=frontend_dist, html=True), name="frontend"
        )

    return app


def serve(project_dir: str | Path, port: int = 8000, host: str = "127.0.0.1",
          frontend_dist: str | Path | None = None) -> None:
    import uvicorn

    app = create_app(project_dir, frontend_dist=frontend_dist)
    uvicorn.run(app, host=host, port=port, log_level="info")
