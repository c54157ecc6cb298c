"""Command-line interface: build, serve, propagate, corrupt, report, consistency."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from .attribution import neighbor_consistency
from .bundle import read_bundle
from .embedding import EmbeddingConfig, embed, preset
from .evaluation import build_report
from .pipeline import build_project, compute_vectors, load_project
from .slicing import SliceConfig
from .spuriousness import NoAnnotations

PORT_ENV = "ATTRSLICE_PORT"


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _embed_config(doc: dict, preset_name: str | None, seed: int | None,
                  override: dict | None = None) -> EmbeddingConfig:
    kwargs = dict(doc.get("embedding", {}))
    if override:
        kwargs.update(override)
    if seed is not None:
        kwargs["seed"] = seed
    if preset_name:
        return preset(preset_name, **kwargs)
    return EmbeddingConfig(**kwargs)


@click.group()
def main():
    """Metadata-free data-slice finding and model validation."""


@main.command()
@click.argument("bundle_root", type=click.Path(exists=True))
@click.argument("project_dir", type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="JSON file with embedding/slicing/spread/noise sections.")
@click.option("--preset", "preset_name", type=str, default=None,
              help="Named embedding preset (celeba, waterbirds).")
@click.option("--override-k", type=int, default=None,
              help="Fix the slice count, skipping the over-clustering loop.")
@click.option("--seed", type=int, default=None, help="Seed for embedding and slicing.")
def build(bundle_root, project_dir, config_path, preset_name, override_k, seed):
    """Build a project directory from a validation bundle."""
    doc = _load_config_file(config_path)
    embed_cfg = _embed_config(doc, preset_name, seed)
    slice_kwargs = dict(doc.get("slicing", {}))
    if override_k is not None:
        slice_kwargs["override_k"] = override_k
    if seed is not None:
        slice_kwargs["seed"] = seed
    slice_cfg = SliceConfig(**slice_kwargs)
    try:
        build_project(bundle_root, project_dir, embed_cfg, slice_cfg)
    except Exception as exc:
        raise click.ClickException(f"build failed: {exc}") from exc
    state = load_project(project_dir)
    click.echo(
        f"built {project_dir}: {len(state.slice_set.slices)} slices "
        f"(converged={state.slice_set.converged}, "
        f"k_trace={state.slice_set.k_trace})"
    )


@main.command()
@click.argument("project_dir", type=click.Path(exists=True))
@click.option("--port", type=int, default=None, help="Port (or set $ATTRSLICE_PORT).")
@click.option("--host", type=str, default="127.0.0.1")
@click.option("--frontend", "frontend_dist", type=click.Path(), default=None,
              help="Directory of built frontend assets to serve at /.")
def serve(project_dir, port, host, frontend_dist):
    """Serve the project API (and optionally the UI) over HTTP."""
    from .server import serve as run_server

    if port is None:
        port = int(os.environ.get(PORT_ENV, "8000"))
    run_server(project_dir, port=port, host=host, frontend_dist=frontend_dist)


@main.command()
@click.argument("project_dir", type=click.Path(exists=True))
def propagate(project_dir):
    """Propagate logged annotations into spuriousness probabilities."""
    state = load_project(project_dir)
    try:
        field_ = state.run_propagation()
    except NoAnnotations as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"spuriousness version {field_.version}")
    for sid in sorted(field_.per_slice):
        click.echo(f"slice {sid}\t{field_.per_slice[sid]:.4f}")


@main.command()
@click.argument("project_dir", type=click.Path(exists=True))
@click.argument("out_root", type=click.Path())
@click.option("--tau", type=float, default=None,
              help="Select slices with propagated spuriousness >= tau.")
@click.option("--slices", "slice_ids", type=str, default=None,
              help="Comma-separated slice ids, or 'all'.")
@click.option("--target", type=click.Choice(["spurious_regions", "core_regions"]),
              default=None)
@click.option("--sigma", "sigma_z", type=float, default=None)
@click.option("--seed", type=int, default=None)
def corrupt(project_dir, out_root, tau, slice_ids, target, sigma_z, seed):
    """Export a noise-corrupted copy of the project's bundle."""
    state = load_project(project_dir)
    ids = None
    if slice_ids is not None:
        if slice_ids.strip().lower() == "all":
            ids = [s.id for s in state.slice_set.slices]
        else:
            ids = [int(tok) for tok in slice_ids.split(",") if tok.strip()]
    try:
        out, n = state.export_corruption(
            out_root, slice_ids=ids, tau=tau, target=target,
            sigma_z=sigma_z, seed=seed,
        )
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    if n == 0:
        click.echo("warning: empty selection, output is an unchanged copy")
    click.echo(f"wrote {out} ({n} samples corrupted)")


@main.command()
@click.argument("project_dir", type=click.Path(exists=True))
@click.option("--clean", "clean_path", type=click.Path(exists=True), required=True)
@click.option("--core", "core_path", type=click.Path(exists=True), required=True)
@click.option("--spurious", "spurious_path", type=click.Path(exists=True),
              required=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Where to write report.json (defaults into the project).")
def report(project_dir, clean_path, core_path, spurious_path, out_path):
    """Compute clean/core/spurious accuracy and RCS from prediction files."""
    state = load_project(project_dir)
    labels = {s.id: s.label for s in state.bundle.samples}
    try:
        rep = build_report(clean_path, core_path, spurious_path, labels)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    out_path = Path(out_path) if out_path else state.project_dir / "report.json"
    out_path.write_text(
        json.dumps(rep.as_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    click.echo(f"clean_acc {rep.clean_acc:.6f}")
    click.echo(f"core_acc {rep.core_acc:.6f}")
    click.echo(f"spurious_acc {rep.spurious_acc:.6f}")
    click.echo(f"rcs {rep.rcs:.6f}")


@main.command()
@click.argument("bundle_root", type=click.Path(exists=True))
@click.option("--k", "k_neighbors", type=int, default=10)
@click.option("--seed", type=int, default=0)
@click.option("--preset", "preset_name", type=str, default=None)
def consistency(bundle_root, k_neighbors, seed, preset_name):
    """Compare neighbor consistency of the feature and attribution spaces."""
    bundle = read_bundle(bundle_root)
    weighted, pooled = compute_vectors(bundle)
    masks = [np.asarray(s.attribution, dtype=np.float64) for s in bundle.samples]
    from .attribution import normalize_mask

    masks = [normalize_mask(m) for m in masks]
    cfg = _embed_config({}, preset_name, seed)
    feature_space = embed(pooled, cfg)
    attribution_space = embed(weighted, cfg)
    nc_feat = neighbor_consistency(feature_space.coords, pooled, masks, k_neighbors)
    nc_attr = neighbor_consistency(
        attribution_space.coords, pooled, masks, k_neighbors
    )
    click.echo("space\tfeature_sim\tattribution_sim")
    click.echo(
        f"feature\t{nc_feat.feature_sim_global:.4f}\t{nc_feat.attribution_sim_global:.4f}"
    )
    click.echo(
        f"attribution\t{nc_attr.feature_sim_global:.4f}\t{nc_attr.attribution_sim_global:.4f}"
    )


if __name__ == "__main__":
    sys.exit(main())
