import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from attrslice import synth
from attrslice.bundle import read_bundle, write_bundle
from attrslice.cli import main as cli_main
from attrslice.embedding import EmbeddingConfig
from attrslice.evaluation import write_prediction_file
from attrslice.pipeline import (
    build_project,
    compute_vectors,
    load_project,
    replay_audit,
)
from attrslice.slicing import SliceConfig


def tree_bytes(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_build_project_artifacts(biased, tmp_path):
    root, _, _ = biased
    proj = tmp_path / "proj"
    build_project(root, proj, EmbeddingConfig(seed=1), SliceConfig(seed=1))
    for name in ("project.json", "embedding.atsc", "weighted.atsc",
                 "pooled.atsc", "slices.json"):
        assert (proj / name).is_file()
    state = load_project(proj)
    assert len(state.slice_set.slices) >= 2
    n = len(state.bundle.samples)
    assert state.embedding.coords.shape == (n, 2)
    assert state.weighted.shape[0] == n
    # Every sample is in exactly one slice.
    seen = sorted(
        i for s in state.slice_set.slices for i in s.member_ids.tolist()
    )
    assert seen == list(range(n))
    for s in state.slice_set.slices:
        assert s.accuracy is not None
        assert s.confusion_cells is not None
        assert s.hull is not None


def test_build_idempotent_byte_identical(biased, tmp_path):
    root, _, _ = biased
    p1 = tmp_path / "p1"
    p2 = tmp_path / "p2"
    build_project(root, p1, EmbeddingConfig(seed=5), SliceConfig(seed=5))
    build_project(root, p2, EmbeddingConfig(seed=5), SliceConfig(seed=5))
    assert tree_bytes(p1) == tree_bytes(p2)


def test_build_uses_precomputed_embedding(tmp_path):
    bundle, _ = synth.two_mode_bundle(n=40, seed=2, with_embedding=True)
    root = write_bundle(bundle, tmp_path / "b")
    proj = tmp_path / "p"
    build_project(root, proj, slice_config=SliceConfig(override_k=4, seed=0))
    state = load_project(proj)
    assert state.embedding.source == "precomputed"
    assert np.allclose(
        state.embedding.coords, bundle.embedding.astype(np.float64), atol=1e-6
    )


def test_build_surfaces_embedding_precondition(tmp_path):
    bundle = synth.small_bundle(n=3)
    root = write_bundle(bundle, tmp_path / "b")
    with pytest.raises(Exception, match="n_neighbors"):
        build_project(root, tmp_path / "p", EmbeddingConfig(n_neighbors=5))


def test_annotate_propagate_and_audit_replay(biased, tmp_path):
    root, _, _ = biased
    proj = tmp_path / "proj"
    build_project(root, proj, EmbeddingConfig(seed=1), SliceConfig(seed=1))
    state = load_project(proj)
    sid = state.slice_set.slices[0].id
    state.annotate(sid, "spurious", note="planted")
    field = state.run_propagation()
    assert field.version == 1
    state.annotate(state.slice_set.slices[1].id, "core")
    field2 = state.run_propagation()
    assert field2.version == 2
    snapshot = dict(field2.per_slice)

    replayed = replay_audit(proj)
    assert replayed.field_ is not None
    assert replayed.field_.version == 2
    assert replayed.field_.per_slice == snapshot


def test_unknown_slice_annotation_rejected(biased, tmp_path):
    root, _, _ = biased
    proj = tmp_path / "proj"
    build_project(root, proj, EmbeddingConfig(seed=1), SliceConfig(seed=1))
    state = load_project(proj)
    with pytest.raises(KeyError):
        state.annotate(10_000, "core")


# ----------------------------------------------------------------------- CLI


def test_cli_build_preset_with_override_k(tmp_path):
    # Preset embedding settings (n_neighbors=5, min_dist=0.01) and a pinned
    # cluster count of 50, persisted end to end.
    bundle, _ = synth.two_mode_bundle(n=70, seed=3)
    root = write_bundle(bundle, tmp_path / "b")
    runner = CliRunner()
    res = runner.invoke(
        cli_main,
        ["build", str(root), str(tmp_path / "proj"), "--preset", "celeba",
         "--override-k", "50", "--seed", "0"],
    )
    assert res.exit_code == 0, res.output
    state = load_project(tmp_path / "proj")
    assert len(state.slice_set.slices) == 50
    assert state.configs["embedding"]["n_neighbors"] == 5
    assert state.configs["embedding"]["min_dist"] == 0.01


def test_cli_build_rerun_byte_identical(tmp_path):
    bundle, _ = synth.two_mode_bundle(n=40, seed=9, with_embedding=True)
    root = write_bundle(bundle, tmp_path / "b")
    runner = CliRunner()
    for name in ("p1", "p2"):
        res = runner.invoke(
            cli_main,
            ["build", str(root), str(tmp_path / name), "--seed", "4"],
        )
        assert res.exit_code == 0, res.output
    assert tree_bytes(tmp_path / "p1") == tree_bytes(tmp_path / "p2")


def test_cli_build_error_names_stage(tmp_path):
    bundle = synth.small_bundle(n=3)
    root = write_bundle(bundle, tmp_path / "b")
    runner = CliRunner()
    res = runner.invoke(cli_main, ["build", str(root), str(tmp_path / "p")])
    assert res.exit_code != 0
    assert "n_neighbors" in res.output


def test_cli_propagate_and_corrupt(biased, tmp_path):
    root, _, _ = biased
    proj = tmp_path / "proj"
    build_project(root, proj, EmbeddingConfig(seed=1), SliceConfig(seed=1))
    state = load_project(proj)
    state.annotate(state.slice_set.slices[0].id, "spurious")

    runner = CliRunner()
    res = runner.invoke(cli_main, ["propagate", str(proj)])
    assert res.exit_code == 0, res.output
    assert "spuriousness version 1" in res.output

    out = tmp_path / "corrupted"
    res = runner.invoke(
        cli_main,
        ["corrupt", str(proj), str(out), "--tau", "0.7", "--seed", "3"],
    )
    assert res.exit_code == 0, res.output
    assert (out / "corruption.json").is_file()
    read_bundle(out)  # validates


def test_cli_corrupt_above_one_tau_warns_and_copies(biased, tmp_path):
    root, _, _ = biased
    proj = tmp_path / "proj"
    build_project(root, proj, EmbeddingConfig(seed=1), SliceConfig(seed=1))
    state = load_project(proj)
    state.annotate(state.slice_set.slices[0].id, "spurious")
    state.run_propagation()

    runner = CliRunner()
    out = tmp_path / "copy"
    res = runner.invoke(cli_main, ["corrupt", str(proj), str(out), "--tau", "1.1"])
    assert res.exit_code == 0, res.output
    assert "empty selection" in res.output
    src = read_bundle(root)
    dst = read_bundle(out)
    assert dst.equals(src)


def test_cli_report(biased, tmp_path):
    root, bundle, _ = biased
    proj = tmp_path / "proj"
    build_project(root, proj, EmbeddingConfig(seed=1), SliceConfig(seed=1))
    labels = {s.id: s.label for s in bundle.samples}
    ids = sorted(labels)
    clean = tmp_path / "clean.tsv"
    core = tmp_path / "core.tsv"
    spur = tmp_path / "spur.tsv"
    write_prediction_file(clean, [(i, labels[i], 0.9) for i in ids])
    write_prediction_file(core, [(i, labels[i], 0.9) for i in ids])
    # Spurious run: everything wrong.
    write_prediction_file(spur, [(i, 1 - labels[i], 0.9) for i in ids])
    runner = CliRunner()
    res = runner.invoke(
        cli_main,
        ["report", str(proj), "--clean", str(clean), "--core", str(core),
         "--spurious", str(spur)],
    )
    assert res.exit_code == 0, res.output
    assert "clean_acc 1.000000" in res.output
    assert "rcs 1.000000" in res.output
    doc = json.loads((proj / "report.json").read_text())
    assert doc["core_acc"] == 1.0
    assert doc["spurious_acc"] == 0.0


def test_cli_report_rcs_line_matches_library(biased, tmp_path):
    # The printed `rcs ...` line must equal the library value for the same
    # prediction files (the exact reference-row values live in
    # test_evaluation, where n is free; here n is the bundle size).
    root, _, _ = biased
    proj = tmp_path / "proj"
    build_project(root, proj, EmbeddingConfig(seed=1), SliceConfig(seed=1))
    state = load_project(proj)
    labels = {s.id: s.label for s in state.bundle.samples}
    n = len(labels)
    ids = sorted(labels)
    # Construct core/spurious files whose accuracies straddle a known gap.
    k_core = round(0.9 * n)
    k_spur = round(0.7 * n)
    clean = tmp_path / "clean.tsv"
    core = tmp_path / "core.tsv"
    spur = tmp_path / "spur.tsv"
    write_prediction_file(clean, [(i, labels[i], 0.9) for i in ids])
    write_prediction_file(
        core,
        [(i, labels[i] if j < k_core else 1 - labels[i], 0.9)
         for j, i in enumerate(ids)],
    )
    write_prediction_file(
        spur,
        [(i, labels[i] if j < k_spur else 1 - labels[i], 0.9)
         for j, i in enumerate(ids)],
    )
    runner = CliRunner()
    res = runner.invoke(
        cli_main,
        ["report", str(proj), "--clean", str(clean), "--core", str(core),
         "--spurious", str(spur)],
    )
    assert res.exit_code == 0, res.output
    from attrslice.evaluation import rcs

    expected = rcs(k_core / n, k_spur / n)
    assert f"rcs {expected:.6f}" in res.output


def test_cli_consistency_direction(tmp_path):
    bundle, _ = synth.two_mode_bundle(n=80, seed=5)
    root = write_bundle(bundle, tmp_path / "b")
    runner = CliRunner()
    res = runner.invoke(cli_main, ["consistency", str(root), "--seed", "0"])
    assert res.exit_code == 0, res.output
    lines = [l for l in res.output.splitlines() if l]
    feat = next(l for l in lines if l.startswith("feature\t"))
    attr = next(l for l in lines if l.startswith("attribution\t"))
    feat_asim = float(feat.split("\t")[2])
    attr_asim = float(attr.split("\t")[2])
    assert attr_asim > feat_asim
