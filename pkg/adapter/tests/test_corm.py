"""Mitigation-direction test: the full annotate -> corrupt -> retrain loop.

The engine is driven exclusively through its CLI and file formats (bundle
directories, slices.json, the annotation log, prediction files); the adapter
supplies the model side.  Asserts direction only: retraining on
noise-corrupted data must raise RCS above the baseline.
"""

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import attrslice_adapter as A

SIGMA = 2.0  # corruption noise large enough to drown the planted patch


def run_cli(*args):
    res = subprocess.run(
        [sys.executable, "-m", "attrslice.cli", *args],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0, res.stderr + res.stdout
    return res.stdout


def emit_predictions(model, roots, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for stem, root in roots.items():
        data = A.load_bundle_arrays(root)
        preds, confs = A.predict(model, data["images"])
        files[stem] = A.write_predictions(
            out_dir / f"{stem}.tsv", data["ids"], preds, confs
        )
    return files


def report_metrics(project, files):
    out = run_cli(
        "report", str(project),
        "--clean", str(files["clean"]),
        "--core", str(files["core"]),
        "--spurious", str(files["spurious"]),
    )
    metrics = {}
    for line in out.splitlines():
        name, value = line.split()
        metrics[name] = float(value)
    return metrics


@pytest.fixture(scope="module")
def corm_run(tmp_path_factory):
    work = tmp_path_factory.mktemp("corm")
    train = A.make_biased_dataset(n=600, bias=0.95, split="train", seed=0)
    evald = A.make_biased_dataset(n=400, bias=0.95, split="train", seed=7)
    baseline = A.train_classifier(train.images, train.labels, epochs=8, seed=0)
    cfg = A.AdapterConfig()

    # Evaluation bundles carry the ground-truth corner mask so both noise
    # polarities hit exactly the planted regions.
    gt = evald.spurious_mask_latent(8, 8)
    clean_root = A.export_bundle(
        evald, baseline, cfg, work / "eval_clean", attribution_override=gt
    )
    eval_proj = work / "eval_proj"
    run_cli("build", str(clean_root), str(eval_proj), "--override-k", "8",
            "--seed", "0")
    run_cli("corrupt", str(eval_proj), str(work / "eval_corenoise"),
            "--slices", "all", "--target", "spurious_regions",
            "--sigma", str(SIGMA), "--seed", "5")
    run_cli("corrupt", str(eval_proj), str(work / "eval_spurnoise"),
            "--slices", "all", "--target", "core_regions",
            "--sigma", str(SIGMA), "--seed", "5")
    eval_roots = {
        "clean": work / "eval_clean",
        "core": work / "eval_corenoise",
        "spurious": work / "eval_spurnoise",
    }

    # Paper loop on the training side: export with GradCAM masks, slice,
    # annotate the patch slice through the documented log format, propagate,
    # export the corruption.
    train_root = A.export_bundle(train, baseline, cfg, work / "train_bundle")
    train_proj = work / "train_proj"
    run_cli("build", str(train_root), str(train_proj), "--seed", "1")
    slices = json.loads((train_proj / "slices.json").read_text())["slices"]
    patchy = np.flatnonzero(train.has_patch)
    best = max(
        slices,
        key=lambda s: np.isin(np.array(s["member_ids"]), patchy).sum(),
    )
    (train_proj / "annotations.log").write_text(
        json.dumps(
            {
                "timestamp": "2024-01-01T00:00:00+00:00",
                "slice_id": best["id"],
                "verdict": "spurious",
                "note": "bright corner patch",
                "author": "test",
            }
        )
        + "\n"
    )
    run_cli("propagate", str(train_proj))
    corrupted = work / "train_corrupted"
    run_cli("corrupt", str(train_proj), str(corrupted), "--tau", "0.7",
            "--target", "spurious_regions", "--sigma", str(SIGMA),
            "--seed", "3")

    return {
        "work": work,
        "train": train,
        "baseline": baseline,
        "eval_proj": eval_proj,
        "eval_roots": eval_roots,
        "corrupted": corrupted,
    }


def test_baseline_relies_on_the_patch(corm_run):
    # Independent-patch split: a shortcut model tracks the patch, not labels.
    probe = A.make_biased_dataset(n=200, split="test", seed=3)
    preds, _ = A.predict(corm_run["baseline"], probe.images)
    follows_patch = ((preds == 1) == probe.has_patch).mean()
    assert follows_patch > 0.9


def test_retraining_raises_rcs_above_baseline(corm_run):
    baseline_files = emit_predictions(
        corm_run["baseline"], corm_run["eval_roots"],
        corm_run["work"] / "baseline_preds",
    )
    baseline_metrics = report_metrics(corm_run["eval_proj"], baseline_files)

    result = A.retrain_corm(
        corm_run["corrupted"], corm_run["baseline"], corm_run["eval_roots"],
        corm_run["work"] / "retrained", epochs=6, seed=1,
    )
    retrained_metrics = report_metrics(
        corm_run["eval_proj"], result.prediction_files
    )

    print(f"baseline:  {baseline_metrics}")
    print(f"retrained: {retrained_metrics}")
    assert retrained_metrics["rcs"] > baseline_metrics["rcs"]
    # The reported trend at desk scale: core reliance up, spurious down.
    assert retrained_metrics["core_acc"] > baseline_metrics["core_acc"]
    assert retrained_metrics["spurious_acc"] < baseline_metrics["spurious_acc"]
    assert result.checkpoint is not None and result.checkpoint.is_file()


def test_zero_epoch_retrain_reproduces_baseline(corm_run):
    baseline_files = emit_predictions(
        corm_run["baseline"], corm_run["eval_roots"],
        corm_run["work"] / "zero_base",
    )
    result = A.retrain_corm(
        corm_run["corrupted"], corm_run["baseline"], corm_run["eval_roots"],
        corm_run["work"] / "zero_retrain", epochs=0, save_checkpoint=False,
    )
    for stem, path in baseline_files.items():
        assert (
            result.prediction_files[stem].read_bytes() == Path(path).read_bytes()
        )
