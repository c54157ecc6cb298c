import filecmp
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attrslice.bundle import read_bundle
from attrslice.embedding import precomputed_embedding
from attrslice.evaluation import (
    EvaluationError,
    MissingImages,
    NoiseConfig,
    PredictionFileError,
    accuracy_from_predictions,
    build_report,
    corrupt,
    corruption_mask,
    make_corrupted_bundle,
    noise_field,
    rcs,
    read_prediction_file,
    select_samples,
    write_prediction_file,
)
from attrslice.pipeline import compute_vectors
from attrslice.slicing import SliceConfig, find_slices

# ------------------------------------------------------------------ corrupt


def test_corrupt_zero_mask_is_identity(rng):
    x = rng.uniform(0, 1, (3, 16, 16)).astype(np.float32)
    out = corrupt(x, np.zeros((16, 16)), NoiseConfig(seed=1), "a")
    assert np.array_equal(out, x.astype(np.float64))


def test_corrupt_deterministic_per_sample(rng):
    x = rng.uniform(0, 1, (3, 8, 8))
    m = np.ones((8, 8))
    a1 = corrupt(x, m, NoiseConfig(seed=7), "sample-1")
    a2 = corrupt(x, m, NoiseConfig(seed=7), "sample-1")
    b = corrupt(x, m, NoiseConfig(seed=7), "sample-2")
    c = corrupt(x, m, NoiseConfig(seed=8), "sample-1")
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)


def test_corrupt_elementwise_oracle(rng):
    x = rng.uniform(0, 1, (2, 6, 5))
    m = rng.uniform(0, 1, (6, 5))
    noise = NoiseConfig(seed=3)
    out = corrupt(x, m, noise, "s")
    z = noise_field(x.shape, noise, "s")
    for c in range(2):
        for i in range(6):
            for j in range(5):
                assert out[c, i, j] == pytest.approx(
                    x[c, i, j] + m[i, j] * z[c, i, j], abs=1e-12
                )


def test_corrupt_statistics_half_mask():
    sigma = 0.25
    x = np.zeros((3, 100, 100), dtype=np.float32)
    m = np.zeros((100, 100))
    m[:, :50] = 1.0
    out = corrupt(x, m, NoiseConfig(sigma_z=sigma, seed=11), "stat")
    delta = out - x
    masked = delta[:, :, :50].ravel()
    unmasked = delta[:, :, 50:]
    assert masked.size >= 10_000
    assert np.array_equal(unmasked, np.zeros_like(unmasked))
    assert abs(masked.mean()) <= 3 * sigma / np.sqrt(masked.size)
    assert abs(masked.std() - sigma) <= 0.02 * sigma


def test_corrupt_scaled_noise_recovers_sigma(rng):
    # With varying m, (x' - x)/m should be N(0, sigma^2) where m is large.
    sigma = 0.5
    x = np.zeros((1, 120, 120))
    m = rng.uniform(0.2, 1.0, (120, 120))
    out = corrupt(x, m, NoiseConfig(sigma_z=sigma, seed=2), "v")
    zhat = (out[0] / m).ravel()
    assert abs(zhat.std() - sigma) <= 0.02 * sigma


def test_corrupt_shape_and_range_checks():
    with pytest.raises(EvaluationError):
        corrupt(np.zeros((3, 4, 4)), np.zeros((5, 5)), NoiseConfig(), "x")
    with pytest.raises(EvaluationError):
        corrupt(np.zeros((3, 4, 4)), np.full((4, 4), 2.0), NoiseConfig(), "x")


def test_corruption_mask_polarity():
    attribution = np.zeros((4, 4), dtype=np.float32)
    attribution[0, 0] = 1.0
    m_spur = corruption_mask(attribution, 8, 8, "spurious_regions")
    m_core = corruption_mask(attribution, 8, 8, "core_regions")
    assert m_spur.max() == pytest.approx(1.0)
    assert np.allclose(m_spur + m_core, 1.0)
    assert m_spur[0, 0] == pytest.approx(1.0)  # attended corner noised
    assert m_core[0, 0] == pytest.approx(0.0)


# ------------------------------------------------------- corrupted bundles


def slices_for(bundle):
    weighted, _ = compute_vectors(bundle)
    rng = np.random.default_rng(0)
    emb = precomputed_embedding(rng.standard_normal((len(bundle.samples), 2)))
    return find_slices(emb, weighted, SliceConfig(override_k=5, seed=0))


def test_empty_selection_copies_bundle_bitwise(biased, tmp_path):
    root, bundle, _ = biased
    ss = slices_for(bundle)
    out = tmp_path / "copy"
    make_corrupted_bundle(
        read_bundle(root), np.array([], dtype=np.int64), NoiseConfig(seed=0), out
    )
    for rel in sorted(p.relative_to(root) for p in root.rglob("*.atsc")):
        assert filecmp.cmp(root / rel, out / rel, shallow=False), rel


def test_tau_zero_selects_everything(biased):
    _, bundle, _ = biased
    ss = slices_for(bundle)
    field = type("F", (), {})()
    field.per_slice = {s.id: 0.0 for s in ss.slices}
    selected, meta = select_samples(ss, field=field, tau=0.0)
    assert len(selected) == len(bundle.samples)
    assert meta["mode"] == "tau"


def test_only_selected_samples_differ(biased, tmp_path):
    root, bundle, _ = biased
    src = read_bundle(root)
    ss = slices_for(src)
    target_slice = ss.slices[0]
    selected, meta = select_samples(ss, slice_ids=[target_slice.id])
    out = tmp_path / "sel"
    make_corrupted_bundle(src, selected, NoiseConfig(seed=4), out, meta)
    back = read_bundle(out)
    changed = {
        i
        for i, (a, b) in enumerate(zip(src.samples, back.samples))
        if not np.array_equal(a.image, b.image)
    }
    assert changed == set(selected.tolist())
    # Features and masks are untouched either way.
    for a, b in zip(src.samples, back.samples):
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.attribution, b.attribution)
    prov = json.loads((out / "corruption.json").read_text())
    assert prov["selection"]["slice_ids"] == [target_slice.id]
    assert prov["noise"]["seed"] == 4
    assert prov["source_bundle_hash"]


def test_corrupted_bundle_bitwise_reproducible(biased, tmp_path):
    root, bundle, _ = biased
    src = read_bundle(root)
    ss = slices_for(src)
    selected, meta = select_samples(ss, slice_ids=[s.id for s in ss.slices[:2]])
    out1 = tmp_path / "r1"
    out2 = tmp_path / "r2"
    make_corrupted_bundle(src, selected, NoiseConfig(seed=9), out1, meta)
    make_corrupted_bundle(src, selected, NoiseConfig(seed=9), out2, meta)
    files1 = sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file())
    files2 = sorted(p.relative_to(out2) for p in out2.rglob("*") if p.is_file())
    assert files1 == files2
    for rel in files1:
        assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes(), rel


def test_missing_images_rejected(tmp_path):
    from attrslice import synth
    from attrslice.bundle import write_bundle

    bundle, _ = synth.biased_bundle(
        n_spurious=10, n_core=10, seed=0, with_images=False
    )
    root = write_bundle(bundle, tmp_path / "noimg")
    src = read_bundle(root)
    ss = slices_for(src)
    selected, meta = select_samples(ss, slice_ids=[ss.slices[0].id])
    with pytest.raises(MissingImages):
        make_corrupted_bundle(src, selected, NoiseConfig(), tmp_path / "out", meta)


# ------------------------------------------------------------- predictions


def test_accuracy_all_correct(tmp_path):
    path = tmp_path / "p.tsv"
    write_prediction_file(path, [(f"s{i}", 1, 0.9) for i in range(10)])
    labels = {f"s{i}": 1 for i in range(10)}
    assert accuracy_from_predictions(read_prediction_file(path), labels) == 1.0


def test_accuracy_half_correct(tmp_path):
    path = tmp_path / "p.tsv"
    rows = [(f"s{i}", i % 2, 0.5) for i in range(10)]
    write_prediction_file(path, rows)
    labels = {f"s{i}": 1 for i in range(10)}
    assert accuracy_from_predictions(read_prediction_file(path), labels) == 0.5


def test_accuracy_id_mismatch(tmp_path):
    path = tmp_path / "p.tsv"
    write_prediction_file(path, [("a", 0, 0.5)])
    with pytest.raises(PredictionFileError):
        accuracy_from_predictions(read_prediction_file(path), {"a": 0, "b": 1})


def test_prediction_file_rejects_garbage(tmp_path):
    path = tmp_path / "p.tsv"
    path.write_text("a\t1\n")
    with pytest.raises(PredictionFileError):
        read_prediction_file(path)


def test_table_clean_accuracy_passes_through(tmp_path):
    # 392329/400000 is exactly the reported clean accuracy 98.08225%.
    n, k = 400_000, 392_329
    lines = [f"s{i}\t{1 if i < k else 0}\t0.900000" for i in range(n)]
    path = tmp_path / "clean.tsv"
    path.write_text("\n".join(lines) + "\n")
    labels = {f"s{i}": 1 for i in range(n)}
    acc = accuracy_from_predictions(read_prediction_file(path), labels)
    assert acc == pytest.approx(0.9808225, abs=1e-12)


# -------------------------------------------------------------------- RCS


@pytest.mark.parametrize(
    "acc_c, acc_s, expected",
    [
        (0.9802185, 0.9692958, 0.216351),
        (0.9816278, 0.9601852, 0.368512),
        (0.8640534, 0.7981651, 0.195062),
        (0.8740617, 0.7789825, 0.274038),
    ],
)
def test_rcs_reference_values(acc_c, acc_s, expected):
    assert rcs(acc_c, acc_s) == pytest.approx(expected, abs=1e-4)


def test_rcs_trivial_cases():
    assert rcs(0.7, 0.7) == 0.0
    assert rcs(1.0, 0.0) == pytest.approx(1.0)
    assert rcs(1.0, 1.0) == 0.0  # degenerate midpoint
    assert rcs(0.0, 0.0) == 0.0


@given(
    st.floats(0, 1, allow_nan=False),
    st.floats(0, 1, allow_nan=False),
)
@settings(max_examples=200)
def test_rcs_antisymmetric_and_bounded(a, b):
    v = rcs(a, b)
    assert rcs(b, a) == pytest.approx(-v, abs=1e-12)
    assert -1.0 - 1e-12 <= v <= 1.0 + 1e-12


def test_rcs_rejects_out_of_range():
    with pytest.raises(EvaluationError):
        rcs(1.2, 0.5)


# ------------------------------------------------------------------ report


def make_file(tmp_path, name, accs, n=10_000):
    k = round(accs * n)
    rows = [(f"s{i}", 1 if i < k else 0, 0.8) for i in range(n)]
    path = tmp_path / name
    write_prediction_file(path, rows)
    return path


def test_report_reference_rows(tmp_path):
    # Accuracies quantized on n=400k reproduce the reported RCS to 1e-4.
    n = 400_000
    labels = {f"s{i}": 1 for i in range(n)}

    def f(name, acc):
        k = round(acc * n)
        path = tmp_path / name
        path.write_text(
            "\n".join(
                f"s{i}\t{1 if i < k else 0}\t0.9" for i in range(n)
            )
            + "\n"
        )
        return path

    clean = f("clean.tsv", 0.9802688)
    core = f("core.tsv", 0.9802185)
    spur = f("spur.tsv", 0.9692958)
    rep = build_report(clean, core, spur, labels)
    assert rep.rcs == pytest.approx(0.216351, abs=1e-4)

    core2 = f("core2.tsv", 0.8640534)
    spur2 = f("spur2.tsv", 0.7981651)
    rep2 = build_report(clean, core2, spur2, labels)
    assert rep2.rcs == pytest.approx(0.195062, abs=1e-4)


def test_report_identical_files_zero_rcs(tmp_path):
    labels = {f"s{i}": 1 for i in range(100)}
    path = make_file(tmp_path, "same.tsv", 0.83, n=100)
    rep = build_report(path, path, path, labels)
    assert rep.clean_acc == rep.core_acc == rep.spurious_acc
    assert rep.rcs == 0.0
    assert rep.provenance["clean"]["sha256"] == rep.provenance["core"]["sha256"]
