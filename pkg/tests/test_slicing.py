import numpy as np
import pytest
from shapely.geometry import Polygon

from attrslice import synth
from attrslice.embedding import precomputed_embedding
from attrslice.pipeline import compute_vectors
from attrslice.slicing import (
    SliceConfig,
    SlicingError,
    attach_hulls,
    find_slices,
    kmeans_2d,
    slice_metrics,
    subdivide_confusion,
)


def blob_coords(seed=0, n=90):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    pts = np.concatenate(
        [c + 0.3 * rng.standard_normal((n // 3, 2)) for c in centers]
    )
    labels = np.repeat([0, 1, 2], n // 3)
    return pts, labels


# -------------------------------------------------------------------- kmeans


def test_kmeans_recovers_blobs():
    coords, truth = blob_coords()
    assignment, _ = kmeans_2d(coords, 3, seed=4)
    # Same-blob points share a cluster and blobs get distinct clusters.
    mapping = {}
    for blob in range(3):
        ids = set(assignment[truth == blob].tolist())
        assert len(ids) == 1
        mapping[blob] = ids.pop()
    assert len(set(mapping.values())) == 3


def test_kmeans_k_equals_n():
    rng = np.random.default_rng(2)
    coords = rng.standard_normal((12, 2))
    assignment, centroids = kmeans_2d(coords, 12, seed=0)
    assert sorted(assignment.tolist()) == list(range(12))
    # Every point is its own centroid.
    assert np.allclose(centroids[assignment], coords)


def test_kmeans_rejects_k_above_n():
    with pytest.raises(SlicingError):
        kmeans_2d(np.zeros((3, 2)), 4)


def test_kmeans_duplicate_points_leave_empty_cluster():
    coords = np.zeros((6, 2))
    assignment, _ = kmeans_2d(coords, 2, seed=0)
    assert set(assignment.tolist()) == {0}


def test_kmeans_voronoi_fixed_point(rng):
    coords = rng.standard_normal((200, 2))
    assignment, centroids = kmeans_2d(coords, 9, seed=7)
    d2 = np.sum((coords[:, None] - centroids[None]) ** 2, axis=-1)
    assert np.array_equal(np.argmin(d2, axis=1), assignment)


# --------------------------------------------------------------- find_slices


def test_find_slices_threshold_zero_returns_initial_k(two_mode):
    bundle, _ = two_mode
    weighted, _ = compute_vectors(bundle)
    emb = precomputed_embedding(bundle.embedding)
    cfg = SliceConfig(initial_k=1, coherence_threshold=0.0, k_step=1, seed=0)
    ss = find_slices(emb, weighted, cfg)
    assert ss.k_trace == [1]
    assert ss.converged


def test_find_slices_overclusters_two_modes(two_mode):
    bundle, _ = two_mode
    weighted, _ = compute_vectors(bundle)
    emb = precomputed_embedding(bundle.embedding)
    cfg = SliceConfig(
        initial_k=1, coherence_threshold=0.8, k_step=1, k_max=20, seed=0
    )
    ss = find_slices(emb, weighted, cfg)
    assert ss.converged
    assert all(s.coherence >= 0.8 for s in ss.slices)
    assert ss.k_trace[-1] > ss.k_trace[0]
    assert len(ss.k_trace) >= 2


def test_find_slices_merged_modes_are_incoherent(two_mode):
    bundle, _ = two_mode
    weighted, _ = compute_vectors(bundle)
    emb = precomputed_embedding(bundle.embedding)
    cfg = SliceConfig(initial_k=1, coherence_threshold=0.8, override_k=1, seed=0)
    ss = find_slices(emb, weighted, cfg)
    assert len(ss.slices) == 1
    assert ss.slices[0].coherence < 0.8
    assert not ss.converged


def test_find_slices_override_k(two_mode):
    bundle, _ = two_mode
    weighted, _ = compute_vectors(bundle)
    emb = precomputed_embedding(bundle.embedding)
    cfg = SliceConfig(override_k=10, seed=0)
    ss = find_slices(emb, weighted, cfg)
    assert len(ss.slices) == 10
    assert ss.k_trace == [10]


def test_find_slices_partition(two_mode):
    bundle, _ = two_mode
    weighted, _ = compute_vectors(bundle)
    emb = precomputed_embedding(bundle.embedding)
    ss = find_slices(emb, weighted, SliceConfig(override_k=7, seed=1))
    seen = np.concatenate([s.member_ids for s in ss.slices])
    assert sorted(seen.tolist()) == list(range(len(bundle.samples)))


def test_find_slices_reports_nonconvergence():
    rng = np.random.default_rng(0)
    # Random weighted vectors can't become coherent: k_max stops the loop.
    weighted = rng.standard_normal((40, 8))
    emb = precomputed_embedding(rng.standard_normal((40, 2)))
    cfg = SliceConfig(
        initial_k=2, coherence_threshold=0.999, k_step=2, k_max=6, seed=0
    )
    ss = find_slices(emb, weighted, cfg)
    assert not ss.converged
    assert ss.incoherent_ids
    assert ss.k_trace == [2, 4, 6]


# --------------------------------------------------------------------- hulls


def test_hulls_on_separated_blobs():
    coords, _ = blob_coords()
    rng = np.random.default_rng(0)
    weighted = rng.standard_normal((len(coords), 4))
    emb = precomputed_embedding(coords)
    ss = find_slices(emb, weighted, SliceConfig(override_k=3, seed=0))
    attach_hulls(ss, coords)
    for s in ss.slices:
        assert not s.degenerate
        hull_set = {tuple(p) for p in np.round(s.hull, 9)}
        member_set = {tuple(p) for p in np.round(coords[s.member_ids], 9)}
        assert hull_set <= member_set


def test_hull_interiors_disjoint_after_kmeans(rng):
    coords = rng.standard_normal((300, 2)) * 3
    weighted = rng.standard_normal((300, 4))
    emb = precomputed_embedding(coords)
    ss = find_slices(emb, weighted, SliceConfig(override_k=12, seed=3))
    attach_hulls(ss, coords)
    polys = [Polygon(s.hull) for s in ss.slices if not s.degenerate]
    for i in range(len(polys)):
        for j in range(i + 1, len(polys)):
            assert polys[i].intersection(polys[j]).area <= 1e-9


def test_degenerate_slice_gets_triangle():
    coords = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 6.0], [6.0, 5.0]])
    weighted = np.ones((5, 3))
    emb = precomputed_embedding(coords)
    ss = find_slices(emb, weighted, SliceConfig(override_k=2, seed=0))
    attach_hulls(ss, coords)
    flags = {s.id: s.degenerate for s in ss.slices}
    sizes = {s.id: s.size for s in ss.slices}
    small = min(sizes, key=sizes.get)
    assert flags[small]
    tri = ss.by_id(small).hull
    assert tri.shape == (3, 2)


# ----------------------------------------------------------------- confusion


def make_slice(members):
    from attrslice.slicing import Slice

    return Slice(
        id=0,
        member_ids=np.array(members),
        centroid_2d=np.zeros(2),
        centroid_wv=np.zeros(3),
        coherence=1.0,
    )


def test_confusion_all_correct_positive():
    s = make_slice([0, 1, 2])
    labels = np.array([1, 1, 1])
    preds = np.array([1, 1, 1])
    cells = subdivide_confusion(s, labels, preds, positive_class=1, n_classes=2)
    assert cells["TP"] == [0, 1, 2]
    assert cells["FN"] == cells["FP"] == cells["TN"] == []


def test_confusion_false_negative():
    s = make_slice([0])
    cells = subdivide_confusion(
        s, np.array([1]), np.array([0]), positive_class=1, n_classes=2
    )
    assert cells["FN"] == [0]


def test_confusion_multiclass_falls_back():
    s = make_slice([0, 1, 2])
    labels = np.array([0, 1, 2])
    preds = np.array([0, 2, 2])
    cells = subdivide_confusion(s, labels, preds, positive_class=0, n_classes=3)
    assert set(cells) == {"correct", "incorrect"}
    assert cells["correct"] == [0, 2]
    assert cells["incorrect"] == [1]


def test_confusion_cells_partition_members(rng):
    members = list(range(20))
    s = make_slice(members)
    labels = rng.integers(0, 2, 20)
    preds = rng.integers(0, 2, 20)
    cells = subdivide_confusion(s, labels, preds, positive_class=1, n_classes=2)
    joined = sorted(i for cell in cells.values() for i in cell)
    assert joined == members


# ------------------------------------------------------------------- metrics


def test_metrics_all_correct():
    s = make_slice([0, 1])
    acc, conf = slice_metrics(
        s, np.array([1, 0]), np.array([1, 0]), np.array([0.9, 0.8])
    )
    assert acc == 1.0
    assert conf == pytest.approx(0.85)


def test_metrics_hand_values():
    s = make_slice([0, 1, 2])
    acc, conf = slice_metrics(
        s,
        np.array([1, 1, 0]),
        np.array([1, 0, 0]),
        np.array([0.5, 0.7, 0.9]),
    )
    assert acc == pytest.approx(2 / 3, abs=1e-4)
    assert conf == pytest.approx(0.7)
