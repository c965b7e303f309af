import numpy as np
import pytest

from visualwords.clustering import (
    Codebook,
    build_codebook,
    kmeanspp_seed,
    lloyd,
    load_codebook,
    save_codebook,
    squared_distances,
)
from visualwords.errors import ConfigError, DataError, NumericalError


def blobs(rng, n_blobs=4, per_blob=30, dim=16, spread=0.05, separation=10.0):
    centers = rng.normal(0.0, separation, size=(n_blobs, dim))
    pts = np.concatenate(
        [c + rng.normal(0.0, spread, size=(per_blob, dim)) for c in centers]
    )
    return pts, centers


def test_squared_distances_matches_direct():
    rng = np.random.default_rng(0)
    pts = rng.random((40, 8))
    ctr = rng.random((5, 8))
    direct = ((pts[:, None, :] - ctr[None, :, :]) ** 2).sum(axis=2)
    np.testing.assert_allclose(squared_distances(pts, ctr), direct, atol=1e-10)


def test_seed_k1_returns_an_input_point():
    rng = np.random.default_rng(1)
    pts = rng.random((10, 4))
    out = kmeanspp_seed(pts, 1, np.random.default_rng(2))
    assert out.shape == (1, 4)
    assert any(np.array_equal(out[0], p) for p in pts)


def test_seed_k_equals_n_selects_every_point_once():
    rng = np.random.default_rng(3)
    pts = rng.random((8, 4))
    out = kmeanspp_seed(pts, 8, np.random.default_rng(4))
    # selection without replacement: sorting rows aligns the two sets
    a = out[np.lexsort(out.T)]
    b = pts[np.lexsort(pts.T)]
    np.testing.assert_array_equal(a, b)


def test_seed_identical_points_degenerate():
    pts = np.ones((6, 4))
    with pytest.raises(NumericalError):
        kmeanspp_seed(pts, 2, np.random.default_rng(0))


def test_seed_requires_enough_points():
    with pytest.raises(DataError):
        kmeanspp_seed(np.zeros((3, 4)), 5, np.random.default_rng(0))


def test_seed_two_blobs_hit_both_in_most_trials():
    rng = np.random.default_rng(5)
    pts = np.concatenate(
        [rng.normal(0.0, 0.1, (50, 4)), rng.normal(50.0, 0.1, (50, 4))]
    )
    hits = 0
    for t in range(200):
        out = kmeanspp_seed(pts, 2, np.random.default_rng([6, t]))
        sides = {out[0, 0] > 25.0, out[1, 0] > 25.0}
        hits += len(sides) == 2
    assert hits >= 198


def test_lloyd_two_pairs_on_a_line():
    pts = np.array([[0.0], [1.0], [9.0], [10.0]])
    cb = lloyd(pts, np.array([[0.0], [9.0]]))
    assert sorted(cb.centroids.ravel().tolist()) == [0.5, 9.5]
    assert cb.inertia == 1.0


def test_lloyd_converges_instantly_when_init_is_points():
    rng = np.random.default_rng(7)
    pts = rng.random((5, 3))
    cb = lloyd(pts, pts)
    assert cb.inertia == 0.0
    np.testing.assert_array_equal(cb.centroids, pts)


def test_lloyd_inertia_history_non_increasing():
    rng = np.random.default_rng(8)
    for trial in range(20):
        pts = rng.random((60, 6))
        init = pts[rng.choice(60, 5, replace=False)]
        cb = lloyd(pts, init)
        h = np.array(cb.history)
        assert (np.diff(h) <= 1e-9).all()


def test_lloyd_repairs_empty_clusters():
    # second init row is so remote that nothing is assigned to it
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [10.0, 10.0]])
    init = np.array([[0.5, 0.5], [1000.0, 1000.0]])
    cb = lloyd(pts, init)
    d = squared_distances(pts, cb.centroids)
    counts = np.bincount(d.argmin(axis=1), minlength=2)
    assert (counts > 0).all()


def test_codebook_recovers_blob_centers():
    rng = np.random.default_rng(9)
    pts, centers = blobs(rng)
    cb = build_codebook(pts, k=4, seed=0, method="kmeans++")
    # every true center has a nearby centroid
    d = squared_distances(centers, cb.centroids)
    assert (d.min(axis=1) < 1.0).all()


def test_codebook_deterministic_per_seed_and_method():
    rng = np.random.default_rng(10)
    pts, _ = blobs(rng)
    a = build_codebook(pts, k=4, seed=3, method="kmeans++")
    b = build_codebook(pts, k=4, seed=3, method="kmeans++")
    assert a == b
    c = build_codebook(pts, k=4, seed=4, method="kmeans")
    assert c.method == "kmeans"


def test_codebook_seeding_quality_beats_uniform_on_median():
    rng = np.random.default_rng(11)
    pts, _ = blobs(rng, n_blobs=6, per_blob=40, separation=20.0)
    pp = [build_codebook(pts, k=6, seed=s, method="kmeans++").inertia for s in range(10)]
    un = [build_codebook(pts, k=6, seed=s, method="kmeans").inertia for s in range(10)]
    assert np.median(pp) <= np.median(un)


def test_codebook_subsamples_above_cap():
    rng = np.random.default_rng(12)
    pts = rng.random((500, 4))
    cb = build_codebook(pts, k=3, seed=0, sample_cap=100)
    assert cb.k == 3  # still a full codebook from the subsample


def test_codebook_rejects_bad_inputs():
    with pytest.raises(DataError):
        build_codebook(np.zeros((3, 4)), k=8)
    with pytest.raises(ConfigError):
        build_codebook(np.zeros((10, 4)), k=2, method="spectral")
    with pytest.raises(NumericalError):
        build_codebook(np.full((10, 4), np.nan), k=2)


def test_codebook_type_invariants():
    with pytest.raises(ValueError):
        Codebook(centroids=np.zeros((1, 4)), inertia=0.0, method="kmeans")
    with pytest.raises(ValueError):
        Codebook(centroids=np.full((3, 4), np.inf), inertia=0.0, method="kmeans")
    with pytest.raises(ValueError):
        Codebook(centroids=np.zeros((3, 4)), inertia=-1.0, method="kmeans")


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(13)
    pts, _ = blobs(rng)
    cb = build_codebook(pts, k=4, seed=7)
    path = tmp_path / "book.vvcb"
    save_codebook(cb, path)
    back = load_codebook(path)
    assert back.k == cb.k and back.dim == cb.dim
    assert back.seed == 7 and back.method == "kmeans++"
    assert back.inertia == cb.inertia
    # centroids survive at 32-bit precision
    np.testing.assert_allclose(back.centroids, cb.centroids, atol=1e-6)


def test_load_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.vvcb"
    bad.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(DataError):
        load_codebook(bad)
    with pytest.raises(DataError):
        load_codebook(tmp_path / "missing.vvcb")
