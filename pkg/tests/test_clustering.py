import itertools

import numpy as np
import pytest

from hbow import (
    ClusterConfig,
    ConfigError,
    InsufficientPointsError,
    brb_kmeans,
    hamming,
    kmajority,
    kmeanspp_seed,
    lloyd_real,
    majority_centroid,
    realize_matrix,
)


def _hamming_objective(codes, centroids, assignments):
    # independent recompute of the reported objective
    return sum(hamming(codes[i], centroids[assignments[i]]) for i in range(len(codes)))


def _two_bundles(n_per=8):
    # two exact-duplicate piles 16 bits apart out of 32
    x = np.zeros(4, dtype=np.uint8)
    y = np.array([0xF0, 0xF0, 0xF0, 0xF0], dtype=np.uint8)
    codes = np.vstack([np.tile(x, (n_per, 1)), np.tile(y, (n_per, 1))])
    return codes, x, y


def test_seeding_selects_every_distinct_point_when_k_equals_n():
    rng_data = np.random.default_rng(0)
    pts = rng_data.integers(0, 256, size=(6, 4), dtype=np.uint8)
    while np.unique(pts, axis=0).shape[0] != 6:
        pts = rng_data.integers(0, 256, size=(6, 4), dtype=np.uint8)
    for seed in range(100):
        cents = kmeanspp_seed(pts, 6, "hamming", np.random.default_rng(seed))
        assert np.unique(cents, axis=0).shape[0] == 6


def test_seeding_weights_by_distance():
    # with two duplicate piles, all residual mass sits on the other pile, so
    # the second seed always comes from it
    codes, x, y = _two_bundles()
    for seed in range(100):
        cents = kmeanspp_seed(codes, 2, "hamming", np.random.default_rng(seed))
        got = {bytes(c) for c in cents}
        assert got == {bytes(x), bytes(y)}


def test_seeding_zero_mass_fallback():
    pts = np.tile(np.array([0xAA, 0xBB], dtype=np.uint8), (3, 1))
    cents = kmeanspp_seed(pts, 3, "hamming", np.random.default_rng(5))
    assert cents.shape == (3, 2)
    assert np.all(cents == pts[0])


def test_seeding_errors():
    pts = np.zeros((3, 2), dtype=np.uint8)
    with pytest.raises(InsufficientPointsError):
        kmeanspp_seed(pts, 4, "hamming", np.random.default_rng(0))
    with pytest.raises(ValueError):
        kmeanspp_seed(pts, 2, "chebyshev", np.random.default_rng(0))


def test_cluster_config_validation():
    with pytest.raises(ConfigError):
        ClusterConfig(k=0)
    with pytest.raises(ConfigError):
        ClusterConfig(k=2, max_iters=0)
    with pytest.raises(ConfigError):
        ClusterConfig(k=2, seed=-1)
    with pytest.raises(ConfigError):
        ClusterConfig(k=2, min_relative_improvement=1.5)


def test_kmajority_recovers_separated_bundles():
    codes, x, y = _two_bundles()
    for seed in range(10):
        res = kmajority(codes, ClusterConfig(k=2, seed=seed))
        assert res.objective == 0
        assert {bytes(c) for c in res.centroids} == {bytes(x), bytes(y)}
        # both bundles intact: one cluster per pile
        assert len(set(res.assignments[:8])) == 1
        assert len(set(res.assignments[8:])) == 1


def test_kmajority_k1_is_majority_centroid():
    rng = np.random.default_rng(3)
    codes = rng.integers(0, 256, size=(31, 4), dtype=np.uint8)
    res = kmajority(codes, ClusterConfig(k=1))
    assert np.array_equal(res.centroids[0], majority_centroid(codes))
    assert res.objective == _hamming_objective(codes, res.centroids, res.assignments)


def test_kmajority_objective_vs_exhaustive_partitions():
    # D=8, n=6, k=2: enumerate every 2-partition, build majority centroids for
    # each side, and take the best objective. The local search can't beat it.
    rng = np.random.default_rng(4)
    for trial in range(30):
        codes = rng.integers(0, 256, size=(6, 1), dtype=np.uint8)
        best = None
        for mask in range(1, 63):  # non-empty proper subsets, complement-symmetric
            left = [i for i in range(6) if mask >> i & 1]
            right = [i for i in range(6) if not mask >> i & 1]
            cents = np.vstack([majority_centroid(codes[left]), majority_centroid(codes[right])])
            assigns = np.array([0 if i in left else 1 for i in range(6)])
            obj = _hamming_objective(codes, cents, assigns)
            best = obj if best is None else min(best, obj)
        res = kmajority(codes, ClusterConfig(k=2, seed=trial))
        assert res.objective >= best
        assert res.objective == _hamming_objective(codes, res.centroids, res.assignments)


def test_kmajority_trace_monotone_and_exact():
    rng = np.random.default_rng(5)
    for trial in range(10):
        codes = rng.integers(0, 256, size=(120, 8), dtype=np.uint8)
        trace = []
        res = kmajority(codes, ClusterConfig(k=6, seed=trial), trace=trace)
        assert len(trace) == res.iterations_run + 1
        assert all(a >= b for a, b in zip(trace, trace[1:]))
        assert trace[-1] == res.objective


def test_no_empty_clusters_even_with_duplicates():
    codes = np.tile(np.array([0x12, 0x34], dtype=np.uint8), (5, 1))
    res = kmajority(codes, ClusterConfig(k=3, seed=0))
    assert np.bincount(res.assignments, minlength=3).min() >= 1
    assert res.objective == 0


def test_kmajority_objective_always_matches_recompute():
    rng = np.random.default_rng(6)
    for trial in range(20):
        n = int(rng.integers(5, 60))
        k = int(rng.integers(1, min(n, 8) + 1))
        codes = rng.integers(0, 256, size=(n, 3), dtype=np.uint8)
        res = kmajority(codes, ClusterConfig(k=k, seed=trial))
        assert np.bincount(res.assignments, minlength=k).min() >= 1
        assert res.objective == _hamming_objective(codes, res.centroids, res.assignments)


def test_kmajority_deterministic_for_seed():
    rng = np.random.default_rng(7)
    codes = rng.integers(0, 256, size=(80, 4), dtype=np.uint8)
    a = kmajority(codes, ClusterConfig(k=5, seed=9))
    b = kmajority(codes, ClusterConfig(k=5, seed=9))
    assert np.array_equal(a.centroids, b.centroids)
    assert np.array_equal(a.assignments, b.assignments)
    assert a.objective == b.objective and a.iterations_run == b.iterations_run


def test_lloyd_trace_monotone():
    rng = np.random.default_rng(8)
    for trial in range(10):
        x = realize_matrix(rng.integers(0, 256, size=(150, 8), dtype=np.uint8))
        trace = []
        res = lloyd_real(x, ClusterConfig(k=5, seed=trial), trace=trace)
        assert len(trace) == res.iterations_run + 1
        assert all(a >= b for a, b in zip(trace, trace[1:]))
        assert res.objective == trace[-1] >= 0.0


def test_lloyd_objective_matches_recompute():
    rng = np.random.default_rng(9)
    x = rng.random((70, 12))
    res = lloyd_real(x, ClusterConfig(k=4, seed=1))
    manual = sum(
        float(((x[i] - res.centroids[res.assignments[i]]) ** 2).sum()) for i in range(len(x))
    )
    assert res.objective == pytest.approx(manual, rel=1e-9)
    assert np.bincount(res.assignments, minlength=4).min() >= 1


def test_min_relative_improvement_stops_early():
    rng = np.random.default_rng(10)
    codes = rng.integers(0, 256, size=(300, 8), dtype=np.uint8)
    full = kmajority(codes, ClusterConfig(k=6, seed=2))
    lax = kmajority(codes, ClusterConfig(k=6, seed=2, min_relative_improvement=0.2))
    assert lax.iterations_run <= full.iterations_run
    assert lax.objective >= full.objective


def test_brb_k1_is_majority_centroid():
    rng = np.random.default_rng(11)
    codes = rng.integers(0, 256, size=(25, 4), dtype=np.uint8)
    res = brb_kmeans(codes, ClusterConfig(k=1))
    assert np.array_equal(res.centroids[0], majority_centroid(codes))


def test_brb_centroids_are_binary_and_objective_exact():
    rng = np.random.default_rng(12)
    codes = rng.integers(0, 256, size=(90, 6), dtype=np.uint8)
    res = brb_kmeans(codes, ClusterConfig(k=4, seed=3))
    assert res.centroids.dtype == np.uint8
    assert res.centroids.shape == (4, 6)
    assert np.bincount(res.assignments, minlength=4).min() >= 1
    assert res.objective == _hamming_objective(codes, res.centroids, res.assignments)


def test_brb_recovers_separated_bundles():
    codes, x, y = _two_bundles()
    res = brb_kmeans(codes, ClusterConfig(k=2, seed=0))
    assert res.objective == 0
    assert {bytes(c) for c in res.centroids} == {bytes(x), bytes(y)}


def test_brb_beats_or_ties_kmajority_on_average():
    # aggregate direction-of-effect check; individual corpora may go either way
    rng = np.random.default_rng(13)
    brb_total = 0.0
    kmaj_total = 0.0
    per_corpus = []
    for corpus_id in range(20):
        codes = rng.integers(0, 256, size=(400, 4), dtype=np.uint8)
        b_sum = k_sum = 0.0
        for seed in range(5):
            cfg = ClusterConfig(k=8, seed=seed)
            b_sum += brb_kmeans(codes, cfg).objective
            k_sum += kmajority(codes, cfg).objective
        per_corpus.append((corpus_id, b_sum / 5, k_sum / 5))
        brb_total += b_sum
        kmaj_total += k_sum
    for corpus_id, b_mean, k_mean in per_corpus:
        print(f"corpus {corpus_id}: brb {b_mean:.1f} kmajority {k_mean:.1f}")
    assert brb_total <= kmaj_total


def test_insufficient_points_propagates():
    codes = np.zeros((2, 2), dtype=np.uint8)
    with pytest.raises(InsufficientPointsError):
        kmajority(codes, ClusterConfig(k=3))
    with pytest.raises(ValueError):
        kmajority(np.empty((0, 2), dtype=np.uint8), ClusterConfig(k=1))
