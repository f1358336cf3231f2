import copy
import math

import numpy as np
import pytest

from hbow import (
    ClusterConfig,
    ConfigError,
    CorpusConsistencyError,
    DescriptorSet,
    InsufficientPointsError,
    InternalInvariantError,
    Strategy,
    TrainConfig,
    binarize,
    compute_idf,
    lookup_word,
    lookup_words,
    majority_centroid,
    quantization_report,
    real_mean,
    realize_matrix,
    synth_clustered,
    train,
    train_result,
    validate_structure,
)

ALL_STRATEGIES = (Strategy.KMAJORITY, Strategy.LOCAL_BRB, Strategy.GLOBAL_HBRB)


def _cfg(k, L, strategy, seed=0, max_iters=50):
    return TrainConfig(k=k, L=L, strategy=strategy,
                       cluster=ClusterConfig(k=k, max_iters=max_iters, seed=seed),
                       seed=seed)


def _bundle_corpus(vals, n_per=8, group_ends=None):
    rows = np.array([v for v in vals for _ in range(n_per)], dtype=np.uint8)
    return DescriptorSet(codes=rows, group_ends=group_ends)


# four 64-bit piles, pairwise 32 apart (one pair 64): flat separable geometry
FLAT_VALS = (
    [0x00] * 8,
    [0xFF] * 4 + [0x00] * 4,
    [0xF0] * 8,
    [0x0F] * 8,
)

# four 64-bit piles with two tight pairs 16 apart, pairs 48+ from each other:
# the natural geometry for a k=2, L=2 tree
HIER_VALS = (
    [0x00] * 8,
    [0xFF, 0xFF] + [0x00] * 6,
    [0x00, 0x00] + [0xFF] * 6,
    [0xFF] * 8,
)


def _random_corpus(n, octets, seed):
    rng = np.random.default_rng(seed)
    return DescriptorSet(codes=rng.integers(0, 256, size=(n, octets), dtype=np.uint8))


# ---------------------------------------------------------------- structure


def test_flat_separable_bundles_recovered_by_every_strategy():
    ds = _bundle_corpus(FLAT_VALS)
    want = {bytes(bytearray(v)) for v in FLAT_VALS}
    for strategy in ALL_STRATEGIES:
        for seed in range(4):
            vocab = train(ds, _cfg(4, 1, strategy, seed=seed))
            leaves = vocab.leaf_nodes()
            assert len(leaves) == 4
            assert {bytes(n.centroid) for n in leaves} == want
            assert vocab.word_count == 4


def test_hierarchical_separable_bundles_recovered_by_every_strategy():
    ds = _bundle_corpus(HIER_VALS)
    want = {bytes(bytearray(v)) for v in HIER_VALS}
    for strategy in ALL_STRATEGIES:
        for seed in range(4):
            vocab = train(ds, _cfg(2, 2, strategy, seed=seed))
            assert {bytes(n.centroid) for n in vocab.leaf_nodes()} == want
            assert vocab.word_count == 4


def test_leaf_purity_on_separable_bundles():
    # every bundle value quantizes to its own word, for every strategy
    ds = _bundle_corpus(HIER_VALS)
    for strategy in ALL_STRATEGIES:
        vocab = train(ds, _cfg(2, 2, strategy, seed=1))
        words = {lookup_word(vocab, np.array(v, dtype=np.uint8))[0] for v in HIER_VALS}
        assert words == set(range(4))


def test_tree_shape_and_metadata():
    ds = _random_corpus(400, 8, seed=9)
    for strategy in ALL_STRATEGIES:
        vocab = train(ds, _cfg(3, 2, strategy, seed=2))
        assert vocab.k == 3 and vocab.L == 2
        assert vocab.strategy is strategy
        assert vocab.descriptor_bits == 64
        assert vocab.root.node_id == 0 and vocab.root.parent_id == -1
        assert not vocab.root.is_leaf
        for node in vocab.nodes:
            for c in node.children:
                assert vocab.nodes[c].parent_id == node.node_id
        assert vocab.word_count == len(vocab.leaf_nodes())
        validate_structure(vocab)


def test_word_ids_follow_depth_first_leaf_order():
    ds = _random_corpus(500, 8, seed=4)
    for strategy in ALL_STRATEGIES:
        vocab = train(ds, _cfg(3, 3, strategy, seed=0))

        order = []

        def walk(nid):
            node = vocab.nodes[nid]
            if node.is_leaf:
                order.append(node.word_id)
            for c in node.children:
                walk(c)

        walk(0)
        assert order == list(range(vocab.word_count))


# ---------------------------------------------------------------- small-node rules


def test_single_descriptor_corpus():
    code = np.array([0xAB, 0xCD, 0x12, 0x34], dtype=np.uint8)
    ds = DescriptorSet(codes=code[None, :])
    for strategy in ALL_STRATEGIES:
        vocab = train(ds, _cfg(5, 3, strategy))
        assert vocab.word_count == 1
        assert len(vocab.root.children) == 1
        leaf = vocab.leaf_nodes()[0]
        assert bytes(leaf.centroid) == bytes(code)
        # any probe lands on the only word
        probe = np.array([0x00, 0x00, 0x00, 0x00], dtype=np.uint8)
        assert lookup_word(vocab, probe)[0] == 0


def test_identical_corpus_collapses_to_one_leaf():
    code = np.array([0x5A] * 8, dtype=np.uint8)
    ds = DescriptorSet(codes=np.tile(code, (100, 1)))
    for strategy in ALL_STRATEGIES:
        vocab = train(ds, _cfg(10, 4, strategy))
        assert vocab.word_count == 1
        assert bytes(vocab.leaf_nodes()[0].centroid) == bytes(code)


def test_fanout_clamps_to_distinct_count():
    vals = ([0x00] * 4, [0xFF] * 4, [0x0F] * 4)
    ds = _bundle_corpus(vals, n_per=10)
    for strategy in ALL_STRATEGIES:
        vocab = train(ds, _cfg(10, 2, strategy, seed=3))
        assert len(vocab.root.children) == 3
        assert vocab.word_count == 3
        assert {bytes(n.centroid) for n in vocab.leaf_nodes()} == \
            {bytes(bytearray(v)) for v in vals}


def test_depth_cap_limits_tree():
    ds = _bundle_corpus(HIER_VALS)
    for strategy in ALL_STRATEGIES:
        vocab = train(ds, _cfg(2, 1, strategy, seed=0))
        assert vocab.word_count == 2
        for leaf in vocab.leaf_nodes():
            assert vocab.nodes[leaf.parent_id].node_id == 0


# ---------------------------------------------------------------- descent


def _descend_oracle(vocab, code):
    # independent greedy walk: unpack to bit arrays, count mismatches, break
    # ties toward the earliest child in stored order
    code_bits = np.unpackbits(np.asarray(code, dtype=np.uint8))
    nid = 0
    node = vocab.nodes[0]
    while node.children:
        best_id, best_d = -1, None
        for c in node.children:
            cand = np.unpackbits(vocab.nodes[c].centroid)
            d = int(np.sum(cand != code_bits))
            if best_d is None or d < best_d:
                best_id, best_d = c, d
        nid = best_id
        node = vocab.nodes[nid]
    return node.word_id, nid


def test_lookup_matches_independent_descent_oracle():
    ds = _random_corpus(600, 8, seed=11)
    probes = np.random.default_rng(77).integers(0, 256, size=(300, 8), dtype=np.uint8)
    for strategy in ALL_STRATEGIES:
        vocab = train(ds, _cfg(3, 3, strategy, seed=5))
        batch_words, batch_leaves = lookup_words(vocab, probes)
        for i, probe in enumerate(probes):
            want_word, want_leaf = _descend_oracle(vocab, probe)
            got_word, _, got_leaf = lookup_word(vocab, probe)
            assert got_word == want_word and got_leaf == want_leaf
            assert batch_words[i] == want_word and batch_leaves[i] == want_leaf


def test_lookup_of_leaf_centroids_on_separable_tree():
    ds = _bundle_corpus(HIER_VALS)
    vocab = train(ds, _cfg(2, 2, Strategy.GLOBAL_HBRB, seed=0))
    for leaf in vocab.leaf_nodes():
        word, _, leaf_id = lookup_word(vocab, leaf.centroid)
        assert word == leaf.word_id and leaf_id == leaf.node_id


def test_lookup_width_mismatch_raises():
    ds = _random_corpus(100, 8, seed=0)
    vocab = train(ds, _cfg(2, 1, Strategy.KMAJORITY))
    bad = np.zeros(16, dtype=np.uint8)
    with pytest.raises(CorpusConsistencyError):
        lookup_word(vocab, bad)
    with pytest.raises(CorpusConsistencyError):
        lookup_words(vocab, bad[None, :])


# ---------------------------------------------------------------- leaf contract


def test_global_leaf_centroids_are_member_majorities():
    ds = synth_clustered(6, 200, 0.06, bits=128, seed=3)
    result = train_result(ds, _cfg(3, 3, Strategy.GLOBAL_HBRB, seed=7))
    vocab = result.vocabulary
    leaf_of_word = {n.word_id: n for n in vocab.leaf_nodes()}
    assert set(leaf_of_word) == set(range(vocab.word_count))
    for w, leaf in leaf_of_word.items():
        members = ds.codes[result.member_word_ids == w]
        assert len(members) > 0
        want = majority_centroid(members)
        assert bytes(leaf.centroid) == bytes(want)
        # same thing phrased through the real domain
        assert bytes(binarize(real_mean(realize_matrix(members)))) == bytes(want)


def test_member_word_ids_cover_all_words():
    ds = _random_corpus(800, 8, seed=21)
    for strategy in ALL_STRATEGIES:
        result = train_result(ds, _cfg(3, 2, strategy, seed=1))
        ids = result.member_word_ids
        assert ids.shape == (len(ds),)
        assert set(np.unique(ids)) == set(range(result.vocabulary.word_count))
        assert result.seconds >= 0.0


# ---------------------------------------------------------------- idf weighting


def test_idf_shared_word_gets_zero_weight():
    # bundle A sits in all three groups, B/C/D in exactly one each
    a, b, c, d = (np.array(v, dtype=np.uint8) for v in HIER_VALS)
    groups = [
        np.vstack([np.tile(a, (4, 1)), np.tile(b, (4, 1))]),
        np.vstack([np.tile(a, (4, 1)), np.tile(c, (4, 1))]),
        np.vstack([np.tile(a, (4, 1)), np.tile(d, (4, 1))]),
    ]
    ds = DescriptorSet.from_groups(groups)
    vocab = train(ds, _cfg(2, 2, Strategy.KMAJORITY, seed=0))
    assert vocab.word_count == 4
    weight_of = {bytes(v): lookup_word(vocab, v)[1] for v in (a, b, c, d)}
    assert weight_of[bytes(a)] == 0.0
    for v in (b, c, d):
        assert weight_of[bytes(v)] == pytest.approx(math.log(3.0), abs=1e-12)


def test_idf_one_group_per_word():
    # four groups, one bundle each: every word appears in exactly 1 of 4 groups
    vals = [np.array(v, dtype=np.uint8) for v in HIER_VALS]
    ds = DescriptorSet.from_groups([np.tile(v, (6, 1)) for v in vals])
    vocab = train(ds, _cfg(2, 2, Strategy.GLOBAL_HBRB, seed=0))
    for v in vals:
        assert lookup_word(vocab, v)[1] == pytest.approx(math.log(4.0), abs=1e-12)


def test_idf_weights_are_finite_and_nonnegative():
    ds = _random_corpus(400, 8, seed=2)
    grouped = DescriptorSet(codes=ds.codes, group_ends=[100, 200, 300, 400])
    for strategy in ALL_STRATEGIES:
        vocab = train(grouped, _cfg(3, 2, strategy, seed=0))
        for leaf in vocab.leaf_nodes():
            assert math.isfinite(leaf.weight) and leaf.weight >= 0.0


def test_idf_rejects_zero_group_corpus():
    ds = _random_corpus(100, 8, seed=0)
    vocab = train(ds, _cfg(2, 1, Strategy.KMAJORITY))
    empty = DescriptorSet(codes=np.zeros((0, 8), dtype=np.uint8))
    with pytest.raises(ValueError):
        compute_idf(vocab, empty)


def test_idf_rejects_width_mismatch():
    ds = _random_corpus(100, 8, seed=0)
    vocab = train(ds, _cfg(2, 1, Strategy.KMAJORITY))
    other = _random_corpus(50, 16, seed=1)
    with pytest.raises(CorpusConsistencyError):
        compute_idf(vocab, other)


# ---------------------------------------------------------------- determinism


def _fingerprint(vocab):
    return [
        (n.node_id, n.parent_id, tuple(n.children),
         None if n.centroid is None else bytes(n.centroid),
         n.word_id, n.weight)
        for n in vocab.nodes
    ]


def test_training_is_deterministic_per_seed():
    ds = synth_clustered(5, 120, 0.05, bits=64, seed=8)
    for strategy in ALL_STRATEGIES:
        first = _fingerprint(train(ds, _cfg(3, 2, strategy, seed=4)))
        second = _fingerprint(train(ds, _cfg(3, 2, strategy, seed=4)))
        assert first == second


def test_training_independent_of_thread_count():
    ds = synth_clustered(8, 150, 0.05, bits=64, seed=13)
    cfg = _cfg(4, 2, Strategy.GLOBAL_HBRB, seed=6)
    serial = _fingerprint(train(ds, cfg, threads=1))
    threaded = _fingerprint(train(ds, cfg, threads=4))
    assert serial == threaded


def test_thread_env_var_does_not_change_result(monkeypatch):
    ds = synth_clustered(6, 100, 0.05, bits=64, seed=2)
    cfg = _cfg(3, 2, Strategy.GLOBAL_HBRB, seed=1)
    monkeypatch.setenv("HBRB_THREADS", "1")
    serial = _fingerprint(train(ds, cfg))
    monkeypatch.setenv("HBRB_THREADS", "4")
    threaded = _fingerprint(train(ds, cfg))
    assert serial == threaded


def test_thread_env_var_rejects_garbage(monkeypatch):
    ds = _random_corpus(60, 8, seed=0)
    cfg = _cfg(2, 1, Strategy.GLOBAL_HBRB)
    monkeypatch.setenv("HBRB_THREADS", "lots")
    with pytest.raises(ConfigError):
        train(ds, cfg)
    monkeypatch.setenv("HBRB_THREADS", "-2")
    with pytest.raises(ConfigError):
        train(ds, cfg)


# ---------------------------------------------------------------- validation


def test_validate_structure_catches_corruption():
    ds = _random_corpus(300, 8, seed=5)
    vocab = train(ds, _cfg(3, 2, Strategy.KMAJORITY, seed=0))

    broken = copy.deepcopy(vocab)
    leaves = broken.leaf_nodes()
    leaves[1].word_id = leaves[0].word_id
    with pytest.raises(InternalInvariantError):
        validate_structure(broken)

    broken = copy.deepcopy(vocab)
    broken.root.children.append(broken.root.children[0])
    with pytest.raises(InternalInvariantError):
        validate_structure(broken)

    broken = copy.deepcopy(vocab)
    child = broken.nodes[broken.root.children[0]]
    child.parent_id = 99
    with pytest.raises(InternalInvariantError):
        validate_structure(broken)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(k=1, L=2)
    with pytest.raises(ConfigError):
        TrainConfig(k=2, L=0)
    with pytest.raises(ConfigError):
        TrainConfig(k=2, L=1, seed=-1)


def test_empty_corpus_rejected():
    ds = DescriptorSet(codes=np.zeros((0, 8), dtype=np.uint8))
    with pytest.raises(InsufficientPointsError):
        train(ds, _cfg(2, 1, Strategy.KMAJORITY))


def test_negative_thread_argument_rejected():
    ds = _random_corpus(50, 8, seed=0)
    with pytest.raises(ConfigError):
        train(ds, _cfg(2, 1, Strategy.GLOBAL_HBRB), threads=-1)


# ---------------------------------------------------------------- quantization ordering


def _mean_qe(make_corpus, strategy, k, L, n_seeds=5):
    vals = []
    for s in range(n_seeds):
        ds = make_corpus(s)
        vocab = train(ds, _cfg(k, L, strategy, seed=s))
        vals.append(quantization_report(vocab, ds).mean_qe)
    return float(np.mean(vals))


def _check_qe_ordering(make_corpus, k, L):
    # benchmark-style assertion over seed means with 2% slack, not per seed
    mean_global = _mean_qe(make_corpus, Strategy.GLOBAL_HBRB, k, L)
    mean_kmaj = _mean_qe(make_corpus, Strategy.KMAJORITY, k, L)
    mean_local = _mean_qe(make_corpus, Strategy.LOCAL_BRB, k, L)
    assert mean_global <= mean_kmaj * 1.02
    lo = min(mean_global, mean_kmaj)
    hi = max(mean_global, mean_kmaj)
    assert lo * 0.98 <= mean_local <= hi * 1.02


def test_qe_ordering_on_random_corpus():
    _check_qe_ordering(lambda s: _random_corpus(3000, 16, seed=s), 4, 2)


def test_qe_ordering_on_clustered_corpus():
    _check_qe_ordering(lambda s: synth_clustered(6, 500, 0.04, bits=128, seed=s), 4, 2)
