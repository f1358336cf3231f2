"""Hierarchical binary vocabularies: training, structure, and word lookup.

A vocabulary is a k-ary tree of packed binary centroids. The root holds no
centroid; every other node holds one. Leaves carry word ids (assigned
depth-first, children in stored order) and idf weights. Looking up a
descriptor walks greedily from the root, at each internal node moving to the
child with the smallest Hamming distance (ties to the lowest-index child),
and returns the reached leaf's word.

Three training strategies share the recursive splitter and differ only in
how one node's points are partitioned into k groups:

* KMAJORITY       - Hamming k-majority at every node.
* LOCAL_BRB       - binary-real-binary k-means at every node: relax, run
                    real k-means, binarize the centroids, reassign.
* GLOBAL_HBRB     - relax the whole corpus once at the root and run real
                    k-means down the entire hierarchy, partitioning children
                    by the real assignments; binary centroids enter only as
                    derived artifacts. A node's stored binary centroid is the
                    per-bit majority vote of its members, so every leaf
                    satisfies centroid == majority_centroid(members) exactly.

Node splitting rules: a node becomes a leaf when it reaches depth L, holds a
single point, or holds a single distinct value; a node with 2 <= distinct < k
values splits into exactly `distinct` clusters. The root always splits (into
one child when the corpus is degenerate).

Per-node randomness derives from (train seed, node path), so results do not
depend on thread scheduling.
"""

from __future__ import annotations

import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from time import perf_counter

import numpy as np

from .clustering import ClusterConfig, brb_kmeans, kmajority, lloyd_real
from .descriptors import DescriptorSet, _as_code, _as_codes, hamming_cdist, hamming_to_all, \
    majority_centroid, realize_matrix
from .errors import ConfigError, CorpusConsistencyError, InsufficientPointsError, \
    InternalInvariantError

SCORING_L1 = "L1"
WEIGHTING_TFIDF = "tf-idf"


class Strategy(str, Enum):
    KMAJORITY = "kmajority"
    LOCAL_BRB = "local-brb"
    GLOBAL_HBRB = "hbrb"


@dataclass
class VocabNode:
    node_id: int
    parent_id: int
    children: list[int] = field(default_factory=list)
    centroid: np.ndarray | None = None
    word_id: int | None = None
    weight: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.node_id != 0 and not self.children


@dataclass
class Vocabulary:
    k: int
    L: int
    strategy: Strategy | None
    descriptor_bits: int
    nodes: list[VocabNode]
    word_count: int = 0
    scoring: str = SCORING_L1
    weighting: str = WEIGHTING_TFIDF
    _tables: dict | None = field(default=None, init=False, repr=False, compare=False)

    @property
    def root(self) -> VocabNode:
        return self.nodes[0]

    def leaf_nodes(self) -> list[VocabNode]:
        return [n for n in self.nodes if n.is_leaf]

    def invalidate_cache(self) -> None:
        self._tables = None

    def _descent_tables(self) -> dict:
        """Per-internal-node child id arrays and stacked centroid matrices,
        plus flat word weight / leaf id arrays, built once and cached."""
        if self._tables is None:
            child_ids: dict[int, np.ndarray] = {}
            child_codes: dict[int, np.ndarray] = {}
            for node in self.nodes:
                if node.children:
                    child_ids[node.node_id] = np.asarray(node.children, dtype=np.int64)
                    child_codes[node.node_id] = np.vstack(
                        [self.nodes[c].centroid for c in node.children]
                    )
            word_weight = np.zeros(self.word_count, dtype=np.float64)
            word_leaf = np.full(self.word_count, -1, dtype=np.int64)
            for node in self.nodes:
                if node.is_leaf and node.word_id is not None:
                    word_weight[node.word_id] = node.weight
                    word_leaf[node.word_id] = node.node_id
            self._tables = {
                "child_ids": child_ids,
                "child_codes": child_codes,
                "word_weight": word_weight,
                "word_leaf": word_leaf,
            }
        return self._tables

    def word_weight_array(self) -> np.ndarray:
        return self._descent_tables()["word_weight"]

    def word_leaf_array(self) -> np.ndarray:
        return self._descent_tables()["word_leaf"]


@dataclass(frozen=True)
class TrainConfig:
    k: int = 10
    L: int = 6
    strategy: Strategy = Strategy.GLOBAL_HBRB
    cluster: ClusterConfig | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ConfigError(f"branching factor k must be >= 2, got {self.k}")
        if self.L < 1:
            raise ConfigError(f"depth L must be >= 1, got {self.L}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.cluster is None:
            object.__setattr__(self, "cluster", ClusterConfig(k=self.k, seed=self.seed))


@dataclass
class TrainResult:
    vocabulary: Vocabulary
    member_word_ids: np.ndarray  # training-partition word id per corpus descriptor
    seconds: float


class _BuildNode:
    __slots__ = ("centroid", "children", "member_idx")

    def __init__(self, centroid, member_idx):
        self.centroid = centroid
        self.children: list[_BuildNode] = []
        self.member_idx = member_idx


def _resolve_threads(explicit: int | None) -> int:
    if explicit is not None:
        if explicit < 0:
            raise ConfigError(f"thread count must be >= 0, got {explicit}")
        return explicit or (os.cpu_count() or 1)
    raw = os.environ.get("HBRB_THREADS")
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"HBRB_THREADS must be an integer, got {raw!r}") from None
    if value < 0:
        raise ConfigError(f"HBRB_THREADS must be >= 0, got {value}")
    return value or (os.cpu_count() or 1)


class _TreeBuilder:
    def __init__(self, codes: np.ndarray, real: np.ndarray | None, cfg: TrainConfig):
        self.codes = codes
        self.real = real
        self.cfg = cfg

    def _node_rng(self, path: tuple[int, ...]) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.cfg.seed, *path]))

    def _distinct(self, idx: np.ndarray) -> int:
        return int(np.unique(self.codes[idx], axis=0).shape[0])

    def _cluster(self, idx: np.ndarray, kk: int, path: tuple[int, ...]):
        """Split one node's members into kk groups; returns [(centroid, member_idx)]."""
        ccfg = replace(self.cfg.cluster, k=kk)
        rng = self._node_rng(path)
        strategy = self.cfg.strategy
        if strategy is Strategy.KMAJORITY:
            res = kmajority(self.codes[idx], ccfg, rng=rng)
        elif strategy is Strategy.LOCAL_BRB:
            res = brb_kmeans(self.codes[idx], ccfg, rng=rng)
        else:
            res = lloyd_real(self.real[idx], ccfg, rng=rng)
        out = []
        for j in range(kk):
            members = idx[res.assignments == j]
            if members.size == 0:
                raise InternalInvariantError("clustering produced an empty cluster after repair")
            if strategy is Strategy.GLOBAL_HBRB:
                centroid = majority_centroid(self.codes[members])
            else:
                centroid = res.centroids[j]
            out.append((centroid, members))
        return out

    def _subtree(self, centroid: np.ndarray, idx: np.ndarray, depth: int,
                 path: tuple[int, ...]) -> _BuildNode:
        node = _BuildNode(centroid, idx)
        if depth >= self.cfg.L or idx.size <= 1:
            return node
        distinct = self._distinct(idx)
        if distinct <= 1:
            return node
        kk = min(self.cfg.k, distinct)
        for j, (c, members) in enumerate(self._cluster(idx, kk, path)):
            node.children.append(self._subtree(c, members, depth + 1, (*path, j)))
        node.member_idx = None
        return node

    def build_root(self, threads: int) -> _BuildNode:
        idx_all = np.arange(self.codes.shape[0], dtype=np.int64)
        root = _BuildNode(None, None)
        # The root always splits; a degenerate corpus yields a single child.
        kk = min(self.cfg.k, max(1, self._distinct(idx_all)))
        specs = self._cluster(idx_all, kk, ())
        jobs = [(c, members, 1, (j,)) for j, (c, members) in enumerate(specs)]
        if threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
                root.children = list(pool.map(lambda a: self._subtree(*a), jobs))
        else:
            root.children = [self._subtree(*a) for a in jobs]
        return root


def _flatten(root_build: _BuildNode, cfg: TrainConfig,
             bits: int) -> tuple[Vocabulary, list[tuple[int, np.ndarray]]]:
    """Number nodes in breadth-first creation order (root = 0) and collect
    (leaf node id, member index array) pairs from the build tree."""
    nodes = [VocabNode(0, -1)]
    leaf_members: list[tuple[int, np.ndarray]] = []
    queue = deque([(root_build, 0)])
    while queue:
        bnode, nid = queue.popleft()
        for child in bnode.children:
            cid = len(nodes)
            nodes.append(VocabNode(cid, nid, centroid=child.centroid))
            nodes[nid].children.append(cid)
            queue.append((child, cid))
            if not child.children:
                leaf_members.append((cid, child.member_idx))
    vocab = Vocabulary(cfg.k, cfg.L, cfg.strategy, bits, nodes)
    return vocab, leaf_members


def assign_word_ids(vocab: Vocabulary) -> Vocabulary:
    """Number leaves 0..W-1 depth-first, children in stored order, and set
    `word_count`. Refuses to renumber a vocabulary that already has word ids."""
    for node in vocab.nodes:
        if node.word_id is not None:
            raise InternalInvariantError(f"node {node.node_id} already carries a word id")
    w = 0
    stack = [0]
    while stack:
        nid = stack.pop()
        node = vocab.nodes[nid]
        if node.is_leaf:
            node.word_id = w
            w += 1
        else:
            stack.extend(reversed(node.children))
    vocab.word_count = w
    vocab.invalidate_cache()
    return vocab


def compute_idf(vocab: Vocabulary, corpus: DescriptorSet) -> Vocabulary:
    """Set each leaf's weight to ln(N / N_i): N = corpus group count, N_i =
    number of groups containing word i (by greedy lookup). Words absent from
    the corpus get weight 0. Internal nodes keep weight 0."""
    if corpus.group_count < 1:
        raise ValueError("idf needs a corpus with at least one group")
    if corpus.bits != vocab.descriptor_bits:
        raise CorpusConsistencyError(
            f"corpus width {corpus.bits} does not match vocabulary width {vocab.descriptor_bits}"
        )
    if vocab.word_count < 1:
        raise ValueError("vocabulary has no words")
    doc_count = np.zeros(vocab.word_count, dtype=np.int64)
    word_ids, _ = lookup_words(vocab, corpus.codes)
    for i in range(corpus.group_count):
        start, end = corpus.group_range(i)
        if end > start:
            doc_count[np.unique(word_ids[start:end])] += 1
    n_groups = float(corpus.group_count)
    weights = np.where(doc_count > 0, np.log(n_groups / np.maximum(doc_count, 1)), 0.0)
    for node in vocab.nodes:
        if node.is_leaf:
            node.weight = float(weights[node.word_id])
    vocab.invalidate_cache()
    return vocab


def lookup_word(vocab: Vocabulary, code) -> tuple[int, float, int]:
    """Greedy root-to-leaf descent for one descriptor.

    Returns (word_id, weight, leaf_node_id). Ties at each level go to the
    lowest-index child.
    """
    code = _as_code(code)
    if code.shape[0] * 8 != vocab.descriptor_bits:
        raise CorpusConsistencyError(
            f"descriptor width {code.shape[0] * 8} does not match vocabulary width "
            f"{vocab.descriptor_bits}"
        )
    if vocab.word_count < 1:
        raise ValueError("vocabulary has no words")
    tables = vocab._descent_tables()
    child_ids = tables["child_ids"]
    child_codes = tables["child_codes"]
    nid = 0
    while nid in child_ids:
        d = hamming_to_all(code, child_codes[nid])
        nid = int(child_ids[nid][int(d.argmin())])
    leaf = vocab.nodes[nid]
    return leaf.word_id, leaf.weight, nid


def lookup_words(vocab: Vocabulary, codes) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized descent for a whole code matrix.

    Returns (word_ids, leaf_node_ids), both int64 of length n, identical to
    running `lookup_word` row by row.
    """
    codes = _as_codes(codes)
    if codes.shape[1] * 8 != vocab.descriptor_bits:
        raise CorpusConsistencyError(
            f"descriptor width {codes.shape[1] * 8} does not match vocabulary width "
            f"{vocab.descriptor_bits}"
        )
    if vocab.word_count < 1:
        raise ValueError("vocabulary has no words")
    tables = vocab._descent_tables()
    child_ids = tables["child_ids"]
    child_codes = tables["child_codes"]
    n = codes.shape[0]
    word_ids = np.empty(n, dtype=np.int64)
    leaf_ids = np.empty(n, dtype=np.int64)
    stack: list[tuple[int, np.ndarray]] = [(0, np.arange(n, dtype=np.int64))]
    while stack:
        nid, idx = stack.pop()
        ids = child_ids.get(nid)
        if ids is None:
            leaf = vocab.nodes[nid]
            word_ids[idx] = leaf.word_id
            leaf_ids[idx] = nid
            continue
        am = hamming_cdist(codes[idx], child_codes[nid]).argmin(axis=1)
        for j in range(ids.size):
            sub = idx[am == j]
            if sub.size:
                stack.append((int(ids[j]), sub))
    return word_ids, leaf_ids


def validate_structure(vocab: Vocabulary) -> None:
    """Check the full tree contract; raises InternalInvariantError on breach.

    Verified: single root (id 0, parent -1, no centroid), node ids equal to
    positions, parent/child mutual consistency, every node reachable from the
    root exactly once, leaf depth <= L, internal fanout within [1, k], word
    ids a bijection onto 0..W-1 over leaves, centroid widths equal to
    `descriptor_bits`, weights finite and non-negative.
    """
    nodes = vocab.nodes
    if not nodes:
        raise InternalInvariantError("vocabulary has no nodes")
    octets = vocab.descriptor_bits // 8
    root = nodes[0]
    if root.node_id != 0 or root.parent_id != -1 or root.centroid is not None:
        raise InternalInvariantError("node 0 is not a proper root")
    for pos, node in enumerate(nodes):
        if node.node_id != pos:
            raise InternalInvariantError(f"node at position {pos} carries id {node.node_id}")
        for c in node.children:
            if not 0 < c < len(nodes):
                raise InternalInvariantError(f"node {pos} references missing child {c}")
            if nodes[c].parent_id != pos:
                raise InternalInvariantError(f"child {c} does not point back to parent {pos}")
        if pos != 0:
            if node.centroid is None or node.centroid.shape != (octets,):
                raise InternalInvariantError(f"node {pos} centroid has wrong width")
            if not np.isfinite(node.weight) or node.weight < 0.0:
                raise InternalInvariantError(f"node {pos} has invalid weight {node.weight}")
    seen = np.zeros(len(nodes), dtype=bool)
    seen[0] = True
    depth = {0: 0}
    queue = deque([0])
    while queue:
        nid = queue.popleft()
        node = nodes[nid]
        if node.children and not 1 <= len(node.children) <= vocab.k:
            raise InternalInvariantError(
                f"node {nid} has {len(node.children)} children, outside [1, {vocab.k}]"
            )
        for c in node.children:
            if seen[c]:
                raise InternalInvariantError(f"node {c} reached twice")
            seen[c] = True
            depth[c] = depth[nid] + 1
            if depth[c] > vocab.L:
                raise InternalInvariantError(f"node {c} sits below depth {vocab.L}")
            queue.append(c)
    if not seen.all():
        raise InternalInvariantError("tree contains unreachable nodes")
    leaves = vocab.leaf_nodes()
    word_ids = sorted(n.word_id for n in leaves if n.word_id is not None)
    if len(word_ids) != len(leaves) or word_ids != list(range(len(leaves))):
        raise InternalInvariantError("leaf word ids are not a bijection onto 0..W-1")
    if vocab.word_count != len(leaves):
        raise InternalInvariantError(
            f"word_count {vocab.word_count} does not match {len(leaves)} leaves"
        )


def train_result(corpus: DescriptorSet, cfg: TrainConfig, *,
                 threads: int | None = None) -> TrainResult:
    """Train a vocabulary and report the training-partition word id of every
    corpus descriptor alongside it (useful for audits; greedy lookup may
    disagree with the training partition for non-global strategies)."""
    t0 = perf_counter()
    if len(corpus) == 0:
        raise InsufficientPointsError("training corpus is empty")
    codes = corpus.codes
    real = None
    if cfg.strategy is Strategy.GLOBAL_HBRB:
        real = realize_matrix(codes, dtype=np.float32)
    builder = _TreeBuilder(codes, real, cfg)
    root_build = builder.build_root(_resolve_threads(threads))
    vocab, leaf_members = _flatten(root_build, cfg, corpus.bits)
    assign_word_ids(vocab)
    member_word_ids = np.full(len(corpus), -1, dtype=np.int64)
    for nid, members in leaf_members:
        member_word_ids[members] = vocab.nodes[nid].word_id
    if (member_word_ids < 0).any():
        raise InternalInvariantError("some descriptors fell outside every leaf")
    compute_idf(vocab, corpus)
    validate_structure(vocab)
    return TrainResult(vocab, member_word_ids, perf_counter() - t0)


def train(corpus: DescriptorSet, cfg: TrainConfig, *, threads: int | None = None) -> Vocabulary:
    """Train a hierarchical vocabulary on a descriptor corpus.

    Builds the tree with `cfg.strategy`, numbers words depth-first, weights
    leaves by idf over the corpus groups, and validates the structure.
    Bit-identical for identical (corpus, config), independent of thread count.
    """
    return train_result(corpus, cfg, threads=threads).vocabulary
