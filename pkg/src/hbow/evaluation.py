"""Quantization-quality reports and a synthetic place-recognition benchmark.

The synthetic world: `num_places` places, each a fixed set of random
prototype descriptors. A traversal visits every place once (in order) and
mixes in revisit frames so that revisits are `revisit_fraction` of all
frames. A fresh visit observes the prototypes verbatim; a revisit picks a
uniformly random already-visited place and observes its prototypes with every
bit flipped independently with probability `bit_flip_prob`. Ground truth is
the set of (query frame, earlier frame) pairs showing the same place.

`retrieval_report` replays such a sequence through a RetrievalDatabase in
streaming order (transform, query with a temporal exclusion window, then
add), scoring recall@1 over the ground-truth queries that still have at
least one admissible correct frame, plus a precision/recall sweep over top-1
score thresholds.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, replace

import numpy as np

from .bow import RetrievalDatabase, transform
from .descriptors import DescriptorSet, hamming_rows
from .errors import ConfigError
from .vocabulary import Strategy, TrainConfig, Vocabulary, lookup_words, train
from .clustering import ClusterConfig

EVAL_COLUMNS = [
    "strategy", "seed", "mean_qe", "p95_qe", "words_used", "entropy",
    "recall_at_1", "max_f1", "train_seconds",
]


@dataclass(frozen=True)
class SynthConfig:
    num_places: int = 20
    descriptors_per_place: int = 50
    revisit_fraction: float = 0.3
    bit_flip_prob: float = 0.05
    descriptor_bits: int = 256
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_places < 1:
            raise ConfigError(f"num_places must be >= 1, got {self.num_places}")
        if self.descriptors_per_place < 1:
            raise ConfigError(
                f"descriptors_per_place must be >= 1, got {self.descriptors_per_place}"
            )
        if not 0.0 <= self.revisit_fraction < 1.0:
            raise ConfigError(f"revisit_fraction must lie in [0, 1), got {self.revisit_fraction}")
        if not 0.0 <= self.bit_flip_prob < 0.5:
            raise ConfigError(f"bit_flip_prob must lie in [0, 0.5), got {self.bit_flip_prob}")
        if self.descriptor_bits < 8 or self.descriptor_bits % 8 != 0:
            raise ConfigError(
                f"descriptor_bits must be a positive multiple of 8, got {self.descriptor_bits}"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")


@dataclass
class SynthSequence:
    training: DescriptorSet            # prototypes, one group per place
    frames: list[np.ndarray]           # observed descriptor matrices, traversal order
    frame_places: list[int]            # true place of each frame
    gt_pairs: set[tuple[int, int]]     # (query frame, earlier frame of the same place)


def _flip_bits(codes: np.ndarray, prob: float, rng: np.random.Generator) -> np.ndarray:
    """Flip every bit independently with probability `prob` (0 flips nothing)."""
    mask = np.packbits(rng.random((codes.shape[0], codes.shape[1] * 8)) < prob, axis=1)
    return np.bitwise_xor(codes, mask)


def synth_sequence(cfg: SynthConfig) -> SynthSequence:
    """Generate a traversal with revisits plus its training corpus and ground truth.

    The total frame count is round(P / (1 - revisit_fraction)); the first
    frame is always a fresh visit. Deterministic for a fixed config.
    """
    rng = np.random.default_rng(cfg.seed)
    octets = cfg.descriptor_bits // 8
    protos = [
        rng.integers(0, 256, size=(cfg.descriptors_per_place, octets), dtype=np.uint8)
        for _ in range(cfg.num_places)
    ]
    p = cfg.num_places
    total = p if cfg.revisit_fraction == 0.0 else int(round(p / (1.0 - cfg.revisit_fraction)))
    total = max(total, p)
    markers = np.array([0] * p + [1] * (total - p), dtype=np.int64)
    rng.shuffle(markers)
    if markers[0] == 1:
        first_fresh = int(np.flatnonzero(markers == 0)[0])
        markers[0], markers[first_fresh] = 0, 1

    frames: list[np.ndarray] = []
    frame_places: list[int] = []
    gt_pairs: set[tuple[int, int]] = set()
    next_fresh = 0
    for t, marker in enumerate(markers):
        if marker == 0:
            place = next_fresh
            next_fresh += 1
            observed = protos[place].copy()
        else:
            place = int(rng.integers(next_fresh))
            observed = _flip_bits(protos[place], cfg.bit_flip_prob, rng)
        for s in range(t):
            if frame_places[s] == place:
                gt_pairs.add((t, s))
        frames.append(observed)
        frame_places.append(place)
    training = DescriptorSet.from_groups(protos)
    return SynthSequence(training, frames, frame_places, gt_pairs)


def synth_clustered(num_clusters: int, per_cluster: int, flip_prob: float,
                    bits: int = 256, seed: int = 0) -> DescriptorSet:
    """A clustered corpus: random cluster centers, members are bit-flip
    corrupted copies of their center; one group per cluster."""
    if num_clusters < 1 or per_cluster < 1:
        raise ConfigError("num_clusters and per_cluster must be >= 1")
    if not 0.0 <= flip_prob <= 1.0:
        raise ConfigError(f"flip_prob must lie in [0, 1], got {flip_prob}")
    if bits < 8 or bits % 8 != 0:
        raise ConfigError(f"bits must be a positive multiple of 8, got {bits}")
    rng = np.random.default_rng(seed)
    octets = bits // 8
    groups = []
    for _ in range(num_clusters):
        center = rng.integers(0, 256, size=(1, octets), dtype=np.uint8)
        groups.append(_flip_bits(np.repeat(center, per_cluster, axis=0), flip_prob, rng))
    return DescriptorSet.from_groups(groups)


@dataclass
class QuantReport:
    mean_qe: float
    p50_qe: float
    p95_qe: float
    words_used: int
    entropy: float
    count: int


def quantization_report(vocab: Vocabulary, descriptors) -> QuantReport:
    """Distance-to-assigned-leaf statistics plus word-usage spread.

    Quantization error of a descriptor is its Hamming distance to the
    centroid of the leaf that greedy lookup assigns it to. Entropy is the
    Shannon entropy (bits) of the word usage distribution.
    """
    codes = descriptors.codes if isinstance(descriptors, DescriptorSet) else np.asarray(descriptors)
    if codes.shape[0] == 0:
        raise ValueError("quantization_report needs at least one descriptor")
    word_ids, leaf_ids = lookup_words(vocab, codes)
    cent_matrix = np.zeros((len(vocab.nodes), vocab.descriptor_bits // 8), dtype=np.uint8)
    for node in vocab.nodes[1:]:
        cent_matrix[node.node_id] = node.centroid
    qe = hamming_rows(codes, cent_matrix[leaf_ids])
    _, counts = np.unique(word_ids, return_counts=True)
    probs = counts / counts.sum()
    entropy = float(-(probs * np.log2(probs)).sum())
    return QuantReport(
        mean_qe=float(qe.mean()),
        p50_qe=float(np.percentile(qe, 50)),
        p95_qe=float(np.percentile(qe, 95)),
        words_used=int(counts.size),
        entropy=entropy,
        count=int(codes.shape[0]),
    )


@dataclass
class RetrievalReport:
    recall_at_1: float
    max_f1: float
    pr_curve: list[tuple[float, float, float]]  # (threshold, precision, recall)
    eligible_queries: int
    hits: int
    vacuous: bool


def retrieval_report(vocab: Vocabulary, frames, gt_pairs,
                     temporal_exclusion: int = 1) -> RetrievalReport:
    """Stream a frame sequence through a fresh database and score it.

    For each frame: transform, query top-1 excluding the previous
    `temporal_exclusion` entries, then add. A ground-truth query counts
    toward recall only if at least one correct frame is admissible (already
    stored and outside the exclusion window); recall@1 is the fraction of
    those answered with a correct top-1. The PR sweep thresholds the top-1
    score; with no eligible queries the report is vacuous (both metrics 1.0).
    """
    if temporal_exclusion < 0:
        raise ConfigError(f"temporal_exclusion must be >= 0, got {temporal_exclusion}")
    gt_pairs = set(map(tuple, gt_pairs))
    db = RetrievalDatabase(vocab)
    top1: dict[int, tuple[int, float]] = {}
    for t, frame in enumerate(frames):
        vec = transform(vocab, frame)
        exclude = range(max(0, t - temporal_exclusion), t)
        if len(db):
            res = db.query(vec, 1, exclude)
            if res:
                top1[t] = res[0]
        db.add(vec)

    gt_by_query: dict[int, set[int]] = {}
    for t, s in gt_pairs:
        gt_by_query.setdefault(t, set()).add(s)
    eligible = [
        t for t, sources in gt_by_query.items()
        if any(s < t - temporal_exclusion for s in sources)
    ]
    if not eligible:
        return RetrievalReport(1.0, 1.0, [], 0, 0, True)

    hits = sum(1 for t in eligible if t in top1 and (t, top1[t][0]) in gt_pairs)
    recall_at_1 = hits / len(eligible)

    predictions = [(score, (t, entry) in gt_pairs) for t, (entry, score) in top1.items()]
    curve: list[tuple[float, float, float]] = []
    max_f1 = 0.0
    for threshold in sorted({score for score, _ in predictions}):
        kept = [(s, ok) for s, ok in predictions if s >= threshold]
        if not kept:
            continue
        tp = sum(1 for _, ok in kept if ok)
        precision = tp / len(kept)
        recall = tp / len(eligible)
        curve.append((float(threshold), precision, recall))
        if precision + recall > 0.0:
            max_f1 = max(max_f1, 2.0 * precision * recall / (precision + recall))
    return RetrievalReport(recall_at_1, max_f1, curve, len(eligible), hits, False)


def compare_strategies(synth_cfg: SynthConfig, strategies, seeds, k: int = 10, L: int = 6,
                       max_iters: int = 100, temporal_exclusion: int = 1) -> list[dict]:
    """Run the full benchmark grid and return one row dict per (seed, strategy).

    Every strategy within a seed sees the identical corpus and sequence; the
    synthetic world is regenerated for each seed. Row fields follow
    EVAL_COLUMNS; everything except train_seconds is deterministic.
    """
    strategies = [Strategy(s) for s in strategies]
    seeds = list(seeds)
    if not strategies:
        raise ConfigError("need at least one strategy")
    if not seeds:
        raise ConfigError("need at least one seed")
    rows: list[dict] = []
    for seed in seeds:
        seq = synth_sequence(replace(synth_cfg, seed=seed))
        for strategy in strategies:
            cfg = TrainConfig(
                k=k, L=L, strategy=strategy, seed=seed,
                cluster=ClusterConfig(k=k, max_iters=max_iters, seed=seed),
            )
            t0 = time.perf_counter()
            vocab = train(seq.training, cfg)
            seconds = time.perf_counter() - t0
            quant = quantization_report(vocab, seq.training)
            retr = retrieval_report(vocab, seq.frames, seq.gt_pairs, temporal_exclusion)
            rows.append({
                "strategy": strategy.value,
                "seed": int(seed),
                "mean_qe": quant.mean_qe,
                "p95_qe": quant.p95_qe,
                "words_used": quant.words_used,
                "entropy": quant.entropy,
                "recall_at_1": retr.recall_at_1,
                "max_f1": retr.max_f1,
                "train_seconds": seconds,
            })
    return rows


def write_rows_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=EVAL_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def write_rows_json(path, rows) -> None:
    with open(path, "w") as fh:
        json.dump(list(rows), fh, indent=2)
        fh.write("\n")
