"""Command line interface.

Subcommands: train, transform, query, synth, eval, convert. Data goes to
stdout or the requested output files; progress notes go to stderr.

Exit codes: 0 success, 1 usage or configuration error, 2 unreadable or
malformed data, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from .bow import RetrievalDatabase, transform
from .descriptors import DescriptorSet
from .errors import (
    ConfigError,
    CorpusConsistencyError,
    FormatError,
    InsufficientPointsError,
    InternalInvariantError,
)
from .evaluation import (
    SynthConfig,
    compare_strategies,
    quantization_report,
    synth_sequence,
    write_rows_csv,
    write_rows_json,
)
from .clustering import ClusterConfig
from .io import load_vocabulary, read_descriptors, save_vocabulary, write_descriptors
from .vocabulary import Strategy, TrainConfig, train

_STRATEGY_NAMES = [s.value for s in Strategy]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hbow",
        description="Train and use hierarchical binary bag-of-words vocabularies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a vocabulary from a descriptor file")
    p.add_argument("--corpus", required=True, help="input descriptor file")
    p.add_argument("--out", required=True, help="output vocabulary (.json for JSON, else text)")
    p.add_argument("--strategy", choices=_STRATEGY_NAMES, default=Strategy.GLOBAL_HBRB.value)
    p.add_argument("--k", type=int, default=10, help="branching factor (default 10)")
    p.add_argument("--L", type=int, default=6, help="tree depth (default 6)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=100)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("transform", help="turn grouped descriptors into BoW vectors")
    p.add_argument("--vocab", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.set_defaults(func=_cmd_transform)

    p = sub.add_parser("query", help="rank database groups against query groups")
    p.add_argument("--vocab", required=True)
    p.add_argument("--db", required=True, help="descriptor file, one group per database entry")
    p.add_argument("--queries", required=True, help="descriptor file, one group per query")
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--exclude-window", type=int, default=None,
                   help="exclude db entries e with |e - query_index| <= this")
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("synth", help="generate a synthetic revisit sequence")
    p.add_argument("--places", type=int, default=20)
    p.add_argument("--per-place", type=int, default=50)
    p.add_argument("--revisit", type=float, default=0.3)
    p.add_argument("--flip", type=float, default=0.05)
    p.add_argument("--bits", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="frame descriptor file, one group per frame")
    p.add_argument("--train-out", default=None, help="also write the prototype corpus here")
    p.add_argument("--gt", default=None, help="also write ground-truth pairs as JSON here")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="benchmark strategies on a synthetic sequence")
    p.add_argument("--strategies", default=",".join(_STRATEGY_NAMES),
                   help="comma-separated subset of " + ",".join(_STRATEGY_NAMES))
    p.add_argument("--seeds", default="0", help="comma-separated integer seeds")
    p.add_argument("--places", type=int, default=20)
    p.add_argument("--per-place", type=int, default=50)
    p.add_argument("--revisit", type=float, default=0.3)
    p.add_argument("--flip", type=float, default=0.05)
    p.add_argument("--bits", type=int, default=256)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--L", type=int, default=6)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--temporal-exclusion", type=int, default=1)
    p.add_argument("--out-csv", default="eval_results.csv")
    p.add_argument("--out-json", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("convert", help="convert a vocabulary between text and JSON")
    p.add_argument("--src", required=True)
    p.add_argument("--dst", required=True)
    p.set_defaults(func=_cmd_convert)
    return parser


def _emit(payload, out_path) -> None:
    text = json.dumps(payload, indent=1)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _cmd_train(args) -> int:
    cfg = TrainConfig(
        k=args.k, L=args.L, strategy=Strategy(args.strategy), seed=args.seed,
        cluster=ClusterConfig(k=args.k, max_iters=args.max_iters, seed=args.seed),
    )
    corpus = read_descriptors(args.corpus)
    print(f"training on {len(corpus)} descriptors in {corpus.group_count} groups",
          file=sys.stderr)
    t0 = time.perf_counter()
    vocab = train(corpus, cfg)
    seconds = time.perf_counter() - t0
    save_vocabulary(args.out, vocab)
    quant = quantization_report(vocab, corpus)
    print(json.dumps({
        "word_count": vocab.word_count,
        "train_seconds": seconds,
        "mean_qe": quant.mean_qe,
    }))
    return 0


def _cmd_transform(args) -> int:
    vocab = load_vocabulary(args.vocab)
    corpus = read_descriptors(args.corpus)
    groups = []
    for i in range(corpus.group_count):
        vec = transform(vocab, corpus.group_codes(i))
        groups.append({"group": i, "words": {str(w): v for w, v in vec.entries.items()}})
    _emit({"groups": groups}, args.out)
    return 0


def _cmd_query(args) -> int:
    if args.top < 1:
        raise ConfigError(f"--top must be >= 1, got {args.top}")
    if args.exclude_window is not None and args.exclude_window < 0:
        raise ConfigError(f"--exclude-window must be >= 0, got {args.exclude_window}")
    vocab = load_vocabulary(args.vocab)
    db_set = read_descriptors(args.db)
    query_set = read_descriptors(args.queries)
    db = RetrievalDatabase(vocab)
    for i in range(db_set.group_count):
        db.add(transform(vocab, db_set.group_codes(i)))
    results = []
    for qi in range(query_set.group_count):
        vec = transform(vocab, query_set.group_codes(qi))
        exclude = None
        if args.exclude_window is not None:
            lo = qi - args.exclude_window
            hi = qi + args.exclude_window
            exclude = [e for e in range(max(0, lo), min(len(db), hi + 1))]
        matches = db.query(vec, args.top, exclude) if not vec.is_empty else []
        results.append({
            "query": qi,
            "matches": [{"entry": e, "score": s} for e, s in matches],
        })
    _emit({"queries": results}, args.out)
    return 0


def _cmd_synth(args) -> int:
    cfg = SynthConfig(
        num_places=args.places, descriptors_per_place=args.per_place,
        revisit_fraction=args.revisit, bit_flip_prob=args.flip,
        descriptor_bits=args.bits, seed=args.seed,
    )
    seq = synth_sequence(cfg)
    write_descriptors(args.out, DescriptorSet.from_groups(seq.frames))
    if args.train_out:
        write_descriptors(args.train_out, seq.training)
    if args.gt:
        with open(args.gt, "w") as fh:
            json.dump({
                "pairs": sorted(list(p) for p in seq.gt_pairs),
                "frame_places": seq.frame_places,
            }, fh, indent=1)
            fh.write("\n")
    print(f"wrote {len(seq.frames)} frames over {cfg.num_places} places to {args.out}",
          file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    try:
        strategies = [Strategy(s.strip()) for s in args.strategies.split(",") if s.strip()]
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    synth_cfg = SynthConfig(
        num_places=args.places, descriptors_per_place=args.per_place,
        revisit_fraction=args.revisit, bit_flip_prob=args.flip,
        descriptor_bits=args.bits,
    )
    rows = compare_strategies(
        synth_cfg, strategies, seeds, k=args.k, L=args.L,
        max_iters=args.max_iters, temporal_exclusion=args.temporal_exclusion,
    )
    if args.out_csv:
        write_rows_csv(args.out_csv, rows)
        print(f"wrote {len(rows)} rows to {args.out_csv}", file=sys.stderr)
    if args.out_json:
        write_rows_json(args.out_json, rows)
    print(json.dumps(rows, indent=1))
    return 0


def _cmd_convert(args) -> int:
    save_vocabulary(args.dst, load_vocabulary(args.src))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; fold the latter
        # into this tool's usage-error code.
        return 0 if not exc.code else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, CorpusConsistencyError, InsufficientPointsError,
            OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # InternalInvariantError and genuine bugs
        kind = "invariant violation" if isinstance(exc, InternalInvariantError) else "internal error"
        print(f"{kind}: {exc}", file=sys.stderr)
        return 3


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
