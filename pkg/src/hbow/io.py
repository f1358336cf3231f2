"""File formats: packed descriptor sets and vocabulary serialization.

Binary descriptor file (magic "HBDC"), all integers little-endian:

    offset  size  field
    0       4     magic, b"HBDC"
    4       4     format version (u32) == 1
    8       4     descriptor_bits (u32), positive multiple of 8
    12      8     descriptor_count (u64)
    20      8     group_count (u64)
    28      ...   payload: descriptor_count * descriptor_bits/8 octets
    ...     ...   group table: group_count u64 ascending end offsets

Text vocabulary format (interoperable with common BoW vocabularies):

    line 1:   "k L scoring_id weighting_id"   (0 0 = L1 scoring, tf-idf)
    line i+1: "parent_id is_leaf octet_0 ... octet_{B-1} weight"

Node i is defined by line i+1; the root is node 0 and is not written. Parent
ids may only point at already-defined nodes, so the node order is a valid
breadth-first (or any topological) order. Word ids are not stored: loaders
renumber leaves depth-first, children in stored order, which is the same rule
training uses, so a save/load round trip preserves every lookup result.

The JSON format is this library's native serialization; it additionally
carries the training strategy tag.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .descriptors import DescriptorSet
from .errors import DescriptorFileError, InternalInvariantError, VocabularyFileError
from .vocabulary import (
    SCORING_L1,
    WEIGHTING_TFIDF,
    Strategy,
    VocabNode,
    Vocabulary,
    assign_word_ids,
    validate_structure,
)

DESCRIPTOR_MAGIC = b"HBDC"
DESCRIPTOR_VERSION = 1
_HEADER = struct.Struct("<4sIIQQ")

VOCAB_JSON_FORMAT = "hbow-vocabulary"
VOCAB_JSON_VERSION = 1


def _atomic_write_bytes(path, data: bytes) -> None:
    """Write via a sibling temp file and os.replace, so readers never see a
    half-written file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_descriptors(path, dset: DescriptorSet) -> None:
    header = _HEADER.pack(
        DESCRIPTOR_MAGIC, DESCRIPTOR_VERSION, dset.bits, len(dset), dset.group_count
    )
    payload = np.ascontiguousarray(dset.codes).tobytes()
    table = dset.group_ends.astype("<u8").tobytes()
    _atomic_write_bytes(path, header + payload + table)


def read_descriptors(path) -> DescriptorSet:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DescriptorFileError(f"truncated header: {len(data)} bytes, need {_HEADER.size}")
    magic, version, bits, count, groups = _HEADER.unpack_from(data)
    if magic != DESCRIPTOR_MAGIC:
        raise DescriptorFileError(f"bad magic {magic!r}, expected {DESCRIPTOR_MAGIC!r}")
    if version != DESCRIPTOR_VERSION:
        raise DescriptorFileError(f"unsupported version {version}, expected {DESCRIPTOR_VERSION}")
    if bits < 8 or bits % 8 != 0:
        raise DescriptorFileError(f"descriptor_bits must be a positive multiple of 8, got {bits}")
    octets = bits // 8
    payload_size = count * octets
    table_size = groups * 8
    expected = _HEADER.size + payload_size + table_size
    if len(data) < expected:
        raise DescriptorFileError(
            f"file holds {len(data)} bytes but header implies {expected}"
        )
    if len(data) > expected:
        raise DescriptorFileError(f"{len(data) - expected} trailing bytes after group table")
    payload = np.frombuffer(data, dtype=np.uint8, count=payload_size, offset=_HEADER.size)
    codes = payload.reshape(count, octets).copy()
    ends = np.frombuffer(data, dtype="<u8", count=groups, offset=_HEADER.size + payload_size)
    ends = ends.astype(np.int64)
    if groups == 0 and count > 0:
        # No group metadata: treat the whole payload as a single group.
        return DescriptorSet(codes, None)
    if ends.size:
        if np.any(np.diff(ends) < 0) or int(ends[-1]) != count:
            raise DescriptorFileError("group_ends are not ascending offsets ending at descriptor_count")
    return DescriptorSet(codes, ends)


def _format_weight(w: float) -> str:
    return repr(float(w))


def write_vocab_text(path, vocab: Vocabulary) -> None:
    lines = [f"{vocab.k} {vocab.L} 0 0"]
    for node in vocab.nodes[1:]:
        octets = " ".join(str(int(b)) for b in node.centroid)
        lines.append(f"{node.parent_id} {int(node.is_leaf)} {octets} {_format_weight(node.weight)}")
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))


def _assemble(k: int, L: int, strategy: Strategy | None,
              rows: list[tuple[int, bool, list[int], float]], octets: int) -> Vocabulary:
    """Shared tail of the text and JSON loaders: build nodes, renumber words
    depth-first, validate."""
    nodes = [VocabNode(0, -1)]
    for i, (parent, is_leaf, cent, weight) in enumerate(rows):
        nid = i + 1
        nodes.append(VocabNode(nid, parent, centroid=np.array(cent, dtype=np.uint8), weight=weight))
        nodes[parent].children.append(nid)
    for i, (parent, is_leaf, cent, weight) in enumerate(rows):
        nid = i + 1
        if is_leaf and nodes[nid].children:
            raise VocabularyFileError(f"node {nid} is marked leaf but has children")
        if not is_leaf and not nodes[nid].children:
            raise VocabularyFileError(f"node {nid} is marked internal but has no children")
    vocab = Vocabulary(k, L, strategy, octets * 8, nodes)
    assign_word_ids(vocab)
    try:
        validate_structure(vocab)
    except InternalInvariantError as exc:
        raise VocabularyFileError(f"invalid vocabulary structure: {exc}") from None
    return vocab


def read_vocab_text(path) -> Vocabulary:
    text = Path(path).read_text(encoding="ascii")
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise VocabularyFileError("line 1: missing header")
    head = lines[0].split()
    if len(head) != 4:
        raise VocabularyFileError(f"line 1: header needs 4 fields, got {len(head)}")
    try:
        k, L, scoring_id, weighting_id = (int(x) for x in head)
    except ValueError:
        raise VocabularyFileError("line 1: header fields must be integers") from None
    if k < 1 or L < 1:
        raise VocabularyFileError(f"line 1: k and L must be >= 1, got k={k} L={L}")
    if scoring_id != 0 or weighting_id != 0:
        raise VocabularyFileError(
            f"line 1: unsupported scoring/weighting ids {scoring_id}/{weighting_id}, only 0/0"
        )
    rows: list[tuple[int, bool, list[int], float]] = []
    octets: int | None = None
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            raise VocabularyFileError(f"line {lineno}: empty node line")
        if octets is None:
            octets = len(parts) - 3
            if octets < 1:
                raise VocabularyFileError(f"line {lineno}: too few fields for any descriptor width")
        if len(parts) != octets + 3:
            raise VocabularyFileError(
                f"line {lineno}: expected {octets + 3} fields, got {len(parts)}"
            )
        nid = lineno - 1
        try:
            parent = int(parts[0])
        except ValueError:
            raise VocabularyFileError(f"line {lineno}: parent id must be an integer") from None
        if not 0 <= parent < nid:
            raise VocabularyFileError(
                f"line {lineno}: parent {parent} is not an already-defined node"
            )
        if parts[1] not in ("0", "1"):
            raise VocabularyFileError(f"line {lineno}: is_leaf flag must be 0 or 1")
        if parent > 0 and rows[parent - 1][1]:
            raise VocabularyFileError(f"line {lineno}: parent {parent} is a leaf")
        try:
            cent = [int(x) for x in parts[2:-1]]
        except ValueError:
            raise VocabularyFileError(f"line {lineno}: centroid octets must be integers") from None
        if any(not 0 <= b <= 255 for b in cent):
            raise VocabularyFileError(f"line {lineno}: centroid octets must lie in [0, 255]")
        try:
            weight = float(parts[-1])
        except ValueError:
            raise VocabularyFileError(f"line {lineno}: weight must be a float") from None
        if not np.isfinite(weight) or weight < 0.0:
            raise VocabularyFileError(f"line {lineno}: weight must be finite and >= 0")
        rows.append((parent, parts[1] == "1", cent, weight))
    if not rows:
        raise VocabularyFileError("vocabulary file defines no nodes")
    return _assemble(k, L, None, rows, octets)


def write_vocab_json(path, vocab: Vocabulary) -> None:
    obj = {
        "format": VOCAB_JSON_FORMAT,
        "version": VOCAB_JSON_VERSION,
        "k": vocab.k,
        "L": vocab.L,
        "strategy": vocab.strategy.value if vocab.strategy is not None else None,
        "descriptor_bits": vocab.descriptor_bits,
        "scoring": SCORING_L1,
        "weighting": WEIGHTING_TFIDF,
        "nodes": [
            {
                "parent": node.parent_id,
                "leaf": node.is_leaf,
                "centroid": [int(b) for b in node.centroid],
                "weight": float(node.weight),
            }
            for node in vocab.nodes[1:]
        ],
    }
    _atomic_write_bytes(path, (json.dumps(obj, indent=1) + "\n").encode("ascii"))


def read_vocab_json(path) -> Vocabulary:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise VocabularyFileError(f"not valid JSON: {exc}") from None
    if not isinstance(obj, dict) or obj.get("format") != VOCAB_JSON_FORMAT:
        raise VocabularyFileError(f"missing or wrong format tag, expected {VOCAB_JSON_FORMAT!r}")
    if obj.get("version") != VOCAB_JSON_VERSION:
        raise VocabularyFileError(f"unsupported version {obj.get('version')!r}")
    try:
        k = int(obj["k"])
        L = int(obj["L"])
        bits = int(obj["descriptor_bits"])
        node_objs = obj["nodes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise VocabularyFileError(f"bad vocabulary fields: {exc}") from None
    if k < 1 or L < 1:
        raise VocabularyFileError(f"k and L must be >= 1, got k={k} L={L}")
    if bits < 8 or bits % 8 != 0:
        raise VocabularyFileError(f"descriptor_bits must be a positive multiple of 8, got {bits}")
    strategy_tag = obj.get("strategy")
    strategy = None
    if strategy_tag is not None:
        try:
            strategy = Strategy(strategy_tag)
        except ValueError:
            raise VocabularyFileError(f"unknown strategy tag {strategy_tag!r}") from None
    if not isinstance(node_objs, list) or not node_objs:
        raise VocabularyFileError("vocabulary defines no nodes")
    rows: list[tuple[int, bool, list[int], float]] = []
    octets = bits // 8
    for i, entry in enumerate(node_objs):
        nid = i + 1
        try:
            parent = int(entry["parent"])
            is_leaf = bool(entry["leaf"])
            cent = [int(b) for b in entry["centroid"]]
            weight = float(entry["weight"])
        except (KeyError, TypeError, ValueError) as exc:
            raise VocabularyFileError(f"node {nid}: bad fields: {exc}") from None
        if not 0 <= parent < nid:
            raise VocabularyFileError(f"node {nid}: parent {parent} is not an already-defined node")
        if len(cent) != octets or any(not 0 <= b <= 255 for b in cent):
            raise VocabularyFileError(f"node {nid}: centroid must be {octets} octets in [0, 255]")
        if not np.isfinite(weight) or weight < 0.0:
            raise VocabularyFileError(f"node {nid}: weight must be finite and >= 0")
        rows.append((parent, is_leaf, cent, weight))
    return _assemble(k, L, strategy, rows, octets)


def save_vocabulary(path, vocab: Vocabulary) -> None:
    """Write text or JSON depending on the file extension (.json = JSON)."""
    if Path(path).suffix.lower() == ".json":
        write_vocab_json(path, vocab)
    else:
        write_vocab_text(path, vocab)


def load_vocabulary(path) -> Vocabulary:
    """Read text or JSON depending on the file extension (.json = JSON)."""
    if Path(path).suffix.lower() == ".json":
        return read_vocab_json(path)
    return read_vocab_text(path)
