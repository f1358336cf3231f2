"""Bit-packed binary descriptors and their real-valued relaxations.

A binary descriptor of D bits (D a positive multiple of 8) is stored as a row
of D/8 octets, MSB-first inside each octet. This is exactly numpy's
packbits/unpackbits convention, so bit i of a descriptor is
``unpackbits(code)[i]``. A real-valued relaxation is a float vector in
[0, 1]^D whose component i mirrors bit i.

All distance helpers are exact: Hamming distances are integer popcounts and
the squared Euclidean distance between two relaxed bit vectors equals the
Hamming distance between the originals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CorpusConsistencyError

DEFAULT_BITS = 256

# Popcount of every octet value; indexing this with a uint8 XOR is the fastest
# pure-numpy Hamming kernel for packed codes.
_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)

# Cap on the temporary (rows x rows x octets) XOR block built by hamming_cdist.
_CDIST_BLOCK_BYTES = 1 << 26


def _as_code(code) -> np.ndarray:
    arr = np.ascontiguousarray(code)
    if arr.dtype != np.uint8:
        raise CorpusConsistencyError(f"descriptor octets must be uint8, got {arr.dtype}")
    if arr.ndim != 1 or arr.shape[0] < 1:
        raise CorpusConsistencyError(f"expected a 1-d octet row, got shape {arr.shape}")
    return arr


def _as_codes(codes) -> np.ndarray:
    arr = np.ascontiguousarray(codes)
    if arr.dtype != np.uint8:
        raise CorpusConsistencyError(f"descriptor octets must be uint8, got {arr.dtype}")
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise CorpusConsistencyError(f"expected an (n, octets) matrix, got shape {arr.shape}")
    return arr


def _check_same_width(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise CorpusConsistencyError(
            f"descriptor widths differ: {a.shape[-1] * 8} bits vs {b.shape[-1] * 8} bits"
        )


def hamming(a, b) -> int:
    """Number of differing bits between two packed descriptors of equal width."""
    a = _as_code(a)
    b = _as_code(b)
    _check_same_width(a, b)
    return int(_POPCOUNT[np.bitwise_xor(a, b)].sum())


def hamming_to_all(code, codes) -> np.ndarray:
    """Hamming distance from one packed descriptor to every row of a code matrix."""
    code = _as_code(code)
    codes = _as_codes(codes)
    _check_same_width(code, codes)
    return _POPCOUNT[np.bitwise_xor(codes, code)].sum(axis=1, dtype=np.int64)


def hamming_cdist(a, b) -> np.ndarray:
    """All-pairs Hamming distances between two code matrices, shape (len(a), len(b)).

    Processes `a` in row blocks so the intermediate XOR tensor stays bounded.
    """
    a = _as_codes(a)
    b = _as_codes(b)
    _check_same_width(a, b)
    n, octets = a.shape
    m = b.shape[0]
    out = np.empty((n, m), dtype=np.int64)
    step = max(1, _CDIST_BLOCK_BYTES // max(1, m * octets))
    for start in range(0, n, step):
        stop = min(n, start + step)
        block = np.bitwise_xor(a[start:stop, None, :], b[None, :, :])
        out[start:stop] = _POPCOUNT[block].sum(axis=2, dtype=np.int64)
    return out


def hamming_rows(a, b) -> np.ndarray:
    """Row-wise Hamming distance between two code matrices of equal shape."""
    a = _as_codes(a)
    b = _as_codes(b)
    if a.shape != b.shape:
        raise CorpusConsistencyError(f"shape mismatch: {a.shape} vs {b.shape}")
    return _POPCOUNT[np.bitwise_xor(a, b)].sum(axis=1, dtype=np.int64)


def realize(code) -> np.ndarray:
    """Relax a packed descriptor to a float64 0/1 vector, one entry per bit."""
    return np.unpackbits(_as_code(code)).astype(np.float64)


def realize_matrix(codes, dtype=np.float64) -> np.ndarray:
    """Relax a code matrix to an (n, bits) float matrix of 0/1 values."""
    return np.unpackbits(_as_codes(codes), axis=1).astype(dtype)


def _check_binarizable(values: np.ndarray, threshold: float) -> None:
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie strictly inside (0, 1), got {threshold}")
    if values.shape[-1] == 0 or values.shape[-1] % 8 != 0:
        raise CorpusConsistencyError(
            f"bit count must be a positive multiple of 8, got {values.shape[-1]}"
        )


def binarize(values, threshold: float = 0.5) -> np.ndarray:
    """Pack a real vector back to bits: bit i is 1 iff values[i] > threshold.

    The comparison is strict, so a component exactly at the threshold rounds
    down to 0. With the default 0.5 this makes ``binarize(realize(c)) == c``
    and gives per-bit majority votes a fixed tie rule (ties go to 0).
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise CorpusConsistencyError(f"expected a 1-d real vector, got shape {arr.shape}")
    _check_binarizable(arr, threshold)
    return np.packbits(arr > threshold)


def binarize_matrix(values, threshold: float = 0.5) -> np.ndarray:
    """Row-wise binarize: (n, bits) reals to (n, bits/8) packed codes."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise CorpusConsistencyError(f"expected an (n, bits) real matrix, got shape {arr.shape}")
    _check_binarizable(arr, threshold)
    return np.packbits(arr > threshold, axis=1)


def majority_centroid(codes) -> np.ndarray:
    """Per-bit majority vote over a set of packed descriptors.

    Bit i of the result is 1 iff strictly more than half of the inputs have
    bit i set; exact half votes round to 0. This is computed from integer bit
    counts, so it equals ``binarize(real_mean(realize(...)))`` exactly for any
    input size.
    """
    arr = _as_codes(codes)
    if arr.shape[0] == 0:
        raise ValueError("majority_centroid needs at least one descriptor")
    votes = np.unpackbits(arr, axis=1).sum(axis=0, dtype=np.int64)
    return np.packbits(votes * 2 > arr.shape[0])


def real_mean(points) -> np.ndarray:
    """Componentwise mean of a set of real vectors, in float64."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("real_mean needs a non-empty (n, bits) matrix")
    return arr.mean(axis=0)


def euclidean_sq(a, b) -> float:
    """Squared Euclidean distance between two real vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise CorpusConsistencyError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(d @ d)


@dataclass
class DescriptorSet:
    """A uniform-width descriptor corpus with optional per-image group boundaries.

    `codes` is the (n, bits/8) packed matrix. `group_ends` holds ascending end
    offsets, one per group, the last equal to n; groups may be empty. A set
    built without group metadata is treated as a single group.
    """

    codes: np.ndarray
    group_ends: np.ndarray | None = None

    def __post_init__(self) -> None:
        codes = np.ascontiguousarray(self.codes)
        if codes.dtype != np.uint8:
            raise CorpusConsistencyError(f"descriptor octets must be uint8, got {codes.dtype}")
        if codes.ndim == 1:
            codes = codes[None, :]
        if codes.ndim != 2 or codes.shape[1] < 1:
            raise CorpusConsistencyError(f"expected an (n, octets) matrix, got shape {codes.shape}")
        self.codes = codes
        n = codes.shape[0]
        if self.group_ends is None:
            ends = np.empty(0, dtype=np.int64) if n == 0 else np.array([n], dtype=np.int64)
        else:
            ends = np.asarray(self.group_ends, dtype=np.int64).ravel()
            if ends.size == 0 and n > 0:
                ends = np.array([n], dtype=np.int64)
        if ends.size:
            if ends[0] < 0 or np.any(np.diff(ends) < 0):
                raise CorpusConsistencyError("group end offsets must be non-negative and ascending")
            if int(ends[-1]) != n:
                raise CorpusConsistencyError(
                    f"last group end {int(ends[-1])} does not match descriptor count {n}"
                )
        elif n > 0:
            raise CorpusConsistencyError("non-empty descriptor set needs at least one group")
        self.group_ends = ends

    def __len__(self) -> int:
        return self.codes.shape[0]

    @property
    def bits(self) -> int:
        return self.codes.shape[1] * 8

    @property
    def group_count(self) -> int:
        return int(self.group_ends.size)

    def group_range(self, i: int) -> tuple[int, int]:
        if not 0 <= i < self.group_count:
            raise IndexError(f"group {i} out of range [0, {self.group_count})")
        start = 0 if i == 0 else int(self.group_ends[i - 1])
        return start, int(self.group_ends[i])

    def group_codes(self, i: int) -> np.ndarray:
        start, end = self.group_range(i)
        return self.codes[start:end]

    def iter_groups(self):
        for i in range(self.group_count):
            yield self.group_codes(i)

    @classmethod
    def from_groups(cls, groups) -> "DescriptorSet":
        """Build a set from a sequence of (m_i, octets) arrays, one group each."""
        mats = [_as_codes(g) for g in groups]
        if not mats:
            raise ValueError("from_groups needs at least one group")
        for m in mats[1:]:
            _check_same_width(mats[0], m)
        ends = np.cumsum([m.shape[0] for m in mats], dtype=np.int64)
        return cls(np.vstack(mats), ends)
