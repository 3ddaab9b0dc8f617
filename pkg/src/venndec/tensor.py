"""Dense tensor arithmetic.

A :class:`Tensor` wraps an immutable, C-ordered float64 array.  Row-major
(last index fastest) layout is load-bearing: fusing adjacent modes is a pure
reshape, so flattened data is identical before and after grouping.  All mode
and coordinate indices in this API are 0-based; JSON files written by the CLI
use 1-based labels where labels appear, and entries are stored flattened in
the same row-major order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ModePartition",
    "outer",
    "multilinear_eval",
    "partial_apply",
    "group",
    "extract_subtensor",
    "split_coordinates",
    "norm",
]


@dataclass(frozen=True, eq=False)
class Tensor:
    """Dense real tensor of order >= 1 with finite entries."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=float))
        if arr.ndim == 0:
            raise ValueError("tensor order must be >= 1")
        if any(s < 1 for s in arr.shape):
            raise ValueError(f"tensor dimensions must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor entries must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(int(s) for s in self.data.shape)

    @property
    def order(self) -> int:
        return self.data.ndim

    def entry(self, index: Sequence[int]) -> float:
        return float(self.data[tuple(index)])

    def to_json_dict(self) -> dict:
        return {"dims": list(self.dims), "entries": self.data.ravel().tolist()}

    @classmethod
    def from_json_dict(cls, obj: Mapping) -> "Tensor":
        dims = [int(d) for d in obj["dims"]]
        entries = np.asarray(obj["entries"], dtype=float)
        if entries.size != math.prod(dims):
            raise ValueError(
                f"entry count {entries.size} does not match dims {dims}"
            )
        return cls(entries.reshape(dims))

    def __repr__(self) -> str:
        return f"Tensor(dims={self.dims})"


@dataclass(frozen=True)
class ModePartition:
    """Ordered partition of tensor modes into contiguous runs."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        groups = tuple(tuple(int(m) for m in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        flat = [m for g in groups for m in g]
        if not flat:
            raise ValueError("partition must be nonempty")
        if flat != list(range(len(flat))):
            raise ValueError(
                f"groups must be contiguous runs covering all modes in order, got {groups}"
            )
        if any(len(g) == 0 for g in groups):
            raise ValueError("empty group in mode partition")

    @classmethod
    def from_sizes(cls, sizes: Iterable[int]) -> "ModePartition":
        groups = []
        start = 0
        for s in sizes:
            groups.append(tuple(range(start, start + s)))
            start += s
        return cls(tuple(groups))

    def __len__(self) -> int:
        return len(self.groups)


def outer(vectors: Sequence[np.ndarray]) -> Tensor:
    """Rank-one tensor v1 (x) v2 (x) ... (x) vk."""
    if len(vectors) == 0:
        raise ValueError("outer product needs at least one vector")
    arrs = [np.asarray(v, dtype=float).ravel() for v in vectors]
    if any(a.size == 0 for a in arrs):
        raise ValueError("outer product factors must be nonempty")
    out = arrs[0]
    for a in arrs[1:]:
        out = np.multiply.outer(out, a)
    return Tensor(np.atleast_1d(out))


def multilinear_eval(t: Tensor, vectors: Sequence[np.ndarray]) -> float:
    """Full contraction T(v1, ..., vk), one vector per mode."""
    if len(vectors) != t.order:
        raise ValueError(f"need {t.order} vectors, got {len(vectors)}")
    cur = t.data
    for k, v in enumerate(vectors):
        v = np.asarray(v, dtype=float).ravel()
        if v.size != t.dims[k]:
            raise ValueError(f"vector for mode {k} has length {v.size}, expected {t.dims[k]}")
        cur = np.tensordot(cur, v, axes=([0], [0]))
    return float(cur)


def partial_apply(t: Tensor, assignments: Mapping[int, np.ndarray]) -> Tensor:
    """Contract the assigned modes, leaving the rest in order.

    ``assignments`` maps 0-based mode -> vector.  Assigning every mode is
    rejected (use :func:`multilinear_eval` for the scalar case).
    """
    modes = sorted(int(m) for m in assignments)
    if len(set(modes)) != len(modes):
        raise ValueError("duplicate mode in assignments")
    if any(m < 0 or m >= t.order for m in modes):
        raise ValueError(f"mode out of range for order-{t.order} tensor: {modes}")
    if len(modes) >= t.order:
        raise ValueError("partial_apply must leave at least one free mode")
    cur = t.data
    for m in reversed(modes):  # descending keeps earlier axes stable
        v = np.asarray(assignments[m], dtype=float).ravel()
        if v.size != t.dims[m]:
            raise ValueError(f"vector for mode {m} has length {v.size}, expected {t.dims[m]}")
        cur = np.tensordot(cur, v, axes=([m], [0]))
    return Tensor(cur)


def group(t: Tensor, partition: ModePartition) -> Tensor:
    """Fuse each contiguous run of modes into a single mode.

    Row-major index fusion: a fused index is i*n2 + j for original pair
    (i, j), matching the flat layout bit for bit.
    """
    flat = [m for g in partition.groups for m in g]
    if flat != list(range(t.order)):
        raise ValueError(
            f"partition covers modes {flat}, tensor has order {t.order}"
        )
    new_dims = [int(np.prod([t.dims[m] for m in g])) for g in partition.groups]
    return Tensor(t.data.reshape(new_dims))


def extract_subtensor(t: Tensor, index_sets: Sequence[Sequence[int]]) -> Tensor:
    """Restrict each mode to the given coordinate subset (0-based)."""
    if len(index_sets) != t.order:
        raise ValueError(f"need {t.order} index sets, got {len(index_sets)}")
    sets = []
    for k, s in enumerate(index_sets):
        idx = [int(i) for i in s]
        if not idx:
            raise ValueError(f"empty index set for mode {k}")
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate index in set for mode {k}")
        if min(idx) < 0 or max(idx) >= t.dims[k]:
            raise ValueError(f"index out of range for mode {k}: {idx}")
        sets.append(idx)
    return Tensor(t.data[np.ix_(*sets)])


def split_coordinates(n: int, ell: int) -> list[list[int]]:
    """Split [0, n) into ell contiguous blocks, sizes differing by at most 1.

    Larger blocks come first: split_coordinates(10, 3) -> [0..3], [4..6], [7..9].
    """
    if ell < 1 or n < ell:
        raise ValueError(f"need 1 <= ell <= n, got n={n}, ell={ell}")
    base, extra = divmod(n, ell)
    blocks = []
    start = 0
    for k in range(ell):
        size = base + (1 if k < extra else 0)
        blocks.append(list(range(start, start + size)))
        start += size
    return blocks


def norm(t: Tensor, kind: str = "frobenius") -> float:
    if kind == "frobenius":
        return float(np.linalg.norm(t.data.ravel()))
    if kind == "max_abs":
        return float(np.max(np.abs(t.data)))
    raise ValueError(f"unknown norm kind {kind!r}")
