"""Per-chunk sparse index sets and top-k selection."""

from __future__ import annotations

import json
from dataclasses import dataclass
from os import PathLike

import numpy as np

from .errors import DimensionError, ParameterError, SparseIndexError


@dataclass(frozen=True)
class SparseIndexSet:
    """Active column ids for every token chunk.

    ``indices`` has shape ``[*lead, n_chunks, k_max]`` and ``counts`` has
    shape ``[*lead, n_chunks]``; only the first ``counts[...]`` entries of a
    chunk are meaningful. ``lead`` is ``(B, H)`` for attention, ``(B,)`` for MLP.
    """

    indices: np.ndarray
    counts: np.ndarray
    chunk_size: int

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int64)
        cnt = np.ascontiguousarray(self.counts, dtype=np.int64)
        if idx.ndim < 2 or idx.shape[:-1] != cnt.shape:
            raise DimensionError(f"indices {idx.shape} and counts {cnt.shape} disagree")
        if self.chunk_size < 1:
            raise ParameterError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if cnt.size and (cnt.min() < 0 or cnt.max() > idx.shape[-1]):
            raise ParameterError(f"counts must lie in [0, {idx.shape[-1]}]")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "counts", cnt)

    @property
    def k_max(self) -> int:
        return self.indices.shape[-1]

    @property
    def n_chunks(self) -> int:
        return self.indices.shape[-2]

    @property
    def lead_shape(self) -> tuple[int, ...]:
        return self.indices.shape[:-2]

    def active(self) -> np.ndarray:
        """Boolean ``[..., n_chunks, k_max]`` mask of meaningful slots."""
        return np.arange(self.k_max) < self.counts[..., None]

    def validate(self, n: int) -> None:
        """Check every active id is in ``[0, n)`` and unique within its chunk."""
        if self.k_max > n:
            raise ParameterError(f"k_max {self.k_max} exceeds width {n}")
        act = self.active()
        vals = self.indices[act]
        bad = vals[(vals < 0) | (vals >= n)]
        if bad.size:
            raise SparseIndexError(f"index {int(bad[0])} out of range [0, {n})")
        # duplicates: sort active ids per chunk (inactive slots pushed to the end)
        keyed = np.where(act, self.indices, n + np.arange(self.k_max))
        s = np.sort(keyed, axis=-1)
        if np.any(s[..., 1:] == s[..., :-1]):
            raise SparseIndexError("duplicate index within a chunk")

    def chunk_ids(self, *pos: int) -> np.ndarray:
        """Active ids of the chunk at ``pos`` (lead indices then chunk index)."""
        return self.indices[pos][: self.counts[pos]]

    # -- static pattern files -------------------------------------------------

    def to_json_dict(self) -> dict:
        entries = []
        for pos in np.ndindex(*self.counts.shape):
            ids = self.indices[pos][: self.counts[pos]]
            entries.append([*map(int, pos), [int(i) for i in ids]])
        return {"chunk_size": self.chunk_size, "k_max": self.k_max, "entries": entries}

    @classmethod
    def from_json_dict(cls, obj: dict, lead_shape: tuple[int, ...], n_chunks: int) -> "SparseIndexSet":
        """Build an index set from ``{chunk_size, k_max, entries}``.

        Each entry is ``[*lead, chunk, [ids...]]``. Chunks without an entry get
        zero active columns.
        """
        try:
            chunk, k_max, entries = int(obj["chunk_size"]), int(obj["k_max"]), obj["entries"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"malformed sparsity pattern: {exc}") from None
        idx = np.zeros((*lead_shape, n_chunks, k_max), dtype=np.int64)
        cnt = np.zeros((*lead_shape, n_chunks), dtype=np.int64)
        for ent in entries:
            *pos, ids = ent
            pos = tuple(int(p) for p in pos)
            if len(pos) != len(lead_shape) + 1:
                raise ParameterError(f"entry {ent!r} needs {len(lead_shape) + 1} position fields")
            if len(ids) > k_max:
                raise ParameterError(f"entry {ent!r} has more than k_max={k_max} ids")
            try:
                idx[pos][: len(ids)] = ids
                cnt[pos] = len(ids)
            except IndexError:
                raise SparseIndexError(f"entry position {pos} outside {(*lead_shape, n_chunks)}") from None
        return cls(idx, cnt, chunk)


def save_pattern(idx: SparseIndexSet, path: str | PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(idx.to_json_dict(), fh)


def load_pattern(path: str | PathLike, lead_shape: tuple[int, ...], n_chunks: int) -> SparseIndexSet:
    with open(path) as fh:
        return SparseIndexSet.from_json_dict(json.load(fh), lead_shape, n_chunks)


def topk_desc(scores: np.ndarray, k: int) -> np.ndarray:
    """Ids of the ``k`` largest entries along the last axis, largest first.

    Equal scores are ordered by lower id first.
    """
    n = scores.shape[-1]
    if not 1 <= k <= n:
        raise ParameterError(f"k must lie in [1, {n}], got {k}")
    # stable sort on the negated scores keeps lower ids first among ties
    order = np.argsort(-np.asarray(scores), axis=-1, kind="stable")
    return np.ascontiguousarray(order[..., :k], dtype=np.int64)


def full_index_set(lead_shape: tuple[int, ...], n_chunks: int, width: int, chunk: int) -> SparseIndexSet:
    """Every column active for every chunk."""
    idx = np.broadcast_to(np.arange(width, dtype=np.int64), (*lead_shape, n_chunks, width))
    cnt = np.full((*lead_shape, n_chunks), width, dtype=np.int64)
    return SparseIndexSet(idx, cnt, chunk)
