"""Monolingual embedding spaces: loading, saving, normalization and subsetting.

Files use the word2vec text format. Line order in the file is taken as the
frequency rank (line 1 after the header is the most frequent word).
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Optional, Sequence, Union

import numpy as np

PathOrStream = Union[str, os.PathLike, BinaryIO]

NORMALIZE_MODES = ("none", "unit-length", "center-then-unit")


class EmbeddingFormatError(ValueError):
    """Raised for malformed word2vec text input."""


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Ordered unique tokens plus a frequency rank per word id (0 = most frequent)."""

    tokens: tuple
    rank: np.ndarray = None

    def __post_init__(self):
        tokens = tuple(self.tokens)
        object.__setattr__(self, "tokens", tokens)
        n = len(tokens)
        rank = np.arange(n) if self.rank is None else np.asarray(self.rank, dtype=np.int64)
        if rank.shape != (n,) or not np.array_equal(np.sort(rank), np.arange(n)):
            raise ValueError("rank must be a permutation of 0..n-1")
        rank = rank.copy()
        rank.setflags(write=False)
        object.__setattr__(self, "rank", rank)
        index = {}
        for i, tok in enumerate(tokens):
            if tok in index:
                raise ValueError(f"duplicate token {tok!r} at positions {index[tok]} and {i}")
            index[tok] = i
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def id(self, token: str) -> int:
        return self._index[token]

    def get(self, token: str, default=None):
        return self._index.get(token, default)

    def by_rank(self) -> np.ndarray:
        """Word ids ordered from most to least frequent."""
        order = np.empty(len(self), dtype=np.int64)
        order[self.rank] = np.arange(len(self))
        return order


@dataclass(frozen=True, eq=False)
class EmbeddingSpace:
    """A vocabulary and an n x d matrix of finite row vectors.

    ``parent_ids`` maps each word id back to the space this one was cut from
    (see :func:`top_subset`); it is ``None`` for spaces loaded from disk.
    """

    vocab: Vocabulary
    vectors: np.ndarray
    parent_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D matrix")
        if vectors.shape[0] != len(self.vocab):
            raise ValueError(
                f"{vectors.shape[0]} vectors for a vocabulary of {len(self.vocab)} tokens"
            )
        if vectors.shape[1] < 1:
            raise ValueError("embedding dimension must be positive")
        if not np.all(np.isfinite(vectors)):
            bad = int(np.argwhere(~np.isfinite(vectors))[0, 0])
            raise ValueError(f"non-finite value in vector of {self.vocab.tokens[bad]!r}")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        if self.parent_ids is not None:
            pids = np.asarray(self.parent_ids, dtype=np.int64).copy()
            pids.setflags(write=False)
            object.__setattr__(self, "parent_ids", pids)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def tokens(self) -> tuple:
        return self.vocab.tokens

    def __len__(self):
        return self.n

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.vocab.id(token)]

    def ids(self, tokens: Iterable[str]) -> np.ndarray:
        return np.array([self.vocab.id(t) for t in tokens], dtype=np.int64)


def _open_binary(source: PathOrStream, mode: str = "rb"):
    if isinstance(source, (str, os.PathLike)):
        return open(source, mode), True
    return source, False


def load_embeddings(source: PathOrStream, limit: Optional[int] = None) -> EmbeddingSpace:
    """Read a word2vec text file (path or binary stream).

    Only the first ``limit`` entries are read when ``limit`` is given. Tokens
    are decoded as UTF-8 with ``surrogateescape`` so arbitrary bytes survive a
    save/load round trip.
    """
    if limit is not None and limit < 1:
        raise ValueError("limit must be >= 1")
    stream, owned = _open_binary(source)
    try:
        header = stream.readline()
        parts = header.split()
        if len(parts) != 2:
            raise EmbeddingFormatError(f"line 1: malformed header {header[:80]!r}")
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise EmbeddingFormatError(f"line 1: malformed header {header[:80]!r}") from None
        if count < 0 or dim < 1:
            raise EmbeddingFormatError(f"line 1: invalid sizes {count} {dim}")
        n = count if limit is None else min(limit, count)

        tokens = []
        seen = {}
        vectors = np.empty((n, dim), dtype=np.float64)
        for i in range(n):
            lineno = i + 2
            line = stream.readline()
            if not line:
                raise EmbeddingFormatError(f"line {lineno}: expected {count} entries, file ended")
            fields = line.rstrip(b"\r\n").split(b" ")
            if fields and fields[-1] == b"":
                fields.pop()
            if len(fields) != dim + 1:
                raise EmbeddingFormatError(
                    f"line {lineno}: expected {dim} values, found {len(fields) - 1}"
                )
            token = fields[0].decode("utf-8", errors="surrogateescape")
            if token in seen:
                raise EmbeddingFormatError(
                    f"line {lineno}: duplicate token {token!r} (first seen on line {seen[token]})"
                )
            seen[token] = lineno
            try:
                row = np.array([float(v) for v in fields[1:]])
            except ValueError as exc:
                raise EmbeddingFormatError(f"line {lineno}: {exc}") from None
            if not np.all(np.isfinite(row)):
                raise EmbeddingFormatError(f"line {lineno}: non-finite value for {token!r}")
            vectors[i] = row
            tokens.append(token)
    finally:
        if owned:
            stream.close()
    return EmbeddingSpace(Vocabulary(tokens), vectors)


def save_embeddings(space: EmbeddingSpace, target: PathOrStream, precision: int = 6) -> None:
    """Write ``space`` in word2vec text format, most frequent word first."""
    stream, owned = _open_binary(target, "wb")
    try:
        buf = io.StringIO()
        buf.write(f"{space.n} {space.dim}\n")
        fmt = f"%.{precision}g"
        for i in space.vocab.by_rank():
            buf.write(space.tokens[i])
            buf.write(" ")
            buf.write(" ".join(fmt % v for v in space.vectors[i]))
            buf.write("\n")
        stream.write(buf.getvalue().encode("utf-8", errors="surrogateescape"))
    finally:
        if owned:
            stream.close()


def normalize(space: EmbeddingSpace, mode: str = "none") -> EmbeddingSpace:
    """Return a preprocessed copy of ``space``.

    ``unit-length`` scales every row to norm 1; ``center-then-unit`` subtracts
    the column means first. Zero rows cannot be unit-normalized and raise.
    """
    if mode not in NORMALIZE_MODES:
        raise ValueError(f"unknown normalize mode {mode!r}; expected one of {NORMALIZE_MODES}")
    if mode == "none":
        return space
    vectors = space.vectors
    if mode == "center-then-unit":
        vectors = vectors - vectors.mean(axis=0)
    norms = np.linalg.norm(vectors, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"cannot unit-normalize zero vector of {space.tokens[zero[0]]!r}")
    return EmbeddingSpace(space.vocab, vectors / norms[:, None], space.parent_ids)


def top_subset(space: EmbeddingSpace, n: int) -> EmbeddingSpace:
    """Keep the ``n`` most frequent words, renumbered 0..n-1 in rank order.

    The result's ``parent_ids`` maps new ids back to ids of ``space`` (composed
    through any earlier subsetting, so they always point at the loaded space).
    """
    if not 1 <= n <= space.n:
        raise ValueError(f"subset size {n} out of range 1..{space.n}")
    keep = space.vocab.by_rank()[:n]
    tokens = [space.tokens[i] for i in keep]
    parents = keep if space.parent_ids is None else space.parent_ids[keep]
    return EmbeddingSpace(Vocabulary(tokens), space.vectors[keep], parents)


def from_arrays(tokens: Sequence[str], vectors, rank=None) -> EmbeddingSpace:
    """Convenience constructor used by tests and the synthetic generator."""
    return EmbeddingSpace(Vocabulary(tuple(tokens), rank), vectors)
