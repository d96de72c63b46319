"""Local spectral signatures of words and mutual-nearest-neighbour seed pairs.

Each word is described by the sorted eigenvalues of ``I - S`` where ``S`` holds
Gaussian similarities among the word and its nearest neighbours. The
signature only depends on the pairwise distances inside the neighbourhood, so
it is unchanged by rotations and translations of the whole space, which is what
lets two independently trained spaces be compared directly.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.spatial.distance import cdist

from .embeddings import EmbeddingSpace
from .im import UNASSIGNED, Mapping

Bandwidth = Union[str, float]


def gaussian_similarity(d, sigma: float):
    """exp(-d^2 / (2 sigma^2)); works elementwise on arrays."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    out = np.exp(-(d * d) / (2.0 * sigma * sigma))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class NeighborhoodGraph:
    """A word, its k-1 nearest neighbours, their distance matrix and bandwidth.

    ``degenerate`` is set when every member coincides, in which case the
    automatic bandwidth would be zero and 1.0 is used instead.
    """

    center: int
    member_ids: np.ndarray
    distances: np.ndarray
    sigma: float
    degenerate: bool = False

    def __post_init__(self):
        d = self.distances
        if d.shape != (len(self.member_ids),) * 2:
            raise ValueError("distance matrix does not match member count")
        if not np.array_equal(d, d.T) or np.any(np.diag(d) != 0):
            raise ValueError("distance matrix must be symmetric with zero diagonal")
        if int(np.sum(self.member_ids == self.center)) != 1:
            raise ValueError("center word must appear exactly once among members")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def k(self) -> int:
        return len(self.member_ids)


@dataclass(frozen=True, eq=False)
class SpectralFeatures:
    """Row i holds the descending eigenvalues for word i of ``space``."""

    k: int
    features: np.ndarray
    tokens: tuple = ()
    degenerate: np.ndarray = None

    def __len__(self):
        return self.features.shape[0]


def pairwise_distances(space: EmbeddingSpace) -> np.ndarray:
    """Exact Euclidean distance matrix; symmetric with an exactly zero diagonal."""
    d = cdist(space.vectors, space.vectors)
    np.fill_diagonal(d, 0.0)
    return d


def _check_k(k: int, n: int):
    if not 2 <= k <= n:
        raise ValueError(f"neighbourhood size k={k} out of range 2..{n}")


def _nearest_members(row: np.ndarray, word_id: int, k: int) -> np.ndarray:
    others = np.delete(np.arange(row.shape[0]), word_id)
    # lexsort: last key is primary, so distance first then lower id
    order = others[np.lexsort((others, row[others]))]
    return np.concatenate(([word_id], order[: k - 1]))


def _make_graph(members: np.ndarray, sub: np.ndarray, bandwidth: Bandwidth) -> NeighborhoodGraph:
    k = len(members)
    sub = np.maximum(sub, sub.T)
    np.fill_diagonal(sub, 0.0)
    degenerate = False
    if bandwidth == "auto":
        sigma = float(sub[np.triu_indices(k, 1)].mean()) if k > 1 else 0.0
        if sigma <= 0:
            sigma, degenerate = 1.0, True
    else:
        sigma = float(bandwidth)
        if not sigma > 0:
            raise ValueError(f"fixed bandwidth must be positive, got {bandwidth}")
    return NeighborhoodGraph(int(members[0]), members, sub, sigma, degenerate)


def _graph_from_distances(dist: np.ndarray, word_id: int, k: int, bandwidth: Bandwidth):
    members = _nearest_members(dist[word_id], word_id, k)
    return _make_graph(members, dist[np.ix_(members, members)], bandwidth)


def build_neighborhood(
    space: EmbeddingSpace, word_id: int, k: int, bandwidth: Bandwidth = "auto"
) -> NeighborhoodGraph:
    """Neighbourhood of ``word_id``: itself plus its k-1 nearest words.

    Neighbours are ranked by Euclidean distance with ties going to the lower
    word id. ``bandwidth="auto"`` sets sigma to the mean off-diagonal distance.
    """
    _check_k(k, space.n)
    if not 0 <= word_id < space.n:
        raise IndexError(f"word id {word_id} out of range")
    row = cdist(space.vectors[word_id : word_id + 1], space.vectors)[0]
    row[word_id] = 0.0
    members = _nearest_members(row, word_id, k)
    pts = space.vectors[members]
    return _make_graph(members, cdist(pts, pts), bandwidth)


def spectral_embedding(graph: NeighborhoodGraph) -> np.ndarray:
    """Eigenvalues of ``I - S`` for the graph's similarity matrix, descending."""
    s = gaussian_similarity(graph.distances, graph.sigma)
    lap = np.eye(graph.k) - s
    try:
        vals = np.linalg.eigvalsh(lap)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"eigensolver failed for word {graph.center}: {exc}"
        ) from exc
    return vals[::-1].copy()


def spectral_features(
    space: EmbeddingSpace,
    k: int,
    bandwidth: Bandwidth = "auto",
    n_jobs: int = 1,
    distances: Optional[np.ndarray] = None,
) -> SpectralFeatures:
    """Spectral signature for every word of ``space``.

    ``distances`` may carry a precomputed :func:`pairwise_distances` matrix.
    Words are independent, so ``n_jobs > 1`` splits them across threads; the
    output is identical to the sequential result.
    """
    _check_k(k, space.n)
    dist = pairwise_distances(space) if distances is None else distances

    def one(i):
        try:
            g = _graph_from_distances(dist, i, k, bandwidth)
            return spectral_embedding(g), g.degenerate
        except Exception as exc:
            raise type(exc)(f"word {i} ({space.tokens[i]!r}): {exc}") from exc

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            rows = list(pool.map(one, range(space.n)))
    else:
        rows = [one(i) for i in range(space.n)]
    feats = np.array([r[0] for r in rows]).reshape(space.n, k)
    flags = np.array([r[1] for r in rows], dtype=bool)
    return SpectralFeatures(k, feats, space.tokens, flags)


def _nearest(dist: np.ndarray) -> np.ndarray:
    # np.argmin returns the first (lowest id) minimum
    return np.argmin(dist, axis=1)


def mutual_nn_pairs(src: SpectralFeatures, tgt: SpectralFeatures) -> Mapping:
    """Pairs (p, q) that are each other's nearest neighbour in feature space.

    Sources without a mutual partner are left unassigned.
    """
    if src.k != tgt.k:
        raise ValueError(f"feature sizes differ: {src.k} vs {tgt.k}")
    assignment = np.full(len(src), UNASSIGNED, dtype=np.int64)
    if len(src) == 0 or len(tgt) == 0:
        return Mapping(assignment)
    d = cdist(src.features, tgt.features)
    fwd = _nearest(d)
    back = _nearest(d.T)
    mutual = back[fwd] == np.arange(len(src))
    assignment[mutual] = fwd[mutual]
    return Mapping(assignment)


def save_features_csv(features: SpectralFeatures, path, digits: int = 9) -> None:
    """One row per word: token followed by its k eigenvalues."""
    with open(path, "w", newline="", encoding="utf-8", errors="surrogateescape") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["token"] + [f"lambda{j + 1}" for j in range(features.k)])
        for tok, row in zip(features.tokens, features.features):
            w.writerow([tok] + [f"{v:.{digits}g}" for v in row])

