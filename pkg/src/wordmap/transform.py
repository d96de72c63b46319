"""Linear projection between spaces and nearest-neighbour translation retrieval.

``fit_linear`` solves the unregularised least-squares problem
``min_T sum_i ||T x_i - y_i||^2`` with a minimum-norm SVD solver. Retrieval
ranks targets by distance to the projected query, optionally re-ranked by
global correction (each target ranks a pool of projected pivot words and a
query is scored by its rank in that list), which demotes hubs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .embeddings import EmbeddingSpace

METRICS = ("cosine", "euclidean")
CORRECTIONS = ("none", "global-correction")


class PoolExhaustedError(ValueError):
    """Not enough source words to build the requested pivot pool."""


@dataclass(frozen=True, eq=False)
class TransformMatrix:
    T: np.ndarray
    fit_residual: float = 0.0

    def __post_init__(self):
        T = np.array(self.T, dtype=np.float64)
        if T.ndim != 2 or not np.all(np.isfinite(T)):
            raise ValueError("transform must be a finite 2-D matrix")
        if self.fit_residual < 0:
            raise ValueError("fit residual must be non-negative")
        T.setflags(write=False)
        object.__setattr__(self, "T", T)

    @property
    def shape(self):
        return self.T.shape

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        """Project row vectors (n x d_s) into the target space (n x d_t)."""
        return np.asarray(vectors) @ self.T.T


@dataclass
class RetrievalConfig:
    metric: str = "cosine"
    correction: str = "none"
    gc_pool_size: int = 5000
    top_k: int = 100

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.correction not in CORRECTIONS:
            raise ValueError(f"correction must be one of {CORRECTIONS}")
        if self.correction == "global-correction" and self.gc_pool_size < 1:
            raise ValueError("gc_pool_size must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


def _design(pairs, X: EmbeddingSpace, Y: EmbeddingSpace):
    if len(pairs) == 0:
        raise ValueError("cannot fit a transform from an empty pair list")
    p = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if np.any(p < 0):
        raise ValueError("virtual or unassigned pairs must be filtered out before fitting")
    xs, ys = X.vectors[p[:, 0]], Y.vectors[p[:, 1]]
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ValueError("non-finite vectors in fitting pairs")
    return xs, ys


def objective(T: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> float:
    """sum_i ||T x_i - y_i||^2."""
    r = xs @ np.asarray(T).T - ys
    return float(np.einsum("ij,ij->", r, r))


def fit_linear(pairs, X: EmbeddingSpace, Y: EmbeddingSpace, orthogonal: bool = False) -> TransformMatrix:
    """Least-squares map from source to target vectors over ``(src_id, tgt_id)`` pairs.

    With ``orthogonal=True`` the map is constrained to be orthogonal
    (Procrustes); this is meant for ablations only.
    """
    xs, ys = _design(pairs, X, Y)
    if orthogonal:
        if X.dim != Y.dim:
            raise ValueError("orthogonal fit needs equal source and target dimensions")
        u, _, vt = np.linalg.svd(ys.T @ xs)
        T = u @ vt
    else:
        sol, *_ = np.linalg.lstsq(xs, ys, rcond=None)
        T = sol.T
    return TransformMatrix(T, objective(T, xs, ys))


def _as_unit(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(norms == 0, 1.0, norms)


def _similarity(queries: np.ndarray, targets: np.ndarray, metric: str) -> np.ndarray:
    """Higher is closer: cosine similarity, or negated Euclidean distance."""
    if metric == "cosine":
        return _as_unit(queries) @ _as_unit(targets).T
    return -cdist(queries, targets)


def _check_top_k(top_k: int, m: int):
    if not 1 <= top_k <= m:
        raise ValueError(f"top_k={top_k} out of range 1..{m}")


def _rank_by_similarity(sim_row: np.ndarray, top_k: int) -> np.ndarray:
    ids = np.arange(sim_row.shape[0])
    order = np.lexsort((ids, -sim_row))
    return order[:top_k]


def translate(
    T: TransformMatrix,
    source_id: int,
    X: EmbeddingSpace,
    Y: EmbeddingSpace,
    config: Optional[RetrievalConfig] = None,
) -> np.ndarray:
    """Top-k target ids for one source word, closest first (ties: lower id)."""
    return translate_many(T, [source_id], X, Y, config)[0]


def translate_many(
    T: TransformMatrix,
    source_ids: Sequence[int],
    X: EmbeddingSpace,
    Y: EmbeddingSpace,
    config: Optional[RetrievalConfig] = None,
    batch_size: int = 256,
) -> List[np.ndarray]:
    """Uncorrected nearest-neighbour retrieval for several source words."""
    config = config or RetrievalConfig()
    _check_top_k(config.top_k, Y.n)
    q = T.apply(X.vectors[np.asarray(source_ids, dtype=np.int64)])
    out = []
    for start in range(0, q.shape[0], batch_size):
        sim = _similarity(q[start : start + batch_size], Y.vectors, config.metric)
        out.extend(_rank_by_similarity(row, config.top_k) for row in sim)
    return out


def pivot_ids(query_ids: Sequence[int], X: EmbeddingSpace, pool_size: int) -> np.ndarray:
    """Queries followed by the ``pool_size`` most frequent non-query source words."""
    query_ids = np.asarray(query_ids, dtype=np.int64)
    taken = set(query_ids.tolist())
    extra = [i for i in X.vocab.by_rank() if i not in taken][:pool_size]
    if len(extra) < pool_size:
        raise PoolExhaustedError(
            f"pivot pool needs {pool_size} non-query source words, only {len(extra)} available"
        )
    return np.concatenate([query_ids, np.asarray(extra, dtype=np.int64)])


def gc_rank_table(
    pivots: np.ndarray,
    targets: np.ndarray,
    metric: str,
    rows: Optional[int] = None,
    chunk: int = 1024,
) -> np.ndarray:
    """rank[p, t] = position (1 = closest) of pivot p in target t's pivot list.

    Pivot ties are broken by lower pivot index. Only the first ``rows``
    pivots (the queries) are kept, which bounds memory by queries x targets.
    """
    P, m = pivots.shape[0], targets.shape[0]
    rows = P if rows is None else rows
    ranks = np.empty((rows, m), dtype=np.int64)
    for start in range(0, m, chunk):
        sim = _similarity(pivots, targets[start : start + chunk], metric)
        order = np.argsort(-sim, axis=0, kind="stable")
        block = np.empty_like(order)
        np.put_along_axis(block, order, np.arange(1, P + 1)[:, None], axis=0)
        ranks[:, start : start + chunk] = block[:rows]
    return ranks


def gc_retrieve(
    T: TransformMatrix,
    query_ids: Sequence[int],
    X: EmbeddingSpace,
    Y: EmbeddingSpace,
    config: Optional[RetrievalConfig] = None,
    n_jobs: int = 1,
    pool_size: Optional[int] = None,
) -> List[np.ndarray]:
    """Globally corrected retrieval for a batch of queries.

    Each target orders all pivots (projected queries plus ``gc_pool_size``
    frequent source words) by similarity. A query's score for a target is its
    position in that order; targets are returned by ascending position, then
    by raw similarity, then by lower id. ``pool_size`` overrides the
    configured pool size (0 leaves only the queries as pivots).
    """
    config = config or RetrievalConfig(correction="global-correction")
    _check_top_k(config.top_k, Y.n)
    query_ids = np.asarray(query_ids, dtype=np.int64)
    if len(set(query_ids.tolist())) != len(query_ids):
        raise ValueError("query ids must be unique")
    pool = config.gc_pool_size if pool_size is None else pool_size
    pivots = T.apply(X.vectors[pivot_ids(query_ids, X, pool)])
    ranks = gc_rank_table(pivots, Y.vectors, config.metric, rows=len(query_ids))
    ids = np.arange(Y.n)

    def one(qi):
        raw = _similarity(pivots[qi : qi + 1], Y.vectors, config.metric)[0]
        order = np.lexsort((ids, -raw, ranks[qi]))
        return order[: config.top_k]

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            return list(ex.map(one, range(len(query_ids))))
    return [one(qi) for qi in range(len(query_ids))]


def retrieve(T, query_ids, X, Y, config: RetrievalConfig) -> List[np.ndarray]:
    """Dispatch on ``config.correction``."""
    if config.correction == "global-correction":
        return gc_retrieve(T, query_ids, X, Y, config)
    return translate_many(T, query_ids, X, Y, config)


def hub_statistics(
    Y: EmbeddingSpace,
    T: TransformMatrix,
    sample: Sequence[int],
    X: EmbeddingSpace,
    k: int,
    config: Optional[RetrievalConfig] = None,
) -> np.ndarray:
    """How many sampled queries list each target among their top ``k``.

    ``config`` selects the retrieval rule (metric and correction); its
    ``top_k`` is overridden by ``k``.
    """
    config = config or RetrievalConfig()
    cfg = RetrievalConfig(config.metric, config.correction, config.gc_pool_size, k)
    lists = retrieve(T, list(sample), X, Y, cfg)
    counts = np.zeros(Y.n, dtype=np.int64)
    for lst in lists:
        counts[lst] += 1
    return counts


def save_transform(T: TransformMatrix, path, digits: int = 9) -> None:
    d_t, d_s = T.shape
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{d_t} {d_s}\n")
        for row in T.T:
            fh.write(" ".join(f"{v:.{digits}g}" for v in row) + "\n")


def load_transform(path) -> TransformMatrix:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed header")
        d_t, d_s = int(header[0]), int(header[1])
        rows = [line.split() for line in fh if line.strip()]
    T = np.array(rows, dtype=np.float64)
    if T.shape != (d_t, d_s):
        raise ValueError(f"{path}: expected {d_t}x{d_s} matrix, found {T.shape}")
    return TransformMatrix(T)


def save_translations_tsv(path, source_tokens, ranked_lists, Y: EmbeddingSpace, scores=None) -> None:
    """``source<TAB>rank<TAB>target<TAB>score`` rows, rank starting at 1."""
    with open(path, "w", encoding="utf-8", errors="surrogateescape", newline="\n") as fh:
        for qi, (tok, lst) in enumerate(zip(source_tokens, ranked_lists)):
            for r, t in enumerate(lst, 1):
                score = "" if scores is None else f"{scores[qi][r - 1]:.6g}"
                fh.write(f"{tok}\t{r}\t{Y.tokens[t]}\t{score}\n")


def retrieval_scores(T, source_ids, X, Y, ranked_lists, metric) -> List[np.ndarray]:
    """Raw similarity (cosine, or negated distance) of each listed target."""
    q = T.apply(X.vectors[np.asarray(source_ids, dtype=np.int64)])
    return [
        _similarity(q[i : i + 1], Y.vectors[lst], metric)[0] for i, lst in enumerate(ranked_lists)
    ]
