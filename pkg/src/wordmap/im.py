"""Iterative Mapping: greedy refinement of a source -> target word assignment.

The objective compares every pair of source words with the pair of targets
they are mapped to::

    L(M) = sum_{p<q} (D_X(x_p, x_q) - D_Y(M(x_p), M(x_q)))^2

Sources may be mapped to a *virtual* token that sits at distance ``c`` from
every word, itself included. One epoch visits every source once, in a seeded
random order, and moves it to the target with the strictly smallest loss.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .embeddings import EmbeddingSpace

VIRTUAL = -1
UNASSIGNED = -2
VIRTUAL_TOKEN = "__VIRTUAL__"

CANDIDATE_SETS = ("real", "real+virtual")


@dataclass(eq=False)
class Mapping:
    """Assignment of every source id to a target id, ``VIRTUAL`` or ``UNASSIGNED``.

    Several sources may share a target. ``virtual_distance`` is the constant
    distance of the virtual token and is needed only once a source is virtual.
    """

    assignment: np.ndarray
    virtual_distance: Optional[float] = None

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64).copy()
        if np.any(self.assignment < UNASSIGNED):
            raise ValueError("invalid target reference in assignment")
        if self.virtual_distance is not None and not self.virtual_distance > 0:
            raise ValueError("virtual distance c must be positive")

    def __len__(self):
        return self.assignment.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, Mapping)
            and np.array_equal(self.assignment, other.assignment)
            and self.virtual_distance == other.virtual_distance
        )

    def pairs(self) -> List[tuple]:
        """(source id, target id) for every source with a real target."""
        real = np.flatnonzero(self.assignment >= 0)
        return [(int(s), int(self.assignment[s])) for s in real]

    @property
    def n_real(self) -> int:
        return int(np.sum(self.assignment >= 0))

    @property
    def n_virtual(self) -> int:
        return int(np.sum(self.assignment == VIRTUAL))

    def is_complete(self) -> bool:
        return not np.any(self.assignment == UNASSIGNED)

    def moved(self, source_id: int, target: int) -> "Mapping":
        out = Mapping(self.assignment, self.virtual_distance)
        out.assignment[source_id] = target
        return out


def seed_mapping(partial: Mapping, virtual_distance: float) -> Mapping:
    """Complete a partial mapping by sending unassigned sources to the virtual token."""
    a = partial.assignment.copy()
    a[a == UNASSIGNED] = VIRTUAL
    return Mapping(a, virtual_distance)


def default_virtual_distance(X: EmbeddingSpace) -> float:
    """Mean pairwise distance of the source words (1.0 for a single word)."""
    if X.n < 2:
        return 1.0
    c = float(pdist(X.vectors).mean())
    return c if c > 0 else 1.0


@dataclass
class ImConfig:
    max_epochs: int = 100
    rng_seed: int = 0
    restarts: int = 1
    candidates: str = "real"
    n_jobs: int = 1
    chunk_size: int = 512

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.candidates not in CANDIDATE_SETS:
            raise ValueError(f"candidates must be one of {CANDIDATE_SETS}")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    accepted_updates: int


@dataclass(frozen=True)
class RestartSummary:
    seed: int
    loss: float
    epochs: int
    converged: bool


@dataclass
class ImResult:
    """Best restart of :func:`im_optimize`; unpacks as ``(mapping, loss, trace)``."""

    mapping: Mapping
    loss: float
    trace: List[EpochRecord]
    converged: bool
    seed: int
    initial_loss: float
    restarts: List[RestartSummary] = field(default_factory=list)

    def __iter__(self):
        return iter((self.mapping, self.loss, self.trace))

    @property
    def restart_losses(self) -> List[float]:
        return [r.loss for r in self.restarts]


def _require_complete(M: Mapping, n: int):
    if len(M) != n:
        raise ValueError(f"mapping covers {len(M)} sources, space has {n}")
    missing = np.flatnonzero(M.assignment == UNASSIGNED)
    if missing.size:
        raise ValueError(f"source id {missing[0]} is unassigned")
    if M.n_virtual and M.virtual_distance is None:
        raise ValueError("mapping uses the virtual token but has no virtual distance")


def _mapped_distances(Y: EmbeddingSpace, M: Mapping) -> np.ndarray:
    """n x n distances between the targets of every pair of sources."""
    a = M.assignment
    virtual = a == VIRTUAL
    rows = Y.vectors[np.where(virtual, 0, a)]
    d = cdist(rows, rows)
    if virtual.any():
        d[virtual, :] = M.virtual_distance
        d[:, virtual] = M.virtual_distance
    return d


def mapping_loss(X: EmbeddingSpace, Y: EmbeddingSpace, M: Mapping) -> float:
    """Residual sum of squares between source and mapped-target distances."""
    _require_complete(M, X.n)
    if X.n < 2:
        return 0.0
    dx = cdist(X.vectors, X.vectors)
    dy = _mapped_distances(Y, M)
    iu = np.triu_indices(X.n, 1)
    r = dx[iu] - dy[iu]
    return float(r @ r)


def _target_row(Y: EmbeddingSpace, M: Mapping, target: int) -> np.ndarray:
    """Distances from ``target`` to the current target of every source."""
    a = M.assignment
    virtual = a == VIRTUAL
    if target == VIRTUAL:
        return np.full(a.shape[0], float(M.virtual_distance))
    d = np.linalg.norm(Y.vectors[np.where(virtual, 0, a)] - Y.vectors[target], axis=1)
    d[virtual] = M.virtual_distance
    return d


def loss_delta(
    X: EmbeddingSpace, Y: EmbeddingSpace, M: Mapping, source_id: int, new_target: int
) -> float:
    """Change in :func:`mapping_loss` if ``source_id`` is moved to ``new_target``.

    Only the n-1 pairs containing ``source_id`` are touched.
    """
    if M.assignment[source_id] == UNASSIGNED:
        raise ValueError(f"source id {source_id} is unassigned")
    if new_target == VIRTUAL and M.virtual_distance is None:
        raise ValueError("moving to the virtual token requires a virtual distance")
    old = int(M.assignment[source_id])
    if new_target == old:
        return 0.0
    dx = np.linalg.norm(X.vectors - X.vectors[source_id], axis=1)
    new_row = _target_row(Y, M, new_target)
    old_row = _target_row(Y, M, old)
    mask = np.ones(X.n, dtype=bool)
    mask[source_id] = False
    a, b, c = dx[mask], new_row[mask], old_row[mask]
    return float(np.sum((a - b) ** 2) - np.sum((a - c) ** 2))


def random_init(X: EmbeddingSpace, Y: EmbeddingSpace, seed: int) -> Mapping:
    """Every source gets an independent uniformly random real target."""
    if Y.n < 1:
        raise ValueError("empty target space")
    rng = np.random.default_rng(seed)
    return Mapping(rng.integers(0, Y.n, size=X.n))


class _Search:
    """Dense working state shared by all restarts of one optimisation problem.

    The virtual token is stored as an extra target row/column ``m`` of the
    augmented target distance matrix, so real and virtual targets are handled
    by the same arithmetic.
    """

    def __init__(self, X: EmbeddingSpace, Y: EmbeddingSpace, c: float, config: ImConfig):
        self.n, self.m = X.n, Y.n
        self.dx = cdist(X.vectors, X.vectors)
        np.fill_diagonal(self.dx, 0.0)
        daug = np.full((self.m + 1, self.m + 1), float(c))
        daug[: self.m, : self.m] = cdist(Y.vectors, Y.vectors)
        np.fill_diagonal(daug[: self.m, : self.m], 0.0)
        self.daug = daug
        self.n_cand = self.m + 1 if config.candidates == "real+virtual" else self.m
        self.config = config
        self.pool = ThreadPoolExecutor(config.n_jobs) if config.n_jobs > 1 else None
        starts = range(0, self.n_cand, config.chunk_size)
        self.chunks = [slice(s, min(s + config.chunk_size, self.n_cand)) for s in starts]

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def loss(self, assign: np.ndarray) -> float:
        dy = self.daug[np.ix_(assign, assign)]
        iu = np.triu_indices(self.n, 1)
        r = self.dx[iu] - dy[iu]
        return float(r @ r)

    def _candidate_costs(self, dym, rowsq, a, a_sq, i):
        def chunk_cost(sl):
            block = dym[sl]
            return rowsq[sl] - block[:, i] ** 2 - 2.0 * (block @ a) + a_sq

        if self.pool is None:
            parts = [chunk_cost(sl) for sl in self.chunks]
        else:
            parts = list(self.pool.map(chunk_cost, self.chunks))
        return np.concatenate(parts)

    def run(self, assign: np.ndarray, seed: int):
        rng = np.random.default_rng(seed)
        assign = assign.copy()
        dym = self.daug[:, assign]  # (m+1) x n: distance from each target to each source's target
        others = np.ones(self.n, dtype=bool)
        trace = []
        converged = False
        for epoch in range(1, self.config.max_epochs + 1):
            rowsq = np.einsum("ij,ij->i", dym, dym)
            accepted = 0
            for i in rng.permutation(self.n):
                a = self.dx[i].copy()
                a[i] = 0.0
                costs = self._candidate_costs(dym, rowsq, a, a @ a, i)
                best = int(np.argmin(costs))
                cur = int(assign[i])
                if best == cur:
                    continue
                # confirm on the exact residuals so rounding never accepts a non-improvement
                others[i] = False
                f_cur = np.sum((a[others] - dym[cur, others]) ** 2)
                f_new = np.sum((a[others] - dym[best, others]) ** 2)
                others[i] = True
                if f_new < f_cur * (1.0 - 1e-12):
                    old_col = dym[:, i].copy()
                    dym[:, i] = self.daug[:, best]
                    rowsq += dym[:, i] ** 2 - old_col**2
                    assign[i] = best
                    accepted += 1
            trace.append(EpochRecord(epoch, self.loss(assign), accepted))
            if accepted == 0:
                converged = True
                break
        return assign, trace, converged


def _to_internal(M: Mapping, m: int) -> np.ndarray:
    return np.where(M.assignment == VIRTUAL, m, M.assignment)


def _to_external(assign: np.ndarray, m: int) -> np.ndarray:
    return np.where(assign == m, VIRTUAL, assign)


def im_optimize(
    X: EmbeddingSpace,
    Y: EmbeddingSpace,
    M_init: Mapping,
    config: Optional[ImConfig] = None,
) -> ImResult:
    """Greedy Iterative Mapping from ``M_init``.

    Restart ``r`` uses the source-order seed ``config.rng_seed + r``; the run
    with the smallest final loss is returned (ties go to the earlier restart).
    If ``M_init`` has virtual sources but no virtual distance, the mean
    pairwise source distance is used.
    """
    config = config or ImConfig()
    if Y.n < 1:
        raise ValueError("empty target space")
    if M_init.virtual_distance is None:
        M_init = replace(M_init, virtual_distance=default_virtual_distance(X))
    _require_complete(M_init, X.n)
    c = M_init.virtual_distance
    search = _Search(X, Y, c, config)
    try:
        start = _to_internal(M_init, Y.n)
        initial = search.loss(start)
        best = None
        summaries = []
        for r in range(config.restarts):
            seed = config.rng_seed + r
            assign, trace, converged = search.run(start, seed)
            loss = trace[-1].loss
            summaries.append(RestartSummary(seed, loss, len(trace), converged))
            if best is None or loss < best.loss:
                mapping = Mapping(_to_external(assign, Y.n), c)
                best = ImResult(mapping, loss, trace, converged, seed, initial)
        best.restarts = summaries
        return best
    finally:
        search.close()


def save_mapping_tsv(M: Mapping, src_tokens, tgt_tokens, path) -> None:
    """``source<TAB>target`` per assigned source; virtual targets as ``__VIRTUAL__``."""
    with open(path, "w", encoding="utf-8", errors="surrogateescape", newline="\n") as fh:
        for s, t in enumerate(M.assignment):
            if t == UNASSIGNED:
                continue
            tok = VIRTUAL_TOKEN if t == VIRTUAL else tgt_tokens[t]
            fh.write(f"{src_tokens[s]}\t{tok}\n")


def load_mapping_tsv(path, src_vocab, tgt_vocab, virtual_distance=None) -> Mapping:
    """Inverse of :func:`save_mapping_tsv`; sources absent from the file stay unassigned."""
    a = np.full(len(src_vocab), UNASSIGNED, dtype=np.int64)
    with open(path, encoding="utf-8", errors="surrogateescape") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two tab-separated fields")
            src, tgt = parts
            if src not in src_vocab:
                raise KeyError(f"{path}:{lineno}: unknown source token {src!r}")
            if tgt == VIRTUAL_TOKEN:
                a[src_vocab.id(src)] = VIRTUAL
            elif tgt in tgt_vocab:
                a[src_vocab.id(src)] = tgt_vocab.id(tgt)
            else:
                raise KeyError(f"{path}:{lineno}: unknown target token {tgt!r}")
    return Mapping(a, virtual_distance)


def save_trace_csv(trace: List[EpochRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "accepted_updates"])
        for rec in trace:
            w.writerow([rec.epoch, repr(rec.loss), rec.accepted_updates])
