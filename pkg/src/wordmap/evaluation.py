"""Evaluation against gold bilingual dictionaries.

Covers precision@k of ranked translations, cross-lingual frequency-band
overlap, the supervised least-squares baseline, and the sensitivity of a
supervised fit to dictionary size and corrupted entries.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from .embeddings import EmbeddingSpace, Vocabulary
from .transform import RetrievalConfig, fit_linear, retrieve

DEFAULT_K_VALUES = (1, 5, 10, 20, 50, 100)


class BilingualDictionary:
    """Source token -> non-empty set of acceptable target tokens."""

    def __init__(self, entries: Optional[Mapping[str, Iterable[str]]] = None):
        self.entries: Dict[str, frozenset] = {}
        for src, tgts in (entries or {}).items():
            tgts = frozenset(tgts)
            if not tgts:
                raise ValueError(f"empty target set for {src!r}")
            self.entries[src] = tgts

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple]) -> "BilingualDictionary":
        merged: Dict[str, set] = {}
        for src, tgt in pairs:
            merged.setdefault(src, set()).add(tgt)
        return cls(merged)

    @classmethod
    def load_tsv(cls, path) -> "BilingualDictionary":
        pairs = []
        with open(path, encoding="utf-8", errors="surrogateescape") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected '<source>\\t<target>'")
                pairs.append((parts[0], parts[1]))
        return cls.from_pairs(pairs)

    def save_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8", errors="surrogateescape", newline="\n") as fh:
            for src, tgt in self.pairs():
                fh.write(f"{src}\t{tgt}\n")

    def __len__(self):
        return len(self.entries)

    def __contains__(self, src):
        return src in self.entries

    def __getitem__(self, src) -> frozenset:
        return self.entries[src]

    def __iter__(self):
        return iter(self.entries)

    def sources(self) -> List[str]:
        return list(self.entries)

    def pairs(self) -> List[tuple]:
        """All (source, target) pairs in a stable order."""
        return [(s, t) for s in self.entries for t in sorted(self.entries[s])]

    def restrict(self, src_vocab: Vocabulary, tgt_vocab: Vocabulary):
        """Drop pairs with an out-of-vocabulary side; returns (dictionary, n_dropped_pairs)."""
        kept = [(s, t) for s, t in self.pairs() if s in src_vocab and t in tgt_vocab]
        return BilingualDictionary.from_pairs(kept), len(self.pairs()) - len(kept)

    def subset(self, sources: Iterable[str]) -> "BilingualDictionary":
        return BilingualDictionary({s: self.entries[s] for s in sources})


@dataclass
class EvalReport:
    k_values: List[int]
    precision: Dict[int, float]
    n_test: int
    n_excluded: int = 0
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "k_values": list(self.k_values),
            "precision": {str(k): self.precision[k] for k in self.k_values},
            "n_test": self.n_test,
            "n_excluded": self.n_excluded,
            "settings": self.settings,
        }

    def save_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "precision"])
            for k in self.k_values:
                w.writerow([k, repr(self.precision[k])])


def precision_at_k(
    predictions: Mapping[str, Sequence[str]],
    gold: BilingualDictionary,
    k_values: Sequence[int] = DEFAULT_K_VALUES,
    settings: Optional[dict] = None,
) -> EvalReport:
    """Fraction of sources whose top-k list contains any gold translation.

    Sources without a gold entry are skipped and counted in ``n_excluded``.
    Lists shorter than k simply cannot hit beyond their length.
    """
    k_values = sorted(set(int(k) for k in k_values))
    if not k_values or k_values[0] < 1:
        raise ValueError("k values must be positive")
    # first position (0-based) of a correct target, or None
    first_hit = []
    excluded = 0
    for src, ranked in predictions.items():
        if src not in gold:
            excluded += 1
            continue
        good = gold[src]
        pos = next((i for i, t in enumerate(ranked) if t in good), None)
        first_hit.append(math.inf if pos is None else pos)
    if not first_hit:
        raise ValueError("no prediction has a gold entry to score against")
    hits = np.asarray(first_hit, dtype=np.float64)
    precision = {k: float(np.mean(hits < k)) for k in k_values}
    return EvalReport(k_values, precision, len(first_hit), excluded, dict(settings or {}))


def band_counts(gold: BilingualDictionary, src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                band_size: int = 1000, n_bands: int = 10):
    """Per-band (hits, denominators) behind :func:`frequency_band_overlap`."""
    if band_size < 1 or n_bands < 1:
        raise ValueError("band_size and n_bands must be positive")
    if band_size * n_bands > min(len(src_vocab), len(tgt_vocab)):
        raise ValueError(
            f"{n_bands} bands of {band_size} exceed vocabulary sizes "
            f"{len(src_vocab)} / {len(tgt_vocab)}"
        )
    hits = np.zeros(n_bands, dtype=np.int64)
    totals = np.zeros(n_bands, dtype=np.int64)
    for src, tgts in gold.entries.items():
        sid = src_vocab.get(src)
        if sid is None:
            continue
        band = int(src_vocab.rank[sid]) // band_size
        if band >= n_bands:
            continue
        tgt_ranks = [int(tgt_vocab.rank[tgt_vocab.id(t)]) for t in tgts if t in tgt_vocab]
        if not tgt_ranks:
            continue
        totals[band] += 1
        if any(r // band_size == band for r in tgt_ranks):
            hits[band] += 1
    return hits, totals


def frequency_band_overlap(gold: BilingualDictionary, src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                           band_size: int = 1000, n_bands: int = 10) -> np.ndarray:
    """For each frequency band, the share of gold source words with a translation in the same band.

    Bands are rank ranges ``[b * band_size, (b + 1) * band_size)``. Source
    words with no in-vocabulary translation do not count; bands with no
    countable words are NaN.
    """
    hits, totals = band_counts(gold, src_vocab, tgt_vocab, band_size, n_bands)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(totals > 0, hits / np.maximum(totals, 1), np.nan)


def _pair_ids(pairs, X: EmbeddingSpace, Y: EmbeddingSpace):
    ids = [(X.vocab.get(s), Y.vocab.get(t)) for s, t in pairs]
    kept = [(s, t) for s, t in ids if s is not None and t is not None]
    return kept, len(ids) - len(kept)


def _retrieval_settings(config: RetrievalConfig) -> dict:
    return {
        "metric": config.metric,
        "correction": config.correction,
        "gc_pool_size": config.gc_pool_size if config.correction != "none" else None,
    }


def evaluate_transform(T, X: EmbeddingSpace, Y: EmbeddingSpace, test: BilingualDictionary,
                       config: Optional[RetrievalConfig] = None,
                       k_values: Sequence[int] = DEFAULT_K_VALUES,
                       settings: Optional[dict] = None) -> EvalReport:
    """Retrieve every in-vocabulary test source through ``T`` and score it."""
    config = config or RetrievalConfig()
    sources = [s for s in test.sources() if s in X.vocab]
    if not sources:
        raise ValueError("empty test set")
    top_k = min(max(k_values), Y.n)
    cfg = RetrievalConfig(config.metric, config.correction, config.gc_pool_size, top_k)
    lists = retrieve(T, X.ids(sources), X, Y, cfg)
    predictions = {s: [Y.tokens[t] for t in lst] for s, lst in zip(sources, lists)}
    report = precision_at_k(predictions, test, k_values)
    report.n_excluded += len(test) - len(sources)
    report.settings = {**_retrieval_settings(config), **(settings or {})}
    return report


def supervised_baseline(train: Sequence[tuple], X: EmbeddingSpace, Y: EmbeddingSpace,
                        test: BilingualDictionary, config: Optional[RetrievalConfig] = None,
                        k_values: Sequence[int] = DEFAULT_K_VALUES,
                        orthogonal: bool = False) -> EvalReport:
    """Fit a linear map on gold ``(source, target)`` token pairs and evaluate it on ``test``."""
    if len(test) == 0:
        raise ValueError("empty test set")
    overlap = {s for s, _ in train} & set(test.sources())
    if overlap:
        raise ValueError(f"{len(overlap)} train sources also appear in the test set, e.g. {sorted(overlap)[0]!r}")
    ids, dropped = _pair_ids(train, X, Y)
    T = fit_linear(ids, X, Y, orthogonal=orthogonal)
    return evaluate_transform(
        T, X, Y, test, config, k_values,
        {"n_train": len(ids), "n_train_dropped": dropped, "fit_residual": T.fit_residual,
         "orthogonal": orthogonal},
    )


@dataclass
class SensitivityCell:
    size: int
    noise: float
    n_corrupted: int
    report: EvalReport


@dataclass
class SensitivityGrid:
    cells: List[SensitivityCell]
    settings: dict = field(default_factory=dict)

    def cell(self, size, noise) -> SensitivityCell:
        for c in self.cells:
            if c.size == size and c.noise == noise:
                return c
        raise KeyError((size, noise))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["size", "noise", "k", "precision"])
            for c in self.cells:
                for k in c.report.k_values:
                    w.writerow([c.size, c.noise, k, repr(c.report.precision[k])])

    def save_json(self, path) -> None:
        doc = {
            "settings": self.settings,
            "cells": [
                {"size": c.size, "noise": c.noise, "n_corrupted": c.n_corrupted,
                 "report": c.report.to_dict()}
                for c in self.cells
            ],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def split_gold(gold: BilingualDictionary, test_size: int, seed: int):
    """Hold out ``test_size`` random gold sources; returns (train_pool_pairs, test_dictionary)."""
    sources = sorted(gold.sources())
    if not 0 < test_size < len(sources):
        raise ValueError(f"test_size must be in 1..{len(sources) - 1}")
    rng = np.random.default_rng([seed, 0])
    held = set(rng.choice(len(sources), size=test_size, replace=False).tolist())
    test = gold.subset(sources[i] for i in sorted(held))
    pool = [(s, t) for s, t in gold.pairs() if s not in test]
    return pool, test


def sample_training_pairs(pool: Sequence[tuple], size: int, seed: int) -> List[tuple]:
    """``size`` distinct pairs drawn from ``pool``; depends only on (pool, size, seed)."""
    if size > len(pool):
        raise ValueError(f"requested {size} training pairs, only {len(pool)} gold pairs available")
    rng = np.random.default_rng([seed, 1, size])
    idx = rng.choice(len(pool), size=size, replace=False)
    return [pool[i] for i in idx]


def corrupt_pairs(pairs: Sequence[tuple], noise: float, gold: BilingualDictionary,
                  Y: EmbeddingSpace, seed: int):
    """Replace the targets of ``ceil(noise * len(pairs))`` pairs with wrong random targets.

    A replacement is uniform over target words that are not gold translations
    of that source. Returns (new pairs, corrupted indices).
    """
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must be in [0, 1]")
    n_bad = math.ceil(noise * len(pairs) - 1e-9)
    rng = np.random.default_rng([seed, 2, len(pairs), int(round(noise * 1_000_000))])
    bad = np.sort(rng.choice(len(pairs), size=n_bad, replace=False))
    out = list(pairs)
    vocab = set(Y.tokens) if n_bad else set()
    for i in bad:
        src = out[i][0]
        forbidden = gold[src] if src in gold else frozenset()
        if len(forbidden & vocab) >= Y.n:
            raise ValueError(f"no wrong target available for {src!r}")
        while True:
            t = Y.tokens[int(rng.integers(Y.n))]
            if t not in forbidden:
                break
        out[i] = (src, t)
    return out, bad


def dictionary_sensitivity(X: EmbeddingSpace, Y: EmbeddingSpace, gold: BilingualDictionary,
                           sizes: Sequence[int], noise_levels: Sequence[float], seed: int = 0,
                           test: Optional[BilingualDictionary] = None, test_size: Optional[int] = None,
                           config: Optional[RetrievalConfig] = None,
                           k_values: Sequence[int] = DEFAULT_K_VALUES) -> SensitivityGrid:
    """Precision of supervised fits over a grid of dictionary sizes and corruption rates.

    Training pairs for a size depend only on (seed, size), so every noise
    level of that size corrupts the same sample and the noise-free cell equals
    :func:`supervised_baseline` on that sample. Without an explicit ``test``
    dictionary, ``test_size`` gold sources (default: a fifth) are held out.
    """
    config = config or RetrievalConfig()
    gold, _ = gold.restrict(X.vocab, Y.vocab)
    if test is None:
        test_size = test_size or max(1, len(gold) // 5)
        pool, test = split_gold(gold, test_size, seed)
    else:
        pool = [(s, t) for s, t in gold.pairs() if s not in test]
    if max(sizes) > len(pool):
        raise ValueError(f"largest size {max(sizes)} exceeds the {len(pool)} available gold pairs")
    cells = []
    for size in sizes:
        train = sample_training_pairs(pool, size, seed)
        for noise in noise_levels:
            noisy, bad = corrupt_pairs(train, noise, gold, Y, seed)
            report = supervised_baseline(noisy, X, Y, test, config, k_values)
            report.settings.update(size=size, noise=noise, seed=seed)
            cells.append(SensitivityCell(size, float(noise), len(bad), report))
    settings = {**_retrieval_settings(config), "seed": seed, "n_test": len(test),
                "sizes": list(sizes), "noise_levels": list(noise_levels)}
    return SensitivityGrid(cells, settings)
