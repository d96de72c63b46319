"""End-to-end unsupervised alignment.

Stages: load and subset both spaces, spectral seeding and Iterative Mapping
over a grid of neighbourhood sizes and restarts, selection of the run with the
lowest mapping loss (no gold data involved), least-squares fit on the larger
transform vocabulary, and retrieval/evaluation of gold test words.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional, Sequence

from . import __version__
from .embeddings import EmbeddingSpace, load_embeddings, normalize, top_subset
from .evaluation import DEFAULT_K_VALUES, BilingualDictionary, EvalReport, evaluate_transform
from .im import (
    ImConfig,
    ImResult,
    Mapping,
    default_virtual_distance,
    im_optimize,
    random_init,
    seed_mapping,
    save_mapping_tsv,
    save_trace_csv,
)
from .spectral import mutual_nn_pairs, pairwise_distances, spectral_features
from .transform import (
    RetrievalConfig,
    TransformMatrix,
    fit_linear,
    retrieval_scores,
    retrieve,
    save_transform,
    save_translations_tsv,
)

INITS = ("spectral", "random")


class PipelineError(RuntimeError):
    """A failure inside one pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


@dataclass
class PipelineConfig:
    source_path: Optional[str] = None
    target_path: Optional[str] = None
    gold_path: Optional[str] = None
    output_dir: Optional[str] = None
    working_set_size: int = 2000
    knn_grid: List[int] = field(default_factory=lambda: [10, 20, 30, 40, 50])
    bandwidth: object = "auto"
    normalize: str = "none"
    init: str = "spectral"
    virtual_distance: Optional[float] = None
    im: ImConfig = field(default_factory=lambda: ImConfig(restarts=10))
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    transform_vocab_size: int = 50000
    orthogonal: bool = False
    k_values: List[int] = field(default_factory=lambda: list(DEFAULT_K_VALUES))
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.im, dict):
            self.im = ImConfig(**self.im)
        if isinstance(self.retrieval, dict):
            self.retrieval = RetrievalConfig(**self.retrieval)
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        for name in ("working_set_size", "transform_vocab_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not self.knn_grid or min(self.knn_grid) < 2:
            raise ValueError("knn_grid needs values >= 2")
        if self.virtual_distance is not None and not self.virtual_distance > 0:
            raise ValueError("virtual_distance must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RunRecord:
    init: str
    k: Optional[int]
    restart: int
    seed: int
    n_seed_pairs: int
    initial_loss: float
    final_loss: float
    epochs: int
    converged: bool


@dataclass
class Alignment:
    """Outcome of the unsupervised stages on the working sets."""

    mapping: Mapping
    loss: float
    selected: RunRecord
    runs: List[RunRecord]
    result: ImResult
    seed_pairs: Optional[Mapping] = None
    skipped_k: List[int] = field(default_factory=list)


def _run_records(init, k, res: ImResult, n_seed):
    return [
        RunRecord(init, k, r, s.seed, n_seed, res.initial_loss, s.loss, s.epochs, s.converged)
        for r, s in enumerate(res.restarts)
    ]


def align(
    X: EmbeddingSpace,
    Y: EmbeddingSpace,
    knn_grid: Sequence[int] = (10, 20, 30, 40, 50),
    im_config: Optional[ImConfig] = None,
    init: str = "spectral",
    bandwidth="auto",
    virtual_distance: Optional[float] = None,
    seed: int = 0,
) -> Alignment:
    """Search k and restarts for the mapping of X onto Y with the lowest loss.

    With ``init="random"`` every restart starts from its own random mapping
    (seed ``seed + r``) and the k grid is not used.
    """
    im_config = im_config or ImConfig()
    c = virtual_distance or default_virtual_distance(X)
    cfg = ImConfig(**{**asdict(im_config), "rng_seed": seed})
    candidates = []  # (loss, order, record, result, seeds)
    runs: List[RunRecord] = []
    skipped = []
    if init == "random":
        single = ImConfig(**{**asdict(cfg), "restarts": 1})
        for r in range(cfg.restarts):
            s = seed + r
            res = im_optimize(X, Y, random_init(X, Y, s), ImConfig(**{**asdict(single), "rng_seed": s}))
            rec = _run_records("random", None, res, 0)[0]
            rec.restart = r
            runs.append(rec)
            candidates.append((res.loss, len(candidates), rec, res, None))
    elif init == "spectral":
        dx, dy = pairwise_distances(X), pairwise_distances(Y)
        for k in knn_grid:
            if k > min(X.n, Y.n):
                skipped.append(k)
                continue
            fs = spectral_features(X, k, bandwidth, distances=dx)
            ft = spectral_features(Y, k, bandwidth, distances=dy)
            partial = mutual_nn_pairs(fs, ft)
            res = im_optimize(X, Y, seed_mapping(partial, c), cfg)
            recs = _run_records("spectral", k, res, partial.n_real)
            runs.extend(recs)
            best_rec = next(r for r in recs if r.seed == res.seed)
            candidates.append((res.loss, len(candidates), best_rec, res, partial))
    else:
        raise ValueError(f"init must be one of {INITS}")
    if not candidates:
        raise ValueError(f"no k in {list(knn_grid)} fits working sets of size {X.n}/{Y.n}")
    loss, _, rec, res, partial = min(candidates, key=lambda t: (t[0], t[1]))
    return Alignment(res.mapping, loss, rec, runs, res, partial, skipped)


@dataclass
class PipelineResult:
    alignment: Alignment
    transform: TransformMatrix
    report: Optional[EvalReport]
    files: dict


def _write_runs(runs: List[RunRecord], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        names = [f.name for f in fields(RunRecord)]
        w.writerow(names)
        for r in runs:
            w.writerow([repr(v) if isinstance(v, float) else ("" if v is None else v)
                        for v in (getattr(r, n) for n in names)])


def _load_space(path, mode, stage):
    with _stage(stage):
        if path is None:
            raise ValueError("no embeddings path configured")
        if not os.path.exists(path):
            raise FileNotFoundError(f"embeddings file not found: {path}")
        return normalize(load_embeddings(path), mode)


def run_pipeline(
    config: PipelineConfig,
    X: Optional[EmbeddingSpace] = None,
    Y: Optional[EmbeddingSpace] = None,
    gold: Optional[BilingualDictionary] = None,
) -> PipelineResult:
    """Run every stage and, if ``config.output_dir`` is set, write all artifacts.

    In-memory ``X``, ``Y`` and ``gold`` take precedence over configured paths.
    """
    if X is None:
        X = _load_space(config.source_path, config.normalize, "load-source")
    if Y is None:
        Y = _load_space(config.target_path, config.normalize, "load-target")
    if gold is None and config.gold_path:
        with _stage("load-gold"):
            gold = BilingualDictionary.load_tsv(config.gold_path)

    with _stage("subset"):
        ws = min(config.working_set_size, X.n, Y.n)
        Xw, Yw = top_subset(X, ws), top_subset(Y, ws)
        tv = config.transform_vocab_size
        Xt, Yt = top_subset(X, min(tv, X.n)), top_subset(Y, min(tv, Y.n))

    with _stage("align"):
        alignment = align(Xw, Yw, config.knn_grid, config.im, config.init,
                          config.bandwidth, config.virtual_distance, config.seed)

    with _stage("fit"):
        pairs = [(Xt.vocab.id(Xw.tokens[s]), Yt.vocab.id(Yw.tokens[t]))
                 for s, t in alignment.mapping.pairs()]
        transform = fit_linear(pairs, Xt, Yt, orthogonal=config.orthogonal)

    report = None
    lists = sources = None
    if gold is not None:
        with _stage("evaluate"):
            settings = {
                "init": config.init,
                "selected_k": alignment.selected.k,
                "selected_restart": alignment.selected.restart,
                "selected_loss": alignment.loss,
                "seed": config.seed,
                "working_set_size": ws,
                "transform_vocab_size": Xt.n,
            }
            report = evaluate_transform(transform, Xt, Yt, gold, config.retrieval,
                                        config.k_values, settings)
            sources = [s for s in gold.sources() if s in Xt.vocab]
            top_k = min(max(config.k_values), Yt.n)
            r = config.retrieval
            lists = retrieve(transform, Xt.ids(sources), Xt, Yt,
                             RetrievalConfig(r.metric, r.correction, r.gc_pool_size, top_k))

    files = {}
    if config.output_dir:
        with _stage("write"):
            files = _write_outputs(config, alignment, transform, report, Xw, Yw, Xt, Yt,
                                   sources, lists)
    return PipelineResult(alignment, transform, report, files)


def _write_outputs(config, alignment, transform, report, Xw, Yw, Xt, Yt, sources, lists):
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    files = {
        "mapping": "mapping.tsv",
        "trace": "trace.csv",
        "runs": "im_runs.csv",
        "transform": "transform.txt",
    }
    save_mapping_tsv(alignment.mapping, Xw.tokens, Yw.tokens, os.path.join(out, files["mapping"]))
    save_trace_csv(alignment.result.trace, os.path.join(out, files["trace"]))
    _write_runs(alignment.runs, os.path.join(out, files["runs"]))
    save_transform(transform, os.path.join(out, files["transform"]))
    if alignment.seed_pairs is not None:
        files["seed_pairs"] = "seed_pairs.tsv"
        save_mapping_tsv(alignment.seed_pairs, Xw.tokens, Yw.tokens,
                         os.path.join(out, files["seed_pairs"]))
    if report is not None:
        files.update(report_json="report.json", report_csv="report.csv",
                     translations="translations.tsv")
        report.save_json(os.path.join(out, files["report_json"]))
        report.save_csv(os.path.join(out, files["report_csv"]))
        scores = retrieval_scores(transform, Xt.ids(sources), Xt, Yt, lists, config.retrieval.metric)
        save_translations_tsv(os.path.join(out, files["translations"]), sources, lists, Yt, scores)
    manifest = {
        "tool": "wordmap",
        "version": __version__,
        "config": config.to_dict(),
        "selected_run": asdict(alignment.selected),
        "final_loss": alignment.loss,
        "n_real_pairs": alignment.mapping.n_real,
        "n_virtual": alignment.mapping.n_virtual,
        "skipped_k": alignment.skipped_k,
        "fit_residual": transform.fit_residual,
        "files": files,
    }
    files["manifest"] = "manifest.json"
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {k: os.path.join(out, v) for k, v in files.items()}
