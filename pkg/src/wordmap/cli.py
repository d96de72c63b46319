"""Command-line entry point: ``wordmap <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from .embeddings import NORMALIZE_MODES, load_embeddings, normalize, top_subset
from .evaluation import (
    DEFAULT_K_VALUES,
    BilingualDictionary,
    dictionary_sensitivity,
    frequency_band_overlap,
    band_counts,
    precision_at_k,
)
from .im import (
    CANDIDATE_SETS,
    ImConfig,
    Mapping,
    default_virtual_distance,
    im_optimize,
    load_mapping_tsv,
    random_init,
    save_mapping_tsv,
    save_trace_csv,
    seed_mapping,
)
from .pipeline import PipelineConfig, PipelineError, run_pipeline
from .spectral import mutual_nn_pairs, save_features_csv, spectral_features
from .synth import CLOUDS, MAP_KINDS, generate, gold_dictionary, save_instance
from .transform import (
    CORRECTIONS,
    METRICS,
    RetrievalConfig,
    fit_linear,
    load_transform,
    retrieval_scores,
    retrieve,
    save_transform,
    save_translations_tsv,
)


class UsageError(Exception):
    pass


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _bandwidth(text):
    return text if text == "auto" else float(text)


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load(path, mode="none", size=None):
    space = normalize(load_embeddings(path), mode)
    if size is not None:
        space = top_subset(space, min(size, space.n))
    return space


def _add_spaces(p, size_flag="--working-set", size_default=2000):
    p.add_argument("--source", required=True, help="source embeddings (word2vec text)")
    p.add_argument("--target", required=True, help="target embeddings (word2vec text)")
    p.add_argument(size_flag, dest="size", type=int, default=size_default,
                   help=f"keep this many most frequent words (default {size_default})")
    p.add_argument("--normalize", choices=NORMALIZE_MODES, default="none")


def _add_retrieval(p):
    p.add_argument("--metric", choices=METRICS, default="cosine")
    p.add_argument("--correction", choices=CORRECTIONS, default="none")
    p.add_argument("--gc-pool-size", type=int, default=None,
                   help="pivot pool size for global correction (default 5000)")


def _retrieval_config(args, top_k=100):
    if args.gc_pool_size is not None and args.correction != "global-correction":
        raise UsageError("--gc-pool-size only applies with --correction global-correction")
    pool = 5000 if args.gc_pool_size is None else args.gc_pool_size
    return RetrievalConfig(args.metric, args.correction, pool, top_k)


def cmd_synth(args):
    inst = generate(args.n, args.d, args.map_kind, args.noise, args.seed, args.cloud)
    paths = save_instance(inst, args.out)
    gold_dictionary(inst).save_tsv(os.path.join(args.out, "gold.tsv"))
    print(f"wrote {paths['source']}, {paths['target']}, {paths['true_map']}")


def cmd_spectral_init(args):
    X = _load(args.source, args.normalize, args.size)
    Y = _load(args.target, args.normalize, args.size)
    fs = spectral_features(X, args.k, args.bandwidth)
    ft = spectral_features(Y, args.k, args.bandwidth)
    pairs = mutual_nn_pairs(fs, ft)
    os.makedirs(args.out, exist_ok=True)
    save_mapping_tsv(pairs, X.tokens, Y.tokens, os.path.join(args.out, "seed_pairs.tsv"))
    if args.export_features:
        save_features_csv(fs, os.path.join(args.out, "source_features.csv"))
        save_features_csv(ft, os.path.join(args.out, "target_features.csv"))
    _write_json(os.path.join(args.out, "manifest.json"), {
        "command": "spectral-init", "source": args.source, "target": args.target,
        "working_set": X.n, "k": args.k, "bandwidth": args.bandwidth,
        "normalize": args.normalize, "n_seed_pairs": pairs.n_real,
        "degenerate_source": int(fs.degenerate.sum()), "degenerate_target": int(ft.degenerate.sum()),
    })
    print(f"{pairs.n_real} mutual nearest-neighbour pairs out of {X.n} words")


def cmd_im(args):
    if args.random_init == bool(args.seeds):
        raise UsageError("give exactly one of --seeds FILE or --random-init")
    X = _load(args.source, args.normalize, args.size)
    Y = _load(args.target, args.normalize, args.size)
    c = default_virtual_distance(X) if args.c is None else args.c
    config = ImConfig(args.max_epochs, args.seed, args.restarts, args.candidates)
    if args.random_init:
        init = Mapping(random_init(X, Y, args.seed).assignment, c)
    else:
        init = seed_mapping(load_mapping_tsv(args.seeds, X.vocab, Y.vocab), c)
    res = im_optimize(X, Y, init, config)
    os.makedirs(args.out, exist_ok=True)
    save_mapping_tsv(res.mapping, X.tokens, Y.tokens, os.path.join(args.out, "mapping.tsv"))
    save_trace_csv(res.trace, os.path.join(args.out, "trace.csv"))
    _write_json(os.path.join(args.out, "manifest.json"), {
        "command": "im", "source": args.source, "target": args.target,
        "init": "random" if args.random_init else args.seeds, "virtual_distance": c,
        "config": asdict(config), "final_loss": res.loss, "selected_seed": res.seed,
        "restart_losses": res.restart_losses, "converged": res.converged,
    })
    print(f"final loss {res.loss:.6g} after {len(res.trace)} epochs (seed {res.seed})")


def cmd_fit(args):
    X = _load(args.source, args.normalize, args.size)
    Y = _load(args.target, args.normalize, args.size)
    M = load_mapping_tsv(args.mapping, X.vocab, Y.vocab)
    T = fit_linear(M.pairs(), X, Y, orthogonal=args.orthogonal)
    save_transform(T, args.out)
    print(f"fitted {T.shape[0]}x{T.shape[1]} map on {M.n_real} pairs, residual {T.fit_residual:.6g}")


def _read_words(args, X):
    words = list(args.word or [])
    if args.words:
        with open(args.words, encoding="utf-8", errors="surrogateescape") as fh:
            words += [line.split("\t")[0].strip() for line in fh if line.strip()]
    words = list(dict.fromkeys(words))
    missing = [w for w in words if w not in X.vocab]
    for w in missing:
        print(f"warning: {w!r} not in source vocabulary", file=sys.stderr)
    return [w for w in words if w in X.vocab]


def cmd_translate(args):
    if not args.word and not args.words:
        raise UsageError("give --word and/or --words")
    config = _retrieval_config(args, args.top_k)
    X = _load(args.source, args.normalize, args.size)
    Y = _load(args.target, args.normalize, args.size)
    T = load_transform(args.transform)
    words = _read_words(args, X)
    ids = X.ids(words)
    lists = retrieve(T, ids, X, Y, config)
    scores = retrieval_scores(T, ids, X, Y, lists, config.metric)
    save_translations_tsv(args.out, words, lists, Y, scores)


def _read_predictions(path):
    ranked = {}
    with open(path, encoding="utf-8", errors="surrogateescape") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 3:
                raise ValueError(f"{path}:{lineno}: expected source, rank, target[, score]")
            ranked.setdefault(parts[0], []).append((int(parts[1]), parts[2]))
    return {s: [t for _, t in sorted(v)] for s, v in ranked.items()}


def cmd_eval(args):
    gold = BilingualDictionary.load_tsv(args.gold)
    report = precision_at_k(_read_predictions(args.predictions), gold, args.k,
                            {"predictions": args.predictions, "gold": args.gold})
    if args.out_json:
        report.save_json(args.out_json)
    if args.out_csv:
        report.save_csv(args.out_csv)
    for k in report.k_values:
        print(f"P@{k}\t{report.precision[k]:.4f}")


def cmd_freq_overlap(args):
    X = load_embeddings(args.source)
    Y = load_embeddings(args.target)
    gold = BilingualDictionary.load_tsv(args.gold)
    frac = frequency_band_overlap(gold, X.vocab, Y.vocab, args.band_size, args.bands)
    hits, totals = band_counts(gold, X.vocab, Y.vocab, args.band_size, args.bands)
    rows = [["band", "rank_start", "rank_end", "n_words", "n_in_band", "overlap"]]
    for b in range(args.bands):
        rows.append([b, b * args.band_size, (b + 1) * args.band_size, int(totals[b]),
                     int(hits[b]), "" if np.isnan(frac[b]) else repr(float(frac[b]))])
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        csv.writer(out, lineterminator="\n").writerows(rows)
    finally:
        if args.out:
            out.close()


def cmd_sensitivity(args):
    if args.test and args.test_size is not None:
        raise UsageError("--test and --test-size are mutually exclusive")
    config = _retrieval_config(args)
    X = _load(args.source, args.normalize, args.size)
    Y = _load(args.target, args.normalize, args.size)
    gold = BilingualDictionary.load_tsv(args.gold)
    test = BilingualDictionary.load_tsv(args.test) if args.test else None
    grid = dictionary_sensitivity(X, Y, gold, args.sizes, args.noise, args.seed, test,
                                  args.test_size, config, args.k)
    os.makedirs(args.out, exist_ok=True)
    grid.save_csv(os.path.join(args.out, "sensitivity.csv"))
    grid.save_json(os.path.join(args.out, "sensitivity.json"))
    for c in grid.cells:
        print(f"size={c.size}\tnoise={c.noise}\tP@1={c.report.precision[min(c.report.k_values)]:.4f}")


def cmd_pipeline(args):
    if args.random_init and (args.knn_grid is not None or args.bandwidth is not None):
        raise UsageError("--knn-grid and --bandwidth configure spectral seeding, not --random-init")
    if args.gc_pool_size is not None and args.correction not in (None, "global-correction"):
        raise UsageError("--gc-pool-size only applies with --correction global-correction")
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    overrides = {
        "source_path": args.source, "target_path": args.target, "gold_path": args.gold,
        "output_dir": args.out, "working_set_size": args.working_set,
        "knn_grid": args.knn_grid, "bandwidth": args.bandwidth, "normalize": args.normalize,
        "init": "random" if args.random_init else None, "virtual_distance": args.c,
        "transform_vocab_size": args.vocab_size, "seed": args.seed, "k_values": args.k,
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if args.orthogonal:
        doc["orthogonal"] = True
    im = dict(doc.get("im", {"restarts": 10}))
    for key, val in (("restarts", args.restarts), ("max_epochs", args.max_epochs),
                     ("candidates", args.candidates)):
        if val is not None:
            im[key] = val
    doc["im"] = im
    retrieval = dict(doc.get("retrieval", {}))
    for key, val in (("metric", args.metric), ("correction", args.correction),
                     ("gc_pool_size", args.gc_pool_size)):
        if val is not None:
            retrieval[key] = val
    doc["retrieval"] = retrieval
    config = PipelineConfig.from_dict(doc)
    if config.output_dir is None:
        raise UsageError("an output directory is required (--out or output_dir)")
    result = run_pipeline(config)
    sel = result.alignment.selected
    print(f"selected init={sel.init} k={sel.k} restart={sel.restart} loss={sel.final_loss:.6g}")
    if result.report is not None:
        for k in result.report.k_values:
            print(f"P@{k}\t{result.report.precision[k]:.4f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wordmap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic instance with a hidden mapping")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--map-kind", choices=MAP_KINDS, default="orthogonal")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--cloud", choices=CLOUDS, default="gaussian")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("spectral-init", help="spectral features and mutual-NN seed pairs")
    _add_spaces(p)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--bandwidth", type=_bandwidth, default="auto")
    p.add_argument("--export-features", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectral_init)

    p = sub.add_parser("im", help="Iterative Mapping from seed pairs or a random start")
    _add_spaces(p)
    p.add_argument("--seeds", help="seed pairs TSV from spectral-init")
    p.add_argument("--random-init", action="store_true", help="random initial mapping (IM-Rand)")
    p.add_argument("--c", type=float, default=None, help="virtual token distance")
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--candidates", choices=CANDIDATE_SETS, default="real")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_im)

    p = sub.add_parser("fit", help="least-squares linear map from a mapping TSV")
    _add_spaces(p, "--vocab-size", 50000)
    p.add_argument("--mapping", required=True)
    p.add_argument("--orthogonal", action="store_true", help="Procrustes fit (ablation)")
    p.add_argument("--out", required=True, help="output transform matrix file")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("translate", help="retrieve translations through a fitted map")
    _add_spaces(p, "--vocab-size", 50000)
    p.add_argument("--transform", required=True)
    p.add_argument("--word", action="append")
    p.add_argument("--words", help="file with one query word per line")
    p.add_argument("--top-k", type=int, default=10)
    _add_retrieval(p)
    p.add_argument("--out", required=True, help="translations TSV")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("eval", help="precision@k of a translations TSV")
    p.add_argument("--predictions", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--k", type=_int_list, default=list(DEFAULT_K_VALUES))
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("freq-overlap", help="same-frequency-band translation overlap")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--band-size", type=int, default=1000)
    p.add_argument("--bands", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_freq_overlap)

    p = sub.add_parser("sensitivity", help="precision over dictionary size x corruption grid")
    _add_spaces(p, "--vocab-size", 50000)
    p.add_argument("--gold", required=True)
    p.add_argument("--test", help="explicit test dictionary TSV")
    p.add_argument("--test-size", type=int, default=None)
    p.add_argument("--sizes", type=_int_list, required=True)
    p.add_argument("--noise", type=_float_list, default=[0.0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=_int_list, default=list(DEFAULT_K_VALUES))
    _add_retrieval(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--source")
    p.add_argument("--target")
    p.add_argument("--gold")
    p.add_argument("--out")
    p.add_argument("--working-set", type=int)
    p.add_argument("--knn-grid", type=_int_list)
    p.add_argument("--bandwidth", type=_bandwidth)
    p.add_argument("--normalize", choices=NORMALIZE_MODES)
    p.add_argument("--random-init", action="store_true", default=None)
    p.add_argument("--c", type=float)
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--candidates", choices=CANDIDATE_SETS)
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--orthogonal", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=_int_list)
    p.add_argument("--metric", choices=METRICS)
    p.add_argument("--correction", choices=CORRECTIONS)
    p.add_argument("--gc-pool-size", type=int)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except PipelineError as exc:
        print(f"wordmap: error {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(f"wordmap {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
