"""Synthetic problem instances with a known hidden correspondence.

A source cloud X is drawn, pushed through a known linear map, perturbed with
Gaussian noise and shuffled to give the target space Y. Target frequency
ranks mirror the source ranks, so rank-based subsetting keeps the two sides
aligned while row order says nothing about the correspondence.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .embeddings import EmbeddingSpace, Vocabulary, save_embeddings

MAP_KINDS = ("orthogonal", "general-linear")
CLOUDS = ("gaussian", "clustered")


@dataclass(frozen=True, eq=False)
class SynthInstance:
    X: EmbeddingSpace
    Y: EmbeddingSpace
    true_map: np.ndarray
    generator_T: np.ndarray
    noise_level: float
    seed: int
    map_kind: str
    cloud: str = "gaussian"

    @property
    def n(self) -> int:
        return self.X.n

    @property
    def d(self) -> int:
        return self.X.dim

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "n": self.n,
            "d": self.d,
            "map_kind": self.map_kind,
            "noise_level": self.noise_level,
            "cloud": self.cloud,
        }


def haar_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed d x d orthogonal matrix (QR of a Gaussian with sign fix)."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _tokens(prefix: str, n: int):
    width = max(4, len(str(n)))
    return [f"{prefix}{i + 1:0{width}d}" for i in range(n)]


def _cloud(n, d, cloud, rng, n_clusters):
    if cloud == "gaussian":
        return rng.standard_normal((n, d))
    centers = 3.0 * rng.standard_normal((n_clusters, d))
    labels = rng.integers(0, n_clusters, size=n)
    return centers[labels] + rng.standard_normal((n, d))


def generate(
    n: int,
    d: int,
    map_kind: str = "orthogonal",
    noise_level: float = 0.0,
    seed: int = 0,
    cloud: str = "gaussian",
    n_clusters: int = 10,
) -> SynthInstance:
    """Draw a synthetic aligned pair of spaces.

    The noise added to each target vector has per-coordinate standard deviation
    ``noise_level * mean_pairwise_distance / sqrt(d)``, i.e. its expected norm
    is ``noise_level`` times the mean distance between clean target points.
    """
    if n < 2 or d < 1:
        raise ValueError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
    if noise_level < 0:
        raise ValueError("noise_level must be non-negative")
    if map_kind not in MAP_KINDS:
        raise ValueError(f"map_kind must be one of {MAP_KINDS}")
    if cloud not in CLOUDS:
        raise ValueError(f"cloud must be one of {CLOUDS}")
    rng = np.random.default_rng(seed)
    x = _cloud(n, d, cloud, rng, n_clusters)
    if map_kind == "orthogonal":
        T = haar_orthogonal(d, rng)
    else:
        T = rng.standard_normal((d, d)) / np.sqrt(d)
    clean = x @ T.T
    if noise_level > 0:
        std = noise_level * float(pdist(clean).mean()) / np.sqrt(d)
        clean = clean + std * rng.standard_normal((n, d))
    perm = rng.permutation(n)
    y = np.empty_like(clean)
    y[perm] = clean
    tgt_rank = np.empty(n, dtype=np.int64)
    tgt_rank[perm] = np.arange(n)

    X = EmbeddingSpace(Vocabulary(_tokens("s", n)), x)
    Y = EmbeddingSpace(Vocabulary(_tokens("t", n), tgt_rank), y)
    return SynthInstance(X, Y, perm, T, float(noise_level), seed, map_kind, cloud)


def gold_dictionary(instance: SynthInstance):
    """One gold entry per source word: the token of its hidden counterpart."""
    from .evaluation import BilingualDictionary

    X, Y = instance.X, instance.Y
    return BilingualDictionary(
        {X.tokens[i]: {Y.tokens[j]} for i, j in enumerate(instance.true_map)}
    )


def save_instance(instance: SynthInstance, outdir, precision: int = 17) -> dict:
    """Write source.vec, target.vec, true_map.tsv and manifest.json; return the paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = {
        "source": os.path.join(outdir, "source.vec"),
        "target": os.path.join(outdir, "target.vec"),
        "true_map": os.path.join(outdir, "true_map.tsv"),
        "manifest": os.path.join(outdir, "manifest.json"),
    }
    save_embeddings(instance.X, paths["source"], precision)
    save_embeddings(instance.Y, paths["target"], precision)
    with open(paths["true_map"], "w", encoding="utf-8", newline="\n") as fh:
        for i, j in enumerate(instance.true_map):
            fh.write(f"{instance.X.tokens[i]}\t{instance.Y.tokens[j]}\n")
    manifest = dict(instance.manifest(), files={k: os.path.basename(v) for k, v in paths.items()})
    with open(paths["manifest"], "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
