"""Unsupervised alignment of monolingual word-embedding spaces.

Spectral neighbourhood signatures give seed correspondences, Iterative Mapping
refines them by preserving pairwise distances, and a least-squares linear map
fitted on the result translates the rest of the vocabulary.
"""

__version__ = "0.1.0"

from .embeddings import (
    EmbeddingSpace,
    Vocabulary,
    from_arrays,
    load_embeddings,
    normalize,
    save_embeddings,
    top_subset,
)
from .evaluation import (
    BilingualDictionary,
    EvalReport,
    dictionary_sensitivity,
    frequency_band_overlap,
    precision_at_k,
    supervised_baseline,
)
from .im import (
    UNASSIGNED,
    VIRTUAL,
    ImConfig,
    Mapping,
    default_virtual_distance,
    im_optimize,
    loss_delta,
    mapping_loss,
    random_init,
    seed_mapping,
)
from .pipeline import PipelineConfig, PipelineError, align, run_pipeline
from .spectral import (
    build_neighborhood,
    gaussian_similarity,
    mutual_nn_pairs,
    spectral_embedding,
    spectral_features,
)
from .synth import generate, gold_dictionary, save_instance
from .transform import (
    RetrievalConfig,
    TransformMatrix,
    fit_linear,
    gc_retrieve,
    hub_statistics,
    retrieve,
    translate,
    translate_many,
)

__all__ = [
    "BilingualDictionary",
    "EmbeddingSpace",
    "EvalReport",
    "ImConfig",
    "Mapping",
    "PipelineConfig",
    "PipelineError",
    "RetrievalConfig",
    "TransformMatrix",
    "UNASSIGNED",
    "VIRTUAL",
    "Vocabulary",
    "align",
    "build_neighborhood",
    "default_virtual_distance",
    "dictionary_sensitivity",
    "fit_linear",
    "frequency_band_overlap",
    "from_arrays",
    "gaussian_similarity",
    "gc_retrieve",
    "generate",
    "gold_dictionary",
    "hub_statistics",
    "im_optimize",
    "load_embeddings",
    "loss_delta",
    "mapping_loss",
    "mutual_nn_pairs",
    "normalize",
    "precision_at_k",
    "random_init",
    "retrieve",
    "run_pipeline",
    "save_embeddings",
    "save_instance",
    "seed_mapping",
    "spectral_embedding",
    "spectral_features",
    "supervised_baseline",
    "top_subset",
    "translate",
    "translate_many",
]
