"""Metadata-free data-slice finding and model validation engine."""

from .attribution import (
    attribution_similarity,
    cosine_similarity,
    mask_distance,
    neighbor_consistency,
    normalize_mask,
    pooled_vector,
    slice_centroid,
    slice_coherence,
    upsample_mask,
    weighted_vector,
)
from .bundle import (
    AttributionSample,
    ValidationBundle,
    read_bundle,
    read_tensor,
    write_bundle,
    write_tensor,
)
from .embedding import Embedding2D, EmbeddingConfig, embed, preset, trustworthiness
from .evaluation import (
    EvaluationReport,
    NoiseConfig,
    accuracy_from_predictions,
    build_report,
    corrupt,
    make_corrupted_bundle,
    rcs,
)
from .pipeline import build_project, load_project
from .slicing import SliceConfig, SliceSet, find_slices, kmeans_2d
from .spuriousness import (
    Annotation,
    SpreadConfig,
    SpuriousnessField,
    propagate,
    spread,
)

__version__ = "0.1.0"
