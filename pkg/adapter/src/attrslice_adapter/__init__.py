"""PyTorch adapter for the attrslice engine: bundle export, feature-inversion
tiles, and noise-corruption retraining."""

from .corm import CormResult, retrain_corm
from .export import AdapterConfig, adapter_weighted_vector, export_bundle
from .inversion import TileResult, render_project_tiles, render_tile
from .models import SmallCnn, resolve_layer
from .synthdata import BiasedImageData, make_biased_dataset
from .tensorio import load_bundle_arrays, load_tensor, save_tensor
from .training import predict, train_classifier, write_predictions

__version__ = "0.1.0"
