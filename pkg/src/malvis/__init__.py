"""malvis: PE executables to images, datasets, classifiers, and metrics."""

__version__ = "0.1.0"

from .ingest import RawBinary, ByteGrid, bin_width, truncate_pad, layout_grid
from .pe import PESection, PEFileInfo, shannon_entropy, parse_pe, parse_pe_or_fallback
from .encoders import (
    MalImage,
    ColorMap256,
    plasma_colormap,
    encode_grayscale,
    encode_colormap,
    encode_3gram,
    encode_pe,
    resize,
    write_png,
    read_png,
)
from .metrics import ConfusionMatrix, EvalReport, confusion, classification_metrics, roc_auc
from .classifiers import (
    Prediction,
    KnnModel,
    MlpModel,
    ForestModel,
    knn_fit,
    mlp_fit,
    forest_fit,
    vote_ensemble,
    stacked_features,
    stacked_fit,
)
from .dataset import (
    DatasetManifest,
    ManifestRecord,
    Normalizer,
    scan_corpus,
    corpus_stats,
    stratified_split,
    flatten,
    save_matrix,
    load_matrix,
)
from .model_io import save_model, load_model
