"""Weakly-supervised multiple-instance learning for lesion classification
and sliding-window heatmap localization."""

from .classifier import (
    BagPrediction,
    ClassifierModel,
    TrainConfig,
    init_model,
    load_model,
    predict,
    predict_bag,
    save_model,
    train_epoch,
)
from .data import (
    Bag,
    BagLabel,
    BoxAnnotation,
    LesionImage,
    ManifestRow,
    MaskSource,
    Provenance,
    RegionMask,
    Tile,
    TileLabel,
    TrainingCorpus,
)
from .inference import (
    Heatmap,
    ProbabilityMatrix,
    classify_image,
    image_score,
    render_heatmap,
    slide_windows,
)
from .manifest import load_corpus, load_report, parse_manifest, save_manifest, save_report
from .metrics import (
    ConfusionCounts,
    MetricsReport,
    RocCurve,
    confusion,
    derive_metrics,
    dice,
    roc_auc,
)
from .nn import Architecture
from .segmenter import Provider, SegmenterConfig, postprocess_mask, produce_mask, segment
from .synth import DatasetSummary, GenConfig, describe, generate
from .tiler import TilerConfig, extract_reinforced_tiles, partition_tiles, tile_bag, tile_corpus
from .trainer import SelectionConfig, TemporarySet, TrainingHistory, build_temporary_set, select_instances, train

__version__ = "0.1.0"
