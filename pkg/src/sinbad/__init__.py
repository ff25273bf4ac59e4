"""Set-feature anomaly detection.

Samples are orderless sets of element feature vectors.  A sample is
described by histograms of random projections of its elements, and scored
by Gaussian-whitened distance of that descriptor to the normal training
population.  Time series become element sets through multi-scale window
pyramids; image features arrive as pre-computed element-set containers.
"""

from .feature_store import (
    BadMagicError,
    ContainerFormatError,
    DatasetManifest,
    ElementSet,
    FeatureStoreError,
    ManifestEntry,
    ManifestError,
    PayloadSizeError,
    TimeSeries,
    TruncatedPayloadError,
    TsFormatError,
    UnsupportedVersionError,
    filter_series_by_length,
    parse_uea_ts,
    read_element_set,
    write_element_set,
)
from .window_pyramid import PyramidConfig, extract_pyramid_elements, pad_series
from .set_descriptor import (
    HistogramSpec,
    ProjectionBasis,
    SetDescriptor,
    describe_set,
    fit_bin_edges,
    histogram_descriptor,
    load_descriptor,
    load_projection_basis,
    project_elements,
    sample_projection,
    save_descriptor,
    save_projection_basis,
    swd1,
)
from .density_model import (
    DegenerateModelError,
    GaussianModel,
    TrainBank,
    build_bank,
    fit_gaussian,
    knn_score,
    load_bank,
    load_model,
    mahalanobis_score,
    save_bank,
    save_model,
    training_scores,
    whiten,
)
from .pipeline import (
    Detector,
    GroupState,
    LeakageError,
    LevelConfig,
    MissingGroupError,
    RepeatStats,
    SampleScores,
    fit_detector,
    load_detector,
    run_repeats,
    save_detector,
    score_sample,
)
from .evaluation import (
    ClassResult,
    EvalReport,
    config_fingerprint,
    evaluate_manifest,
    evaluate_one_vs_rest,
    roc_auc,
    roc_points,
    ts_level_config,
)

__version__ = "0.1.0"

__all__ = [
    "BadMagicError",
    "ClassResult",
    "ContainerFormatError",
    "DatasetManifest",
    "DegenerateModelError",
    "Detector",
    "ElementSet",
    "EvalReport",
    "FeatureStoreError",
    "GaussianModel",
    "GroupState",
    "HistogramSpec",
    "LeakageError",
    "LevelConfig",
    "ManifestEntry",
    "ManifestError",
    "MissingGroupError",
    "PayloadSizeError",
    "ProjectionBasis",
    "PyramidConfig",
    "RepeatStats",
    "SampleScores",
    "SetDescriptor",
    "TimeSeries",
    "TrainBank",
    "TruncatedPayloadError",
    "TsFormatError",
    "UnsupportedVersionError",
    "build_bank",
    "config_fingerprint",
    "describe_set",
    "evaluate_manifest",
    "evaluate_one_vs_rest",
    "extract_pyramid_elements",
    "filter_series_by_length",
    "fit_bin_edges",
    "fit_detector",
    "fit_gaussian",
    "histogram_descriptor",
    "knn_score",
    "load_bank",
    "load_descriptor",
    "load_detector",
    "load_model",
    "load_projection_basis",
    "mahalanobis_score",
    "pad_series",
    "parse_uea_ts",
    "project_elements",
    "read_element_set",
    "roc_auc",
    "roc_points",
    "run_repeats",
    "sample_projection",
    "save_bank",
    "save_descriptor",
    "save_detector",
    "save_model",
    "save_projection_basis",
    "score_sample",
    "swd1",
    "training_scores",
    "ts_level_config",
    "whiten",
    "write_element_set",
]
