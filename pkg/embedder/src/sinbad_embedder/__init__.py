"""Image-to-element-set extraction for set-feature anomaly detection."""

from .embedder import (
    DATASET_LAYOUT,
    EMBED_SIDECAR,
    LEVEL_NODES,
    RAW_LEVEL,
    Backbone,
    BackboneLoadError,
    EmbedConfig,
    LayoutError,
    crop_grid,
    embed_dataset,
    embed_image,
    load_backbone,
    pad_square,
    weight_fingerprint,
)

__all__ = [
    "DATASET_LAYOUT",
    "EMBED_SIDECAR",
    "LEVEL_NODES",
    "RAW_LEVEL",
    "Backbone",
    "BackboneLoadError",
    "EmbedConfig",
    "LayoutError",
    "crop_grid",
    "embed_dataset",
    "embed_image",
    "load_backbone",
    "pad_square",
    "weight_fingerprint",
]

__version__ = "0.1.0"
