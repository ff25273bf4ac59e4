"""Turn images into element-set containers for set-feature anomaly detection.

An image becomes several element sets, one per (feature level, crop):
spatial locations of a wide residual network's stage-3 and stage-4
activation maps (14x14 -> 196 and 7x7 -> 49 elements at input side 224)
plus the raw resized pixels (50176 elements x 3).  Crops are taken on a
fixed lattice of centers for each requested ratio, the image having
first been padded to a square.  Output goes through the detector
package's public container and manifest formats only; nothing here
touches its scoring internals.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision.models import wide_resnet50_2
from torchvision.models.feature_extraction import create_feature_extractor

from sinbad import DatasetManifest, ElementSet, ManifestEntry, write_element_set

EMBED_SIDECAR = "embed.json"

# level -> backbone node supplying it (stage boundary outputs)
LEVEL_NODES = {"block3": "layer3", "block4": "layer4"}
RAW_LEVEL = "raw_pixels"

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}

# split -> subdirectories that must exist underneath it
DATASET_LAYOUT = {
    "train": ("good",),
    "validation": ("good",),
    "test": ("good", "logical_anomalies", "structural_anomalies"),
}


class BackboneLoadError(RuntimeError):
    """Backbone construction or weight loading failed."""


class LayoutError(RuntimeError):
    """Dataset directory does not follow the expected split layout."""


@dataclass
class EmbedConfig:
    backbone: str = "wide_resnet50_2"
    weights: str = "pretrained"  # "pretrained" or "random"
    input_side: int = 224
    norm_mean: tuple = (0.485, 0.456, 0.406)
    norm_std: tuple = (0.229, 0.224, 0.225)
    crop_ratios: tuple = (1.0, 0.7, 0.5, 0.33)
    center_stride: float = 0.25
    pad_to_square: bool = True
    include_raw: bool = True
    batch_size: int = 8

    def __post_init__(self):
        if self.weights not in ("pretrained", "random"):
            raise ValueError(f"weights must be 'pretrained' or 'random', got {self.weights!r}")
        if self.input_side < 32:
            raise ValueError(f"input_side too small: {self.input_side}")
        if not self.crop_ratios:
            raise ValueError("crop_ratios must not be empty")
        for r in self.crop_ratios:
            if not 0.0 < r <= 1.0:
                raise ValueError(f"crop ratio must be in (0, 1], got {r}")
        if not 0.0 < self.center_stride <= 1.0:
            raise ValueError(f"center_stride must be in (0, 1], got {self.center_stride}")

    @property
    def levels(self) -> tuple:
        return tuple(LEVEL_NODES) + ((RAW_LEVEL,) if self.include_raw else ())


@dataclass
class Backbone:
    extractor: torch.nn.Module
    fingerprint: str
    nodes: dict = field(default_factory=lambda: dict(LEVEL_NODES))


def weight_fingerprint(model: torch.nn.Module) -> str:
    """sha256 over the state dict (names and raw tensor bytes, sorted)."""
    digest = hashlib.sha256()
    state = model.state_dict()
    for name in sorted(state):
        digest.update(name.encode())
        digest.update(state[name].cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def load_backbone(cfg: EmbedConfig) -> Backbone:
    if cfg.backbone != "wide_resnet50_2":
        raise BackboneLoadError(f"unsupported backbone {cfg.backbone!r}")
    try:
        if cfg.weights == "pretrained":
            from torchvision.models import Wide_ResNet50_2_Weights
            model = wide_resnet50_2(weights=Wide_ResNet50_2_Weights.IMAGENET1K_V1)
        else:
            model = wide_resnet50_2(weights=None)
    except Exception as exc:  # weight download can fail offline
        raise BackboneLoadError(f"could not load {cfg.backbone} weights: {exc}") from exc
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    fingerprint = weight_fingerprint(model)
    extractor = create_feature_extractor(
        model, return_nodes={node: level for level, node in LEVEL_NODES.items()}
    )
    extractor.eval()
    return Backbone(extractor=extractor, fingerprint=fingerprint)


def crop_grid(ratio: float, stride: float = 0.25) -> list:
    """Crop centers for one ratio, as (cy, cx) fractions of the image side.

    Centers lie on the global lattice of stride multiples and must keep
    the crop fully inside the image, so a full-frame crop has the single
    center (0.5, 0.5) and ratio 0.5 at stride 0.25 has the 3x3 grid over
    {0.25, 0.5, 0.75}.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"crop ratio must be in (0, 1], got {ratio}")
    lo, hi = ratio / 2.0, 1.0 - ratio / 2.0
    eps = 1e-9
    axis = [
        round(k * stride, 10)
        for k in range(int(1.0 / stride) + 1)
        if lo - eps <= k * stride <= hi + eps
    ]
    if not axis:
        # coarse strides can miss a narrow feasible band; the center crop
        # is always legal
        axis = [0.5]
    return [(cy, cx) for cy in axis for cx in axis]


def _to_array(image) -> np.ndarray:
    if isinstance(image, (str, Path)):
        with Image.open(image) as im:
            return np.asarray(im.convert("RGB"))
    if isinstance(image, Image.Image):
        return np.asarray(image.convert("RGB"))
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an HxWx3 image array, got shape {arr.shape}")
    return arr.astype(np.uint8, copy=False)


def pad_square(arr: np.ndarray, fill) -> np.ndarray:
    """Center the image on a square canvas filled with ``fill`` (RGB)."""
    h, w = arr.shape[:2]
    side = max(h, w)
    if h == w:
        return arr
    out = np.empty((side, side, 3), dtype=arr.dtype)
    out[:] = np.asarray(fill, dtype=arr.dtype)
    top, left = (side - h) // 2, (side - w) // 2
    out[top:top + h, left:left + w] = arr
    return out


def _crop_box(side: int, ratio: float, center) -> tuple:
    size = max(1, round(ratio * side))
    cy, cx = center
    y0 = min(max(round(cy * side - size / 2), 0), side - size)
    x0 = min(max(round(cx * side - size / 2), 0), side - size)
    return y0, x0, size


def _fmt(x: float) -> str:
    return format(x, "g")


def _prepare_crops(image, cfg: EmbedConfig):
    """Pad, crop, and resize; yields (group_suffix_keys, resized [0,1] float array)."""
    arr = _to_array(image)
    if cfg.pad_to_square:
        fill = tuple(int(round(255 * m)) for m in cfg.norm_mean)
        arr = pad_square(arr, fill)
    side = arr.shape[0]
    canvas = Image.fromarray(arr)
    out = []
    for ratio in cfg.crop_ratios:
        for cy, cx in crop_grid(ratio, cfg.center_stride):
            y0, x0, size = _crop_box(side, ratio, (cy, cx))
            crop = canvas.crop((x0, y0, x0 + size, y0 + size))
            resized = crop.resize((cfg.input_side, cfg.input_side), Image.BILINEAR)
            pixels = np.asarray(resized, dtype=np.float32) / 255.0
            keys = {"crop_ratio": _fmt(ratio), "crop_center": f"{_fmt(cy)},{_fmt(cx)}"}
            out.append((keys, pixels))
    return out


def embed_image(image, cfg: EmbedConfig, backbone: Backbone | None = None,
                sample_id: str = "") -> list:
    """Element sets for one image, one per (level, crop), deterministic order.

    Levels come out block3 (196 x C3), block4 (49 x C4), then raw pixels
    (side^2 x 3) when enabled; crops iterate ratios in config order with
    centers row-major.
    """
    if backbone is None:
        backbone = load_backbone(cfg)
    if not sample_id and isinstance(image, (str, Path)):
        sample_id = Path(image).stem
    crops = _prepare_crops(image, cfg)

    mean = np.asarray(cfg.norm_mean, dtype=np.float32)
    std = np.asarray(cfg.norm_std, dtype=np.float32)
    sets = []
    for start in range(0, len(crops), cfg.batch_size):
        chunk = crops[start:start + cfg.batch_size]
        batch = np.stack([(pixels - mean) / std for _, pixels in chunk])
        with torch.no_grad():
            feats = backbone.extractor(torch.from_numpy(batch).permute(0, 3, 1, 2))
        for i, (keys, pixels) in enumerate(chunk):
            for level in LEVEL_NODES:
                fmap = feats[level][i]  # (C, g, g)
                elements = fmap.permute(1, 2, 0).reshape(-1, fmap.shape[0]).numpy()
                sets.append(ElementSet(elements, sample_id=sample_id,
                                       group_keys={"level": level, **keys}))
            if cfg.include_raw:
                sets.append(ElementSet(pixels.reshape(-1, 3), sample_id=sample_id,
                                       group_keys={"level": RAW_LEVEL, **keys}))
    return sets


def _split_images(root: Path, split: str) -> list:
    split_dir = root / split
    if not split_dir.is_dir():
        raise LayoutError(f"layout mismatch: missing {split}/ under {root}")
    found = []
    for sub in DATASET_LAYOUT[split]:
        sub_dir = split_dir / sub
        if not sub_dir.is_dir():
            raise LayoutError(f"layout mismatch: missing {split}/{sub}/ under {root}")
        images = sorted(p for p in sub_dir.iterdir()
                        if p.suffix.lower() in IMAGE_SUFFIXES)
        found.extend((sub, p) for p in images)
    if not found:
        raise LayoutError(f"layout mismatch: no images under {split}/ in {root}")
    return found


def embed_dataset(root, cfg: EmbedConfig, out_dir,
                  splits: tuple = ("train", "validation", "test"),
                  backbone: Backbone | None = None) -> dict:
    """Embed a dataset tree into per-split manifest directories.

    Expects ``root/train/good``, ``root/validation/good``, and
    ``root/test/{good,logical_anomalies,structural_anomalies}``; images
    under ``good`` are labeled normal, the anomaly subdirectories
    anomalous with their kind in a ``subtype`` group key.  Writes one
    container per (image, level, crop) plus ``manifest.json`` under
    ``out_dir/<split>/``, and an ``embed.json`` sidecar recording the
    backbone, weight fingerprint, and feature node names.
    """
    root = Path(root)
    out_dir = Path(out_dir)
    for split in splits:
        if split not in DATASET_LAYOUT:
            raise LayoutError(f"unknown split {split!r}")
    plans = {split: _split_images(root, split) for split in splits}
    if backbone is None:
        backbone = load_backbone(cfg)

    summary = {"splits": {}, "fingerprint": backbone.fingerprint, "out_dir": str(out_dir)}
    for split, images in plans.items():
        split_out = out_dir / split
        split_out.mkdir(parents=True, exist_ok=True)
        entries = []
        n_containers = 0
        for sub, path in images:
            sid = f"{sub}/{path.stem}"
            label = "normal" if sub == "good" else "anomalous"
            extra = {} if sub == "good" else {"subtype": sub}
            for eset in embed_image(path, cfg, backbone, sample_id=sid):
                eset.group_keys.update(extra)
                keys = eset.group_keys
                name = (f"{sub}-{path.stem}-{keys['level']}"
                        f"-r{keys['crop_ratio']}"
                        f"-c{keys['crop_center'].replace(',', 'x')}.sinb")
                write_element_set(eset, split_out / name)
                entries.append(ManifestEntry(sample_id=sid, label=label,
                                             group_keys=dict(keys), path=name))
                n_containers += 1
        DatasetManifest(split=split, entries=entries).save(split_out)
        summary["splits"][split] = {"images": len(images), "containers": n_containers}

    sidecar = {
        "backbone": cfg.backbone,
        "weights": cfg.weights,
        "weight_fingerprint": backbone.fingerprint,
        "feature_nodes": backbone.nodes,
        "config": asdict(cfg),
    }
    (out_dir / EMBED_SIDECAR).write_text(json.dumps(sidecar, indent=2))
    return summary
