"""Fit/score orchestration across granularity levels, crops, and seed repeats.

A detector owns, for every (level, crop) group and every seed repeat, a
projection basis, fitted bin edges, a Gaussian model, and (for the kNN
scorer) a whitened training bank.  Scoring a sample reduces group scores
over crop centers, then crop ratios, then seed repeats, and finally takes
the weighted mean over levels.  All randomness flows from named seeds, so
parallel execution cannot change results.
"""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .feature_store import ElementSet, _atomic_write_bytes
from . import set_descriptor as sd
from . import density_model as dm

# group identity is structural only; descriptive keys (class, split, ...)
# never participate in group matching
STRUCTURAL_KEYS = ("crop_ratio", "crop_center")

REDUCE_MEAN = "mean"
REDUCE_MEDIAN = "median"


class MissingGroupError(Exception):
    """A configured (level, crop) group is absent from the provided sets."""


class LeakageError(Exception):
    """Validation/test-tagged sets reached a fitting path."""


@dataclass
class LevelConfig:
    """Descriptor and scorer parameters for one granularity level."""

    level_id: str
    n_projections: int = 100
    n_bins: int = 20
    projection_mode: str = sd.MODE_GAUSSIAN
    edge_mode: str = sd.EDGE_EQUAL_WIDTH
    cumulative: bool = True
    scorer: str = dm.SCORER_MAHA
    k: int = 1
    alpha: float = dm.DEFAULT_ALPHA
    whitening_enabled: bool = True
    weight: float = 1.0
    repeats: int = 1
    repeat_reduce: str = REDUCE_MEAN
    seed: int | None = None          # overrides the detector seed for this level
    store_bank: bool | None = None   # None: bank kept only for the knn scorer
    normalize_scores: bool = False   # z-normalize group scores by train stats

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"weight must be >= 0, got {self.weight}")
        if self.repeats < 1:
            raise ValueError(f"repeats must be >= 1, got {self.repeats}")
        if self.repeat_reduce not in (REDUCE_MEAN, REDUCE_MEDIAN):
            raise ValueError(f"repeat_reduce must be mean or median, got {self.repeat_reduce!r}")
        if self.scorer not in (dm.SCORER_MAHA, dm.SCORER_KNN):
            raise ValueError(f"scorer must be maha or knn, got {self.scorer!r}")

    @property
    def keep_bank(self) -> bool:
        if self.store_bank is None:
            return self.scorer == dm.SCORER_KNN
        return self.store_bank


@dataclass
class GroupState:
    """Everything fitted for one (level, crop, repeat) cell."""

    basis: sd.ProjectionBasis
    hist_spec: sd.HistogramSpec
    model: dm.GaussianModel
    bank: dm.TrainBank | None = None
    norm_stats: tuple[float, float] | None = None   # (mean, std) of train scores


@dataclass
class Detector:
    levels: dict[str, LevelConfig]
    seed: int
    # groups[(level_id, group_suffix)][repeat] -> GroupState
    groups: dict[tuple[str, str], list[GroupState]] = field(default_factory=dict)
    group_keys: dict[tuple[str, str], dict[str, str]] = field(default_factory=dict)
    n_train: int = 0


@dataclass
class SampleScores:
    final: float
    per_level: dict[str, float]
    # (level, suffix, repeat) -> {scorer_name: score}
    per_group: dict[tuple[str, str, int], dict[str, float]]


def group_suffix(group_keys: dict[str, str]) -> str:
    """Canonical crop identity string; empty for non-cropped levels."""
    parts = [f"{k}={group_keys[k]}" for k in STRUCTURAL_KEYS if k in group_keys]
    return "|".join(parts)


def derive_seed(base_seed: int, level_id: str, repeat: int) -> int:
    """Stable per-(level, repeat) seed derivation."""
    tag = zlib.crc32(level_id.encode())
    seq = np.random.SeedSequence(entropy=(int(base_seed), tag, int(repeat)))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _collect_groups(sets) :
    groups: dict[tuple[str, str], list[ElementSet]] = {}
    keys: dict[tuple[str, str], dict[str, str]] = {}
    for eset in sets:
        level = eset.group_keys.get("level", "default")
        gid = (level, group_suffix(eset.group_keys))
        groups.setdefault(gid, []).append(eset)
        keys.setdefault(gid, {k: v for k, v in eset.group_keys.items()
                              if k == "level" or k in STRUCTURAL_KEYS})
    return groups, keys


def _fit_group(sets: list[ElementSet], cfg: LevelConfig, seed: int) -> GroupState:
    dims = {s.n_dims for s in sets}
    if len(dims) != 1:
        raise ValueError(f"inconsistent element dimensions within group: {sorted(dims)}")
    pooled = np.concatenate([s.elements for s in sets], axis=0).astype(np.float64)
    basis = sd.sample_projection(pooled.shape[1], cfg.n_projections,
                                 mode=cfg.projection_mode, seed=seed,
                                 training_elements=pooled)
    projected_pool = pooled @ basis.matrix
    spec = sd.fit_bin_edges(projected_pool, cfg.n_bins, cfg.edge_mode)
    spec.cumulative = cfg.cumulative
    bounds = np.cumsum([0] + [s.n_elements for s in sets])
    descriptors = np.stack([
        sd.histogram_descriptor(projected_pool[bounds[i]:bounds[i + 1]], spec).h
        for i in range(len(sets))
    ])
    model = dm.fit_gaussian(descriptors, alpha=cfg.alpha,
                            whitening_enabled=cfg.whitening_enabled)
    bank = dm.build_bank(model, descriptors, k=cfg.k) if cfg.keep_bank else None
    norm_stats = None
    if cfg.normalize_scores:
        scores = dm.training_scores(model, descriptors, scorer=cfg.scorer, k=cfg.k)
        norm_stats = (float(scores.mean()), float(scores.std()))
    return GroupState(basis=basis, hist_spec=spec, model=model, bank=bank,
                      norm_stats=norm_stats)


def fit_detector(train_sets, levels, seed: int = 0) -> Detector:
    """Fit one detector from training element sets.

    ``train_sets`` is an iterable of :class:`ElementSet`; sets are grouped by
    the ``level`` key plus crop identity.  ``levels`` maps level ids to
    :class:`LevelConfig` (a list of configs is accepted).  Every configured
    level must be present, with the same sample ids in each of its groups.
    """
    if not isinstance(levels, dict):
        levels = {cfg.level_id: cfg for cfg in levels}
    train_sets = list(train_sets)
    for eset in train_sets:
        if eset.group_keys.get("split") in ("validation", "test"):
            raise LeakageError(
                f"sample {eset.sample_id!r} is tagged split={eset.group_keys['split']}"
            )
    groups, keys = _collect_groups(train_sets)
    det = Detector(levels=dict(levels), seed=seed)
    n_train = None
    for level_id, cfg in levels.items():
        level_groups = {gid: members for gid, members in groups.items()
                        if gid[0] == level_id}
        if not level_groups:
            raise MissingGroupError(f"no training sets for level {level_id!r}")
        id_sets = {gid: sorted(s.sample_id for s in members)
                   for gid, members in level_groups.items()}
        reference = next(iter(id_sets.values()))
        for gid, ids in id_sets.items():
            if ids != reference:
                raise MissingGroupError(
                    f"group {gid} does not cover the full training split"
                )
        n_train = len(reference)
        base = cfg.seed if cfg.seed is not None else seed
        for gid, members in sorted(level_groups.items()):
            states = [
                _fit_group(members, cfg, derive_seed(base, level_id, r))
                for r in range(cfg.repeats)
            ]
            det.groups[gid] = states
            det.group_keys[gid] = keys[gid]
    det.n_train = n_train or 0
    return det


def _group_score(state: GroupState, cfg: LevelConfig, eset: ElementSet) -> dict[str, float]:
    desc = sd.describe_set(eset, state.basis, state.hist_spec)
    out = {dm.SCORER_MAHA: dm.mahalanobis_score(state.model, desc.h)}
    if state.bank is not None:
        out[dm.SCORER_KNN] = dm.knn_score(state.bank, state.model, desc.h)
    return out


def _reduce_crops(scores_by_gid: dict[tuple[str, str], float],
                  group_keys: dict[tuple[str, str], dict[str, str]]) -> float:
    """Mean over centers within a ratio, then mean over ratios."""
    by_ratio: dict[str, list[float]] = {}
    for gid, score in scores_by_gid.items():
        ratio = group_keys[gid].get("crop_ratio", "")
        by_ratio.setdefault(ratio, []).append(score)
    return float(np.mean([np.mean(v) for v in by_ratio.values()]))


def score_sample(det: Detector, test_sets) -> SampleScores:
    """Score one sample given its element sets for every detector group."""
    sample_groups, _ = _collect_groups(test_sets)
    flat = {gid: members[0] for gid, members in sample_groups.items()}
    per_group: dict[tuple[str, str, int], dict[str, float]] = {}
    per_level: dict[str, float] = {}
    for level_id, cfg in det.levels.items():
        level_gids = [gid for gid in det.groups if gid[0] == level_id]
        missing = [gid for gid in level_gids if gid not in flat]
        if missing:
            raise MissingGroupError(f"sample lacks groups {missing}")
        repeat_values = []
        for r in range(cfg.repeats):
            scores_by_gid = {}
            for gid in level_gids:
                state = det.groups[gid][r]
                scores = _group_score(state, cfg, flat[gid])
                per_group[(gid[0], gid[1], r)] = scores
                value = scores[cfg.scorer]
                if state.norm_stats is not None:
                    mean, std = state.norm_stats
                    value = (value - mean) / max(std, 1e-12)
                scores_by_gid[gid] = value
            repeat_values.append(_reduce_crops(scores_by_gid, det.group_keys))
        if cfg.repeat_reduce == REDUCE_MEDIAN:
            per_level[level_id] = float(np.median(repeat_values))
        else:
            per_level[level_id] = float(np.mean(repeat_values))
    total_weight = sum(cfg.weight for cfg in det.levels.values())
    if total_weight <= 0:
        raise ValueError("level weights sum to zero")
    final = sum(det.levels[lv].weight * s for lv, s in per_level.items()) / total_weight
    return SampleScores(final=final, per_level=per_level, per_group=per_group)


@dataclass
class RepeatStats:
    mean: float
    std: float
    values: list[float]


def run_repeats(eval_fn, n: int, reduce: str = REDUCE_MEAN) -> RepeatStats:
    """Recompute a dataset metric under ``n`` independent seed indices.

    ``eval_fn(i)`` must return the metric for seed index ``i``.  The central
    value follows ``reduce``; the spread is the sample standard deviation
    (0 when n == 1).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    values = [float(eval_fn(i)) for i in range(n)]
    if reduce == REDUCE_MEDIAN:
        center = float(np.median(values))
    elif reduce == REDUCE_MEAN:
        center = float(np.mean(values))
    else:
        raise ValueError(f"reduce must be mean or median, got {reduce!r}")
    std = float(np.std(values, ddof=1)) if n > 1 else 0.0
    return RepeatStats(mean=center, std=std, values=values)


def _group_dirname(gid: tuple[str, str]) -> str:
    suffix = gid[1]
    if not suffix:
        return "base"
    return "g" + hashlib.sha1(suffix.encode()).hexdigest()[:10]


def save_detector(det: Detector, directory) -> None:
    """Write the detector to a directory tree.

    Layout: ``detector.json`` at the top (configs, weights, seeds), then one
    subdirectory per level / repeat / group holding basis, edges, model, and
    bank blobs.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    top = {
        "format_version": 1,
        "seed": det.seed,
        "n_train": det.n_train,
        "levels": {lv: asdict(cfg) for lv, cfg in det.levels.items()},
        "groups": [
            {
                "level": gid[0],
                "suffix": gid[1],
                "dirname": _group_dirname(gid),
                "group_keys": det.group_keys.get(gid, {}),
            }
            for gid in sorted(det.groups)
        ],
    }
    _atomic_write_bytes(directory / "detector.json", json.dumps(top, indent=2).encode())
    for gid, states in det.groups.items():
        for r, state in enumerate(states):
            cell = directory / gid[0] / f"rep{r:03d}" / _group_dirname(gid)
            cell.mkdir(parents=True, exist_ok=True)
            sd.save_projection_basis(state.basis, cell / "basis.sinb")
            _atomic_write_bytes(cell / "edges.json",
                                json.dumps(state.hist_spec.to_dict()).encode())
            dm.save_model(state.model, cell / "model.npz")
            if state.bank is not None:
                dm.save_bank(state.bank, cell / "bank.sinb")
            if state.norm_stats is not None:
                _atomic_write_bytes(cell / "norm.json",
                                    json.dumps({"mean": state.norm_stats[0],
                                                "std": state.norm_stats[1]}).encode())


def load_detector(directory) -> Detector:
    directory = Path(directory)
    with open(directory / "detector.json") as fh:
        top = json.load(fh)
    levels = {lv: LevelConfig(**cfg) for lv, cfg in top["levels"].items()}
    det = Detector(levels=levels, seed=top["seed"], n_train=top.get("n_train", 0))
    for entry in top["groups"]:
        gid = (entry["level"], entry["suffix"])
        cfg = levels[gid[0]]
        states = []
        for r in range(cfg.repeats):
            cell = directory / gid[0] / f"rep{r:03d}" / entry["dirname"]
            basis = sd.load_projection_basis(cell / "basis.sinb")
            with open(cell / "edges.json") as fh:
                spec = sd.HistogramSpec.from_dict(json.load(fh))
            model = dm.load_model(cell / "model.npz")
            bank = dm.load_bank(cell / "bank.sinb") if (cell / "bank.sinb").exists() else None
            norm_stats = None
            if (cell / "norm.json").exists():
                with open(cell / "norm.json") as fh:
                    nd = json.load(fh)
                norm_stats = (nd["mean"], nd["std"])
            states.append(GroupState(basis=basis, hist_spec=spec, model=model,
                                     bank=bank, norm_stats=norm_stats))
        det.groups[gid] = states
        det.group_keys[gid] = entry["group_keys"]
    return det
