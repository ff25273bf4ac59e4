"""Benchmark protocol: one-vs-rest anomaly AUC over labeled series datasets.

Each class in turn plays the normal population: its training series fit a
detector, every test series is scored, and series of any other class count
as anomalous.  The dataset score is the mean ROC-AUC over classes.  Reports
carry a sha256 fingerprint of the exact configuration so score files can be
traced back to the run that produced them.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .feature_store import ElementSet, DatasetManifest, read_element_set
from .window_pyramid import PyramidConfig, extract_pyramid_elements
from .pipeline import LevelConfig, fit_detector, score_sample
from . import density_model as dm


def roc_auc(scores, is_anomalous) -> float:
    """Area under the ROC curve, higher score meaning more anomalous.

    Rank-based Mann-Whitney formulation; tied scores count half.  Raises
    ``ValueError`` unless both classes are present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(is_anomalous, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs at least one normal and one anomalous sample")
    ranks = rankdata(scores)
    rank_sum = ranks[labels].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def config_fingerprint(config: dict) -> str:
    """sha256 over the canonical JSON form of a configuration dict."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def roc_points(scores, is_anomalous) -> list[tuple[float, float, float]]:
    """(threshold, fpr, tpr) triples for plotting, thresholds descending."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(is_anomalous, dtype=bool)
    order = np.argsort(-scores, kind="stable")
    scores, labels = scores[order], labels[order]
    n_pos = max(int(labels.sum()), 1)
    n_neg = max(int((~labels).sum()), 1)
    points = [(float("inf"), 0.0, 0.0)]
    tp = fp = 0
    for i in range(labels.size):
        tp += bool(labels[i])
        fp += not labels[i]
        # emit one point per distinct threshold, after its last tied score
        if i + 1 == labels.size or scores[i + 1] != scores[i]:
            points.append((float(scores[i]), fp / n_neg, tp / n_pos))
    return points


@dataclass
class ClassResult:
    label: str
    auc: float
    n_train: int
    n_test_normal: int
    n_test_anomalous: int


@dataclass
class EvalReport:
    dataset: str
    class_results: list[ClassResult] = field(default_factory=list)
    mean_auc: float = 0.0
    std_auc: float = 0.0
    fingerprint: str = ""
    runtime_seconds: float = 0.0
    scores_paths: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "mean_auc": self.mean_auc,
            "std_auc": self.std_auc,
            "fingerprint": self.fingerprint,
            "runtime_seconds": self.runtime_seconds,
            "scores_paths": self.scores_paths,
            "classes": [
                {
                    "label": c.label,
                    "auc": c.auc,
                    "n_train": c.n_train,
                    "n_test_normal": c.n_test_normal,
                    "n_test_anomalous": c.n_test_anomalous,
                }
                for c in self.class_results
            ],
        }


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in text) or "x"


def _aux_means(per_group: dict) -> dict[str, float]:
    """Mean raw score per scorer over all (group, repeat) cells."""
    sums: dict[str, list[float]] = {}
    for cell in per_group.values():
        for scorer, value in cell.items():
            sums.setdefault(scorer, []).append(value)
    return {scorer: float(np.mean(v)) for scorer, v in sums.items()}


def _dump_scores(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = ["sample_id", "label", "is_anomalous", "score"]
    aux = sorted({k for row in rows for k in row if k not in fields})
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields + aux)
        writer.writeheader()
        writer.writerows(rows)


def _dump_roc(path: Path, scores, flags) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        writer.writerows(roc_points(scores, flags))


def ts_level_config(**overrides) -> LevelConfig:
    """Default descriptor/scorer settings for series pyramids.

    Both the Gaussian score and the kNN score are recorded per sample; the
    configured scorer feeds the metric.
    """
    base = dict(level_id="ts", n_projections=100, n_bins=20,
                scorer=dm.SCORER_MAHA, store_bank=True)
    base.update(overrides)
    return LevelConfig(**base)


def evaluate_one_vs_rest(train_series, test_series, dataset: str = "",
                         pyramid: PyramidConfig | None = None,
                         level: LevelConfig | None = None,
                         seed: int = 0,
                         scores_dir=None) -> EvalReport:
    """One-vs-rest protocol over labeled series.

    ``train_series`` and ``test_series`` are :class:`TimeSeries` lists with
    labels.  For every class found in the training split, a detector is fit
    on that class alone and applied to the full test split.
    """
    start = time.perf_counter()
    pyramid = pyramid or PyramidConfig()
    level = level or ts_level_config()
    train_series = list(train_series)
    test_series = list(test_series)
    if any(s.label is None for s in train_series + test_series):
        raise ValueError("one-vs-rest evaluation needs labeled series")
    classes = sorted({s.label for s in train_series})

    test_sets = [extract_pyramid_elements(s, pyramid, level_id=level.level_id)
                 for s in test_series]

    fp = config_fingerprint({
        "protocol": "one_vs_rest",
        "dataset": dataset,
        "pyramid": {"tau": pyramid.tau, "levels": pyramid.levels},
        "level": vars(level),
        "seed": seed,
    })

    report = EvalReport(dataset=dataset, fingerprint=fp)
    for label in classes:
        members = [s for s in train_series if s.label == label]
        train_sets = [extract_pyramid_elements(s, pyramid, level_id=level.level_id)
                      for s in members]
        det = fit_detector(train_sets, [level], seed=seed)
        rows = []
        scores = []
        flags = []
        for series, eset in zip(test_series, test_sets):
            result = score_sample(det, [eset])
            anomalous = series.label != label
            scores.append(result.final)
            flags.append(anomalous)
            row = {"sample_id": series.series_id, "label": series.label,
                   "is_anomalous": int(anomalous), "score": result.final}
            row.update(_aux_means(result.per_group))
            rows.append(row)
        auc = roc_auc(scores, flags)
        report.class_results.append(ClassResult(
            label=label, auc=auc, n_train=len(members),
            n_test_normal=flags.count(False), n_test_anomalous=flags.count(True)))
        if scores_dir is not None:
            stem = f"{_slug(dataset) if dataset else 'run'}-{_slug(label)}"
            path = Path(scores_dir) / f"{stem}.csv"
            _dump_scores(path, rows)
            _dump_roc(Path(scores_dir) / f"{stem}-roc.csv", scores, flags)
            report.scores_paths.append(str(path))

    aucs = [c.auc for c in report.class_results]
    report.mean_auc = float(np.mean(aucs))
    report.std_auc = float(np.std(aucs, ddof=1)) if len(aucs) > 1 else 0.0
    report.runtime_seconds = time.perf_counter() - start
    return report


def _load_manifest_samples(directory) -> dict[str, tuple[str, list[ElementSet]]]:
    """sample_id -> (label, element sets) from a manifest directory."""
    directory = Path(directory)
    manifest = DatasetManifest.load(directory)
    samples: dict[str, tuple[str, list[ElementSet]]] = {}
    for entry in manifest.entries:
        path = directory / entry.path
        eset = read_element_set(path, sample_id=entry.sample_id,
                                group_keys=entry.group_keys)
        label, sets = samples.setdefault(entry.sample_id, (entry.label, []))
        if label != entry.label:
            raise ValueError(f"sample {entry.sample_id!r} has conflicting labels")
        sets.append(eset)
    return samples


def evaluate_manifest(train_dir, test_dir, levels, dataset: str = "",
                      seed: int = 0, scores_dir=None) -> EvalReport:
    """Normal-only training from one manifest directory, scoring another.

    ``levels`` maps level ids to :class:`LevelConfig`.  Test labels come
    from the test manifest (``anomalous`` marks positives).
    """
    start = time.perf_counter()
    if not isinstance(levels, dict):
        levels = {cfg.level_id: cfg for cfg in levels}
    train_samples = _load_manifest_samples(train_dir)
    test_samples = _load_manifest_samples(test_dir)

    train_sets = [eset for _, sets in train_samples.values() for eset in sets]
    det = fit_detector(train_sets, levels, seed=seed)

    fp = config_fingerprint({
        "protocol": "manifest",
        "dataset": dataset,
        "levels": {lv: vars(cfg) for lv, cfg in levels.items()},
        "seed": seed,
    })

    rows = []
    scores = []
    flags = []
    for sample_id in sorted(test_samples):
        label, sets = test_samples[sample_id]
        result = score_sample(det, sets)
        anomalous = label == "anomalous"
        scores.append(result.final)
        flags.append(anomalous)
        row = {"sample_id": sample_id, "label": label,
               "is_anomalous": int(anomalous), "score": result.final}
        row.update(_aux_means(result.per_group))
        rows.append(row)

    report = EvalReport(dataset=dataset, fingerprint=fp)
    report.class_results.append(ClassResult(
        label="normal", auc=roc_auc(scores, flags),
        n_train=len(train_samples),
        n_test_normal=flags.count(False), n_test_anomalous=flags.count(True)))
    report.mean_auc = report.class_results[0].auc
    if scores_dir is not None:
        stem = f"{_slug(dataset) if dataset else 'run'}-test"
        path = Path(scores_dir) / f"{stem}.csv"
        _dump_scores(path, rows)
        _dump_roc(Path(scores_dir) / f"{stem}-roc.csv", scores, flags)
        report.scores_paths.append(str(path))
    report.runtime_seconds = time.perf_counter() - start
    return report
