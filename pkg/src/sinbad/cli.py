"""Command-line surface: fit, score, eval, extract-ts, parse-uea.

All tuning flags can also live in a JSON config file passed with
``--config``; explicit flags override file values.  Exit codes: 0 success,
2 configuration error, 3 data error, 4 degenerate-model error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import density_model as dm
from . import set_descriptor as sd
from .feature_store import (
    DatasetManifest,
    FeatureStoreError,
    LABEL_ANOMALOUS,
    LABEL_NORMAL,
    LABEL_UNKNOWN,
    ManifestEntry,
    _atomic_write_bytes,
    filter_series_by_length,
    parse_uea_ts,
    read_element_set,
    write_element_set,
)
from .window_pyramid import PyramidConfig, extract_pyramid_elements
from .pipeline import (
    LeakageError,
    LevelConfig,
    MissingGroupError,
    fit_detector,
    load_detector,
    save_detector,
    score_sample,
)
from .evaluation import (
    config_fingerprint,
    evaluate_manifest,
    evaluate_one_vs_rest,
    ts_level_config,
)

REPORT_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4


class ConfigError(Exception):
    pass


# CLI option name -> (type, default); defaults follow the series pipeline
DEFAULTS = {
    "bins": (int, 20),
    "projections": (int, 100),
    "projection_mode": (str, sd.MODE_GAUSSIAN),
    "scorer": (str, dm.SCORER_MAHA),
    "k": (int, 1),
    "alpha": (float, dm.DEFAULT_ALPHA),
    "no_whiten": (bool, False),
    "edge_mode": (str, "width"),
    "tau": (int, 10),
    "levels": (int, 9),
    "seed": (int, 0),
    "repeats": (int, 1),
    "min_steps": (int, 0),
    "max_steps": (int, 0),
}

_EDGE_TOKENS = {"width": sd.EDGE_EQUAL_WIDTH, "quantile": sd.EDGE_QUANTILE,
                sd.EDGE_EQUAL_WIDTH: sd.EDGE_EQUAL_WIDTH}

# extra keys allowed in per-level override blocks of a config file
_LEVEL_ONLY_KEYS = {"weight", "repeat_reduce", "store_bank", "normalize_scores",
                    "cumulative", "level_repeats"}


def _add_common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("model options")
    g.add_argument("--bins", type=int, help="histogram bins per projection (default 20)")
    g.add_argument("--projections", type=int, help="random projections (default 100)")
    g.add_argument("--projection-mode", choices=["gaussian", "identity", "pca"],
                   dest="projection_mode")
    g.add_argument("--scorer", choices=["maha", "knn"])
    g.add_argument("--k", type=int, help="neighbors for the knn scorer (default 1)")
    g.add_argument("--alpha", type=float, help="covariance shrinkage (default 0.1)")
    g.add_argument("--no-whiten", action="store_true", dest="no_whiten",
                   help="disable covariance whitening")
    g.add_argument("--edge-mode", choices=["width", "quantile"], dest="edge_mode")
    g.add_argument("--tau", type=int, help="window width in steps (default 10)")
    g.add_argument("--levels", type=int, help="pyramid scale count (default 9)")
    g.add_argument("--seed", type=int)
    g.add_argument("--repeats", type=int,
                   help="seed repeats (fit: bases per group; eval: full re-runs)")
    g.add_argument("--config", type=str, help="JSON file mirroring these flags")


def _load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def _merge_options(args: argparse.Namespace) -> dict:
    """defaults <- config file <- explicit flags."""
    opts = {name: default for name, (_, default) in DEFAULTS.items()}
    opts["level_overrides"] = {}
    config_path = getattr(args, "config", None)
    if config_path:
        file_opts = _load_config_file(config_path)
        for key, value in file_opts.items():
            if key == "level_overrides":
                if not isinstance(value, dict):
                    raise ConfigError("level_overrides must be an object")
                opts["level_overrides"] = value
                continue
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            want, _ = DEFAULTS[key]
            if want is bool:
                if not isinstance(value, bool):
                    raise ConfigError(f"config key {key!r} must be a boolean")
            elif want is float:
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    raise ConfigError(f"config key {key!r} must be a number")
                value = float(value)
            elif want is int:
                if not isinstance(value, int) or isinstance(value, bool):
                    raise ConfigError(f"config key {key!r} must be an integer")
            elif want is str and not isinstance(value, str):
                raise ConfigError(f"config key {key!r} must be a string")
            opts[key] = value
    for name in DEFAULTS:
        value = getattr(args, name, None)
        if value is not None and value is not False:
            opts[name] = value
    if opts["projection_mode"] not in (sd.MODE_GAUSSIAN, sd.MODE_IDENTITY, sd.MODE_PCA):
        raise ConfigError(f"unknown projection mode {opts['projection_mode']!r}")
    if opts["scorer"] not in (dm.SCORER_MAHA, dm.SCORER_KNN):
        raise ConfigError(f"unknown scorer {opts['scorer']!r}")
    if opts["edge_mode"] not in _EDGE_TOKENS:
        raise ConfigError(f"unknown edge mode {opts['edge_mode']!r}")
    return opts


def _build_level(opts: dict, level_id: str, fit_repeats: bool) -> LevelConfig:
    fields = {
        "level_id": level_id,
        "n_bins": opts["bins"],
        "n_projections": opts["projections"],
        "projection_mode": opts["projection_mode"],
        "scorer": opts["scorer"],
        "k": opts["k"],
        "alpha": opts["alpha"],
        "whitening_enabled": not opts["no_whiten"],
        "edge_mode": _EDGE_TOKENS[opts["edge_mode"]],
    }
    if fit_repeats:
        fields["repeats"] = opts["repeats"]
    overrides = opts["level_overrides"].get(level_id, {})
    if not isinstance(overrides, dict):
        raise ConfigError(f"level_overrides[{level_id!r}] must be an object")
    for key, value in overrides.items():
        if key == "no_whiten":
            fields["whitening_enabled"] = not value
        elif key == "edge_mode":
            if value not in _EDGE_TOKENS:
                raise ConfigError(f"unknown edge mode {value!r}")
            fields["edge_mode"] = _EDGE_TOKENS[value]
        elif key == "bins":
            fields["n_bins"] = value
        elif key == "projections":
            fields["n_projections"] = value
        elif key == "level_repeats":
            fields["repeats"] = value
        elif key in ("projection_mode", "scorer", "k", "alpha", "seed") or key in _LEVEL_ONLY_KEYS:
            fields[key] = value
        else:
            raise ConfigError(f"unknown level override {key!r} for level {level_id!r}")
    try:
        return LevelConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad level configuration for {level_id!r}: {exc}") from exc


def _apply_length_filter(series, opts):
    lo, hi = opts["min_steps"], opts["max_steps"]
    if lo or hi:
        series = filter_series_by_length(series, lo or 0, hi or None)
        if not series:
            raise ValueError("length filter removed every series")
    return series


def _print_json(payload) -> None:
    json.dump(payload, sys.stdout, indent=2)
    sys.stdout.write("\n")


# ---------------------------------------------------------------- commands

def cmd_extract_ts(args: argparse.Namespace) -> int:
    opts = _merge_options(args)
    series = parse_uea_ts(args.input)
    series = _apply_length_filter(series, opts)
    pyramid = PyramidConfig(tau=opts["tau"], levels=opts["levels"])

    labeled = []
    n_dropped = 0
    for s in series:
        if args.normal_class is not None:
            label = LABEL_NORMAL if s.label == args.normal_class else LABEL_ANOMALOUS
        elif s.label is None:
            label = LABEL_NORMAL if args.split == "train" else LABEL_UNKNOWN
        elif args.split == "train":
            raise ConfigError(
                "train split from labeled series needs --normal-class")
        else:
            label = LABEL_UNKNOWN
        # a train split is one-class by definition
        if args.split == "train" and label != LABEL_NORMAL:
            n_dropped += 1
            continue
        labeled.append((s, label))
    if not labeled:
        raise ValueError("no series left for this split")

    entries = []
    for s, label in labeled:
        group_keys = {"level": "ts"}
        if s.label is not None:
            group_keys["class"] = str(s.label)
        entries.append(ManifestEntry(sample_id=s.series_id, label=label,
                                     group_keys=group_keys,
                                     path=f"{s.series_id}.sinb"))
    manifest = DatasetManifest(split=args.split, entries=entries)
    manifest.validate()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for (s, _), entry in zip(labeled, entries):
        eset = extract_pyramid_elements(s, pyramid)
        write_element_set(eset, out / entry.path)
    manifest.save(out)
    _print_json({"out": str(out), "n_samples": len(entries),
                 "n_dropped": n_dropped,
                 "tau": pyramid.tau, "levels": pyramid.levels})
    return EXIT_OK


def _load_samples(directory: Path):
    manifest = DatasetManifest.load(directory)
    manifest.validate()
    samples: dict[str, tuple[str, list]] = {}
    for entry in manifest.entries:
        eset = read_element_set(directory / entry.path, sample_id=entry.sample_id,
                                group_keys=entry.group_keys)
        samples.setdefault(entry.sample_id, (entry.label, []))[1].append(eset)
    return manifest, samples


def cmd_fit(args: argparse.Namespace) -> int:
    opts = _merge_options(args)
    data_dir = Path(args.data)
    manifest, samples = _load_samples(data_dir)
    if manifest.split != "train":
        raise FeatureStoreError(
            f"fit expects a train-split manifest, got {manifest.split!r}")
    sets = [eset for _, (_, group) in samples.items() for eset in group]
    level_ids = sorted({eset.group_keys.get("level", "default") for eset in sets})
    configs = {lv: _build_level(opts, lv, fit_repeats=True) for lv in level_ids}
    det = fit_detector(sets, configs, seed=opts["seed"])
    save_detector(det, args.out)
    _print_json({"detector": str(args.out), "levels": level_ids,
                 "n_train": det.n_train, "seed": opts["seed"]})
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    det = load_detector(args.detector)
    _, samples = _load_samples(Path(args.data))
    results = []
    for sample_id in sorted(samples):
        label, sets = samples[sample_id]
        scored = score_sample(det, sets)
        results.append({"sample_id": sample_id, "label": label,
                        "score": scored.final,
                        "per_level": scored.per_level})
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_id", "label", "score"])
            for row in results:
                writer.writerow([row["sample_id"], row["label"], row["score"]])
    _print_json(results)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    opts = _merge_options(args)
    start = time.perf_counter()
    out = Path(args.out)
    repeats = opts["repeats"]
    reports = []

    if args.protocol == "uea":
        if args.train_file and args.test_file:
            train_path, test_path = Path(args.train_file), Path(args.test_file)
            dataset = args.dataset or train_path.stem.removesuffix("_TRAIN")
        elif args.data_dir and args.dataset:
            dataset = args.dataset
            base = Path(args.data_dir) / dataset
            train_path = base / f"{dataset}_TRAIN.ts"
            test_path = base / f"{dataset}_TEST.ts"
        else:
            raise ConfigError(
                "uea protocol needs --train-file/--test-file or --data-dir with --dataset")
        train = _apply_length_filter(parse_uea_ts(train_path), opts)
        test = _apply_length_filter(parse_uea_ts(test_path), opts)
        pyramid = PyramidConfig(tau=opts["tau"], levels=opts["levels"])
        level = ts_level_config(
            n_projections=opts["projections"], n_bins=opts["bins"],
            projection_mode=opts["projection_mode"], scorer=opts["scorer"],
            k=opts["k"], alpha=opts["alpha"],
            whitening_enabled=not opts["no_whiten"],
            edge_mode=_EDGE_TOKENS[opts["edge_mode"]])
        for i in range(repeats):
            reports.append(evaluate_one_vs_rest(
                train, test, dataset=dataset, pyramid=pyramid, level=level,
                seed=opts["seed"] + i,
                scores_dir=out / "scores" / f"rep{i:03d}"))
    elif args.protocol == "manifest":
        if not (args.train_dir and args.test_dir):
            raise ConfigError("manifest protocol needs --train-dir and --test-dir")
        dataset = args.dataset or Path(args.train_dir).name
        train_manifest = DatasetManifest.load(Path(args.train_dir))
        level_ids = sorted({e.group_keys.get("level", "default")
                            for e in train_manifest.entries})
        configs = {lv: _build_level(opts, lv, fit_repeats=False) for lv in level_ids}
        for i in range(repeats):
            reports.append(evaluate_manifest(
                args.train_dir, args.test_dir, configs, dataset=dataset,
                seed=opts["seed"] + i,
                scores_dir=out / "scores" / f"rep{i:03d}"))
    else:
        raise ConfigError(f"unknown protocol {args.protocol!r}")

    means = [r.mean_auc for r in reports]
    per_class: dict[str, list[float]] = {}
    for r in reports:
        for c in r.class_results:
            per_class.setdefault(c.label, []).append(c.auc)
    fingerprint = config_fingerprint({
        "protocol": args.protocol, "dataset": dataset,
        "options": {k: v for k, v in opts.items()},
    })
    payload = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "protocol": args.protocol,
        "dataset": dataset,
        "repeats": repeats,
        "mean_auc": float(np.mean(means)),
        "std_auc": float(np.std(means, ddof=1)) if repeats > 1 else 0.0,
        "per_class": {lbl: float(np.mean(v)) for lbl, v in per_class.items()},
        "per_repeat": means,
        "fingerprint": fingerprint,
        "runtime_seconds": time.perf_counter() - start,
        "scores_paths": [p for r in reports for p in r.scores_paths],
    }
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write_bytes(out / "report.json", json.dumps(payload, indent=2).encode())
    _print_json(payload)
    return EXIT_OK


def cmd_parse_uea(args: argparse.Namespace) -> int:
    series = parse_uea_ts(args.input)
    lengths = [s.n_steps for s in series]
    classes: dict[str, int] = {}
    for s in series:
        if s.label is not None:
            classes[s.label] = classes.get(s.label, 0) + 1
    payload = {
        "path": str(args.input),
        "n_series": len(series),
        "n_channels": series[0].n_channels if series else 0,
        "min_steps": min(lengths) if lengths else 0,
        "max_steps": max(lengths) if lengths else 0,
        "equal_length": len(set(lengths)) <= 1,
        "classes": classes,
    }
    if args.out:
        _atomic_write_bytes(Path(args.out), json.dumps(payload, indent=2).encode())
    _print_json(payload)
    return EXIT_OK


# ---------------------------------------------------------------- wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sinbad",
        description="Set-feature anomaly detection over element-set containers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a detector from a train manifest directory")
    p.add_argument("data", help="manifest directory of element-set containers")
    p.add_argument("--out", required=True, help="detector output directory")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="score every sample in a manifest directory")
    p.add_argument("detector", help="detector directory from `fit`")
    p.add_argument("data", help="manifest directory to score")
    p.add_argument("--out", help="optional CSV path for the scores")
    _add_common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="run a benchmark protocol and write a report")
    p.add_argument("--protocol", choices=["uea", "manifest"], default="uea")
    p.add_argument("--dataset", help="dataset name (directory under --data-dir)")
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--train-file", dest="train_file")
    p.add_argument("--test-file", dest="test_file")
    p.add_argument("--train-dir", dest="train_dir")
    p.add_argument("--test-dir", dest="test_dir")
    p.add_argument("--min-steps", type=int, dest="min_steps")
    p.add_argument("--max-steps", type=int, dest="max_steps")
    p.add_argument("--out", required=True, help="report output directory")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("extract-ts",
                       help="expand series into pyramid element-set containers")
    p.add_argument("input", help="UEA-style .ts file")
    p.add_argument("--out", required=True, help="manifest output directory")
    p.add_argument("--split", choices=["train", "validation", "test"],
                   default="test")
    p.add_argument("--normal-class", dest="normal_class",
                   help="class treated as normal; others become anomalous")
    p.add_argument("--min-steps", type=int, dest="min_steps")
    p.add_argument("--max-steps", type=int, dest="max_steps")
    _add_common(p)
    p.set_defaults(func=cmd_extract_ts)

    p = sub.add_parser("parse-uea", help="summarize a UEA-style .ts file")
    p.add_argument("input")
    p.add_argument("--out", help="optional JSON output path")
    p.set_defaults(func=cmd_parse_uea)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except dm.DegenerateModelError as exc:
        print(f"degenerate model: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (FeatureStoreError, MissingGroupError, LeakageError, FileNotFoundError,
            NotADirectoryError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
