"""One-vs-rest benchmark on a UEA classification dataset.

Each class takes a turn as the normal population: a detector trains on
that class's training series and scores every test series, with the
other classes treated as anomalous.  The dataset figure is the mean
ROC-AUC over classes.  Usage:

    python3 demos/04_uea_benchmark.py Epilepsy [--data-dir data/UEA]

Expects <data-dir>/<Dataset>/<Dataset>_TRAIN.ts and _TEST.ts; fetch them
with scripts/fetch_uea.py on a machine with network access.  The same
protocol is available from the command line as
`sinbad eval --protocol one-vs-rest --data-dir ... --dataset ...`.
"""

import argparse
import sys
from pathlib import Path

from sinbad import (
    PyramidConfig,
    evaluate_one_vs_rest,
    filter_series_by_length,
    parse_uea_ts,
    ts_level_config,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dataset", help="dataset directory name, e.g. Epilepsy")
    ap.add_argument("--data-dir", default="data/UEA")
    ap.add_argument("--levels", type=int, default=9, help="pyramid scales")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    root = Path(args.data_dir) / args.dataset
    train_file = root / f"{args.dataset}_TRAIN.ts"
    test_file = root / f"{args.dataset}_TEST.ts"
    if not train_file.exists() or not test_file.exists():
        print(f"{train_file} not found.", file=sys.stderr)
        print("Fetch the dataset first:  python3 scripts/fetch_uea.py "
              f"--out {args.data_dir} {args.dataset}", file=sys.stderr)
        return 1

    train = parse_uea_ts(train_file)
    test = parse_uea_ts(test_file)
    if args.dataset == "SpokenArabicDigits":
        # Very short or very long utterances dominate otherwise.
        train = filter_series_by_length(train, 20, 50)
        test = filter_series_by_length(test, 20, 50)

    report = evaluate_one_vs_rest(
        train,
        test,
        dataset=args.dataset,
        pyramid=PyramidConfig(tau=10, levels=args.levels),
        level=ts_level_config(store_bank=False),
        seed=args.seed,
    )
    print(f"{args.dataset}: {len(train)} train / {len(test)} test series, "
          f"{len(report.class_results)} classes")
    for cr in report.class_results:
        print(f"  class {cr.label:<12} AUC {100 * cr.auc:6.2f}  "
              f"({cr.n_train} train, {cr.n_test_normal}+{cr.n_test_anomalous} test)")
    print(f"mean AUC: {100 * report.mean_auc:.2f}  "
          f"(+/- {100 * report.std_auc:.2f} across classes, "
          f"{report.runtime_seconds:.1f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
