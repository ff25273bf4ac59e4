"""End-to-end anomaly detection on synthetic time series.

Normal traffic is a noisy two-tone oscillation.  Anomalies keep the same
marginal amplitude but inject a short transient burst, the kind of local
deviation a global statistic misses.  The script fits a detector on
normal series only, scores a mixed test split, and prints the ranking
plus the resulting ROC-AUC.  Run:

    python3 demos/03_synthetic_detection.py
"""

import numpy as np

from sinbad import (
    PyramidConfig,
    TimeSeries,
    extract_pyramid_elements,
    fit_detector,
    roc_auc,
    score_sample,
    ts_level_config,
)

T = 500


def normal_series(rng):
    t = np.arange(T)
    x = np.sin(2 * np.pi * t / 20) + 0.4 * np.sin(2 * np.pi * t / 7)
    return x + rng.normal(0, 0.15, T)


def anomalous_series(rng):
    x = normal_series(rng)
    start = rng.randint(50, T - 80)
    x[start:start + 30] += 1.5 * np.sin(2 * np.pi * np.arange(30) / 3)
    return x


def to_set(values, sample_id, cfg):
    ts = TimeSeries(np.asarray(values), series_id=sample_id)
    return extract_pyramid_elements(ts, cfg)


def main():
    rng = np.random.RandomState(7)
    cfg = PyramidConfig(tau=10, levels=6)

    train = [to_set(normal_series(rng), f"train-{i}", cfg) for i in range(40)]
    test = ([("normal", to_set(normal_series(rng), f"n{i}", cfg)) for i in range(15)]
            + [("anomalous", to_set(anomalous_series(rng), f"a{i}", cfg)) for i in range(15)])

    level = ts_level_config(n_projections=60, n_bins=16)
    detector = fit_detector(train, {level.level_id: level}, seed=0)

    scored = sorted(
        ((score_sample(detector, [s]).final, label, s.sample_id) for label, s in test),
        reverse=True,
    )
    print(f"{'score':>12}  label")
    for score, label, sid in scored[:8]:
        print(f"{score:12.1f}  {label} ({sid})")
    print(f"{'...':>12}")
    for score, label, sid in scored[-3:]:
        print(f"{score:12.1f}  {label} ({sid})")

    scores = [s for s, _, _ in scored]
    labels = [label == "anomalous" for _, label, _ in scored]
    print(f"\nROC-AUC over {len(test)} test series: {roc_auc(scores, labels):.3f}")
    print("Training saw only normal series; the burst shifts enough window")
    print("elements into unusual regions of projection space to rank all")
    print("anomalies above the normal scores.")


if __name__ == "__main__":
    main()
