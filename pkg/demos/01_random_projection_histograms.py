"""Why random projections: axis-aligned histograms can hide set structure.

Two populations of 2-D element sets are built so that their element means
and their per-axis histograms match exactly; only the sign correlation
between the two coordinates differs.  Axis-aligned histograms (identity
projections) barely tell them apart, while random directions expose the
difference immediately.  Run:

    python3 demos/01_random_projection_histograms.py
"""

import numpy as np

from sinbad import fit_bin_edges, histogram_descriptor, sample_projection, swd1


def structured_set(rng, anti, n=400, jitter=0.1):
    half = n // 2
    signs = np.concatenate([np.ones(half), -np.ones(half)])
    rng.shuffle(signs)
    x = signs + rng.normal(0, jitter, n)
    y = (-signs if anti else signs) + rng.normal(0, jitter, n)
    return np.stack([x, y], axis=1)


def mean_pair_distance(basis, sets_a, sets_b, n_bins=12):
    pool = np.concatenate(sets_a, axis=0) @ basis.matrix
    spec = fit_bin_edges(pool, n_bins)
    descs_a = [histogram_descriptor(s @ basis.matrix, spec) for s in sets_a]
    descs_b = [histogram_descriptor(s @ basis.matrix, spec) for s in sets_b]
    return float(np.mean([swd1(da, db) for da in descs_a for db in descs_b]))


def main():
    rng = np.random.RandomState(0)
    correlated = [structured_set(rng, anti=False) for _ in range(8)]
    anti = [structured_set(rng, anti=True) for _ in range(8)]

    print("Element statistics (first correlated vs first anti-correlated set):")
    for name, s in (("correlated", correlated[0]), ("anti", anti[0])):
        print(f"  {name:>10}: mean = {s.mean(axis=0).round(3)}, "
              f"x-std = {s[:, 0].std():.3f}, y-std = {s[:, 1].std():.3f}")
    print("Means and axis spreads match; the joint sign structure does not.\n")

    for mode, label in (("identity", "axis-aligned histograms"),
                        ("gaussian", "100 random directions")):
        n_proj = 2 if mode == "identity" else 100
        basis = sample_projection(2, n_proj, mode=mode, seed=1)
        within = mean_pair_distance(basis, correlated[:4], correlated[4:])
        across = mean_pair_distance(basis, correlated[:4], anti[:4])
        print(f"{label}:")
        print(f"  mean swd1 within the correlated population : {within:.4f}")
        print(f"  mean swd1 across the two populations       : {across:.4f}")
        print(f"  separation ratio                           : {across / within:.2f}\n")

    print("Random directions see the diagonal structure that the original")
    print("axes integrate away, so the across/within ratio grows sharply.")


if __name__ == "__main__":
    main()
