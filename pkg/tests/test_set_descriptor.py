import numpy as np
import pytest

from sinbad.feature_store import ElementSet
from sinbad.set_descriptor import (
    EDGE_QUANTILE,
    HistogramSpec,
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


def transport_cost_1d(p, q):
    """Brute-force 1-D optimal transport between bin histograms.

    Unit distance between adjacent bins; greedy left-to-right matching is
    optimal in one dimension.  Independent oracle for swd1.
    """
    p = list(map(float, p))
    q = list(map(float, q))
    cost = 0.0
    i = j = 0
    while i < len(p) and j < len(q):
        moved = min(p[i], q[j])
        cost += moved * abs(i - j)
        p[i] -= moved
        q[j] -= moved
        if p[i] <= 1e-15:
            i += 1
        if q[j] <= 1e-15:
            j += 1
    return cost


def quantized_spec(n_proj, n_bins, cumulative=True):
    """Unit-width bins [0,1,...,K] shared by every projection dimension."""
    edges = np.tile(np.arange(n_bins + 1, dtype=np.float64), (n_proj, 1))
    return HistogramSpec(edges=edges, n_bins=n_bins, cumulative=cumulative,
                         edge_mode="equal_width")


def counts_to_values(counts, rng):
    """Expand per-dim bin counts into shuffled bin-center sample columns."""
    cols = []
    for row in counts:
        vals = np.repeat(np.arange(len(row), dtype=np.float64) + 0.5, row)
        rng.shuffle(vals)
        cols.append(vals)
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------- projection

def test_identity_projection():
    basis = sample_projection(3, 3, mode="identity")
    np.testing.assert_array_equal(basis.matrix, np.eye(3))
    # identity ignores the requested width; it must keep every coordinate
    assert sample_projection(4, 2, mode="identity").matrix.shape == (4, 4)


def test_gaussian_projection_deterministic():
    a = sample_projection(20, 10, seed=42)
    b = sample_projection(20, 10, seed=42)
    c = sample_projection(20, 10, seed=43)
    np.testing.assert_array_equal(a.matrix, b.matrix)
    assert not np.array_equal(a.matrix, c.matrix)
    assert a.mode == "gaussian" and a.seed == 42


def test_gaussian_projection_moments():
    basis = sample_projection(400, 300, seed=0)
    flat = basis.matrix.ravel()
    assert abs(flat.mean()) < 0.01
    assert abs(flat.std() - 1.0) < 0.01


def test_pca_projection_on_a_line():
    rng = np.random.RandomState(0)
    direction = np.array([1.0, 2.0]) / np.sqrt(5.0)
    elements = np.outer(rng.randn(500), direction)
    basis = sample_projection(2, 2, mode="pca", training_elements=elements)
    lead = basis.matrix[:, 0]
    assert abs(abs(lead @ direction) - 1.0) < 1e-8


def test_pca_projection_orthonormal():
    rng = np.random.RandomState(1)
    elements = rng.randn(200, 6) @ rng.randn(6, 6)
    basis = sample_projection(6, 4, mode="pca", training_elements=elements)
    assert basis.matrix.shape == (6, 4)
    np.testing.assert_allclose(basis.matrix.T @ basis.matrix, np.eye(4), atol=1e-10)


def test_pca_requires_training_elements():
    with pytest.raises(ValueError):
        sample_projection(4, 2, mode="pca")


def test_project_elements_identity_and_hand_case():
    eset = ElementSet(np.array([[1.0, 0.0]], dtype=np.float32))
    ident = sample_projection(2, 2, mode="identity")
    np.testing.assert_allclose(project_elements(eset, ident), [[1.0, 0.0]])

    basis = sample_projection(2, 3)
    basis.matrix = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    np.testing.assert_allclose(project_elements(eset, basis), [[1.0, 0.0, 1.0]])

    zero = ElementSet(np.zeros((1, 2), dtype=np.float32))
    np.testing.assert_array_equal(project_elements(zero, basis), [[0.0, 0.0, 0.0]])


def test_project_elements_dim_mismatch():
    eset = ElementSet(np.ones((2, 3), dtype=np.float32))
    basis = sample_projection(4, 2)
    with pytest.raises(ValueError):
        project_elements(eset, basis)


# ---------------------------------------------------------------- bin edges

def test_equal_width_edges_hand_case():
    spec = fit_bin_edges(np.array([[0.0], [1.0]]), n_bins=2)
    np.testing.assert_allclose(spec.edges[0], [0.0, 0.5, 1.0])
    assert not spec.degenerate[0]


def test_degenerate_dimension_flagged():
    spec = fit_bin_edges(np.zeros((3, 1)), n_bins=4)
    assert spec.degenerate[0]
    desc = histogram_descriptor(np.zeros((5, 1)), spec)
    expected = np.ones(4) if spec.cumulative else np.eye(4)[0]
    np.testing.assert_allclose(desc.h, expected)


def test_quantile_edges_on_uniform():
    rng = np.random.RandomState(2)
    values = rng.uniform(0, 1, size=(100_000, 1))
    spec = fit_bin_edges(values, n_bins=4, edge_mode=EDGE_QUANTILE)
    np.testing.assert_allclose(spec.edges[0], [0, 0.25, 0.5, 0.75, 1.0], atol=0.01)


def test_edges_ascending_per_dimension():
    rng = np.random.RandomState(3)
    values = rng.randn(500, 7) * rng.uniform(0.1, 5.0, size=7)
    for mode in ("equal_width", EDGE_QUANTILE):
        spec = fit_bin_edges(values, n_bins=6, edge_mode=mode)
        assert np.all(np.diff(spec.edges, axis=1) >= 0)


def test_min_bin_count():
    with pytest.raises(ValueError):
        fit_bin_edges(np.array([[0.0], [1.0]]), n_bins=1)


# ---------------------------------------------------------------- histograms

def test_histogram_hand_case():
    spec = HistogramSpec(edges=np.array([[0.0, 0.5, 1.0]]), n_bins=2,
                         cumulative=False, edge_mode="equal_width")
    desc = histogram_descriptor(np.array([[0.0], [0.5], [1.0]]), spec)
    np.testing.assert_allclose(desc.h, [1 / 3, 2 / 3])

    spec.cumulative = True
    desc = histogram_descriptor(np.array([[0.0], [0.5], [1.0]]), spec)
    np.testing.assert_allclose(desc.h, [1 / 3, 1.0])


def test_histogram_point_mass_at_min():
    spec = HistogramSpec(edges=np.array([[0.0, 1.0, 2.0, 3.0]]), n_bins=3,
                         cumulative=False, edge_mode="equal_width")
    desc = histogram_descriptor(np.zeros((4, 1)), spec)
    np.testing.assert_allclose(desc.h, [1.0, 0.0, 0.0])


def test_out_of_range_values_clamp():
    spec = HistogramSpec(edges=np.array([[0.0, 1.0, 2.0]]), n_bins=2,
                         cumulative=False, edge_mode="equal_width")
    desc = histogram_descriptor(np.array([[-5.0], [7.0], [2.0]]), spec)
    # below range -> first bin; above range and right edge -> last bin
    np.testing.assert_allclose(desc.h, [1 / 3, 2 / 3])


def test_histogram_matches_numpy_for_in_range_data():
    # np.histogram uses the same half-open convention with a closed last bin
    rng = np.random.RandomState(4)
    pool = rng.randn(400, 5)
    spec = fit_bin_edges(pool, n_bins=8)
    sample = pool[:57]
    desc = histogram_descriptor(sample, spec)
    stacked = desc.h.reshape(5, 8)
    for j in range(5):
        expected, _ = np.histogram(sample[:, j], bins=spec.edges[j])
        np.testing.assert_allclose(np.diff(stacked[j], prepend=0.0) * 57,
                                   expected, atol=1e-9)


def test_fraction_sums_and_monotonicity():
    rng = np.random.RandomState(5)
    pool = rng.randn(300, 4)
    plain = fit_bin_edges(pool, n_bins=10)
    plain.cumulative = False
    desc = histogram_descriptor(pool[:40], plain)
    np.testing.assert_allclose(desc.h.reshape(4, 10).sum(axis=1), 1.0, atol=1e-9)

    cum = fit_bin_edges(pool, n_bins=10)
    cdesc = histogram_descriptor(pool[:40], cum)
    rows = cdesc.h.reshape(4, 10)
    np.testing.assert_allclose(rows[:, -1], 1.0, atol=1e-9)
    assert np.all(np.diff(rows, axis=1) >= -1e-12)


def test_permutation_invariance():
    rng = np.random.RandomState(6)
    eset = ElementSet(rng.randn(60, 9).astype(np.float32))
    basis = sample_projection(9, 15, seed=1)
    spec = fit_bin_edges(project_elements(eset, basis), n_bins=7)
    reference = describe_set(eset, basis, spec).h
    for _ in range(50):
        perm = rng.permutation(60)
        shuffled = ElementSet(eset.elements[perm])
        np.testing.assert_array_equal(describe_set(shuffled, basis, spec).h,
                                      reference)


# ---------------------------------------------------------------- swd1

def test_swd1_identity_and_symmetry():
    rng = np.random.RandomState(7)
    spec = quantized_spec(n_proj=3, n_bins=6)
    a = histogram_descriptor(counts_to_values(rng.multinomial(50, [1 / 6] * 6, size=3), rng), spec)
    b = histogram_descriptor(counts_to_values(rng.multinomial(50, [1 / 6] * 6, size=3), rng), spec)
    assert swd1(a, a) == 0.0
    assert swd1(a, b) == swd1(b, a)
    assert swd1(a, b) >= 0.0


def test_swd1_point_masses():
    # unit masses at the first and last of 5 bins are 4 transport steps apart
    spec = quantized_spec(n_proj=1, n_bins=5)
    lo = histogram_descriptor(np.full((10, 1), 0.5), spec)
    hi = histogram_descriptor(np.full((10, 1), 4.5), spec)
    assert swd1(lo, hi) == pytest.approx(4.0, abs=1e-12)


def test_swd1_equals_brute_force_transport():
    rng = np.random.RandomState(8)
    for _ in range(100):
        n_bins = rng.randint(2, 12)
        n_proj = rng.randint(1, 5)
        spec = quantized_spec(n_proj, n_bins)
        counts_a = rng.multinomial(rng.randint(5, 200), [1 / n_bins] * n_bins, size=n_proj)
        counts_b = rng.multinomial(rng.randint(5, 200), [1 / n_bins] * n_bins, size=n_proj)
        da = histogram_descriptor(counts_to_values(counts_a, rng), spec)
        db = histogram_descriptor(counts_to_values(counts_b, rng), spec)
        expected = sum(
            transport_cost_1d(row_a / row_a.sum(), row_b / row_b.sum())
            for row_a, row_b in zip(counts_a, counts_b))
        assert swd1(da, db) == pytest.approx(expected, abs=1e-9)


def test_swd1_rejects_mismatched_specs():
    spec_a = quantized_spec(n_proj=2, n_bins=4)
    spec_b = HistogramSpec(edges=spec_a.edges * 2.0, n_bins=4, cumulative=True,
                           edge_mode="equal_width")
    da = histogram_descriptor(np.ones((3, 2)), spec_a)
    db = histogram_descriptor(np.ones((3, 2)), spec_b)
    with pytest.raises(ValueError):
        swd1(da, db)


def test_swd1_rejects_non_cumulative():
    spec = quantized_spec(n_proj=1, n_bins=4, cumulative=False)
    d = histogram_descriptor(np.ones((3, 1)), spec)
    with pytest.raises(ValueError):
        swd1(d, d)


def test_structured_sets_separate_under_projection():
    """Sets with equal means and axis marginals but different joint structure.

    Distance between a correlated and an anti-correlated draw must beat the
    distance among i.i.d. correlated draws; permutation-style p-value below
    0.01 against 199 null draws.
    """
    rng = np.random.RandomState(9)

    def draw(anti):
        signs = rng.choice([-1.0, 1.0], size=200)
        x = signs + rng.normal(0, 0.1, 200)
        y = (-signs if anti else signs) + rng.normal(0, 0.1, 200)
        return np.stack([x, y], axis=1)

    nulls = [draw(anti=False) for _ in range(199)]
    probe = draw(anti=True)

    basis = sample_projection(2, 100, seed=0)
    pool = np.concatenate(nulls[:50], axis=0) @ basis.matrix
    spec = fit_bin_edges(pool, n_bins=10)
    descs = [histogram_descriptor(s @ basis.matrix, spec) for s in nulls]
    probe_desc = histogram_descriptor(probe @ basis.matrix, spec)

    reference = descs[0]
    probe_dist = swd1(reference, probe_desc)
    null_dists = [swd1(reference, d) for d in descs[1:]]
    exceed = sum(d >= probe_dist for d in null_dists)
    p_value = (1 + exceed) / (1 + len(null_dists))
    assert p_value < 0.01, f"p={p_value:.4f}"


# ---------------------------------------------------------------- persistence

def test_basis_round_trip(tmp_path):
    basis = sample_projection(12, 5, seed=3)
    save_projection_basis(basis, tmp_path / "basis.sinb")
    back = load_projection_basis(tmp_path / "basis.sinb")
    assert back.mode == "gaussian" and back.seed == 3
    # container payload is float32; the reloaded matrix is the rounded one
    np.testing.assert_array_equal(back.matrix,
                                  basis.matrix.astype(np.float32).astype(np.float64))


def test_descriptor_round_trip(tmp_path):
    rng = np.random.RandomState(10)
    spec = quantized_spec(n_proj=4, n_bins=6)
    desc = histogram_descriptor(rng.uniform(0, 6, size=(30, 4)), spec)
    save_descriptor(desc, tmp_path / "d.sinb")
    back = load_descriptor(tmp_path / "d.sinb")
    assert back.spec_fingerprint == desc.spec_fingerprint
    assert back.cumulative == desc.cumulative
    np.testing.assert_allclose(back.h, desc.h, atol=1e-7)
