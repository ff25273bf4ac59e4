"""Random-projection histogram descriptors for element sets.

Each element of a set is projected onto ``n_proj`` shared directions, and
the distribution of the projected values along each direction is summarized
by a ``K``-bin histogram.  The concatenated (by default cumulative,
count-normalized) histograms form the set descriptor ``h`` of length
``n_proj * K``.  The L1 distance between two cumulative descriptors built
under the same spec equals the order-1 sliced Wasserstein distance between
the underlying quantized element distributions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .feature_store import ElementSet, _atomic_write_bytes, read_element_set, write_element_set

MODE_GAUSSIAN = "gaussian"
MODE_IDENTITY = "identity"
MODE_PCA = "pca"
_MODES = (MODE_GAUSSIAN, MODE_IDENTITY, MODE_PCA)

EDGE_EQUAL_WIDTH = "equal_width"
EDGE_QUANTILE = "quantile"
_EDGE_MODES = (EDGE_EQUAL_WIDTH, EDGE_QUANTILE)


@dataclass
class ProjectionBasis:
    """Projection directions as columns of an ``(n_dims, n_proj)`` matrix."""

    matrix: np.ndarray
    mode: str
    seed: int

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValueError(f"basis matrix must be 2-D, got shape {self.matrix.shape}")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")

    @property
    def n_dims(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_proj(self) -> int:
        return self.matrix.shape[1]


def sample_projection(n_dims: int, n_proj: int, mode: str = MODE_GAUSSIAN,
                      seed: int = 0,
                      training_elements: np.ndarray | None = None) -> ProjectionBasis:
    """Draw a projection basis.

    ``gaussian`` fills the matrix with i.i.d. standard normals from the
    seeded generator, so a given seed always reproduces the same matrix.
    ``identity`` returns the identity (``n_proj`` is forced to ``n_dims``).
    ``pca`` takes the top ``n_proj`` eigenvectors of the covariance of
    ``training_elements`` (rows = elements), descending eigenvalue order.
    """
    if mode == MODE_GAUSSIAN:
        rng = np.random.default_rng(seed)
        matrix = rng.standard_normal((n_dims, n_proj))
    elif mode == MODE_IDENTITY:
        matrix = np.eye(n_dims)
    elif mode == MODE_PCA:
        if training_elements is None:
            raise ValueError("pca mode requires training elements")
        elems = np.asarray(training_elements, dtype=np.float64)
        if elems.ndim != 2 or elems.shape[1] != n_dims:
            raise ValueError(
                f"training elements must be (n, {n_dims}), got {elems.shape}"
            )
        centered = elems - elems.mean(axis=0)
        cov = centered.T @ centered / elems.shape[0]
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1]
        matrix = eigvecs[:, order[: min(n_proj, n_dims)]]
    else:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    return ProjectionBasis(matrix=matrix, mode=mode, seed=seed)


def project_elements(eset: ElementSet, basis: ProjectionBasis) -> np.ndarray:
    """Project every element onto the basis columns; returns ``(N_E, n_proj)``."""
    if eset.n_dims != basis.n_dims:
        raise ValueError(
            f"element dimension {eset.n_dims} does not match basis dimension {basis.n_dims}"
        )
    return eset.elements.astype(np.float64) @ basis.matrix


@dataclass
class HistogramSpec:
    """Per-projection-dimension bin edges fit on the pooled training values.

    ``edges`` has shape ``(n_proj, n_bins + 1)`` with ascending rows;
    ``degenerate`` flags dimensions whose training values were constant
    (their descriptor mass goes entirely to bin 0).
    """

    edges: np.ndarray
    n_bins: int
    cumulative: bool = True
    edge_mode: str = EDGE_EQUAL_WIDTH
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        self.edges = np.ascontiguousarray(self.edges, dtype=np.float64)
        if self.n_bins < 2:
            raise ValueError(f"n_bins must be >= 2, got {self.n_bins}")
        if self.edges.ndim != 2 or self.edges.shape[1] != self.n_bins + 1:
            raise ValueError(
                f"edges must be (n_proj, n_bins+1), got {self.edges.shape} for K={self.n_bins}"
            )
        if self.edge_mode not in _EDGE_MODES:
            raise ValueError(f"edge_mode must be one of {_EDGE_MODES}, got {self.edge_mode!r}")
        if self.degenerate is None:
            self.degenerate = np.zeros(self.edges.shape[0], dtype=bool)
        else:
            self.degenerate = np.asarray(self.degenerate, dtype=bool)

    @property
    def n_proj(self) -> int:
        return self.edges.shape[0]

    @property
    def fingerprint(self) -> str:
        """Stable identity token; descriptors only compare under equal specs."""
        digest = hashlib.sha1()
        digest.update(self.edges.tobytes())
        digest.update(self.degenerate.tobytes())
        digest.update(f"{self.n_bins}|{int(self.cumulative)}|{self.edge_mode}".encode())
        return digest.hexdigest()

    def to_dict(self) -> dict:
        return {
            "kind": "histogram_spec",
            "format_version": 1,
            "n_bins": self.n_bins,
            "cumulative": self.cumulative,
            "edge_mode": self.edge_mode,
            "edges": self.edges.tolist(),
            "degenerate": self.degenerate.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HistogramSpec":
        return cls(
            edges=np.array(d["edges"], dtype=np.float64),
            n_bins=d["n_bins"],
            cumulative=d["cumulative"],
            edge_mode=d["edge_mode"],
            degenerate=np.array(d["degenerate"], dtype=bool),
        )


@dataclass
class SetDescriptor:
    """Concatenated histogram vector ``h`` plus the identity of its spec."""

    h: np.ndarray
    spec_fingerprint: str
    cumulative: bool = True

    def __post_init__(self):
        self.h = np.ascontiguousarray(self.h, dtype=np.float64)
        if self.h.ndim != 1:
            raise ValueError(f"descriptor must be 1-D, got shape {self.h.shape}")


def fit_bin_edges(projected_pool: np.ndarray, n_bins: int,
                  edge_mode: str = EDGE_EQUAL_WIDTH) -> HistogramSpec:
    """Fit per-dimension bin edges on pooled training projections.

    ``equal_width`` divides [min, max] into ``n_bins`` equal bins;
    ``quantile`` places edges at the i/K empirical quantiles.  A constant
    dimension collapses to a single repeated edge and is flagged degenerate.
    """
    pool = np.asarray(projected_pool, dtype=np.float64)
    if pool.ndim != 2:
        raise ValueError(f"projected pool must be 2-D, got shape {pool.shape}")
    if edge_mode not in _EDGE_MODES:
        raise ValueError(f"edge_mode must be one of {_EDGE_MODES}, got {edge_mode!r}")
    lo = pool.min(axis=0)
    hi = pool.max(axis=0)
    degenerate = hi <= lo
    n_proj = pool.shape[1]
    if edge_mode == EDGE_EQUAL_WIDTH:
        frac = np.linspace(0.0, 1.0, n_bins + 1)
        edges = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
    else:
        edges = np.quantile(pool, np.linspace(0.0, 1.0, n_bins + 1), axis=0).T
    edges[degenerate] = lo[degenerate, None]
    return HistogramSpec(edges=edges, n_bins=n_bins, edge_mode=edge_mode,
                         degenerate=degenerate)


def _bin_counts(values: np.ndarray, edges: np.ndarray, n_bins: int) -> np.ndarray:
    # half-open bins [e_k, e_{k+1}) with the last bin right-closed;
    # out-of-range values clamp to the boundary bins
    idx = np.searchsorted(edges, values, side="right") - 1
    np.clip(idx, 0, n_bins - 1, out=idx)
    return np.bincount(idx, minlength=n_bins).astype(np.float64)


def histogram_descriptor(projected: np.ndarray, spec: HistogramSpec) -> SetDescriptor:
    """Summarize projected elements as the concatenated histogram vector.

    Counts are normalized by the number of elements, so the non-cumulative
    fractions of every dimension sum to 1; the cumulative form is
    non-decreasing per dimension with final value 1.  Dimension-major layout.
    """
    projected = np.asarray(projected, dtype=np.float64)
    if projected.ndim != 2 or projected.shape[1] != spec.n_proj:
        raise ValueError(
            f"projected matrix must be (n_elements, {spec.n_proj}), got {projected.shape}"
        )
    n_elements = projected.shape[0]
    k = spec.n_bins
    out = np.empty((spec.n_proj, k), dtype=np.float64)
    for j in range(spec.n_proj):
        if spec.degenerate[j]:
            out[j, 0] = n_elements
            out[j, 1:] = 0.0
        else:
            out[j] = _bin_counts(projected[:, j], spec.edges[j], k)
    out /= n_elements
    if spec.cumulative:
        np.cumsum(out, axis=1, out=out)
    return SetDescriptor(h=out.reshape(-1), spec_fingerprint=spec.fingerprint,
                         cumulative=spec.cumulative)


def describe_set(eset: ElementSet, basis: ProjectionBasis,
                 spec: HistogramSpec) -> SetDescriptor:
    """Convenience: project then histogram one element set."""
    return histogram_descriptor(project_elements(eset, basis), spec)


def swd1(h_x: SetDescriptor, h_y: SetDescriptor) -> float:
    """Order-1 sliced Wasserstein distance between two sets.

    Equals the L1 distance between their cumulative descriptors; both
    descriptors must come from the same (cumulative) spec.
    """
    if h_x.spec_fingerprint != h_y.spec_fingerprint:
        raise ValueError("descriptors were built under different histogram specs")
    if not (h_x.cumulative and h_y.cumulative):
        raise ValueError("swd1 requires cumulative descriptors")
    return float(np.abs(h_x.h - h_y.h).sum())


def save_projection_basis(basis: ProjectionBasis, path) -> None:
    """Persist the basis matrix as a container plus a JSON sidecar."""
    path = Path(path)
    write_element_set(ElementSet(elements=basis.matrix, sample_id=path.stem), path)
    sidecar = {
        "kind": "projection_basis",
        "format_version": 1,
        "mode": basis.mode,
        "seed": basis.seed,
    }
    _atomic_write_bytes(path.with_suffix(".json"), json.dumps(sidecar, indent=2).encode())


def load_projection_basis(path) -> ProjectionBasis:
    path = Path(path)
    with open(path.with_suffix(".json")) as fh:
        sidecar = json.load(fh)
    eset = read_element_set(path)
    return ProjectionBasis(matrix=eset.elements.astype(np.float64),
                           mode=sidecar["mode"], seed=sidecar["seed"])


def save_descriptor(desc: SetDescriptor, path) -> None:
    """Persist a descriptor as a 1 x (n_proj * n_bins) container."""
    path = Path(path)
    write_element_set(ElementSet(elements=desc.h[None, :], sample_id=path.stem), path)
    sidecar = {
        "kind": "set_descriptor",
        "format_version": 1,
        "spec_fingerprint": desc.spec_fingerprint,
        "cumulative": desc.cumulative,
    }
    _atomic_write_bytes(path.with_suffix(".json"), json.dumps(sidecar, indent=2).encode())


def load_descriptor(path) -> SetDescriptor:
    path = Path(path)
    with open(path.with_suffix(".json")) as fh:
        sidecar = json.load(fh)
    eset = read_element_set(path)
    return SetDescriptor(h=eset.elements[0].astype(np.float64),
                         spec_fingerprint=sidecar["spec_fingerprint"],
                         cumulative=sidecar["cumulative"])
