"""Gaussian density model over set descriptors, and the two scorers.

The model holds the training mean and a shrunk covariance, plus a whitening
factor ``W`` with ``W.T @ W == inv(sigma)`` so that squared Euclidean
distance in the whitened space equals the squared Mahalanobis distance.
Scoring is either the quadratic form against the training mean, or the mean
squared whitened distance to the k nearest training descriptors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .feature_store import ElementSet, _atomic_write_bytes, read_element_set, write_element_set

DEFAULT_ALPHA = 0.1

SCORER_MAHA = "maha"
SCORER_KNN = "knn"

_EIGVAL_RCOND = 1e-12


class DegenerateModelError(Exception):
    """Training descriptors carry no variance at all; upstream is broken."""


@dataclass
class GaussianModel:
    mu: np.ndarray
    sigma: np.ndarray
    whitener: np.ndarray
    alpha: float
    whitening_enabled: bool = True

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def _whitening_factor(sigma: np.ndarray) -> np.ndarray:
    """A matrix W with W.T @ W = pinv(sigma); inverse Cholesky when SPD."""
    try:
        lower = scipy.linalg.cholesky(sigma, lower=True)
        return scipy.linalg.solve_triangular(lower, np.eye(sigma.shape[0]), lower=True)
    except scipy.linalg.LinAlgError:
        # rank-deficient covariance (e.g. alpha=0 with few samples): use the
        # pseudo-inverse square root so W stays finite
        eigvals, eigvecs = np.linalg.eigh(sigma)
        floor = _EIGVAL_RCOND * max(eigvals.max(), 0.0)
        inv_sqrt = np.where(eigvals > floor, 1.0 / np.sqrt(np.maximum(eigvals, floor)), 0.0)
        return (eigvecs * inv_sqrt) @ eigvecs.T


def fit_gaussian(descriptors: np.ndarray, alpha: float = DEFAULT_ALPHA,
                 whitening_enabled: bool = True) -> GaussianModel:
    """Fit mean and shrunk covariance on training descriptors (rows).

    The empirical covariance uses the population convention (divide by the
    sample count).  Shrinkage blends it with a scaled identity:
    ``sigma = (1 - alpha) * S + alpha * (trace(S) / D) * I``.  With whitening
    disabled the covariance is replaced by the identity, reducing scoring to
    per-dimension squared differences.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    x = np.asarray(descriptors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"descriptors must be 2-D, got shape {x.shape}")
    if x.shape[0] < 2:
        raise ValueError(f"need at least 2 training descriptors, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("descriptors contain non-finite values")
    n, dim = x.shape
    mu = x.mean(axis=0)
    if not whitening_enabled:
        eye = np.eye(dim)
        return GaussianModel(mu=mu, sigma=eye, whitener=eye.copy(), alpha=alpha,
                             whitening_enabled=False)
    centered = x - mu
    cov = centered.T @ centered / n
    trace = float(np.trace(cov))
    # identical descriptors leave only summation roundoff in the trace;
    # anything at that magnitude is variance-free in substance
    scale = max(float(np.max(np.abs(x))), np.finfo(np.float64).tiny)
    roundoff = dim * (16 * np.finfo(np.float64).eps * scale) ** 2
    if trace <= roundoff:
        raise DegenerateModelError(
            "degenerate covariance: training descriptors are identical"
        )
    sigma = (1.0 - alpha) * cov + alpha * (trace / dim) * np.eye(dim)
    return GaussianModel(mu=mu, sigma=sigma, whitener=_whitening_factor(sigma),
                         alpha=alpha, whitening_enabled=True)


def whiten(model: GaussianModel, descriptors: np.ndarray) -> np.ndarray:
    """Map descriptors (rows) into the whitened space of the model."""
    x = np.asarray(descriptors, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs model {model.dim}")
    return (x - model.mu) @ model.whitener.T


def mahalanobis_score(model: GaussianModel, h: np.ndarray) -> float:
    """Squared Mahalanobis distance of ``h`` from the training mean."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (model.dim,):
        raise ValueError(f"descriptor shape {h.shape} does not match model dim {model.dim}")
    y = model.whitener @ (h - model.mu)
    return float(y @ y)


@dataclass
class TrainBank:
    """Whitened training descriptors for nearest-neighbor scoring."""

    whitened: np.ndarray
    k: int = 1

    def __post_init__(self):
        self.whitened = np.ascontiguousarray(self.whitened, dtype=np.float64)
        if self.whitened.ndim != 2 or self.whitened.shape[0] < 1:
            raise ValueError("bank must contain at least one descriptor")
        if not 1 <= self.k <= self.whitened.shape[0]:
            raise ValueError(
                f"k must satisfy 1 <= k <= {self.whitened.shape[0]}, got {self.k}"
            )

    @property
    def n_samples(self) -> int:
        return self.whitened.shape[0]


def build_bank(model: GaussianModel, descriptors: np.ndarray, k: int = 1) -> TrainBank:
    return TrainBank(whitened=whiten(model, descriptors), k=k)


def knn_score(bank: TrainBank, model: GaussianModel, h: np.ndarray) -> float:
    """Mean squared whitened distance to the k nearest training descriptors.

    Exact brute-force search; with k=1 this is the squared distance to the
    nearest neighbor.
    """
    y = whiten(model, np.asarray(h, dtype=np.float64)[None, :])[0]
    diff = bank.whitened - y
    d2 = np.einsum("ij,ij->i", diff, diff)
    if bank.k == 1:
        return float(d2.min())
    nearest = np.partition(d2, bank.k - 1)[: bank.k]
    return float(nearest.mean())


def training_scores(model: GaussianModel, descriptors: np.ndarray,
                    scorer: str = SCORER_MAHA, k: int = 1) -> np.ndarray:
    """Scores of the training descriptors under their own model.

    For the kNN scorer the self-match is excluded (leave-one-out), so the
    values reflect what an unseen normal sample would receive.
    """
    x = np.asarray(descriptors, dtype=np.float64)
    w = whiten(model, x)
    if scorer == SCORER_MAHA:
        return np.einsum("ij,ij->i", w, w)
    if scorer != SCORER_KNN:
        raise ValueError(f"unknown scorer {scorer!r}")
    n = w.shape[0]
    if n < 2:
        raise ValueError("leave-one-out kNN needs at least 2 training descriptors")
    sq = np.einsum("ij,ij->i", w, w)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (w @ w.T)
    np.fill_diagonal(d2, np.inf)
    d2 = np.maximum(d2, 0.0)
    kk = min(k, n - 1)
    part = np.partition(d2, kk - 1, axis=1)[:, :kk]
    return part.mean(axis=1)


def save_model(model: GaussianModel, path) -> None:
    """Persist the model as an npz blob plus a JSON sidecar."""
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, mu=model.mu, sigma=model.sigma, whitener=model.whitener)
    sidecar = {
        "kind": "gaussian_model",
        "format_version": 1,
        "alpha": model.alpha,
        "whitening_enabled": model.whitening_enabled,
        "dim": int(model.dim),
    }
    _atomic_write_bytes(path.with_suffix(".json"), json.dumps(sidecar, indent=2).encode())


def load_model(path) -> GaussianModel:
    path = Path(path)
    with open(path.with_suffix(".json")) as fh:
        sidecar = json.load(fh)
    blob = np.load(path if path.suffix == ".npz" else path.with_suffix(".npz"))
    model = GaussianModel(mu=blob["mu"], sigma=blob["sigma"], whitener=blob["whitener"],
                          alpha=sidecar["alpha"],
                          whitening_enabled=sidecar["whitening_enabled"])
    if model.dim != sidecar["dim"]:
        raise ValueError(f"{path}: blob dimension {model.dim} != sidecar {sidecar['dim']}")
    return model


def save_bank(bank: TrainBank, path) -> None:
    path = Path(path)
    write_element_set(ElementSet(elements=bank.whitened, sample_id=path.stem), path)
    _atomic_write_bytes(path.with_suffix(".json"),
                        json.dumps({"kind": "train_bank", "format_version": 1,
                                    "k": bank.k}).encode())


def load_bank(path) -> TrainBank:
    path = Path(path)
    with open(path.with_suffix(".json")) as fh:
        sidecar = json.load(fh)
    eset = read_element_set(path)
    return TrainBank(whitened=eset.elements.astype(np.float64), k=sidecar["k"])
