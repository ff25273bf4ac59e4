"""Window-pyramid element extraction for time series.

A series of ``T`` steps becomes a set of ``T`` elements.  The element at
step ``t`` is a pyramid of ``levels`` windows, all anchored at ``t``: the
scale-``c`` window holds ``tau`` samples read at stride ``c`` from the
series after zero-padding it by ``c * tau / 2`` rows on each side.  Element
dimension is therefore ``levels * tau * n_channels``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feature_store import ElementSet, TimeSeries

DEFAULT_TAU = 10
DEFAULT_LEVELS = 9


@dataclass(frozen=True)
class PyramidConfig:
    """``tau`` samples per window, ``levels`` pyramid scales (stride 1..levels)."""

    tau: int = DEFAULT_TAU
    levels: int = DEFAULT_LEVELS

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if self.tau % 2 != 0:
            # padding is tau/2 per side; odd tau would force silent rounding
            raise ValueError(f"tau must be even, got {self.tau}")
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")

    @property
    def element_dim_per_channel(self) -> int:
        return self.levels * self.tau


def pad_series(values: np.ndarray, tau: int, stride: int) -> np.ndarray:
    """Zero-pad ``(T, C)`` values by ``stride * tau / 2`` rows on each side."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if tau % 2 != 0:
        raise ValueError(f"tau must be even, got {tau}")
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    half = stride * tau // 2
    return np.pad(values, ((half, half), (0, 0)))


def extract_pyramid_elements(series: TimeSeries, cfg: PyramidConfig,
                             level_id: str = "ts") -> ElementSet:
    """Build the element set of window pyramids for one series.

    Element ``t`` concatenates, over scales ``c = 1..levels``, the ``tau``
    rows ``t, t+c, ..., t+(tau-1)*c`` of the scale-``c`` padded series.  The
    output has ``T`` elements of dimension ``levels * tau * C``; the layout
    is scale-major, then window position, then channel.
    """
    t_steps, n_ch = series.values.shape
    step_idx = np.arange(t_steps)[:, None]
    parts = []
    for scale in range(1, cfg.levels + 1):
        padded = pad_series(series.values, cfg.tau, scale)
        rows = step_idx + scale * np.arange(cfg.tau)[None, :]
        windows = padded[rows]                      # (T, tau, C)
        parts.append(windows.reshape(t_steps, cfg.tau * n_ch))
    elements = np.concatenate(parts, axis=1)
    return ElementSet(
        elements=elements,
        sample_id=series.series_id,
        group_keys={"level": level_id},
    )
