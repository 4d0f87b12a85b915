"""Video-level encodings of a slice feature matrix.

Two graph forms plus four flat baselines:

* spectral graph: one vertex per feature channel; vertex features are the
  low end of the channel's amplitude spectrum resampled onto a shared
  frequency grid, so the shape never depends on video length;
* sequential graph: one vertex per slice, directed time-forward edges for
  each configured window size;
* baselines: mean of slice predictions (atp), per-channel statistics (sta),
  flattened spectra (spv) and the matrix form of the same spectra (sph).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import SliceFeatureMatrix
from .errors import ConfigError, DomainError

DEFAULT_GRID_BINS = 128
DEFAULT_TOP_K = 24
DEFAULT_WINDOWS = (1, 2, 4, 8)

# Per-channel statistics used by the sta baseline, in output order.
STA_STATISTICS = (
    "mean",
    "std",
    "min",
    "max",
    "range",
    "median",
    "skewness",
    "kurtosis",
    "rms",
    "lag1_autocorr",
    "mean_abs_diff",
    "trend_slope",
)


@dataclass
class SpectralGraph:
    """Complete graph over feature channels with spectral vertex features."""

    vertex_features: np.ndarray  # [M, K_f] float64
    adjacency: np.ndarray  # [M, M] bool, symmetric, zero diagonal
    channel_ids: list[int] = field(default_factory=list)

    @property
    def num_vertices(self) -> int:
        return self.vertex_features.shape[0]


@dataclass
class SequentialGraph:
    """One vertex per slice; directed edges i -> i+w for each window w."""

    vertex_features: np.ndarray  # [S, M]
    edges: np.ndarray  # [E, 3] int64 rows (src, dst, window)
    window_set: tuple[int, ...]

    @property
    def num_vertices(self) -> int:
        return self.vertex_features.shape[0]


@dataclass
class SpectralHeatmap:
    """Matrix form [M, K_f] of the spectral vertex features."""

    values: np.ndarray


def _validate_grid(grid_bins: int, top_k: int) -> None:
    if grid_bins < 2:
        raise ConfigError(f"grid_bins must be >= 2, got {grid_bins}")
    if not 1 <= top_k <= grid_bins:
        raise ConfigError(f"top_k must lie in [1, grid_bins], got {top_k}")


def spectral_encode_series(series, grid_bins: int = DEFAULT_GRID_BINS, top_k: int = DEFAULT_TOP_K) -> np.ndarray:
    """Length-independent amplitude spectrum of a 1-D series.

    The DFT amplitudes |X_k|/S at normalized frequencies k/S in [0, 0.5] are
    resampled onto a uniform ``grid_bins``-point grid over [0, 0.5]: bin 0 is
    pinned to the DC amplitude, the remaining bins linearly interpolate the
    non-DC samples (clamped at both ends, so a grid point below the series'
    fundamental takes the fundamental's amplitude rather than leaking DC).
    Returns the first ``top_k`` bins. Phase is discarded, which makes the
    encoding exactly invariant to circular shifts of the series.
    """
    _validate_grid(grid_bins, top_k)
    x = np.asarray(series, dtype=np.float64).ravel()
    s = x.shape[0]
    if s < 2:
        raise DomainError(f"spectral encoding needs a series of length >= 2, got {s}")
    amplitudes = np.abs(np.fft.rfft(x)) / s
    sample_freqs = np.arange(amplitudes.shape[0], dtype=np.float64) / s
    grid = 0.5 * np.arange(grid_bins, dtype=np.float64) / (grid_bins - 1)
    out = np.empty(grid_bins, dtype=np.float64)
    out[0] = amplitudes[0]
    out[1:] = np.interp(grid[1:], sample_freqs[1:], amplitudes[1:])
    return out[:top_k]


def spectral_encode_matrix(feats: SliceFeatureMatrix, grid_bins: int = DEFAULT_GRID_BINS, top_k: int = DEFAULT_TOP_K) -> np.ndarray:
    """Per-channel spectral encoding of the whole matrix -> [M, top_k]."""
    values = np.asarray(feats.values, dtype=np.float64)
    return np.stack(
        [spectral_encode_series(values[:, m], grid_bins, top_k) for m in range(values.shape[1])]
    )


def build_spg(feats: SliceFeatureMatrix, grid_bins: int = DEFAULT_GRID_BINS, top_k: int = DEFAULT_TOP_K) -> SpectralGraph:
    """Spectral graph: channel vertices, complete adjacency, no self-loops."""
    vertex_features = spectral_encode_matrix(feats, grid_bins, top_k)
    m = vertex_features.shape[0]
    adjacency = ~np.eye(m, dtype=bool)
    return SpectralGraph(vertex_features=vertex_features, adjacency=adjacency, channel_ids=list(range(m)))


def build_seg(feats: SliceFeatureMatrix, windows=DEFAULT_WINDOWS) -> SequentialGraph:
    """Sequential graph with one directed edge (i, i+w, w) per window w."""
    window_set = tuple(sorted(set(int(w) for w in windows)))
    if not window_set or window_set[0] < 1:
        raise ConfigError(f"window set must be non-empty positive integers, got {windows!r}")
    s = feats.num_slices
    rows = []
    for w in window_set:
        for i in range(max(0, s - w)):
            rows.append((i, i + w, w))
    edges = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
    return SequentialGraph(
        vertex_features=np.asarray(feats.values, dtype=np.float64),
        edges=edges,
        window_set=window_set,
    )


def aggregate_atp(slice_predictions) -> float:
    """Mean of per-slice predictions; the one-stage averaging baseline."""
    p = np.asarray(slice_predictions, dtype=np.float64).ravel()
    if p.size == 0:
        raise DomainError("cannot average an empty prediction vector")
    return float(p.mean())


def _column_statistics(col: np.ndarray) -> np.ndarray:
    mu = col.mean()
    centered = col - mu
    var = float(np.mean(centered**2))
    std = np.sqrt(var)
    if std > 0.0:
        skew = float(np.mean(centered**3)) / std**3
        kurt = float(np.mean(centered**4)) / std**4
        lag1 = float(np.sum(centered[:-1] * centered[1:])) / float(np.sum(centered**2))
    else:
        skew = kurt = lag1 = 0.0  # constant column: standardized moments vanish
    t = np.arange(col.shape[0], dtype=np.float64)
    slope = float(np.sum((t - t.mean()) * centered)) / float(np.sum((t - t.mean()) ** 2))
    return np.array(
        [
            mu,
            std,
            col.min(),
            col.max(),
            col.max() - col.min(),
            np.median(col),
            skew,
            kurt,
            np.sqrt(np.mean(col**2)),
            lag1,
            np.mean(np.abs(np.diff(col))),
            slope,
        ],
        dtype=np.float64,
    )


def aggregate_sta(feats: SliceFeatureMatrix) -> np.ndarray:
    """Twelve statistics per channel, concatenated channel by channel."""
    values = np.asarray(feats.values, dtype=np.float64)
    if values.shape[0] < 2:
        raise DomainError("statistics aggregation needs at least two slices")
    return np.concatenate([_column_statistics(values[:, m]) for m in range(values.shape[1])])


def aggregate_spv(feats: SliceFeatureMatrix, grid_bins: int = DEFAULT_GRID_BINS, top_k: int = DEFAULT_TOP_K) -> np.ndarray:
    """Spectral vector: the spectral graph's vertex features, flattened."""
    return build_spg(feats, grid_bins, top_k).vertex_features.reshape(-1)


def aggregate_sph(feats: SliceFeatureMatrix, grid_bins: int = DEFAULT_GRID_BINS, top_k: int = DEFAULT_TOP_K) -> SpectralHeatmap:
    """Spectral heatmap: the same spectral features kept as an [M, K_f] matrix."""
    return SpectralHeatmap(values=build_spg(feats, grid_bins, top_k).vertex_features.copy())
