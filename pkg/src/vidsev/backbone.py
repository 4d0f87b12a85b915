"""Multi-scale temporal backbone over thin video slices.

Each branch looks at the slice through its own spatio-temporal lens: a
spatial rescale, a small 3D conv stack, a 1x1x1 channel-alignment stage with
spatial pooling, mean-pool temporal downsampling by the branch's factor, a
temporal conv stage, and a linear projection to a fixed-width vector. The
branches are fully independent; cross-scale interaction happens downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as nnf
from torch import nn

from .corpus import ThinSlice
from .errors import ConfigError, DomainError, NumericError


@dataclass
class MtbConfig:
    """Backbone layout.

    ``temporal_factors`` must be strictly increasing and divide the slice
    length of whatever input is fed in. ``aligned_channels`` defaults to the
    smallest branch width.
    """

    spatial_scales: tuple[float, ...] = (1.0, 0.5, 0.25)
    temporal_factors: tuple[int, ...] = (1, 2, 5)
    channel_widths: tuple[int, ...] = (8, 8, 8)
    output_dim: int = 64
    in_channels: int = 1
    aligned_channels: int | None = None

    def __post_init__(self):
        k = len(self.spatial_scales)
        if k < 1:
            raise ConfigError("backbone needs at least one branch")
        if len(self.temporal_factors) != k or len(self.channel_widths) != k:
            raise ConfigError("per-branch settings must all have the same length")
        if any(f < 1 for f in self.temporal_factors):
            raise ConfigError("temporal factors must be positive")
        if list(self.temporal_factors) != sorted(set(self.temporal_factors)):
            raise ConfigError("temporal factors must be strictly increasing")
        if any(s <= 0 for s in self.spatial_scales):
            raise ConfigError("spatial scales must be positive")
        if self.output_dim < 1 or self.in_channels < 1 or min(self.channel_widths) < 1:
            raise ConfigError("dimensions must be positive")
        if self.aligned_channels is None:
            self.aligned_channels = min(self.channel_widths)

    @property
    def num_branches(self) -> int:
        return len(self.spatial_scales)


@dataclass
class MultiScaleFeatures:
    """K per-scale feature vectors of equal width for one slice."""

    per_scale: list[np.ndarray]

    def __post_init__(self):
        dims = {v.shape for v in self.per_scale}
        if len(dims) > 1:
            raise DomainError(f"per-scale vectors disagree in shape: {dims}")


def temporal_downsample(seq: torch.Tensor | np.ndarray, factor: int):
    """Mean-pool the leading (time) axis by ``factor``.

    Output step j is the mean of input steps [j*factor, (j+1)*factor).
    Raises DomainError when the factor does not divide the length.
    """
    if factor < 1:
        raise ConfigError(f"downsample factor must be >= 1, got {factor}")
    is_torch = isinstance(seq, torch.Tensor)
    arr = seq if is_torch else np.asarray(seq, dtype=np.float64)
    t = arr.shape[0]
    if t % factor != 0:
        raise DomainError(f"factor {factor} does not divide sequence length {t}")
    if factor == 1:
        return arr.clone() if is_torch else arr.copy()
    shaped = arr.reshape(t // factor, factor, *arr.shape[1:])
    return shaped.mean(dim=1) if is_torch else shaped.mean(axis=1)


def _check_finite(tensor: torch.Tensor, stage: str) -> torch.Tensor:
    if not torch.isfinite(tensor).all():
        raise NumericError(f"non-finite activation in stage {stage!r}")
    return tensor


class ChannelAlign(nn.Module):
    """1x1x1 convolution: a per-voxel linear map over channels.

    Stored as an explicit matrix so the backward pass avoids the large fixed
    per-call cost of CPU convolution backward on tiny kernels.
    """

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(out_channels, in_channels))
        self.bias = nn.Parameter(torch.empty(out_channels))
        nn.init.kaiming_uniform_(self.weight, a=5**0.5)
        bound = 1.0 / in_channels**0.5
        nn.init.uniform_(self.bias, -bound, bound)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """[N, C, T, H, W] -> [N, C', T, H, W]."""
        out = torch.einsum("oc,ncthw->nothw", self.weight, x)
        return out + self.bias[None, :, None, None, None]


class TemporalConv(nn.Module):
    """Width-3 temporal convolution over [N, C, T], zero-padded.

    Implemented as three shifted matrix products for the same CPU-overhead
    reason as :class:`ChannelAlign`; the parameter layout matches a standard
    kernel-3 1D convolution (weight [out, in, 3]).
    """

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(out_channels, in_channels, 3))
        self.bias = nn.Parameter(torch.empty(out_channels))
        nn.init.kaiming_uniform_(self.weight, a=5**0.5)
        bound = 1.0 / (3 * in_channels) ** 0.5
        nn.init.uniform_(self.bias, -bound, bound)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        t = x.shape[2]
        padded = nnf.pad(x, (1, 1))
        out = sum(
            torch.einsum("oc,nct->not", self.weight[:, :, k], padded[:, :, k : k + t])
            for k in range(3)
        )
        return out + self.bias[None, :, None]


class _Branch(nn.Module):
    """One spatio-temporal lens: rescale, conv, align, downsample, project."""

    def __init__(self, in_channels: int, scale: float, t_factor: int, width: int, aligned: int, out_dim: int):
        super().__init__()
        self.scale = float(scale)
        self.t_factor = int(t_factor)
        self.conv1 = nn.Conv3d(in_channels, width, kernel_size=3, padding=1)
        self.conv2 = nn.Conv3d(width, width, kernel_size=3, padding=1)
        self.align = ChannelAlign(width, aligned)
        self.temporal = TemporalConv(aligned, aligned)
        # flatten from per-channel temporal mean and dispersion: the spread
        # statistic exposes oscillation amplitude, which a plain mean would
        # average away at a near-linear operating point
        self.project = nn.Linear(2 * aligned, out_dim)

    def _rescale(self, x: torch.Tensor) -> torch.Tensor:
        if self.scale == 1.0:
            return x
        inv = 1.0 / self.scale
        if inv.is_integer() and x.shape[3] % int(inv) == 0 and x.shape[4] % int(inv) == 0:
            k = int(inv)
            return nnf.avg_pool3d(x, kernel_size=(1, k, k))
        return nnf.interpolate(x, scale_factor=(1.0, self.scale, self.scale), mode="trilinear", align_corners=False)

    def forward(self, x: torch.Tensor, tag: str) -> torch.Tensor:
        x = _check_finite(self._rescale(x), f"{tag}.rescale")
        x = _check_finite(torch.relu(self.conv1(x)), f"{tag}.conv1")
        x = _check_finite(torch.relu(self.conv2(x)), f"{tag}.conv2")
        x = _check_finite(self.align(x), f"{tag}.align")
        x = x.mean(dim=(3, 4))  # spatial pooling -> [N, A, T]
        x = temporal_downsample(x.movedim(2, 0), self.t_factor).movedim(0, 2)
        x = _check_finite(torch.relu(self.temporal(x)), f"{tag}.temporal")
        mean = x.mean(dim=2)
        spread = torch.sqrt(x.var(dim=2, unbiased=False) + 1e-24)
        x = torch.cat([mean, spread], dim=1)  # temporal pooling -> [N, 2A]
        return _check_finite(self.project(x), f"{tag}.project")


class MultiScaleBackbone(nn.Module):
    """K independent branches producing a [N, K, D] feature stack."""

    def __init__(self, config: MtbConfig, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config
        self.branches = nn.ModuleList(
            _Branch(
                config.in_channels,
                config.spatial_scales[k],
                config.temporal_factors[k],
                config.channel_widths[k],
                config.aligned_channels,
                config.output_dim,
            )
            for k in range(config.num_branches)
        )
        self.to(dtype)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: [N, C, T, H, W] -> per-scale features [N, K, D]."""
        if x.ndim != 5 or x.shape[1] != self.config.in_channels:
            raise DomainError(
                f"expected input [N, {self.config.in_channels}, T, H, W], got {tuple(x.shape)}"
            )
        outputs = [branch(x, f"branch{k}") for k, branch in enumerate(self.branches)]
        return torch.stack(outputs, dim=1)


def slice_to_tensor(thin_slice: ThinSlice, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """ThinSlice frames [L, H, W, C] -> model input [1, C, L, H, W]."""
    arr = np.moveaxis(thin_slice.frames, 3, 0)  # [C, L, H, W]
    return torch.as_tensor(arr.copy(), dtype=dtype).unsqueeze(0)


def mtb_forward(model: MultiScaleBackbone, thin_slice: ThinSlice) -> MultiScaleFeatures:
    """Single-slice convenience wrapper returning K numpy vectors."""
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        stacked = model(slice_to_tensor(thin_slice, dtype))[0]  # [K, D]
    return MultiScaleFeatures(per_scale=[row.numpy().copy() for row in stacked])
