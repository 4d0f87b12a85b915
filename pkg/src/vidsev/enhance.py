"""Cross-scale feature enhancement and noise separation for slice features.

The enhancement stage treats each per-scale feature vector as a length-D
single-channel sequence. A self-attention block first highlights globally
correlated positions within each scale; mutual-attention blocks then weight
each scale by the positions it shares with its cyclic neighbour, the idea
being that severity-related content recurs across temporal scales while
nuisance content does not.

The separation stage splits the concatenated enhanced feature into a
severity-related part and a residual "noise" part with twin encoders, a
reconstruction decoder over both parts, and a severity regressor over the
severity part alone. The loss suite ties the pieces together: prediction
errors for both heads, within-batch similarity of severity features,
orthogonality between the two parts, and reconstruction fidelity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .backbone import MtbConfig, MultiScaleBackbone, _check_finite
from .corpus import SeverityCategory
from .errors import ConfigError, DomainError


class PointwiseMap(nn.Module):
    """1x1 convolution over a single-channel sequence.

    A kernel-1 convolution from one channel to ``channels`` is just an outer
    product with a weight vector plus a bias; storing it that way keeps the
    backward pass on cheap broadcast kernels (CPU convolution backward has a
    large fixed per-call cost that dwarfs these tiny maps).
    """

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.weight = nn.Parameter(torch.empty(channels))
        self.bias = nn.Parameter(torch.empty(channels))
        nn.init.uniform_(self.weight, -1.0, 1.0)
        nn.init.uniform_(self.bias, -1.0, 1.0)

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        """[N, D] -> [N, channels, D]."""
        if f.ndim != 2:
            raise DomainError(f"expected a [N, D] feature batch, got {tuple(f.shape)}")
        return self.weight[None, :, None] * f.unsqueeze(1) + self.bias[None, :, None]


class MutualAttentionBlock(nn.Module):
    """Enhance f1 by the attention structure it shares with f2.

    Both inputs are mapped to two latent sequences with 1x1 convolutions;
    each input's position-similarity map is the product of its two latents,
    and the cross map multiplies the two similarity maps. The row-softmaxed
    cross map weights a 1x1 projection of f1, added back residually.
    """

    def __init__(self, latent_channels: int = 4):
        super().__init__()
        if latent_channels < 1:
            raise ConfigError("latent_channels must be >= 1")
        self.beta = PointwiseMap(latent_channels)
        self.omega = PointwiseMap(latent_channels)
        self.gamma = PointwiseMap(1)

    def forward(self, f1: torch.Tensor, f2: torch.Tensor) -> torch.Tensor:
        if f1.shape != f2.shape:
            raise DomainError(f"feature shapes differ: {tuple(f1.shape)} vs {tuple(f2.shape)}")
        att1 = torch.einsum("ncp,ncq->npq", self.beta(f1), self.omega(f1))
        att2 = torch.einsum("ncp,ncq->npq", self.beta(f2), self.omega(f2))
        cross = torch.einsum("nqp,nqr->npr", att1, att2)
        weights = torch.softmax(cross, dim=-1)
        value = self.gamma(f1).squeeze(1)
        return f1 + torch.einsum("npq,nq->np", weights, value)


class NonLocalBlock(nn.Module):
    """Self-attention over positions of one feature vector, residual form."""

    def __init__(self, latent_channels: int = 4):
        super().__init__()
        if latent_channels < 1:
            raise ConfigError("latent_channels must be >= 1")
        self.beta = PointwiseMap(latent_channels)
        self.omega = PointwiseMap(latent_channels)
        self.gamma = PointwiseMap(1)

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        att = torch.einsum("ncp,ncq->npq", self.beta(f), self.omega(f))
        weights = torch.softmax(att, dim=-1)
        value = self.gamma(f).squeeze(1)
        return f + torch.einsum("npq,nq->np", weights, value)


class MutualAttentionStage(nn.Module):
    """Per-scale self-attention, cyclic mutual attention, then fusion.

    Scale k is enhanced against scale (k+1) mod K; the K enhanced vectors
    concatenate into the fused feature, and a single linear auxiliary head
    predicts severity from it for intermediate supervision.
    """

    def __init__(self, num_scales: int, dim: int, latent_channels: int = 4):
        super().__init__()
        if num_scales < 2:
            raise ConfigError(f"mutual attention needs >= 2 scales, got {num_scales}")
        self.num_scales = num_scales
        self.dim = dim
        self.self_blocks = nn.ModuleList(NonLocalBlock(latent_channels) for _ in range(num_scales))
        self.pair_blocks = nn.ModuleList(MutualAttentionBlock(latent_channels) for _ in range(num_scales))
        self.aux_head = nn.Linear(num_scales * dim, 1)

    def forward(self, feats: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """feats: [N, K, D] -> (fused [N, K*D], auxiliary prediction [N])."""
        if feats.ndim != 3 or feats.shape[1] != self.num_scales or feats.shape[2] != self.dim:
            raise DomainError(
                f"expected [N, {self.num_scales}, {self.dim}] features, got {tuple(feats.shape)}"
            )
        focused = [block(feats[:, k]) for k, block in enumerate(self.self_blocks)]
        enhanced = [
            self.pair_blocks[k](focused[k], focused[(k + 1) % self.num_scales])
            for k in range(self.num_scales)
        ]
        fused = torch.cat(enhanced, dim=1)
        return fused, self.aux_head(fused).squeeze(-1)


@dataclass
class NsConfig:
    """Twin-encoder noise separation layout.

    Encoders run input -> encoder_widths -> bottleneck (hidden rectifiers,
    linear last layer); the decoder runs the two bottlenecks -> decoder_widths
    -> input width. The severity regressor is one rectified linear unit over
    the severity bottleneck.
    """

    encoder_widths: tuple[int, ...] = (64, 32)
    bottleneck: int = 32
    decoder_widths: tuple[int, ...] = (32, 64)

    def __post_init__(self):
        if self.bottleneck < 1 or any(w < 1 for w in (*self.encoder_widths, *self.decoder_widths)):
            raise ConfigError("all separator widths must be positive")


def _mlp(widths: list[int]) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i in range(len(widths) - 1):
        layers.append(nn.Linear(widths[i], widths[i + 1]))
        if i < len(widths) - 2:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


@dataclass
class DisentangledPair:
    """Separated parts of one fused feature vector."""

    f_dep: np.ndarray  # severity-related component, dim d
    f_non: np.ndarray  # residual component, dim d
    f_dec: np.ndarray  # reconstruction of the input, dim K*D
    p_ns: float  # severity prediction from f_dep


class NoiseSeparator(nn.Module):
    """Twin encoders, reconstruction decoder and severity regressor."""

    def __init__(self, input_dim: int, config: NsConfig):
        super().__init__()
        self.config = config
        enc = [input_dim, *config.encoder_widths, config.bottleneck]
        self.dep_encoder = _mlp(enc)
        self.non_encoder = _mlp(enc)
        self.decoder = _mlp([2 * config.bottleneck, *config.decoder_widths, input_dim])
        self.regressor = nn.Linear(config.bottleneck, 1)
        # start the rectified severity head in its active region; a negative
        # initial pre-activation would zero its gradient permanently
        with torch.no_grad():
            self.regressor.bias.fill_(0.5)

    def forward(self, fused: torch.Tensor):
        """fused: [N, J] -> (f_dep [N, d], f_non [N, d], f_dec [N, J], p_ns [N])."""
        f_dep = self.dep_encoder(fused)
        f_non = self.non_encoder(fused)
        f_dec = self.decoder(torch.cat([f_dep, f_non], dim=1))
        p_ns = torch.relu(self.regressor(f_dep)).squeeze(-1)
        return f_dep, f_non, f_dec, p_ns


def ns_forward(separator: NoiseSeparator, fused: np.ndarray) -> DisentangledPair:
    """Single-vector convenience wrapper around the separator."""
    dtype = next(separator.parameters()).dtype
    with torch.no_grad():
        f_dep, f_non, f_dec, p_ns = separator(
            torch.as_tensor(np.asarray(fused), dtype=dtype).reshape(1, -1)
        )
    return DisentangledPair(
        f_dep=f_dep[0].numpy().copy(),
        f_non=f_non[0].numpy().copy(),
        f_dec=f_dec[0].numpy().copy(),
        p_ns=float(p_ns[0]),
    )


@dataclass
class ShortTermOutputs:
    """Everything the short-term model produces for a slice batch."""

    fused: torch.Tensor  # [N, K*D] enhanced features (the separator input)
    p_mta: torch.Tensor  # [N] auxiliary predictions
    f_dep: torch.Tensor  # [N, d]
    f_non: torch.Tensor  # [N, d]
    f_dec: torch.Tensor  # [N, K*D]
    p_ns: torch.Tensor  # [N] severity predictions


class ShortTermModel(nn.Module):
    """Backbone -> mutual attention -> noise separation, end to end."""

    def __init__(self, mtb: MtbConfig, ns: NsConfig, latent_channels: int = 4, dtype: torch.dtype = torch.float32):
        super().__init__()
        if mtb.num_branches < 2:
            raise ConfigError("the full short-term model needs >= 2 branches")
        self.backbone = MultiScaleBackbone(mtb, dtype)
        self.attention = MutualAttentionStage(mtb.num_branches, mtb.output_dim, latent_channels)
        self.separator = NoiseSeparator(mtb.num_branches * mtb.output_dim, ns)
        self.to(dtype)

    @property
    def feature_dim(self) -> int:
        return self.separator.config.bottleneck

    def forward(self, x: torch.Tensor) -> ShortTermOutputs:
        feats = self.backbone(x)
        fused, p_mta = self.attention(feats)
        _check_finite(fused, "attention.fused")
        f_dep, f_non, f_dec, p_ns = self.separator(fused)
        _check_finite(f_dec, "separator.decoder")
        return ShortTermOutputs(fused=fused, p_mta=p_mta, f_dep=f_dep, f_non=f_non, f_dec=f_dec, p_ns=p_ns)


@dataclass
class LossWeights:
    """Multipliers for the four secondary loss terms."""

    w1: float = 1.0  # auxiliary attention prediction
    w2: float = 1.0  # within-category similarity
    w3: float = 1.0  # orthogonality of the separated parts
    w4: float = 1.0  # reconstruction


@dataclass
class LossBreakdown:
    """The five short-term loss terms and their weighted sum."""

    l_ns: torch.Tensor
    l_mta: torch.Tensor
    l_sim: torch.Tensor
    l_dsim: torch.Tensor
    l_rec: torch.Tensor
    weights: LossWeights = field(default_factory=LossWeights)

    @property
    def l_short(self) -> torch.Tensor:
        w = self.weights
        return self.l_ns + w.w1 * self.l_mta + w.w2 * self.l_sim + w.w3 * self.l_dsim + w.w4 * self.l_rec

    def as_floats(self) -> dict[str, float]:
        with torch.no_grad():
            return {
                "l_ns": float(self.l_ns),
                "l_mta": float(self.l_mta),
                "l_sim": float(self.l_sim),
                "l_dsim": float(self.l_dsim),
                "l_rec": float(self.l_rec),
                "l_short": float(self.l_short),
            }


def compute_losses(
    outputs: ShortTermOutputs,
    labels: torch.Tensor,
    categories: list[SeverityCategory],
    weights: LossWeights | None = None,
) -> LossBreakdown:
    """Loss suite over one category-homogeneous slice batch.

    Definitions (N batch members, J fused width, d bottleneck width):

    * l_ns, l_mta: mean squared error of the two severity heads;
    * l_sim: sum over unordered pairs of squared distances between severity
      features, normalized by N^2;
    * l_dsim: sum of squared dot products between each member's severity and
      residual features, normalized by N^2;
    * l_rec: mean squared reconstruction error over all N*J entries.
    """
    n = outputs.fused.shape[0]
    if n == 0 or labels.shape[0] != n:
        raise DomainError(f"batch of {n} outputs with {labels.shape[0]} labels")
    if len(categories) != n:
        raise DomainError("one category per batch member is required")
    if len(set(categories)) > 1:
        raise DomainError(f"batch mixes severity categories: {sorted(set(categories))}")

    labels = labels.to(outputs.p_ns.dtype)
    l_ns = torch.mean((outputs.p_ns - labels) ** 2)
    l_mta = torch.mean((outputs.p_mta - labels) ** 2)

    diffs = outputs.f_dep.unsqueeze(0) - outputs.f_dep.unsqueeze(1)  # [N, N, d]
    pair_sq = (diffs**2).sum(dim=2)
    l_sim = torch.triu(pair_sq, diagonal=1).sum() / float(n**2)

    dots = (outputs.f_dep * outputs.f_non).sum(dim=1)
    l_dsim = (dots**2).sum() / float(n**2)

    l_rec = torch.mean((outputs.f_dec - outputs.fused) ** 2)

    return LossBreakdown(
        l_ns=l_ns,
        l_mta=l_mta,
        l_sim=l_sim,
        l_dsim=l_dsim,
        l_rec=l_rec,
        weights=weights or LossWeights(),
    )
