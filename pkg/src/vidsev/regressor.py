"""Attention-based regression heads over video-level representations.

The graph head runs one masked-attention message-passing layer (self-loops
always included), a mean readout and three fully connected layers ending in
a single score. Sequential graphs get a separate attention parameter set per
time-window edge type, each type softmax-normalized on its own and summed,
so removing a type's edges and zeroing its parameters are equivalent.
Vector and heatmap baselines get a plain MLP and a small 1D-conv head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .graphs import SequentialGraph, SpectralGraph, SpectralHeatmap
from .errors import ConfigError, DomainError

SELF_EDGE_TYPE = 0  # reserved type id for self-loops in heterogeneous mode


@dataclass
class GatConfig:
    """Graph head layout; ``fc_widths`` must end in 1."""

    heads: int = 1
    hidden_dim: int = 16
    fc_widths: tuple[int, int, int] = (64, 32, 1)
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.heads < 1 or self.hidden_dim < 1:
            raise ConfigError("heads and hidden_dim must be positive")
        if len(self.fc_widths) != 3 or self.fc_widths[-1] != 1 or min(self.fc_widths) < 1:
            raise ConfigError(f"fc_widths must be three positive widths ending in 1, got {self.fc_widths}")


class _AttentionParams(nn.Module):
    """Projection plus split attention vector for one edge type."""

    def __init__(self, in_dim: int, hidden: int, heads: int):
        super().__init__()
        self.project = nn.Linear(in_dim, heads * hidden, bias=False)
        self.att_src = nn.Parameter(torch.empty(heads, hidden))
        self.att_dst = nn.Parameter(torch.empty(heads, hidden))
        nn.init.xavier_uniform_(self.att_src)
        nn.init.xavier_uniform_(self.att_dst)


def _masked_attention(h, att_src, att_dst, mask, slope):
    """Per-destination softmax over masked sources.

    h: [V, heads, hidden]; mask: [V, V] with mask[i, j] = source j feeds
    destination i. Destinations with no sources contribute zeros.
    """
    score_src = (h * att_src).sum(-1)  # [V, heads]
    score_dst = (h * att_dst).sum(-1)
    logits = nn.functional.leaky_relu(
        score_dst.unsqueeze(1) + score_src.unsqueeze(0), negative_slope=slope
    )  # [V dst, V src, heads]
    neg = torch.finfo(logits.dtype).min
    logits = torch.where(mask.unsqueeze(-1), logits, torch.full_like(logits, neg))
    weights = torch.softmax(logits, dim=1)
    weights = torch.where(mask.unsqueeze(-1), weights, torch.zeros_like(weights))
    out = torch.einsum("ijh,jhd->ihd", weights, h)
    return out, weights


class GraphAttentionLayer(nn.Module):
    """One message-passing layer for complete or typed directed graphs.

    ``edge_types`` is None for homogeneous graphs (one parameter set, one
    softmax over neighbours plus self) or the tuple of window sizes for
    sequential graphs (disjoint parameters per type plus a self type).
    """

    def __init__(self, in_dim: int, config: GatConfig, edge_types: tuple[int, ...] | None = None):
        super().__init__()
        self.config = config
        self.in_dim = in_dim
        self.edge_types = tuple(edge_types) if edge_types is not None else None
        if self.edge_types is None:
            self.params = nn.ModuleDict({"all": _AttentionParams(in_dim, config.hidden_dim, config.heads)})
        else:
            if any(t <= SELF_EDGE_TYPE for t in self.edge_types):
                raise ConfigError("edge types must be positive window sizes")
            names = ["self"] + [f"w{t}" for t in self.edge_types]
            self.params = nn.ModuleDict(
                {name: _AttentionParams(in_dim, config.hidden_dim, config.heads) for name in names}
            )

    @property
    def out_dim(self) -> int:
        return self.config.heads * self.config.hidden_dim

    def _type_masks(self, num_vertices: int, edges: np.ndarray, device) -> dict[str, torch.Tensor]:
        masks = {
            "self": torch.eye(num_vertices, dtype=torch.bool, device=device),
        }
        for t in self.edge_types:
            mask = torch.zeros(num_vertices, num_vertices, dtype=torch.bool, device=device)
            rows = edges[edges[:, 2] == t]
            if rows.size:
                mask[rows[:, 1], rows[:, 0]] = True  # dst row, src column
            masks[f"w{t}"] = mask
        return masks

    def forward(self, x: torch.Tensor, structure, return_attention: bool = False):
        """x: [V, in_dim]; structure: adjacency [V, V] bool or edges [E, 3]."""
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ConfigError(f"expected [V, {self.in_dim}] vertex features, got {tuple(x.shape)}")
        v = x.shape[0]
        cfg = self.config
        attention: dict[str, torch.Tensor] = {}
        if self.edge_types is None:
            adjacency = torch.as_tensor(np.asarray(structure, dtype=bool), device=x.device)
            if adjacency.shape != (v, v):
                raise DomainError(f"adjacency shape {tuple(adjacency.shape)} does not match {v} vertices")
            mask = adjacency | torch.eye(v, dtype=torch.bool, device=x.device)
            p = self.params["all"]
            h = p.project(x).reshape(v, cfg.heads, cfg.hidden_dim)
            out, weights = _masked_attention(h, p.att_src, p.att_dst, mask, cfg.leaky_slope)
            attention["all"] = weights
        else:
            edges = np.asarray(structure, dtype=np.int64).reshape(-1, 3)
            if edges.size and (edges[:, :2].min() < 0 or edges[:, :2].max() >= v):
                raise DomainError("edge endpoints outside vertex range")
            out = x.new_zeros(v, cfg.heads, cfg.hidden_dim)
            for name, mask in self._type_masks(v, edges, x.device).items():
                p = self.params[name]
                h = p.project(x).reshape(v, cfg.heads, cfg.hidden_dim)
                contrib, weights = _masked_attention(h, p.att_src, p.att_dst, mask, cfg.leaky_slope)
                out = out + contrib
                attention[name] = weights
        flat = out.reshape(v, self.out_dim)
        return (flat, attention) if return_attention else flat


def readout_mean(vertex_features: torch.Tensor) -> torch.Tensor:
    """Mean over vertices; domain error on an empty graph."""
    if vertex_features.shape[0] == 0:
        raise DomainError("cannot read out an empty graph")
    return vertex_features.mean(dim=0)


class _NormalizedHead(nn.Module):
    """Shared input standardization for all heads (identity by default)."""

    def __init__(self, feat_dim: int, dtype: torch.dtype):
        super().__init__()
        self.register_buffer("feat_mean", torch.zeros(feat_dim, dtype=dtype))
        self.register_buffer("feat_std", torch.ones(feat_dim, dtype=dtype))

    def set_normalization(self, mean: np.ndarray, std: np.ndarray) -> None:
        self.feat_mean.copy_(torch.as_tensor(mean, dtype=self.feat_mean.dtype))
        std = np.where(np.asarray(std) > 1e-12, std, 1.0)
        self.feat_std.copy_(torch.as_tensor(std, dtype=self.feat_std.dtype))

    def _normalize(self, x: torch.Tensor) -> torch.Tensor:
        return (x - self.feat_mean) / self.feat_std


def _fc_stack(in_dim: int, widths) -> nn.Sequential:
    layers: list[nn.Module] = []
    dims = [in_dim, *widths]
    for i in range(len(dims) - 1):
        layers.append(nn.Linear(dims[i], dims[i + 1]))
        if i < len(dims) - 2:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


class GraphRegressor(_NormalizedHead):
    """Attention layer, mean readout, three FC layers, one score."""

    def __init__(
        self,
        feat_dim: int,
        config: GatConfig | None = None,
        edge_types: tuple[int, ...] | None = None,
        dtype: torch.dtype = torch.float64,
    ):
        config = config or GatConfig()
        super().__init__(feat_dim, dtype)
        self.config = config
        self.gat = GraphAttentionLayer(feat_dim, config, edge_types)
        self.fc = _fc_stack(self.gat.out_dim, config.fc_widths)
        self.to(dtype)

    def score(self, graph: SpectralGraph | SequentialGraph) -> torch.Tensor:
        dtype = self.feat_mean.dtype
        if isinstance(graph, SpectralGraph):
            if self.gat.edge_types is not None:
                raise ConfigError("this head was built for typed sequential graphs")
            x = torch.as_tensor(graph.vertex_features, dtype=dtype)
            structure = graph.adjacency
        elif isinstance(graph, SequentialGraph):
            if self.gat.edge_types is None:
                raise ConfigError("this head was built for homogeneous spectral graphs")
            unknown = set(graph.window_set) - set(self.gat.edge_types)
            if unknown:
                raise ConfigError(f"graph uses window types {sorted(unknown)} the head lacks")
            x = torch.as_tensor(graph.vertex_features, dtype=dtype)
            structure = graph.edges
        else:
            raise ConfigError(f"unsupported graph object {type(graph).__name__}")
        if x.shape[1] != self.feat_mean.shape[0]:
            raise ConfigError(
                f"graph feature dim {x.shape[1]} does not match head dim {self.feat_mean.shape[0]}"
            )
        hidden = self.gat(self._normalize(x), structure)
        return self.fc(readout_mean(hidden)).squeeze(-1)

    def predict(self, graph) -> float:
        with torch.no_grad():
            return float(self.score(graph))


def gat_predict(model: GraphRegressor, graph) -> float:
    """Functional alias for scoring one graph with a trained head."""
    return model.predict(graph)


class MlpHead(_NormalizedHead):
    """Three FC layers over a flat vector representation."""

    def __init__(self, feat_dim: int, widths=(64, 32, 1), dtype: torch.dtype = torch.float64):
        if len(widths) != 3 or widths[-1] != 1:
            raise ConfigError(f"widths must be three values ending in 1, got {widths}")
        super().__init__(feat_dim, dtype)
        self.fc = _fc_stack(feat_dim, widths)
        self.to(dtype)

    def score(self, vector) -> torch.Tensor:
        x = torch.as_tensor(np.asarray(vector), dtype=self.feat_mean.dtype).reshape(-1)
        if x.shape[0] != self.feat_mean.shape[0]:
            raise ConfigError(f"vector dim {x.shape[0]} does not match head dim {self.feat_mean.shape[0]}")
        return self.fc(self._normalize(x)).squeeze(-1)

    def predict(self, vector) -> float:
        with torch.no_grad():
            return float(self.score(vector))


def mlp_head(model: MlpHead, vector) -> float:
    return model.predict(vector)


class Conv1dHead(nn.Module):
    """Two 1D convolutions over the frequency axis of a heatmap, then FC."""

    def __init__(self, channels: int, bins: int, conv_widths=(16, 16), dtype: torch.dtype = torch.float64):
        super().__init__()
        if len(conv_widths) != 2 or min(conv_widths) < 1:
            raise ConfigError(f"conv_widths must be two positive widths, got {conv_widths}")
        self.channels = channels
        self.bins = bins
        self.register_buffer("feat_mean", torch.zeros(channels, bins, dtype=dtype))
        self.register_buffer("feat_std", torch.ones(channels, bins, dtype=dtype))
        self.conv1 = nn.Conv1d(channels, conv_widths[0], kernel_size=3, padding=1)
        self.conv2 = nn.Conv1d(conv_widths[0], conv_widths[1], kernel_size=3, padding=1)
        self.fc = nn.Linear(conv_widths[1], 1)
        self.to(dtype)

    def set_normalization(self, mean: np.ndarray, std: np.ndarray) -> None:
        self.feat_mean.copy_(torch.as_tensor(mean, dtype=self.feat_mean.dtype))
        std = np.where(np.asarray(std) > 1e-12, std, 1.0)
        self.feat_std.copy_(torch.as_tensor(std, dtype=self.feat_std.dtype))

    def score(self, heatmap) -> torch.Tensor:
        values = heatmap.values if isinstance(heatmap, SpectralHeatmap) else np.asarray(heatmap)
        x = torch.as_tensor(values, dtype=self.feat_mean.dtype)
        if x.shape != (self.channels, self.bins):
            raise ConfigError(f"heatmap shape {tuple(x.shape)} does not match ({self.channels}, {self.bins})")
        x = ((x - self.feat_mean) / self.feat_std).unsqueeze(0)
        x = torch.relu(self.conv1(x))
        x = torch.relu(self.conv2(x))
        return self.fc(x.mean(dim=2)).reshape(())

    def predict(self, heatmap) -> float:
        with torch.no_grad():
            return float(self.score(heatmap))


def conv1d_head(model: Conv1dHead, heatmap) -> float:
    return model.predict(heatmap)


@dataclass
class GraphBatchItem:
    """One training example: a video-level representation and its label."""

    graph: object
    label: float


@dataclass
class HeadTrainConfig:
    """Knobs for video-level head training (one example per step)."""

    epochs: int = 40
    learning_rate: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    label_scale: float = 63.0
    seed: int = 0


def train_graph_head(model, items: list[GraphBatchItem], config: HeadTrainConfig) -> list[dict]:
    """Minimize MSE over single-example steps; returns the per-step log.

    All items must carry the same representation kind; mixing spectral and
    sequential graphs (or vectors and heatmaps) is a configuration error.
    """
    if not items:
        raise DomainError("head training needs at least one example")
    kinds = {type(item.graph).__name__ for item in items}
    if len(kinds) > 1:
        raise ConfigError(f"mixed representation kinds in one run: {sorted(kinds)}")

    rng = np.random.Generator(np.random.PCG64(config.seed))
    torch.manual_seed(config.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=config.betas)
    dtype = next(model.parameters()).dtype

    log = []
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(items))
        for idx in order:
            item = items[int(idx)]
            target = torch.as_tensor(item.label / config.label_scale, dtype=dtype)
            pred = model.score(item.graph)
            loss = (pred - target) ** 2
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            log.append({"step": step, "mse": float(loss.detach())})
            step += 1
    return log
