"""Run configuration: one strict, nested key-value document.

Every field has a documented default; unknown keys anywhere in the document
are rejected so typos cannot silently fall back to defaults. The reference
preset mirrors the full-scale architecture dimensions; the default toy
preset keeps CPU runtimes small.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .backbone import MtbConfig
from .checkpoint import config_fingerprint
from .corpus import SynthConfig
from .enhance import LossWeights, NsConfig
from .errors import ConfigError
from .graphs import DEFAULT_GRID_BINS, DEFAULT_TOP_K, DEFAULT_WINDOWS
from .regressor import GatConfig, HeadTrainConfig
from .shortterm import ShortTrainConfig

REPRESENTATIONS = ("spg", "seg", "spv", "sph", "sta", "atp")


@dataclass
class SpectralSection:
    """Shared frequency grid for every spectral representation."""

    grid_bins: int = DEFAULT_GRID_BINS  # uniform bins over [0, 0.5]
    top_k: int = DEFAULT_TOP_K  # low-frequency bins kept per channel


@dataclass
class SequentialSection:
    """Time-window set for sequential graphs."""

    windows: tuple[int, ...] = DEFAULT_WINDOWS


@dataclass
class RunConfig:
    """Everything one pipeline run needs."""

    corpus_manifest: str | None = None  # load an existing corpus instead of synthesizing
    synth: SynthConfig = field(default_factory=SynthConfig)
    backbone: MtbConfig = field(default_factory=MtbConfig)
    separator: NsConfig = field(default_factory=NsConfig)
    attention_latent_channels: int = 4
    loss_weights: LossWeights = field(default_factory=LossWeights)
    short_train: ShortTrainConfig = field(default_factory=ShortTrainConfig)
    spectral: SpectralSection = field(default_factory=SpectralSection)
    sequential: SequentialSection = field(default_factory=SequentialSection)
    gat: GatConfig = field(default_factory=GatConfig)
    head_train: HeadTrainConfig = field(default_factory=HeadTrainConfig)
    representation: str = "spg"  # one of REPRESENTATIONS
    corpus_seed: int = 7
    model_seed: int = 11
    eval_split: str = "test"
    out_dir: str = "runs/default"
    torch_threads: int = 4  # fixed so reruns are bit-identical

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise ConfigError(f"representation must be one of {REPRESENTATIONS}, got {self.representation!r}")
        if self.eval_split not in ("train", "validation", "test"):
            raise ConfigError(f"unknown eval split {self.eval_split!r}")
        if self.torch_threads < 1:
            raise ConfigError("torch_threads must be positive")
        # the top-level weights are authoritative for the training loop too
        self.short_train.loss_weights = self.loss_weights


_SECTION_TYPES = {
    "synth": SynthConfig,
    "backbone": MtbConfig,
    "separator": NsConfig,
    "loss_weights": LossWeights,
    "short_train": ShortTrainConfig,
    "spectral": SpectralSection,
    "sequential": SequentialSection,
    "gat": GatConfig,
    "head_train": HeadTrainConfig,
}

_TUPLE_FIELDS = {
    "frame_range",
    "category_weights",
    "frequencies",
    "amplitude_floor",
    "amplitude_ceil",
    "spatial_scales",
    "temporal_factors",
    "channel_widths",
    "encoder_widths",
    "decoder_widths",
    "betas",
    "windows",
    "fc_widths",
}


def _build_section(cls, data: dict, path: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} under {path!r}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTION_TYPES and isinstance(value, dict):
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, f"{path}.{key}")
        elif key in _TUPLE_FIELDS and isinstance(value, list):
            kwargs[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad section {path!r}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from a plain dict, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError("configuration document must be a mapping")
    return _build_section(RunConfig, data, "<root>")


def config_from_json(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def config_to_dict(cfg) -> dict:
    """Dataclass tree -> plain JSON-compatible dict."""
    if dataclasses.is_dataclass(cfg):
        return {f.name: config_to_dict(getattr(cfg, f.name)) for f in fields(cfg)}
    if isinstance(cfg, (list, tuple)):
        return [config_to_dict(v) for v in cfg]
    return cfg


def short_stage_fingerprint(cfg: RunConfig) -> str:
    """Hash of everything that shapes the short-term checkpoint."""
    return config_fingerprint(
        {
            "backbone": config_to_dict(cfg.backbone),
            "separator": config_to_dict(cfg.separator),
            "latent": cfg.attention_latent_channels,
            "short_train": config_to_dict(cfg.short_train),
            "corpus": cfg.corpus_manifest or config_to_dict(cfg.synth),
            "corpus_seed": cfg.corpus_seed,
            "model_seed": cfg.model_seed,
        }
    )


def head_stage_fingerprint(cfg: RunConfig) -> str:
    """Hash of everything that shapes a head checkpoint for one representation."""
    return config_fingerprint(
        {
            "short": short_stage_fingerprint(cfg),
            "representation": cfg.representation,
            "spectral": config_to_dict(cfg.spectral),
            "sequential": config_to_dict(cfg.sequential),
            "gat": config_to_dict(cfg.gat),
            "head_train": config_to_dict(cfg.head_train),
        }
    )


def reference_preset() -> RunConfig:
    """Full-scale architecture dimensions (not meant for CPU training runs)."""
    return RunConfig(
        backbone=MtbConfig(
            spatial_scales=(1.0, 0.5, 0.25),
            temporal_factors=(1, 2, 5),
            channel_widths=(64, 64, 64),
            output_dim=2048,
            in_channels=3,
            aligned_channels=64,
        ),
        separator=NsConfig(encoder_widths=(1024, 512, 128), bottleneck=32, decoder_widths=(128, 512)),
    )
