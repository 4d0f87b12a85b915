"""Video corpus data model, severity bucketing, slicing, imputation and synthesis.

A corpus is an ordered collection of labelled face-video samples with a
train/validation/test split. Synthetic corpora embed the severity signal in
the *temporal dynamics* of a moving pattern (oscillation amplitudes at a few
fixed frequencies grow with the label) so that severity is recoverable from
multi-scale motion but not from any single frame.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DomainError

# BDI-II interpretation bands: minimal 0-13, mild 14-19, moderate 20-28,
# severe 29-63.
BDI_MIN = 0
BDI_MAX = 63
_CATEGORY_BANDS = ((0, 13), (14, 19), (20, 28), (29, 63))


class SeverityCategory(enum.IntEnum):
    """Four-level severity bucket, totally ordered."""

    MINIMAL = 0
    MILD = 1
    MODERATE = 2
    SEVERE = 3


def bucket_severity(bdi: int) -> SeverityCategory:
    """Map a BDI-II score to its severity category.

    Raises DomainError if the score is outside [0, 63].
    """
    score = int(bdi)
    if score != bdi or not BDI_MIN <= score <= BDI_MAX:
        raise DomainError(f"bdi score {bdi!r} outside [{BDI_MIN}, {BDI_MAX}]")
    for cat, (lo, hi) in zip(SeverityCategory, _CATEGORY_BANDS):
        if lo <= score <= hi:
            return cat
    raise AssertionError("unreachable: bands cover [0, 63]")


def category_band(category: SeverityCategory) -> tuple[int, int]:
    """Inclusive BDI range covered by a category."""
    return _CATEGORY_BANDS[int(category)]


@dataclass
class VideoSample:
    """One labelled video: frames [T, H, W, C] with values in [0, 1].

    ``frame_valid`` marks frames whose content is usable; invalid frames hold
    unspecified content (zeros in memory, NaN on disk) and must be imputed
    before modelling.
    """

    id: str
    frames: np.ndarray  # [T, H, W, C] float32, valid frames in [0, 1]
    frame_valid: np.ndarray  # [T] bool
    bdi_score: int
    category: SeverityCategory

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 4:
            raise DomainError(f"frames must be [T, H, W, C], got {self.frames.shape}")
        self.frame_valid = np.asarray(self.frame_valid, dtype=bool)
        if self.frame_valid.shape != (self.frames.shape[0],):
            raise DomainError("frame_valid length must equal frame count")
        if not BDI_MIN <= self.bdi_score <= BDI_MAX:
            raise DomainError(f"bdi score {self.bdi_score} outside [{BDI_MIN}, {BDI_MAX}]")
        if self.category != bucket_severity(self.bdi_score):
            raise DomainError(
                f"category {self.category!r} inconsistent with bdi {self.bdi_score}"
            )
        valid = self.frames[self.frame_valid]
        if valid.size and (valid.min() < 0.0 or valid.max() > 1.0):
            raise DomainError("valid frame pixels must lie in [0, 1]")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.frames.shape[1:]


@dataclass
class ThinSlice:
    """A fixed-length window of consecutive frames from one video."""

    frames: np.ndarray  # [L, H, W, C]
    parent_id: str
    index: int  # 0-based position within the parent video


@dataclass
class SliceFeatureMatrix:
    """Per-slice feature rows for one video; the inter-stage handoff.

    ``values`` is [S, M] with S the slice count and M the feature width,
    constant across all videos of a corpus.
    """

    values: np.ndarray  # [S, M] float32
    parent_id: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise DomainError(f"feature matrix must be [S>=1, M], got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise DomainError("feature matrix entries must be finite")

    @property
    def num_slices(self) -> int:
        return self.values.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.values.shape[1]


SPLITS = ("train", "validation", "test")


@dataclass
class Corpus:
    """Ordered samples plus a disjoint split assignment."""

    samples: list[VideoSample]
    split: dict[str, str]  # sample id -> split name
    generation_seed: int | None = None

    def __post_init__(self):
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise DomainError("sample ids must be unique")
        for sid, split in self.split.items():
            if split not in SPLITS:
                raise DomainError(f"unknown split {split!r} for sample {sid!r}")
        missing = [i for i in ids if i not in self.split]
        if missing:
            raise DomainError(f"samples without split assignment: {missing[:3]}")

    def members(self, split: str) -> list[VideoSample]:
        if split not in SPLITS:
            raise DomainError(f"unknown split {split!r}")
        return [s for s in self.samples if self.split[s.id] == split]

    def by_id(self, sample_id: str) -> VideoSample:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise DomainError(f"no sample with id {sample_id!r}")


def slice_video(video: VideoSample, slice_length: int, stride: int) -> list[ThinSlice]:
    """Cut a video into thin slices of ``slice_length`` frames every ``stride``.

    Returns floor((T - L) / stride) + 1 slices in temporal order with
    consecutive 0-based indices. Raises DomainError when the video is shorter
    than one slice.
    """
    if slice_length < 1 or stride < 1:
        raise ConfigError("slice_length and stride must be >= 1")
    t = video.num_frames
    if t < slice_length:
        raise DomainError(
            f"video {video.id!r} has {t} frames, shorter than slice length {slice_length}"
        )
    count = (t - slice_length) // stride + 1
    return [
        ThinSlice(
            frames=video.frames[k * stride : k * stride + slice_length],
            parent_id=video.id,
            index=k,
        )
        for k in range(count)
    ]


def impute_missing_frames(video: VideoSample) -> VideoSample:
    """Replace each invalid frame by the temporally nearest valid one.

    Ties between an equally distant earlier and later valid frame break
    toward the earlier frame. Raises DomainError when no frame is valid.
    """
    mask = video.frame_valid
    if mask.all():
        return replace(video, frames=video.frames.copy(), frame_valid=mask.copy())
    valid_idx = np.flatnonzero(mask)
    if valid_idx.size == 0:
        raise DomainError(f"video {video.id!r} has no valid frame to impute from")
    t = np.arange(video.num_frames)
    pos = np.searchsorted(valid_idx, t)
    left = valid_idx[np.clip(pos - 1, 0, valid_idx.size - 1)]
    right = valid_idx[np.clip(pos, 0, valid_idx.size - 1)]
    # prefer the earlier frame on distance ties
    use_left = (t - left) <= (right - t)
    source = np.where(use_left, left, right)
    source[pos == 0] = right[pos == 0]  # nothing to the left
    source[pos == valid_idx.size] = left[pos == valid_idx.size]  # nothing to the right
    source[mask] = t[mask]
    return replace(
        video,
        frames=video.frames[source].copy(),
        frame_valid=np.ones_like(mask),
    )


@dataclass
class SynthConfig:
    """Controls for the synthetic corpus generator.

    Severity enters only through oscillation amplitudes: a moving Gaussian
    blob pulses in brightness (and sways in position) at ``frequencies``
    cycles/frame, with amplitudes interpolated between ``amplitude_floor``
    and ``amplitude_ceil`` by the normalized label. Static appearance (base
    brightness, blob size, location) is drawn independently of the label.
    """

    train_count: int = 80
    validation_count: int = 20
    test_count: int = 20
    frame_range: tuple[int, int] = (150, 450)  # uniform video length, inclusive
    height: int = 32
    width: int = 32
    channels: int = 1
    category_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    frequencies: tuple[float, ...] = (0.05, 0.1, 0.2)  # cycles per frame
    amplitude_floor: tuple[float, ...] = (0.03, 0.02, 0.02)
    amplitude_ceil: tuple[float, ...] = (0.35, 0.25, 0.18)
    envelope_depth: float = 0.3  # slow cross-slice modulation of amplitudes
    envelope_period: float = 150.0  # frames
    position_sway: float = 3.0  # max pixels of label-scaled positional sway
    noise_std: float = 0.015
    invalid_fraction: float = 0.01  # frames dropped to exercise imputation

    def __post_init__(self):
        if min(self.train_count, self.validation_count, self.test_count) < 1:
            raise DomainError("every split must request at least one sample")
        if self.frame_range[0] < 1 or self.frame_range[0] > self.frame_range[1]:
            raise ConfigError(f"bad frame_range {self.frame_range}")
        if not (len(self.frequencies) == len(self.amplitude_floor) == len(self.amplitude_ceil)):
            raise ConfigError("frequencies and amplitude bounds must have equal lengths")
        if self.channels < 1 or self.height < 8 or self.width < 8:
            raise ConfigError("frames must be at least 8x8 with one channel")
        if not 0.0 <= self.invalid_fraction < 0.5:
            raise ConfigError("invalid_fraction must lie in [0, 0.5)")


def _split_categories(count: int, weights, rng: np.random.Generator) -> list[SeverityCategory]:
    """Near-balanced category list of the requested size, then shuffled."""
    w = np.asarray(weights, dtype=np.float64)
    if w.min() < 0 or w.sum() <= 0:
        raise ConfigError("category weights must be non-negative and not all zero")
    target = w / w.sum() * count
    counts = np.floor(target).astype(int)
    # distribute the remainder to the largest fractional parts
    for idx in np.argsort(-(target - counts))[: count - counts.sum()]:
        counts[idx] += 1
    cats = [SeverityCategory(i) for i in range(4) for _ in range(counts[i])]
    rng.shuffle(cats)
    return cats


def _render_sample(
    sample_id: str,
    bdi: int,
    config: SynthConfig,
    rng: np.random.Generator,
) -> VideoSample:
    h, w, c = config.height, config.width, config.channels
    t_lo, t_hi = config.frame_range
    t_total = int(rng.integers(t_lo, t_hi + 1))
    level = bdi / BDI_MAX

    base = rng.uniform(0.05, 0.15)
    peak = rng.uniform(0.25, 0.4)
    sigma = rng.uniform(0.125 * min(h, w), 0.2 * min(h, w))
    cx = rng.uniform(0.38 * w, 0.62 * w)
    cy = rng.uniform(0.38 * h, 0.62 * h)
    sway_dir = rng.uniform(0.0, 2.0 * np.pi)

    t = np.arange(t_total, dtype=np.float64)
    modulation = np.zeros(t_total)
    for freq, a_lo, a_hi in zip(config.frequencies, config.amplitude_floor, config.amplitude_ceil):
        amp = a_lo + (a_hi - a_lo) * level
        envelope = 1.0 + config.envelope_depth * np.sin(
            2.0 * np.pi * t / config.envelope_period + rng.uniform(0.0, 2.0 * np.pi)
        )
        modulation += amp * envelope * np.sin(2.0 * np.pi * freq * t + rng.uniform(0.0, 2.0 * np.pi))
    intensity = peak * (1.0 + modulation)  # [T]

    sway = config.position_sway * level * np.sin(
        2.0 * np.pi * t / 30.0 + rng.uniform(0.0, 2.0 * np.pi)
    )
    cx_t = cx + sway * np.cos(sway_dir)
    cy_t = cy + sway * np.sin(sway_dir)

    ys = np.arange(h, dtype=np.float64)[None, :, None]
    xs = np.arange(w, dtype=np.float64)[None, None, :]
    dist2 = (ys - cy_t[:, None, None]) ** 2 + (xs - cx_t[:, None, None]) ** 2
    blob = np.exp(-dist2 / (2.0 * sigma**2))  # [T, H, W]
    frames = base + intensity[:, None, None] * blob
    frames = frames + rng.normal(0.0, config.noise_std, size=frames.shape)
    frames = np.clip(frames, 0.0, 1.0).astype(np.float32)
    frames = np.repeat(frames[..., None], c, axis=3)

    valid = rng.random(t_total) >= config.invalid_fraction
    if not valid.any():
        valid[0] = True
    frames[~valid] = 0.0

    return VideoSample(
        id=sample_id,
        frames=frames,
        frame_valid=valid,
        bdi_score=bdi,
        category=bucket_severity(bdi),
    )


def generate_synthetic_corpus(config: SynthConfig, seed: int) -> Corpus:
    """Generate a deterministic labelled corpus from (config, seed).

    Category coverage is stratified per split; labels are uniform within
    their category band. The same inputs always yield byte-identical frames.
    """
    root = np.random.SeedSequence(seed)
    plan_rng = np.random.Generator(np.random.PCG64(root.spawn(1)[0]))
    requests: list[tuple[str, int]] = []
    for split, count in zip(SPLITS, (config.train_count, config.validation_count, config.test_count)):
        for k, cat in enumerate(_split_categories(count, config.category_weights, plan_rng)):
            lo, hi = category_band(cat)
            requests.append((f"{split}-{k:03d}", int(plan_rng.integers(lo, hi + 1))))

    samples = []
    split_map = {}
    for child, (sample_id, bdi) in zip(root.spawn(len(requests)), requests):
        rng = np.random.Generator(np.random.PCG64(child))
        samples.append(_render_sample(sample_id, bdi, config, rng))
        split_map[sample_id] = sample_id.split("-")[0]
    return Corpus(samples=samples, split=split_map, generation_seed=seed)
