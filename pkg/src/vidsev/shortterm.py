"""Training loop and feature extraction for the short-term model.

Training iterates category-homogeneous minibatches of thin slices: each step
picks one severity category, draws slices from distinct videos of that
category when it has enough, and minimizes the weighted short-term loss with
Adam. Labels are scaled by ``label_scale`` inside the loop (predictions are
scaled back at extraction time), which keeps the loss terms comparably sized.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .corpus import Corpus, SliceFeatureMatrix, VideoSample, impute_missing_frames, slice_video
from .enhance import LossWeights, ShortTermModel, compute_losses
from .errors import DomainError

log = logging.getLogger(__name__)


@dataclass
class ShortTrainConfig:
    """Knobs for short-term training.

    ``label_scale`` divides labels before the loss (63 maps the full score
    range onto [0, 1]); ``stride`` defaults to the slice length, i.e.
    non-overlapping slices.
    """

    steps: int = 400
    batch_slices: int = 5
    slice_length: int = 30
    stride: int | None = None
    learning_rate: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    label_scale: float = 63.0
    seed: int = 0
    loss_weights: LossWeights = field(default_factory=LossWeights)

    @property
    def effective_stride(self) -> int:
        return self.stride if self.stride is not None else self.slice_length


@dataclass
class TrainStepRecord:
    step: int
    losses: dict[str, float]


def _slice_batch_tensor(videos, slice_starts, slice_length, dtype) -> torch.Tensor:
    stack = np.stack(
        [np.moveaxis(v.frames[s : s + slice_length], 3, 0) for v, s in zip(videos, slice_starts)]
    )
    return torch.as_tensor(stack, dtype=dtype)


def train_short_term(
    model: ShortTermModel,
    corpus: Corpus,
    config: ShortTrainConfig,
) -> list[TrainStepRecord]:
    """Train the short-term model in place; returns the per-step loss log."""
    train_videos = [impute_missing_frames(v) for v in corpus.members("train")]
    if not train_videos:
        raise DomainError("training split is empty")
    stride = config.effective_stride

    by_category: dict[int, list[tuple[VideoSample, int]]] = {}
    for video in train_videos:
        if video.num_frames < config.slice_length:
            continue
        count = (video.num_frames - config.slice_length) // stride + 1
        by_category.setdefault(int(video.category), []).append((video, count))
    for cat in range(4):
        if cat not in by_category:
            log.warning("category %d has no sliceable training videos; skipped", cat)
    categories = sorted(by_category)
    if not categories:
        raise DomainError("no training video is long enough for one slice")

    rng = np.random.Generator(np.random.PCG64(config.seed))
    torch.manual_seed(config.seed)
    dtype = next(model.parameters()).dtype
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate, betas=config.betas)

    records = []
    model.train()
    for step in range(config.steps):
        cat = categories[int(rng.integers(len(categories)))]
        pool = by_category[cat]
        n = config.batch_slices
        if len(pool) >= n:
            chosen = [pool[i] for i in rng.choice(len(pool), size=n, replace=False)]
        else:
            chosen = [pool[i] for i in rng.integers(len(pool), size=n)]
        videos = [v for v, _ in chosen]
        starts = [int(rng.integers(count)) * stride for _, count in chosen]

        batch = _slice_batch_tensor(videos, starts, config.slice_length, dtype)
        labels = torch.as_tensor(
            [v.bdi_score / config.label_scale for v in videos], dtype=dtype
        )
        outputs = model(batch)
        breakdown = compute_losses(
            outputs, labels, [v.category for v in videos], config.loss_weights
        )
        optimizer.zero_grad()
        breakdown.l_short.backward()
        optimizer.step()
        records.append(TrainStepRecord(step=step, losses=breakdown.as_floats()))
    model.eval()
    return records


def extract_slice_outputs(
    model: ShortTermModel,
    video: VideoSample,
    slice_length: int = 30,
    stride: int | None = None,
    label_scale: float = 63.0,
    batch_size: int = 16,
) -> tuple[SliceFeatureMatrix, np.ndarray]:
    """Severity features and predictions for every thin slice of a video.

    Returns (feature matrix [S, d] from the severity encoder, per-slice
    predictions [S] rescaled to the label range). Invalid frames are imputed
    first; a video shorter than one slice is a domain error.
    """
    stride = stride if stride is not None else slice_length
    slices = slice_video(impute_missing_frames(video), slice_length, stride)
    dtype = next(model.parameters()).dtype
    feats = []
    preds = []
    model.eval()
    with torch.no_grad():
        for lo in range(0, len(slices), batch_size):
            chunk = slices[lo : lo + batch_size]
            stack = np.stack([np.moveaxis(s.frames, 3, 0) for s in chunk])
            outputs = model(torch.as_tensor(stack, dtype=dtype))
            feats.append(outputs.f_dep.numpy())
            preds.append(outputs.p_ns.numpy() * label_scale)
    return (
        SliceFeatureMatrix(values=np.concatenate(feats), parent_id=video.id),
        np.concatenate(preds).astype(np.float64),
    )


def extract_slice_features(
    model: ShortTermModel,
    video: VideoSample,
    slice_length: int = 30,
    stride: int | None = None,
) -> SliceFeatureMatrix:
    """Severity-encoder features per slice, in temporal order."""
    feats, _ = extract_slice_outputs(model, video, slice_length, stride)
    return feats
