import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from vidsev import (
    MtbConfig,
    NsConfig,
    ShortTermModel,
    SynthConfig,
    VideoSample,
    bucket_severity,
    generate_synthetic_corpus,
)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(2)


@pytest.fixture
def tiny_corpus():
    """Four short videos, one per category, 60-90 frames of 16x16."""
    cfg = SynthConfig(
        train_count=4,
        validation_count=1,
        test_count=1,
        frame_range=(60, 90),
        height=16,
        width=16,
        invalid_fraction=0.0,
    )
    return generate_synthetic_corpus(cfg, seed=5)


@pytest.fixture
def tiny_model():
    torch.manual_seed(3)
    return ShortTermModel(
        MtbConfig(
            spatial_scales=(1.0, 0.5),
            temporal_factors=(1, 2),
            channel_widths=(3, 3),
            output_dim=6,
            aligned_channels=3,
        ),
        NsConfig(encoder_widths=(8, 6), bottleneck=4, decoder_widths=(6, 8)),
        latent_channels=2,
    )


def make_video(frames: np.ndarray, bdi: int = 10, vid: str = "v0", valid=None) -> VideoSample:
    frames = np.asarray(frames, dtype=np.float32)
    if valid is None:
        valid = np.ones(frames.shape[0], dtype=bool)
    return VideoSample(
        id=vid,
        frames=frames,
        frame_valid=np.asarray(valid, dtype=bool),
        bdi_score=bdi,
        category=bucket_severity(bdi),
    )
