"""End-to-end orchestration: corpus, short-term stage, encodings, heads, eval.

Stages cache their outputs on disk keyed by a fingerprint of the
configuration that shaped them; a missing or mismatched fingerprint file
marks the stage stale and forces recomputation, so head experiments reuse
extracted features instead of retraining the short-term model. Every stage
is deterministic given the run's seeds and a fixed thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch
from pathlib import Path

from .checkpoint import (
    config_fingerprint,
    load_checkpoint,
    load_module_tensors,
    module_tensors,
    save_checkpoint,
    torch_rng_payload,
)
from .config import (
    RunConfig,
    config_to_dict,
    head_stage_fingerprint,
    short_stage_fingerprint,
)
from .corpus import Corpus, SliceFeatureMatrix, generate_synthetic_corpus
from .enhance import ShortTermModel
from .errors import ConfigError, DomainError
from .graphs import aggregate_atp, aggregate_sph, aggregate_spv, aggregate_sta, build_seg, build_spg
from .metrics import MetricsReport, compute_metrics
from .regressor import Conv1dHead, GraphBatchItem, GraphRegressor, MlpHead, train_graph_head
from .report import emit_scatter_plot, write_metrics_report, write_predictions, write_training_log
from .shortterm import extract_slice_outputs, train_short_term
from .store import read_corpus, read_feature_matrix, write_corpus, write_feature_matrix, write_graph_file


_FINGERPRINT_FILE = ".fingerprint"


@dataclass
class PipelineResult:
    """What a full run produces, besides the on-disk artifacts."""

    report: MetricsReport
    predictions: list[tuple[str, float, float]]  # (video id, prediction, label)
    out_dir: Path
    representation: str


def _stage_cached(stage_dir: Path, fingerprint: str) -> bool:
    marker = stage_dir / _FINGERPRINT_FILE
    if marker.exists() and marker.read_text().strip() == fingerprint:
        return True
    if marker.exists():
        marker.unlink()  # stale artifacts: drop the marker so partial output is never trusted
    return False


def _mark_stage(stage_dir: Path, fingerprint: str) -> None:
    (stage_dir / _FINGERPRINT_FILE).write_text(fingerprint + "\n")


def ensure_corpus(cfg: RunConfig, out_dir: Path) -> Corpus:
    """Load the configured corpus or synthesize (and persist) one."""
    if cfg.corpus_manifest:
        return read_corpus(cfg.corpus_manifest)
    stage_dir = out_dir / "corpus"
    fingerprint = config_fingerprint({"synth": config_to_dict(cfg.synth), "seed": cfg.corpus_seed})
    if _stage_cached(stage_dir, fingerprint):
        return read_corpus(stage_dir / "manifest.tsv")
    stage_dir.mkdir(parents=True, exist_ok=True)
    corpus = generate_synthetic_corpus(cfg.synth, cfg.corpus_seed)
    write_corpus(corpus, stage_dir)
    _mark_stage(stage_dir, fingerprint)
    return corpus


def _build_short_model(cfg: RunConfig) -> ShortTermModel:
    torch.manual_seed(cfg.model_seed)
    return ShortTermModel(
        cfg.backbone, cfg.separator, latent_channels=cfg.attention_latent_channels
    )


def train_short_stage(cfg: RunConfig, corpus: Corpus, out_dir: Path) -> ShortTermModel:
    """Train (or reload) the short-term model."""
    stage_dir = out_dir / "checkpoints"
    ckpt_path = stage_dir / "short.ckpt"
    fingerprint = short_stage_fingerprint(cfg)
    model = _build_short_model(cfg)
    if _stage_cached(stage_dir, fingerprint) and ckpt_path.exists():
        tensors, _ = load_checkpoint(ckpt_path, fingerprint)
        load_module_tensors(model, tensors)
        model.eval()
        return model
    stage_dir.mkdir(parents=True, exist_ok=True)
    records = train_short_term(model, corpus, cfg.short_train)
    save_checkpoint(ckpt_path, module_tensors(model), fingerprint, torch_rng_payload())
    write_training_log(
        [{"step": r.step, **r.losses} for r in records], out_dir / "logs" / "short_train.tsv"
    )
    _mark_stage(stage_dir, fingerprint)
    return model


def extract_stage(cfg: RunConfig, corpus: Corpus, model: ShortTermModel, out_dir: Path) -> dict[str, tuple[SliceFeatureMatrix, np.ndarray]]:
    """Per-video severity features and slice predictions, cached as files."""
    stage_dir = out_dir / "features"
    fingerprint = short_stage_fingerprint(cfg)
    if not _stage_cached(stage_dir, fingerprint):
        stage_dir.mkdir(parents=True, exist_ok=True)
        for video in corpus.samples:
            feats, preds = extract_slice_outputs(
                model,
                video,
                cfg.short_train.slice_length,
                cfg.short_train.effective_stride,
                cfg.short_train.label_scale,
            )
            write_feature_matrix(stage_dir / f"{video.id}.sfm", feats)
            write_feature_matrix(
                stage_dir / f"{video.id}.pred.sfm",
                SliceFeatureMatrix(values=preds.reshape(-1, 1), parent_id=video.id),
            )
        _mark_stage(stage_dir, fingerprint)
    out = {}
    for video in corpus.samples:
        feats = read_feature_matrix(stage_dir / f"{video.id}.sfm", video.id)
        preds = read_feature_matrix(stage_dir / f"{video.id}.pred.sfm", video.id)
        out[video.id] = (feats, preds.values.reshape(-1).astype(np.float64))
    return out


def encode_stage(cfg: RunConfig, corpus: Corpus, extracted, out_dir: Path) -> dict[str, object]:
    """Build the configured video-level representation for every video."""
    repr_name = cfg.representation
    stage_dir = out_dir / "encoded" / repr_name
    fingerprint = head_stage_fingerprint(cfg)
    encoded: dict[str, object] = {}
    for video in corpus.samples:
        feats, slice_preds = extracted[video.id]
        if repr_name == "spg":
            rep = build_spg(feats, cfg.spectral.grid_bins, cfg.spectral.top_k)
        elif repr_name == "seg":
            rep = build_seg(feats, cfg.sequential.windows)
        elif repr_name == "spv":
            rep = aggregate_spv(feats, cfg.spectral.grid_bins, cfg.spectral.top_k)
        elif repr_name == "sta":
            rep = aggregate_sta(feats)
        elif repr_name == "sph":
            rep = aggregate_sph(feats, cfg.spectral.grid_bins, cfg.spectral.top_k)
        elif repr_name == "atp":
            rep = aggregate_atp(slice_preds)
        else:
            raise ConfigError(f"unknown representation {repr_name!r}")
        encoded[video.id] = rep
    if not _stage_cached(stage_dir, fingerprint):
        stage_dir.mkdir(parents=True, exist_ok=True)
        _write_encoded(repr_name, corpus, encoded, stage_dir)
        _mark_stage(stage_dir, fingerprint)
    return encoded


def _write_encoded(repr_name: str, corpus: Corpus, encoded: dict, stage_dir: Path) -> None:
    if repr_name == "spg":
        for vid, rep in encoded.items():
            adj = np.argwhere(rep.adjacency)
            edges = np.concatenate([adj, np.zeros((adj.shape[0], 1), dtype=np.int64)], axis=1)
            write_graph_file(stage_dir / f"{vid}.vgr", rep.vertex_features, edges)
    elif repr_name == "seg":
        for vid, rep in encoded.items():
            write_graph_file(stage_dir / f"{vid}.vgr", rep.vertex_features, rep.edges)
    elif repr_name in ("spv", "sta"):
        for vid, rep in encoded.items():
            write_feature_matrix(
                stage_dir / f"{vid}.sfm", SliceFeatureMatrix(rep.reshape(1, -1), parent_id=vid)
            )
    elif repr_name == "sph":
        for vid, rep in encoded.items():
            write_feature_matrix(
                stage_dir / f"{vid}.sfm", SliceFeatureMatrix(rep.values, parent_id=vid)
            )
    else:  # atp: already a scalar per video
        rows = [(vid, float(encoded[vid]), float(corpus.by_id(vid).bdi_score)) for vid in encoded]
        write_predictions(rows, stage_dir / "predictions.tsv")


def _train_normalization(repr_name: str, train_reps: list) -> tuple[np.ndarray, np.ndarray]:
    if repr_name == "spg":
        stacked = np.concatenate([r.vertex_features for r in train_reps], axis=0)
    elif repr_name == "seg":
        stacked = np.concatenate([r.vertex_features for r in train_reps], axis=0)
    elif repr_name in ("spv", "sta"):
        stacked = np.stack(train_reps)
    else:  # sph
        stacked = np.stack([r.values for r in train_reps])
    return stacked.mean(axis=0), stacked.std(axis=0)


def build_head(cfg: RunConfig, sample_rep):
    torch.manual_seed(cfg.model_seed + 1)
    repr_name = cfg.representation
    if repr_name == "spg":
        return GraphRegressor(sample_rep.vertex_features.shape[1], cfg.gat, edge_types=None)
    if repr_name == "seg":
        return GraphRegressor(
            sample_rep.vertex_features.shape[1], cfg.gat, edge_types=tuple(cfg.sequential.windows)
        )
    if repr_name in ("spv", "sta"):
        return MlpHead(int(np.asarray(sample_rep).size), widths=cfg.gat.fc_widths)
    if repr_name == "sph":
        return Conv1dHead(sample_rep.values.shape[0], sample_rep.values.shape[1])
    raise ConfigError(f"representation {repr_name!r} has no trainable head")


def train_head_stage(cfg: RunConfig, corpus: Corpus, encoded: dict, out_dir: Path):
    """Train (or reload) the video-level head; atp has none."""
    if cfg.representation == "atp":
        return None
    stage_dir = out_dir / "heads"
    ckpt_path = stage_dir / f"{cfg.representation}.ckpt"
    fingerprint = head_stage_fingerprint(cfg)
    train_ids = [v.id for v in corpus.members("train")]
    if not train_ids:
        raise DomainError("training split is empty")
    head = build_head(cfg, encoded[train_ids[0]])
    if _stage_cached(stage_dir, fingerprint) and ckpt_path.exists():
        tensors, _ = load_checkpoint(ckpt_path, fingerprint)
        load_module_tensors(head, tensors)
        return head
    stage_dir.mkdir(parents=True, exist_ok=True)
    mean, std = _train_normalization(cfg.representation, [encoded[i] for i in train_ids])
    head.set_normalization(mean, std)
    items = [
        GraphBatchItem(graph=encoded[i], label=float(corpus.by_id(i).bdi_score)) for i in train_ids
    ]
    records = train_graph_head(head, items, cfg.head_train)
    save_checkpoint(ckpt_path, module_tensors(head), fingerprint, torch_rng_payload())
    write_training_log(records, out_dir / "logs" / f"head_{cfg.representation}.tsv")
    _mark_stage(stage_dir, fingerprint)
    return head


def predict_videos(cfg: RunConfig, head, encoded: dict, corpus: Corpus, split: str) -> list[tuple[str, float, float]]:
    rows = []
    for video in corpus.members(split):
        rep = encoded[video.id]
        if cfg.representation == "atp":
            pred = float(rep)
        else:
            pred = head.predict(rep) * cfg.head_train.label_scale
        rows.append((video.id, pred, float(video.bdi_score)))
    return rows


def evaluate_stage(cfg: RunConfig, head, encoded, corpus: Corpus, out_dir: Path, split: str | None = None) -> tuple[MetricsReport, list]:
    split = split or cfg.eval_split
    rows = predict_videos(cfg, head, encoded, corpus, split)
    if not rows:
        raise DomainError(f"split {split!r} is empty")
    report = compute_metrics([r[1] for r in rows], [r[2] for r in rows])
    report_dir = out_dir / "reports" / cfg.representation / split
    write_predictions(rows, report_dir / "predictions.tsv")
    write_metrics_report(report, report_dir / "metrics.tsv")
    emit_scatter_plot(
        [r[1] for r in rows],
        [r[2] for r in rows],
        report_dir / "scatter.png",
        title=f"{cfg.representation} on {split} split",
    )
    return report, rows


def run_pipeline(cfg: RunConfig, out_dir: str | Path | None = None) -> PipelineResult:
    """Corpus -> short-term training -> extraction -> encoding -> head -> report."""
    torch.set_num_threads(cfg.torch_threads)
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = "corpus"
    try:
        corpus = ensure_corpus(cfg, out)
        stage = "train-short"
        model = train_short_stage(cfg, corpus, out)
        stage = "extract"
        extracted = extract_stage(cfg, corpus, model, out)
        stage = "encode"
        encoded = encode_stage(cfg, corpus, extracted, out)
        stage = "train-head"
        head = train_head_stage(cfg, corpus, encoded, out)
        stage = "evaluate"
        report, rows = evaluate_stage(cfg, head, encoded, corpus, out)
    except (ConfigError, DomainError):
        raise
    except Exception as exc:  # tag unexpected failures with the failing stage
        raise RuntimeError(f"pipeline stage {stage!r} failed: {exc}") from exc
    return PipelineResult(report=report, predictions=rows, out_dir=out, representation=cfg.representation)


def cross_split_evaluate(train_cfg: RunConfig, test_corpus: Corpus | str | Path, out_dir: str | Path | None = None) -> MetricsReport:
    """Evaluate a trained run on a different corpus without parameter updates."""
    torch.set_num_threads(train_cfg.torch_threads)
    out = Path(out_dir if out_dir is not None else train_cfg.out_dir)
    short_ckpt = out / "checkpoints" / "short.ckpt"
    if not short_ckpt.exists():
        raise DomainError(f"no trained checkpoint at {short_ckpt}; run the pipeline first")
    if isinstance(test_corpus, (str, Path)):
        test_corpus = read_corpus(test_corpus)

    sample = test_corpus.samples[0]
    if sample.frame_shape[2] != train_cfg.backbone.in_channels:
        raise ConfigError(
            f"test corpus has {sample.frame_shape[2]} channels, model expects {train_cfg.backbone.in_channels}"
        )

    model = _build_short_model(train_cfg)
    tensors, _ = load_checkpoint(short_ckpt, short_stage_fingerprint(train_cfg))
    load_module_tensors(model, tensors)
    model.eval()

    extracted = {}
    for video in test_corpus.samples:
        extracted[video.id] = extract_slice_outputs(
            model,
            video,
            train_cfg.short_train.slice_length,
            train_cfg.short_train.effective_stride,
            train_cfg.short_train.label_scale,
        )

    head = None
    if train_cfg.representation != "atp":
        head_ckpt = out / "heads" / f"{train_cfg.representation}.ckpt"
        if not head_ckpt.exists():
            raise DomainError(f"no trained head at {head_ckpt}; run the pipeline first")
        first_feats = extracted[test_corpus.samples[0].id][0]
        sample_rep = _encode_one(train_cfg, first_feats, extracted[test_corpus.samples[0].id][1])
        head = build_head(train_cfg, sample_rep)
        tensors, _ = load_checkpoint(head_ckpt, head_stage_fingerprint(train_cfg))
        load_module_tensors(head, tensors)

    rows = []
    for video in test_corpus.samples:
        feats, slice_preds = extracted[video.id]
        rep = _encode_one(train_cfg, feats, slice_preds)
        if train_cfg.representation == "atp":
            pred = float(rep)
        else:
            pred = head.predict(rep) * train_cfg.head_train.label_scale
        rows.append((video.id, pred, float(video.bdi_score)))
    report = compute_metrics([r[1] for r in rows], [r[2] for r in rows])

    report_dir = out / "reports" / train_cfg.representation / "cross"
    write_predictions(rows, report_dir / "predictions.tsv")
    write_metrics_report(report, report_dir / "metrics.tsv")
    emit_scatter_plot(
        [r[1] for r in rows], [r[2] for r in rows], report_dir / "scatter.png",
        title=f"{train_cfg.representation} cross-corpus",
    )
    return report


def _encode_one(cfg: RunConfig, feats: SliceFeatureMatrix, slice_preds: np.ndarray):
    if cfg.representation == "spg":
        return build_spg(feats, cfg.spectral.grid_bins, cfg.spectral.top_k)
    if cfg.representation == "seg":
        return build_seg(feats, cfg.sequential.windows)
    if cfg.representation == "spv":
        return aggregate_spv(feats, cfg.spectral.grid_bins, cfg.spectral.top_k)
    if cfg.representation == "sta":
        return aggregate_sta(feats)
    if cfg.representation == "sph":
        return aggregate_sph(feats, cfg.spectral.grid_bins, cfg.spectral.top_k)
    if cfg.representation == "atp":
        return aggregate_atp(slice_preds)
    raise ConfigError(f"unknown representation {cfg.representation!r}")


def with_representation(cfg: RunConfig, representation: str) -> RunConfig:
    """Copy of a config pointing at another representation, same artifacts."""
    return replace(cfg, representation=representation)
