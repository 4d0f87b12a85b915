"""Command-line interface over the pipeline stages.

Exit codes: 0 success, 2 configuration error, 3 domain error. Flags override
config-file keys; ``--seed`` sets every seed in the run at once.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import REPRESENTATIONS, RunConfig, config_from_json, head_stage_fingerprint
from .checkpoint import load_checkpoint, load_module_tensors
from .errors import ConfigError, DomainError
from .graphs import SequentialGraph, SpectralGraph
from .metrics import compute_metrics
from .pipeline import (
    build_head,
    cross_split_evaluate,
    encode_stage,
    ensure_corpus,
    evaluate_stage,
    extract_stage,
    run_pipeline,
    train_head_stage,
    train_short_stage,
)
from .report import emit_scatter_plot, read_predictions, write_metrics_report
from .store import read_graph_file


def _load_config(args) -> RunConfig:
    cfg = config_from_json(args.config) if args.config else RunConfig()
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.corpus_seed = args.seed
        cfg.model_seed = args.seed + 1
        cfg.short_train.seed = args.seed + 2
        cfg.head_train.seed = args.seed + 3
    if getattr(args, "repr", None):
        cfg.representation = args.repr
    if getattr(args, "split", None):
        cfg.eval_split = args.split
    return cfg


def _print_report(report) -> None:
    for key, value in report.as_dict().items():
        print(f"{key}\t{'undefined' if value is None else value}")


def _cmd_synth(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    corpus = ensure_corpus(cfg, out)
    print(f"corpus of {len(corpus.samples)} videos at {out / 'corpus' / 'manifest.tsv'}")
    return 0


def _stages_through(args, last: str):
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    import torch

    torch.set_num_threads(cfg.torch_threads)
    corpus = ensure_corpus(cfg, out)
    model = train_short_stage(cfg, corpus, out)
    if last == "train-short":
        return cfg, out, corpus, model, None, None
    extracted = extract_stage(cfg, corpus, model, out)
    if last == "extract":
        return cfg, out, corpus, model, extracted, None
    encoded = encode_stage(cfg, corpus, extracted, out)
    return cfg, out, corpus, model, extracted, encoded


def _cmd_train_short(args) -> int:
    _, out, _, _, _, _ = _stages_through(args, "train-short")
    print(f"short-term checkpoint at {out / 'checkpoints' / 'short.ckpt'}")
    return 0


def _cmd_extract(args) -> int:
    _, out, corpus, _, extracted, _ = _stages_through(args, "extract")
    dims = {feats.feature_dim for feats, _ in extracted.values()}
    print(f"extracted features for {len(corpus.samples)} videos (width {sorted(dims)}) at {out / 'features'}")
    return 0


def _cmd_encode(args) -> int:
    cfg, out, _, _, _, encoded = _stages_through(args, "encode")
    print(f"encoded {len(encoded)} videos as {cfg.representation} at {out / 'encoded' / cfg.representation}")
    return 0


def _cmd_train_head(args) -> int:
    cfg, out, corpus, _, _, encoded = _stages_through(args, "encode")
    if cfg.representation == "atp":
        raise ConfigError("atp averages slice predictions; it has no head to train")
    train_head_stage(cfg, corpus, encoded, out)
    print(f"head checkpoint at {out / 'heads' / (cfg.representation + '.ckpt')}")
    return 0


def _cmd_eval(args) -> int:
    cfg, out, corpus, _, _, encoded = _stages_through(args, "encode")
    head = train_head_stage(cfg, corpus, encoded, out)
    report, _ = evaluate_stage(cfg, head, encoded, corpus, out)
    _print_report(report)
    return 0


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    result = run_pipeline(cfg)
    _print_report(result.report)
    return 0


def _cmd_cross_eval(args) -> int:
    cfg = _load_config(args)
    report = cross_split_evaluate(cfg, args.test_manifest)
    _print_report(report)
    return 0


def _cmd_predict(args) -> int:
    cfg = _load_config(args)
    if cfg.representation not in ("spg", "seg"):
        raise ConfigError("predict reads graph files; use --repr spg or seg")
    feats, edges = read_graph_file(args.graph)
    if cfg.representation == "spg":
        v = feats.shape[0]
        adjacency = np.zeros((v, v), dtype=bool)
        if edges.size:
            adjacency[edges[:, 0], edges[:, 1]] = True
        graph = SpectralGraph(
            vertex_features=feats.astype(np.float64), adjacency=adjacency, channel_ids=list(range(v))
        )
    else:
        windows = tuple(sorted({int(w) for w in edges[:, 2]})) or tuple(cfg.sequential.windows)
        graph = SequentialGraph(
            vertex_features=feats.astype(np.float64), edges=edges.astype(np.int64), window_set=windows
        )
    ckpt = Path(cfg.out_dir) / "heads" / f"{cfg.representation}.ckpt"
    if not ckpt.exists():
        raise DomainError(f"no trained head at {ckpt}; run train-head first")
    head = build_head(cfg, graph)
    tensors, _ = load_checkpoint(ckpt, head_stage_fingerprint(cfg))
    load_module_tensors(head, tensors)
    print(head.predict(graph) * cfg.head_train.label_scale)
    return 0


def _cmd_report(args) -> int:
    rows = read_predictions(args.predictions)
    if not rows:
        raise DomainError(f"{args.predictions}: empty predictions table")
    report = compute_metrics([r[1] for r in rows], [r[2] for r in rows])
    out = Path(args.out or Path(args.predictions).parent)
    write_metrics_report(report, out / "metrics.tsv")
    emit_scatter_plot([r[1] for r in rows], [r[2] for r in rows], out / "scatter.png")
    _print_report(report)
    print(f"wrote {out / 'metrics.tsv'} and {out / 'scatter.png'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vidsev", description="Video severity estimation pipeline")
    parser.add_argument("--config", help="JSON run configuration", default=None)
    parser.add_argument("--seed", type=int, help="master seed overriding all config seeds", default=None)
    parser.add_argument("--out", help="output directory overriding the config", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", help="generate and persist a synthetic corpus").set_defaults(fn=_cmd_synth)
    sub.add_parser("train-short", help="train the short-term slice model").set_defaults(fn=_cmd_train_short)
    sub.add_parser("extract", help="extract per-slice features for every video").set_defaults(fn=_cmd_extract)

    enc = sub.add_parser("encode", help="build a video-level representation")
    enc.add_argument("--repr", choices=REPRESENTATIONS, default=None)
    enc.set_defaults(fn=_cmd_encode)

    th = sub.add_parser("train-head", help="train the video-level head")
    th.add_argument("--repr", choices=REPRESENTATIONS, default=None)
    th.set_defaults(fn=_cmd_train_head)

    ev = sub.add_parser("eval", help="evaluate a split and write report + scatter plot")
    ev.add_argument("--repr", choices=REPRESENTATIONS, default=None)
    ev.add_argument("--split", choices=("train", "validation", "test"), default=None)
    ev.set_defaults(fn=_cmd_eval)

    run = sub.add_parser("run", help="run the full pipeline end to end")
    run.add_argument("--repr", choices=REPRESENTATIONS, default=None)
    run.set_defaults(fn=_cmd_run)

    ce = sub.add_parser("cross-eval", help="evaluate a trained run on another corpus")
    ce.add_argument("--test-manifest", required=True, help="manifest of the evaluation corpus")
    ce.set_defaults(fn=_cmd_cross_eval)

    pred = sub.add_parser("predict", help="score one graph file with a trained head")
    pred.add_argument("--graph", required=True, help="graph file produced by encode")
    pred.add_argument("--repr", choices=("spg", "seg"), default=None)
    pred.set_defaults(fn=_cmd_predict)

    rep = sub.add_parser("report", help="re-emit metrics and scatter plot from a predictions table")
    rep.add_argument("--predictions", required=True, help="predictions TSV (id, prediction, label)")
    rep.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
