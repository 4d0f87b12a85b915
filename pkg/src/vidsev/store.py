"""On-disk formats: corpus manifests, video payloads, feature matrices, graphs.

All binary headers are little-endian 32-bit fields behind a 4-byte magic.
Video payloads are either a dense tensor file or a directory of per-frame
images; in tensor files an invalid (undetected) frame is stored as all-NaN,
in image directories it is simply a missing frame index.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .corpus import Corpus, SliceFeatureMatrix, VideoSample, bucket_severity
from .errors import DomainError

VIDEO_MAGIC = b"VTNS"
FEATURE_MAGIC = b"SFMX"
GRAPH_MAGIC = b"VGRF"

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("u1")}
_CODE_FOR_DTYPE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.uint8): 2}


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise DomainError(f"truncated file while reading {what}")
    return data


def write_video_tensor(path: str | Path, video: VideoSample) -> None:
    """Write frames as a dense tensor file; invalid frames become NaN."""
    frames = video.frames.astype(np.float32, copy=True)
    frames[~video.frame_valid] = np.nan
    t, h, w, c = frames.shape
    with open(path, "wb") as fh:
        fh.write(VIDEO_MAGIC)
        fh.write(struct.pack("<5I", _CODE_FOR_DTYPE[frames.dtype], t, h, w, c))
        fh.write(np.ascontiguousarray(frames).tobytes())


def read_video_tensor(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a dense tensor file; returns (frames [T,H,W,C] float32, valid [T]).

    NaN frames are reported invalid and zero-filled.
    """
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != VIDEO_MAGIC:
            raise DomainError(f"{path}: not a video tensor file")
        code, t, h, w, c = struct.unpack("<5I", _read_exact(fh, 20, "header"))
        if code not in _DTYPE_CODES:
            raise DomainError(f"{path}: unknown dtype code {code}")
        dtype = _DTYPE_CODES[code]
        payload = _read_exact(fh, t * h * w * c * dtype.itemsize, "payload")
    frames = np.frombuffer(payload, dtype=dtype).reshape(t, h, w, c).astype(np.float32)
    if code == 2:
        frames /= 255.0
    valid = ~np.isnan(frames).all(axis=(1, 2, 3))
    frames = np.nan_to_num(frames, nan=0.0)
    return frames, valid


def read_video_image_dir(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a directory of ``frame_NNNNNN.png`` images.

    Missing indices are invalid frames. Colour images are reduced to
    luminance when all frames present are single-channel-like.
    """
    import matplotlib.image as mpimg

    path = Path(path)
    found = {}
    for item in sorted(path.glob("frame_*.png")):
        try:
            idx = int(item.stem.split("_")[1])
        except (IndexError, ValueError):
            continue
        img = np.asarray(mpimg.imread(item), dtype=np.float32)
        if img.ndim == 3:  # drop alpha, average colour channels
            img = img[..., :3].mean(axis=2)
        found[idx] = img
    if not found:
        raise DomainError(f"{path}: no frame images found")
    t = max(found) + 1
    h, w = next(iter(found.values())).shape
    frames = np.zeros((t, h, w, 1), dtype=np.float32)
    valid = np.zeros(t, dtype=bool)
    for idx, img in found.items():
        if img.shape != (h, w):
            raise DomainError(f"{path}: frame {idx} has shape {img.shape}, expected {(h, w)}")
        frames[idx, :, :, 0] = img
        valid[idx] = True
    return frames, valid


def read_video_payload(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Dispatch on payload kind: tensor file or image directory."""
    path = Path(path)
    if path.is_dir():
        return read_video_image_dir(path)
    return read_video_tensor(path)


def write_feature_matrix(path: str | Path, feats: SliceFeatureMatrix) -> None:
    values = feats.values.astype("<f4")
    s, m = values.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<2I", s, m))
        fh.write(np.ascontiguousarray(values).tobytes())


def read_feature_matrix(path: str | Path, parent_id: str | None = None) -> SliceFeatureMatrix:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != FEATURE_MAGIC:
            raise DomainError(f"{path}: not a feature matrix file")
        s, m = struct.unpack("<2I", _read_exact(fh, 8, "header"))
        payload = _read_exact(fh, s * m * 4, "payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(s, m).copy()
    return SliceFeatureMatrix(values=values, parent_id=parent_id or Path(path).stem)


def write_graph_file(path: str | Path, vertex_features: np.ndarray, edges: np.ndarray) -> None:
    """Write (vertex features [V, F] f32, directed edges [E, 3] of src,dst,type)."""
    feats = np.ascontiguousarray(vertex_features, dtype="<f4")
    edge_arr = np.ascontiguousarray(edges, dtype="<u4").reshape(-1, 3)
    v, f = feats.shape
    with open(path, "wb") as fh:
        fh.write(GRAPH_MAGIC)
        fh.write(struct.pack("<3I", v, f, edge_arr.shape[0]))
        fh.write(feats.tobytes())
        fh.write(edge_arr.tobytes())


def read_graph_file(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != GRAPH_MAGIC:
            raise DomainError(f"{path}: not a graph file")
        v, f, e = struct.unpack("<3I", _read_exact(fh, 12, "header"))
        feats = np.frombuffer(_read_exact(fh, v * f * 4, "vertex features"), dtype="<f4")
        edges = np.frombuffer(_read_exact(fh, e * 12, "edges"), dtype="<u4")
    return feats.reshape(v, f).copy(), edges.reshape(e, 3).copy()


def write_corpus(corpus: Corpus, root: str | Path) -> Path:
    """Persist a corpus as ``manifest.tsv`` plus a ``videos/`` directory."""
    root = Path(root)
    video_dir = root / "videos"
    video_dir.mkdir(parents=True, exist_ok=True)
    lines = ["id\tpath\tbdi_score\tsplit"]
    for sample in corpus.samples:
        rel = f"videos/{sample.id}.vt"
        write_video_tensor(root / rel, sample)
        lines.append(f"{sample.id}\t{rel}\t{sample.bdi_score}\t{corpus.split[sample.id]}")
    manifest = root / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def read_corpus(manifest_path: str | Path) -> Corpus:
    """Load a corpus from its manifest; payload paths resolve relative to it."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    lines = manifest_path.read_text().splitlines()
    if not lines or lines[0].split("\t") != ["id", "path", "bdi_score", "split"]:
        raise DomainError(f"{manifest_path}: malformed manifest header")
    samples = []
    split_map = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        try:
            sid, rel, bdi, split = line.split("\t")
        except ValueError as exc:
            raise DomainError(f"{manifest_path}: malformed manifest row {line!r}") from exc
        frames, valid = read_video_payload(base / rel)
        samples.append(
            VideoSample(
                id=sid,
                frames=frames,
                frame_valid=valid,
                bdi_score=int(bdi),
                category=bucket_severity(int(bdi)),
            )
        )
        split_map[sid] = split
    return Corpus(samples=samples, split=split_map)
