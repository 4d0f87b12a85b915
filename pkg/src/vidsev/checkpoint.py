"""Versioned checkpoint container with bit-exact round-trips.

Layout: 4-byte magic, u32 version, u32 header length, canonical-JSON header
(fingerprint, RNG state, tensor directory), then raw little-endian tensor
payloads in directory order. Tensors are stored sorted by name and the JSON
is canonical, so saving the same state twice produces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, DomainError

CHECKPOINT_MAGIC = b"VCKP"
CHECKPOINT_VERSION = 1

_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8"), "<i8": np.dtype("<i8"), "u1": np.dtype("u1")}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_fingerprint(config_dict: dict) -> str:
    """Stable hash of a configuration section."""
    return hashlib.sha256(canonical_json(config_dict).encode()).hexdigest()


def _to_numpy(value) -> np.ndarray:
    if isinstance(value, torch.Tensor):
        value = value.detach().cpu().numpy()
    arr = np.asarray(value)
    if arr.dtype == np.float32:
        return arr.astype("<f4")
    if arr.dtype == np.float64:
        return arr.astype("<f8")
    if arr.dtype == np.uint8:
        return arr.astype("u1")
    if np.issubdtype(arr.dtype, np.integer):
        return arr.astype("<i8")
    raise ConfigError(f"unsupported tensor dtype {arr.dtype}")


def save_checkpoint(
    path: str | Path,
    tensors: dict[str, np.ndarray | torch.Tensor],
    fingerprint: str,
    rng_state: dict | None = None,
) -> None:
    """Write named tensors plus fingerprint and RNG state."""
    arrays = {name: _to_numpy(value) for name, value in tensors.items()}
    directory = [
        {"name": name, "dtype": arrays[name].dtype.str.lstrip("|"), "shape": list(arrays[name].shape)}
        for name in sorted(arrays)
    ]
    header = {
        "fingerprint": fingerprint,
        "rng": rng_state or {},
        "tensors": directory,
    }
    blob = canonical_json(header).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<2I", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for entry in directory:
            fh.write(np.ascontiguousarray(arrays[entry["name"]]).tobytes())


def load_checkpoint(
    path: str | Path,
    expected_fingerprint: str | None = None,
) -> tuple[dict[str, np.ndarray], dict]:
    """Read tensors back; refuses when the stored fingerprint differs."""
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise DomainError(f"{path}: not a checkpoint file")
        version, header_len = struct.unpack("<2I", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ConfigError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len).decode())
        if expected_fingerprint is not None and header["fingerprint"] != expected_fingerprint:
            raise ConfigError(
                f"{path}: checkpoint fingerprint {header['fingerprint'][:12]}... does not match "
                f"the current configuration ({expected_fingerprint[:12]}...)"
            )
        tensors = {}
        for entry in header["tensors"]:
            dtype = _DTYPES.get(entry["dtype"])
            if dtype is None:
                raise DomainError(f"{path}: unknown tensor dtype {entry['dtype']}")
            count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
            payload = fh.read(count * dtype.itemsize)
            if len(payload) != count * dtype.itemsize:
                raise DomainError(f"{path}: truncated tensor {entry['name']}")
            tensors[entry["name"]] = np.frombuffer(payload, dtype=dtype).reshape(entry["shape"]).copy()
    return tensors, header.get("rng", {})


def module_tensors(module: torch.nn.Module) -> dict[str, np.ndarray]:
    """State dict of a module as plain numpy arrays."""
    return {name: _to_numpy(value) for name, value in module.state_dict().items()}


def load_module_tensors(module: torch.nn.Module, tensors: dict[str, np.ndarray]) -> None:
    """Restore a state dict saved with :func:`module_tensors`."""
    state = module.state_dict()
    missing = sorted(set(state) - set(tensors))
    extra = sorted(set(tensors) - set(state))
    if missing or extra:
        raise ConfigError(f"checkpoint does not match module (missing={missing[:3]}, extra={extra[:3]})")
    for name, arr in tensors.items():
        if tuple(arr.shape) != tuple(state[name].shape):
            raise ConfigError(
                f"checkpoint tensor {name!r} has shape {tuple(arr.shape)}, module expects {tuple(state[name].shape)}"
            )
    module.load_state_dict(
        {name: torch.as_tensor(arr).to(state[name].dtype) for name, arr in tensors.items()}
    )


def torch_rng_payload() -> dict:
    """Current torch RNG state as a JSON-safe payload."""
    return {"torch": torch.get_rng_state().numpy().tobytes().hex()}
