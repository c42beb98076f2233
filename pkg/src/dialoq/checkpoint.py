"""Binary checkpoint format.

Layout: magic "DTRN", u32 LE version (=1), u32 LE JSON length, UTF-8 JSON
metadata (encoder config, vocab/catalog description, ordered tensor
manifest), then each tensor's raw little-endian float32 payload in manifest
order. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig, EncoderParams
from .tensor import Tensor

MAGIC = b"DTRN"
VERSION = 1


class CheckpointError(Exception):
    pass


class BadMagicError(CheckpointError):
    pass


class BadVersionError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass


def checkpoint_save(params: EncoderParams, path, extra_meta: dict | None = None) -> None:
    """Write params (+ optional extra JSON metadata, e.g. vocab/catalog) to path."""
    manifest = [{"name": k, "shape": list(t.data.shape)} for k, t in params.items()]
    meta = {"config": params.config.to_dict(), "tensors": manifest}
    if extra_meta:
        meta.update(extra_meta)
    blob = json.dumps(meta, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for _, t in params.items():
            f.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def checkpoint_load(path) -> tuple[EncoderParams, EncoderConfig, dict]:
    """Read a checkpoint; returns (params, config, full JSON metadata)."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise TruncatedError("file shorter than header")
    if raw[:4] != MAGIC:
        raise BadMagicError(f"bad magic {raw[:4]!r}")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != VERSION:
        raise BadVersionError(f"unsupported version {version}")
    (meta_len,) = struct.unpack("<I", raw[8:12])
    if len(raw) < 12 + meta_len:
        raise TruncatedError("metadata truncated")
    try:
        meta = json.loads(raw[12:12 + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable metadata: {e}") from e
    config = EncoderConfig.from_dict(meta["config"])
    expected = _expected_shapes(config)
    offset = 12 + meta_len
    tensors: dict[str, Tensor] = {}
    for entry in meta["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in expected:
            raise ShapeMismatchError(f"unknown tensor {name!r} in manifest")
        if expected[name] != shape:
            raise ShapeMismatchError(
                f"tensor {name!r} shape {shape} != {expected[name]} from config"
            )
        nbytes = int(np.prod(shape)) * 4
        if offset + nbytes > len(raw):
            raise TruncatedError(f"payload truncated in tensor {name!r}")
        arr = np.frombuffer(raw[offset:offset + nbytes], dtype="<f4").reshape(shape)
        tensors[name] = Tensor(arr.copy())
        offset += nbytes
    missing = set(expected) - set(tensors)
    if missing:
        raise ShapeMismatchError(f"manifest missing tensors: {sorted(missing)}")
    return EncoderParams(config, tensors), config, meta


def _expected_shapes(config: EncoderConfig) -> dict[str, tuple]:
    return {k: t.data.shape for k, t in EncoderParams.init(config, seed=0).items()}
