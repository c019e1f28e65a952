"""Versioned little-endian parameter files.

Layout::

    magic  b"SKAD"
    u32    format version
    u32 + bytes   kind (utf-8)
    u32 + bytes   metadata json: {"config": ..., "trainable": ...}
    u32    tensor count
    per tensor: u32 name length, name, u32 rank, rank x u32 dims,
                float32 payload (little-endian)
    u32    crc32 of everything above
"""
from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from ..errors import ParamFileError
from .nets import PatchCNNConfig, UNetConfig
from .state import ModelState, build_model, set_trainable

MAGIC = b"SKAD"
FORMAT_VERSION = 1
_CONFIGS = {"unet": UNetConfig, "patch": PatchCNNConfig}


def _put_bytes(buf: io.BytesIO, data: bytes) -> None:
    buf.write(struct.pack("<I", len(data)))
    buf.write(data)


def params_to_bytes(m: ModelState) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    _put_bytes(buf, m.kind.encode())
    meta = {"config": asdict(m.config), "trainable": m.trainable}
    _put_bytes(buf, json.dumps(meta, sort_keys=True).encode())
    state = m.net.state_dict()
    buf.write(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy()
        _put_bytes(buf, name.encode())
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ParamFileError("parameter file is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())


def params_from_bytes(data: bytes) -> ModelState:
    if len(data) < 12 or data[:4] != MAGIC:
        raise ParamFileError("not a parameter file (bad magic)")
    body, crc = data[:-4], struct.unpack("<I", data[-4:])[0]
    r = _Reader(body)
    r.take(4)
    version = r.u32()
    if version != FORMAT_VERSION:
        raise ParamFileError(f"unsupported parameter file version {version} (expected {FORMAT_VERSION})")
    if zlib.crc32(body) != crc:
        raise ParamFileError("parameter file is corrupt or truncated (checksum mismatch)")
    try:
        kind = r.blob().decode()
        meta = json.loads(r.blob().decode())
        cfg = _CONFIGS[kind](**meta["config"])
    except (KeyError, TypeError, ValueError, UnicodeDecodeError) as exc:
        raise ParamFileError(f"bad parameter file header: {exc}") from None
    m = build_model(kind, cfg, seed=0)
    target = m.net.state_dict()
    loaded = {}
    for _ in range(r.u32()):
        name = r.blob().decode()
        rank = r.u32()
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank))
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
        if name not in target or tuple(target[name].shape) != tuple(shape):
            raise ParamFileError(f"unexpected tensor {name!r} with shape {shape}")
        loaded[name] = torch.from_numpy(arr.copy()).to(target[name].dtype)
    if r.pos != len(body):
        raise ParamFileError("trailing bytes after tensor table")
    missing = set(target) - set(loaded)
    if missing:
        raise ParamFileError(f"missing tensors: {sorted(missing)[:5]}")
    m.net.load_state_dict(loaded)
    for group, flag in meta.get("trainable", {}).items():
        set_trainable(m, group, flag)
    return m


def save_params(m: ModelState, path) -> Path:
    path = Path(path)
    path.write_bytes(params_to_bytes(m))
    return path


def load_params(path) -> ModelState:
    return params_from_bytes(Path(path).read_bytes())
