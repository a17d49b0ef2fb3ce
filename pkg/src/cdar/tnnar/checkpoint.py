"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic        8 bytes  b"CDARCKPT"
    version      u32
    arch_len     u32, then arch_len bytes of UTF-8 JSON (ArchConfig)
    n_tensors    u32
    per tensor:  u32 name_len, name (UTF-8), u32 ndim, ndim x u64 dims,
                 prod(dims) x float64 values in row-major order
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .network import ArchConfig, check_params

MAGIC = b"CDARCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def encode(params: dict, arch: ArchConfig) -> bytes:
    arch_json = json.dumps(arch.to_dict(), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(arch_json)), arch_json,
             struct.pack("<I", len(params))]
    for name, t in params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<I{t.ndim}Q", t.ndim, *t.shape))
        parts.append(np.ascontiguousarray(t, dtype="<f8").tobytes())
    return b"".join(parts)


def decode(blob: bytes) -> tuple[dict, ArchConfig]:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = 8
    version, n = struct.unpack_from("<II", blob, pos)
    pos += 8
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    arch = ArchConfig.from_dict(json.loads(blob[pos:pos + n].decode("utf-8")))
    pos += n
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + ln].decode("utf-8")
        pos += ln
        (ndim,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", blob, pos)
        pos += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size
    if pos != len(blob):
        raise CheckpointError("trailing bytes after the last tensor")
    check_params(params, arch)
    return params, arch


def save(path, params: dict, arch: ArchConfig) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(params, arch))
    os.replace(tmp, path)


def load(path) -> tuple[dict, ArchConfig]:
    return decode(Path(path).read_bytes())
