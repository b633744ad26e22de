"""Named-tensor checkpoint archive.

Layout (little-endian throughout)::

    magic      4 bytes  b"CGNZ"
    version    u32
    count      u32
    count x:
        name_len  u32, name  UTF-8 bytes
        rank      u32, extents  rank x u32
        payload   prod(extents) x float32
    checksum   u64  BLAKE2b-64 of every preceding byte
"""

from __future__ import annotations

import hashlib
import os
import struct

import numpy as np

from .nn import Module

MAGIC = b"CGNZ"
VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointChecksumError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointInventoryError(CheckpointError):
    pass


def _checksum(body: bytes) -> bytes:
    return hashlib.blake2b(body, digest_size=8).digest()


def encode(tensors: dict[str, np.ndarray], version: int = VERSION) -> bytes:
    parts = [MAGIC, struct.pack("<II", version, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + _checksum(body)


def decode(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise CheckpointFormatError("not a checkpoint: bad magic")
    if len(blob) < 20:
        raise CheckpointChecksumError("checkpoint truncated")
    body, stored = blob[:-8], blob[-8:]
    if _checksum(body) != stored:
        raise CheckpointChecksumError("checkpoint checksum mismatch (file corrupt or truncated)")
    version, count = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint version {version}, this build reads {VERSION}")
    off = 12
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", body, off)
            off += 4
            name = body[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<I", body, off)
            off += 4
            shape = struct.unpack_from(f"<{rank}I", body, off)
            off += 4 * rank
            n = int(np.prod(shape, dtype=np.int64))
            out[name] = np.frombuffer(body, dtype="<f4", count=n, offset=off).reshape(shape).astype(np.float32)
            off += 4 * n
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointFormatError(f"malformed checkpoint body: {exc}") from exc
    if off != len(body):
        raise CheckpointFormatError(f"{len(body) - off} trailing bytes after {count} tensors")
    return out


def save(model: Module, path: str | os.PathLike) -> None:
    blob = encode(model.state_dict())
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def read(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return decode(fh.read())


def load_into(model: Module, path: str | os.PathLike) -> Module:
    state = read(path)
    expected = dict(model.named_parameters())
    missing = [k for k in expected if k not in state]
    if missing:
        raise CheckpointInventoryError(
            f"checkpoint lacks parameter '{missing[0]}' ({len(missing)} missing)")
    extra = [k for k in state if k not in expected]
    if extra:
        raise CheckpointInventoryError(f"checkpoint has unexpected tensor '{extra[0]}'")
    for name, p in expected.items():
        if state[name].shape != p.shape:
            raise CheckpointInventoryError(
                f"shape mismatch for '{name}': file {state[name].shape}, model {p.shape}")
    model.load_state_dict(state)
    return model


def load(path: str | os.PathLike, cfg, seed: int = 0):
    from .network import build

    return load_into(build(cfg, seed), path)
