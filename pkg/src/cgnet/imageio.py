"""Binary PPM (P6) / PGM (P5) codec for 8-bit images."""

from __future__ import annotations

import os

import numpy as np


class ImageFormatError(ValueError):
    pass


def _read_header(buf: bytes) -> tuple[bytes, list[int], int]:
    """Parse magic and three integers, skipping whitespace and '#' comments.
    Returns (magic, [width, height, maxval], payload offset)."""
    pos = 0
    tokens: list[bytes] = []
    n = len(buf)
    while len(tokens) < 4:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise ImageFormatError("truncated header")
        if buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(buf[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or not buf[pos:pos + 1].isspace():
        raise ImageFormatError("missing whitespace after maxval")
    magic = tokens[0]
    try:
        nums = [int(t) for t in tokens[1:]]
    except ValueError as exc:
        raise ImageFormatError(f"bad header field: {exc}") from exc
    return magic, nums, pos + 1


def decode(buf: bytes) -> np.ndarray:
    """Return uint8 (3, H, W) for P6 or (1, H, W) for P5."""
    if buf[:2] not in (b"P6", b"P5"):
        raise ImageFormatError(f"unsupported magic {buf[:2]!r}; expected P6 or P5")
    magic, (w, h, maxval), off = _read_header(buf)
    if maxval != 255:
        raise ImageFormatError(f"maxval must be 255, got {maxval}")
    if w < 1 or h < 1:
        raise ImageFormatError(f"bad extents {w}x{h}")
    ch = 3 if magic == b"P6" else 1
    need = w * h * ch
    raster = buf[off:off + need]
    if len(raster) < need:
        raise ImageFormatError(f"truncated payload: {len(raster)} of {need} bytes")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, ch).transpose(2, 0, 1).copy()


def encode(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels)
    if pixels.ndim == 2:
        pixels = pixels[None]
    if pixels.dtype != np.uint8 or pixels.ndim != 3 or pixels.shape[0] not in (1, 3):
        raise ValueError(f"expected uint8 (1|3, H, W), got {pixels.dtype} {pixels.shape}")
    ch, h, w = pixels.shape
    magic = b"P6" if ch == 3 else b"P5"
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(pixels.transpose(1, 2, 0)).tobytes()


def quantize(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Read a P6/P5 file as float32 (C, H, W) with values v / 255."""
    with open(path, "rb") as fh:
        return decode(fh.read()).astype(np.float32) / 255.0


def write_image(path: str | os.PathLike, img: np.ndarray) -> None:
    """Write a [0, 1] float image (3|1, H, W) or (H, W); values are rounded to 8 bits."""
    with open(path, "wb") as fh:
        fh.write(encode(quantize(img)))


def write_gray(path: str | os.PathLike, pixels: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(np.asarray(pixels, dtype=np.uint8)))
