"""Portable float map reader/writer.

PFM stores rows bottom-to-top as raw little-endian float32 (scale line -1.0).
Three-channel images use the "PF" header, single-channel uses "Pf". This is
the canonical image format here because the bytes are stable across runs,
which makes output diffing trivial.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InputError


def write_pfm(path: Path | str, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.float32)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3 or image.shape[2] not in (1, 3):
        raise InputError(f"PFM supports 1 or 3 channels, got shape {image.shape}")
    header = "PF" if image.shape[2] == 3 else "Pf"
    height, width = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"{header}\n{width} {height}\n-1.0\n".encode("ascii"))
        fh.write(np.flipud(image).astype("<f4").tobytes())


def read_pfm(path: Path | str) -> np.ndarray:
    """Returns (H, W) for grayscale or (H, W, 3) for color, float32."""
    data = Path(path).read_bytes()
    try:
        head, dims, scale, rest = data.split(b"\n", 3)
        channels = {b"PF": 3, b"Pf": 1}[head]
        width, height = (int(v) for v in dims.split())
        scale_value = float(scale)
    except (ValueError, KeyError) as exc:
        raise InputError(f"not a PFM file: {path}") from exc
    count = width * height * channels
    dtype = "<f4" if scale_value < 0 else ">f4"
    pixels = np.frombuffer(rest[: count * 4], dtype=dtype)
    if pixels.size != count:
        raise InputError(f"PFM payload truncated: {path}")
    image = np.flipud(pixels.reshape(height, width, channels)).astype(np.float32)
    return image[:, :, 0] if channels == 1 else image
