"""IDX container parsing and the 20x20 digit rasterization.

Images arrive as big-endian IDX files (magic 0x00000803 for images,
0x00000801 for labels), optionally gzip-compressed; each 28x28 byte image
is bilinearly resampled to 20x20, scaled to [0, 1], and flattened
row-major into a 400-vector for use as a cluster-sparse ground truth.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParseError

__all__ = [
    "DigitImage",
    "load_idx_images",
    "load_idx_labels",
    "to_digit_vector",
]

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class DigitImage:
    """A rasterized digit: 400 pixels in [0, 1], row-major 20x20."""

    pixels: np.ndarray
    label: int


def _read_idx(path) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
        rest = f.read()
    raw = head + rest
    if head == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as e:  # truncation raises EOFError, not OSError
            raise ParseError(f"{path}: bad gzip stream: {e}") from None
    return raw


def load_idx_images(path) -> np.ndarray:
    """All images from an IDX file as a (count, 28, 28) uint8 array."""
    raw = _read_idx(path)
    if len(raw) < 16:
        raise ParseError(f"{path}: header needs 16 bytes, file has {len(raw)}")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IMAGE_MAGIC:
        raise ParseError(
            f"{path}: bad magic 0x{magic:08x} at offset 0, expected 0x{IMAGE_MAGIC:08x}"
        )
    if (rows, cols) != (28, 28):
        raise ParseError(f"{path}: expected 28x28 images, header says {rows}x{cols}")
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise ParseError(
            f"{path}: payload expected {expected} bytes, found {len(raw)} "
            f"(offset of first missing byte: {min(len(raw), expected)})"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def load_idx_labels(path) -> np.ndarray:
    """All labels from an IDX file as a (count,) uint8 array."""
    raw = _read_idx(path)
    if len(raw) < 8:
        raise ParseError(f"{path}: header needs 8 bytes, file has {len(raw)}")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != LABEL_MAGIC:
        raise ParseError(
            f"{path}: bad magic 0x{magic:08x} at offset 0, expected 0x{LABEL_MAGIC:08x}"
        )
    expected = 8 + count
    if len(raw) != expected:
        raise ParseError(
            f"{path}: payload expected {expected} bytes, found {len(raw)} "
            f"(offset of first missing byte: {min(len(raw), expected)})"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=8)


def _bilinear_resize(img: np.ndarray, out_side: int) -> np.ndarray:
    """Pixel-center bilinear resample of a square image, edges clamped."""
    in_side = img.shape[0]
    scale = in_side / out_side
    coords = (np.arange(out_side) + 0.5) * scale - 0.5
    lo = np.floor(coords).astype(int)
    frac = coords - lo
    lo0 = np.clip(lo, 0, in_side - 1)
    hi0 = np.clip(lo + 1, 0, in_side - 1)
    img = img.astype(np.float64)
    rows = img[lo0, :] * (1 - frac)[:, None] + img[hi0, :] * frac[:, None]
    return rows[:, lo0] * (1 - frac)[None, :] + rows[:, hi0] * frac[None, :]


def to_digit_vector(raw: np.ndarray, label: int = -1) -> DigitImage:
    """28x28 byte image -> DigitImage: resize to 20x20, scale to [0, 1], flatten."""
    raw = np.asarray(raw)
    if raw.shape != (28, 28):
        raise ContractError(f"expected a 28x28 image, got shape {raw.shape}")
    small = _bilinear_resize(raw, 20) / 255.0
    return DigitImage(pixels=small.reshape(-1), label=int(label))
