"""Reader for the IDX files of the MNIST distribution."""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .dataset import UNLABELED, Dataset

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def read_idx(path, expected_magic: int) -> np.ndarray:
    """Parse an unsigned-byte IDX file into a uint8 array of its declared shape."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims, dtype=np.int64))
    if len(raw) - header < count:
        raise FormatError(f"{path}: truncated data, expected {count} bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def to_unit_range(pixels: np.ndarray) -> np.ndarray:
    """Map 8-bit values to [-1, 1]."""
    return (pixels.astype(np.float32) / 255.0) * 2.0 - 1.0


def pad_to(images: np.ndarray, size: int, value: float = -1.0) -> np.ndarray:
    """Center (N, H, W) images on a size x size canvas filled with ``value``."""
    n, h, w = images.shape
    if h > size or w > size:
        raise FormatError(f"image {h}x{w} larger than pad target {size}")
    top, left = (size - h) // 2, (size - w) // 2
    out = np.full((n, size, size), value, dtype=images.dtype)
    out[:, top:top + h, left:left + w] = images
    return out


def load_mnist_idx(images_path, labels_path, size: int = 32) -> Dataset:
    """Load an IDX image/label pair as 1 x size x size samples in [-1, 1].

    The 28 x 28 digits are placed on a background canvas (-1, i.e. pixel
    value 0) rather than resized.
    """
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    data = pad_to(to_unit_range(images), size)[:, None]
    return Dataset(data, labels.astype(np.int64), np.full(len(labels), UNLABELED, dtype=object))
