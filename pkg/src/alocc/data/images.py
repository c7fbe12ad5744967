"""Image-folder ingestion and resizing."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import FormatError
from .dataset import UNLABELED, Dataset
from .mnist import to_unit_range

IMAGE_SUFFIXES = {".png", ".pgm", ".ppm", ".pnm", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff"}


def list_images(path) -> list:
    """Image files directly inside ``path``, in lexicographic order."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"{path} is not a directory")
    return sorted(p for p in path.iterdir()
                  if p.is_file() and not p.name.startswith(".") and p.suffix.lower() in IMAGE_SUFFIXES)


def resize_bilinear(img: np.ndarray, size: int) -> np.ndarray:
    """Bilinearly resize a (C, H, W) float array to (C, size, size)."""
    if img.shape[1:] == (size, size):
        return img.astype(np.float32, copy=True)
    planes = [np.asarray(Image.fromarray(np.ascontiguousarray(c, dtype=np.float32), mode="F")
                         .resize((size, size), Image.BILINEAR)) for c in img]
    return np.stack(planes).astype(np.float32)


def read_image(path, channels: int = 1) -> np.ndarray:
    """Decode one 8-bit image as a (C, H, W) array scaled to [-1, 1]."""
    mode = {1: "L", 3: "RGB"}.get(channels)
    if mode is None:
        raise ValueError(f"channels must be 1 or 3, got {channels}")
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert(mode))
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FormatError(f"cannot decode image {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return to_unit_range(arr)


def load_image_dir(path, size: Optional[int] = 32, channels: int = 1, label: int = -1) -> Dataset:
    """Load every image in ``path``; resize to size x size unless ``size`` is None."""
    files = list_images(path)
    if not files:
        shape = (channels, size, size) if size else (channels, 0, 0)
        return Dataset.empty(shape)
    images = []
    for f in files:
        img = read_image(f, channels)
        if size is not None:
            img = np.clip(resize_bilinear(img, size), -1.0, 1.0)
        images.append(img)
    shapes = {im.shape for im in images}
    if len(shapes) > 1:
        raise FormatError(f"images in {path} have differing shapes {sorted(shapes)}")
    return Dataset(np.stack(images), np.full(len(images), label), np.full(len(images), UNLABELED, dtype=object))
