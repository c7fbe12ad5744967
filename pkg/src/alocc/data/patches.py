from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import UsageError
from .images import resize_bilinear


def grid_positions(length: int, patch: int, stride: int) -> list:
    """Window offsets along one axis; a trailing partial window is shifted inward."""
    if length < patch:
        raise UsageError(f"frame dimension {length} is smaller than patch size {patch}")
    pos = list(range(0, length - patch + 1, stride))
    if pos[-1] + patch < length:
        pos.append(length - patch)
    return pos


def extract_patches(frame: np.ndarray, patch: int = 30, stride: Optional[int] = None,
                    out_size: Optional[int] = None) -> np.ndarray:
    """Cut a (C, H, W) or (H, W) frame into patch x patch tiles, row-major.

    Returns (P, C, s, s) with ``s = out_size`` (bilinear resize) or ``patch``.
    """
    frame = np.asarray(frame, dtype=np.float32)
    if frame.ndim == 2:
        frame = frame[None]
    stride = stride or patch
    if stride < 1:
        raise UsageError("patch stride must be positive")
    _, h, w = frame.shape
    rows = grid_positions(h, patch, stride)
    cols = grid_positions(w, patch, stride)
    tiles = [frame[:, r:r + patch, c:c + patch] for r in rows for c in cols]
    if out_size is not None and out_size != patch:
        tiles = [resize_bilinear(t, out_size) for t in tiles]
    return np.stack(tiles)
