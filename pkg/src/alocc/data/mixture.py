from __future__ import annotations

import numpy as np

from ..errors import DimensionError, UsageError
from .dataset import INLIER, OUTLIER, Dataset


def outlier_count(n_inliers: int, fraction: float) -> int:
    """Outliers to add so they make up ``fraction`` of the mixed set."""
    return int(round(fraction * n_inliers / (1.0 - fraction)))


def make_mixture(inliers: Dataset, outliers: Dataset, outlier_fraction: float, seed) -> Dataset:
    """All of ``inliers`` plus a random draw from ``outliers``, shuffled.

    The draw is sized so that outliers are ``round(fraction * total)`` of the
    result; the draw and the final order are fixed by ``seed``.
    """
    if not 0 < outlier_fraction < 1:
        raise UsageError(f"outlier fraction must lie in (0, 1), got {outlier_fraction}")
    if len(inliers) and len(outliers) and inliers.sample_shape != outliers.sample_shape:
        raise DimensionError(f"inlier shape {inliers.sample_shape} != outlier shape {outliers.sample_shape}")
    k = outlier_count(len(inliers), outlier_fraction)
    if k > len(outliers):
        raise UsageError(f"need {k} outliers for fraction {outlier_fraction}, pool has {len(outliers)}")
    rng = np.random.default_rng(seed)
    picked = outliers.subset(np.sort(rng.choice(len(outliers), size=k, replace=False)))
    images = np.concatenate([inliers.images, picked.images])
    labels = np.concatenate([inliers.labels, picked.labels])
    roles = np.concatenate([np.full(len(inliers), INLIER, dtype=object), np.full(k, OUTLIER, dtype=object)])
    order = rng.permutation(len(images))
    return Dataset(images[order], labels[order], roles[order])
