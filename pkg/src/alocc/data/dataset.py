from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError

INLIER = "inlier"
OUTLIER = "outlier"
UNLABELED = "unlabeled"
ROLES = (INLIER, OUTLIER, UNLABELED)


@dataclass
class Dataset:
    """Images in [-1, 1] stored as one (N, C, H, W) float32 array.

    ``labels`` holds source class ids (-1 when unknown) and ``roles`` one of
    ``inlier``, ``outlier`` or ``unlabeled`` per sample.
    """

    images: np.ndarray
    labels: np.ndarray
    roles: np.ndarray

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        if self.images.ndim != 4:
            raise DimensionError(f"dataset images must be (N, C, H, W), got {self.images.shape}")
        n = len(self.images)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(n)
        self.roles = np.asarray(self.roles, dtype=object).reshape(n)

    @classmethod
    def from_images(cls, images, labels=None, role: str = UNLABELED) -> "Dataset":
        images = np.asarray(images, dtype=np.float32)
        n = len(images)
        labels = np.full(n, -1) if labels is None else labels
        return cls(images, labels, np.full(n, role, dtype=object))

    @classmethod
    def empty(cls, shape=(1, 32, 32)) -> "Dataset":
        return cls(np.zeros((0, *shape), dtype=np.float32), np.zeros(0), np.zeros(0, dtype=object))

    def __len__(self) -> int:
        return len(self.images)

    @property
    def sample_shape(self) -> tuple:
        return self.images.shape[1:]

    def subset(self, index) -> "Dataset":
        return Dataset(self.images[index], self.labels[index], self.roles[index])

    def of_class(self, cls_id: int) -> "Dataset":
        return self.subset(np.flatnonzero(self.labels == cls_id))

    def not_class(self, cls_id: int) -> "Dataset":
        return self.subset(np.flatnonzero(self.labels != cls_id))

    def with_role(self, role: str) -> "Dataset":
        return Dataset(self.images, self.labels, np.full(len(self), role, dtype=object))

    @property
    def is_inlier(self) -> np.ndarray:
        return self.roles == INLIER
