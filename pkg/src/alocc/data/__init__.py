from .dataset import INLIER, OUTLIER, UNLABELED, Dataset
from .mnist import load_mnist_idx, read_idx

__all__ = ["INLIER", "OUTLIER", "UNLABELED", "Dataset", "load_mnist_idx", "read_idx"]
