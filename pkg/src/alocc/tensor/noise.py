from __future__ import annotations

import numpy as np

from .core import DEFAULT_DTYPE, Tensor


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_gaussian(shape, sigma: float, rng, dtype=DEFAULT_DTYPE) -> Tensor:
    """I.i.d. N(0, sigma^2) samples; ``rng`` is a seed or a numpy Generator."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    gen = make_rng(rng)
    if sigma == 0:
        return Tensor(np.zeros(shape, dtype=dtype))
    return Tensor(gen.normal(0.0, sigma, size=shape).astype(dtype))
