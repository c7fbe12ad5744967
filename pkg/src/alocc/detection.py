"""One-class decision rules and frame-level aggregation.

``occ1`` scores a sample by D(X) and ``occ2`` by D(R(X)). Both label a
sample as target iff its score is strictly greater than ``tau``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import ConfigError, UsageError
from .networks import Network, d_logits, forward_r

TARGET = "target"
NOVELTY = "novelty"


class Mode(str, Enum):
    OCC1 = "occ1"
    OCC2 = "occ2"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"mode must be 'occ1' or 'occ2', got {value!r}") from None


@dataclass
class DetectionConfig:
    tau: float = 0.5
    mode: Mode = Mode.OCC2

    def __post_init__(self):
        self.mode = Mode.parse(self.mode)
        if not 0 < self.tau < 1:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")


@dataclass(frozen=True)
class Verdict:
    label: str
    score: float
    mode: Mode


def logit_batch(r_net: Network, d_net: Network, x, mode, batch_size: int = 256) -> np.ndarray:
    """Log-odds of the ``mode`` score for an (N, C, H, W) array, eval mode, no test-time noise.

    ``score > tau`` holds exactly when ``logit > logit(tau)``, so rankings and
    threshold decisions can be made here without sigmoid saturation.
    """
    mode = Mode.parse(mode)
    x = np.asarray(x, dtype=d_net.dtype)
    out = []
    for start in range(0, len(x), batch_size):
        chunk = x[start:start + batch_size]
        if mode is Mode.OCC2:
            chunk = forward_r(r_net, chunk).data
        out.append(d_logits(d_net, chunk))
    return np.concatenate(out) if out else np.zeros(0)


def score_batch(r_net: Network, d_net: Network, x, mode, batch_size: int = 256) -> np.ndarray:
    """Target-likelihood scores in [0, 1] (float64) for an (N, C, H, W) array."""
    return expit(logit_batch(r_net, d_net, x, mode, batch_size))


def score(r_net: Network, d_net: Network, x, mode) -> float:
    """Score a single (C, H, W) sample."""
    x = np.asarray(x)
    return float(score_batch(r_net, d_net, x[None], mode)[0])


def classify(value: float, cfg: DetectionConfig) -> Verdict:
    return Verdict(TARGET if value > cfg.tau else NOVELTY, float(value), cfg.mode)


def frame_decision(patch_scores: Sequence[float], cfg: DetectionConfig) -> Verdict:
    """A frame scores as its least target-like patch, so one novel patch flags the frame."""
    scores = np.asarray(patch_scores, dtype=np.float64).ravel()
    if scores.size == 0:
        raise UsageError("frame_decision needs at least one patch score")
    return classify(float(scores.min()), cfg)
