"""Adversarial training of R and D on target-class samples only.

Each minibatch runs one D update followed by one R update:

* D minimizes ``bce(D(X), 1) + bce(D(R(X + noise)), 0)``. Real and
  reconstructed samples go through D as one batch so both halves are
  normalized with the same batch statistics.
* R minimizes ``bce(D(R(X + noise)), 1) + lambda * ||X - R(X + noise)||^2``,
  the non-saturating form of the minimax generator term. D is frozen and
  run with its running statistics, i.e. exactly as it scores at test time.

Training stops once the epoch-mean reconstruction error per pixel drops
below ``rho`` or after ``max_epochs``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, NonFiniteError, UsageError
from .networks import Network, forward_d, forward_r
from .tensor import Adam, Tensor, backward, bce_loss, mse_loss, no_grad, sample_gaussian
from .tensor.noise import make_rng

logger = logging.getLogger(__name__)

STOP_RHO = "rho_reached"
STOP_MAX_EPOCHS = "max_epochs"
REPORT_COLUMNS = ("epoch", "d_loss", "r_adv_loss", "recon_loss")


@dataclass
class TrainConfig:
    lam: float = 0.4
    sigma: float = 0.1
    rho: float = 0.05
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 64
    max_epochs: int = 25
    seed: int = 0
    eval_every: int = 1

    def validate(self) -> None:
        if not (self.lam > 0):
            raise ConfigError(f"lambda must be > 0, got {self.lam}")
        if not (self.sigma >= 0):
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if not (self.rho > 0):
            raise ConfigError(f"rho must be > 0, got {self.rho}")
        if not (self.learning_rate > 0):
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown training fields: {sorted(unknown)}")
        try:
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg


@dataclass
class EpochRecord:
    epoch: int
    d_loss: float
    r_adv_loss: float
    recon_loss: float


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    stop_reason: str = STOP_MAX_EPOCHS

    @property
    def epochs_run(self) -> int:
        return len(self.records)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            for r in self.records:
                writer.writerow([r.epoch, repr(r.d_loss), repr(r.r_adv_loss), repr(r.recon_loss)])


def _as_batch(x, dtype) -> np.ndarray:
    x = x.data if isinstance(x, Tensor) else np.asarray(x)
    if x.ndim != 4 or x.shape[0] == 0:
        raise UsageError(f"expected a non-empty (N, C, H, W) batch, got shape {x.shape}")
    return x.astype(dtype, copy=False)


def corrupt(x: np.ndarray, sigma: float, rng) -> np.ndarray:
    """X + N(0, sigma^2 I)."""
    return x + sample_gaussian(x.shape, sigma, rng, dtype=x.dtype).data


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NonFiniteError(f"{what} became non-finite ({value})")
    return value


def d_step(r_net: Network, d_net: Network, x, rng, sigma: float, opt: Adam) -> float:
    """One D update; R is only run forward and its state is left unchanged."""
    x = _as_batch(x, d_net.dtype)
    with no_grad():
        fake = forward_r(r_net, corrupt(x, sigma, rng), training=True, update_running=False).data
    d_net.zero_grad()
    n = len(x)
    scores = forward_d(d_net, np.concatenate([x, fake]), training=True)
    targets = np.concatenate([np.ones(n), np.zeros(n)]).reshape(-1, 1)
    # mean over 2n samples, doubled: equals the sum of the two per-half means
    loss = bce_loss(scores, targets) * 2.0
    backward(loss)
    opt.step()
    return _finite(loss.item(), "D loss")


def r_step(r_net: Network, d_net: Network, x, rng, sigma: float, lam: float, opt: Adam) -> tuple:
    """One R update; returns ``(adversarial loss, reconstruction loss)``."""
    x = _as_batch(x, r_net.dtype)
    r_net.zero_grad()
    d_net.set_requires_grad(False)
    try:
        recon = forward_r(r_net, corrupt(x, sigma, rng), training=True)
        adv = bce_loss(forward_d(d_net, recon, taped=True), 1.0)
        rec = mse_loss(x, recon)
        backward(adv + rec * lam)
    finally:
        d_net.set_requires_grad(True)
    opt.step()
    return _finite(adv.item(), "R adversarial loss"), _finite(rec.item(), "reconstruction loss")


def train(r_net: Network, d_net: Network, data, cfg: TrainConfig,
          on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> TrainReport:
    """Train R and D on ``data`` (an (N, C, H, W) array of target-class samples)."""
    cfg.validate()
    data = np.asarray(getattr(data, "images", data))
    if data.ndim != 4 or len(data) == 0:
        raise UsageError("training set is empty")
    data = data.astype(r_net.dtype, copy=False)
    rng = make_rng(cfg.seed)
    d_opt = Adam(d_net.parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2)
    r_opt = Adam(r_net.parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2)
    pixels = int(np.prod(data.shape[1:]))
    report = TrainReport()

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(data))
        d_sum = adv_sum = rec_sum = 0.0
        n_seen = 0
        for start in range(0, len(data), cfg.batch_size):
            batch = data[order[start:start + cfg.batch_size]]
            n = len(batch)
            d_sum += n * d_step(r_net, d_net, batch, rng, cfg.sigma, d_opt)
            adv, rec = r_step(r_net, d_net, batch, rng, cfg.sigma, cfg.lam, r_opt)
            adv_sum += n * adv
            rec_sum += n * rec
            n_seen += n
        record = EpochRecord(epoch, d_sum / n_seen, adv_sum / n_seen, rec_sum / n_seen)
        report.records.append(record)
        if epoch % cfg.eval_every == 0:
            logger.info("epoch %d: d=%.4f r_adv=%.4f recon=%.4f", epoch, record.d_loss, record.r_adv_loss,
                        record.recon_loss)
        if on_epoch is not None:
            on_epoch(record)
        if record.recon_loss / pixels < cfg.rho:
            report.stop_reason = STOP_RHO
            break
    return report
