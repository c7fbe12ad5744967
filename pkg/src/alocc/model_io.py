"""Save and restore a trained (R, D) pair as one checkpoint file."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .data.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .errors import FormatError
from .networks import Network, NetworkConfig, build_d, build_r
from .training import TrainConfig


@dataclass
class TrainedModel:
    r_net: Network
    d_net: Network
    train_config: Optional[TrainConfig]
    seed: int
    extra: dict


def model_checkpoint(r_net: Network, d_net: Network, train_config: Optional[TrainConfig] = None,
                     seed: int = 0, extra: Optional[dict] = None) -> Checkpoint:
    tensors = {f"R.{k}": v for k, v in r_net.state_arrays().items()}
    tensors.update({f"D.{k}": v for k, v in d_net.state_arrays().items()})
    config = {
        "r_config": r_net.config.to_dict(),
        "d_config": d_net.config.to_dict(),
        "train_config": train_config.to_dict() if train_config else None,
        "seed": int(seed),
    }
    if extra:
        config["extra"] = extra
    return Checkpoint(tensors=tensors, config=config)


def save_model(path, r_net: Network, d_net: Network, train_config: Optional[TrainConfig] = None,
               seed: int = 0, extra: Optional[dict] = None) -> None:
    save_checkpoint(path, model_checkpoint(r_net, d_net, train_config, seed, extra))


def _split(tensors: dict, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}


def model_from_checkpoint(ckpt: Checkpoint) -> TrainedModel:
    cfg = ckpt.config
    try:
        r_cfg = NetworkConfig.from_dict(cfg["r_config"])
        d_cfg = NetworkConfig.from_dict(cfg["d_config"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"checkpoint config lacks network configs: {exc}") from exc
    r_arrays, d_arrays = _split(ckpt.tensors, "R."), _split(ckpt.tensors, "D.")
    if not r_arrays or not d_arrays:
        raise FormatError("checkpoint must hold both R.* and D.* tensors")
    r_net = build_r(r_cfg, rng=0, dtype=next(iter(r_arrays.values())).dtype)
    d_net = build_d(d_cfg, rng=0, dtype=next(iter(d_arrays.values())).dtype)
    r_net.load_state_arrays(r_arrays)
    d_net.load_state_arrays(d_arrays)
    train_cfg = cfg.get("train_config")
    return TrainedModel(r_net, d_net, TrainConfig.from_dict(train_cfg) if train_cfg else None,
                        int(cfg.get("seed", 0)), cfg.get("extra", {}))


def load_model(path) -> TrainedModel:
    return model_from_checkpoint(load_checkpoint(path))
