"""Reproducible one-class experiments: train on a target class, then score
held-out mixtures of target samples and outliers with both decision rules.

The threshold for each rule is either fixed in the config or calibrated on
held-out *target* samples only (a low quantile of their scores), so no
outlier information leaks into the operating point.

Ranking and thresholding use D's log-odds rather than its sigmoid output. A
well-trained D pushes many logits past 37, where the float64 sigmoid is
exactly 1 and distinct samples would tie. Because the sigmoid is monotone,
``score > tau`` and ``logit > logit(tau)`` are the same decision, so metrics
are unchanged wherever the probabilities are representable.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit, logit

from .data import INLIER, OUTLIER, Dataset, load_mnist_idx
from .data.images import load_image_dir
from .data.mixture import make_mixture
from .detection import Mode, logit_batch
from .errors import ConfigError, UsageError
from .metrics import POSITIVE_INLIER, POSITIVE_OUTLIER, LabeledScores, MetricReport, evaluate
from .networks import Network, build_d, build_r, default_d_config, default_r_config
from .tensor.noise import make_rng
from .training import TrainConfig, TrainReport, train

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("fraction", "mode", "tau", "tau_logit", "f1", "auc", "eer", "tp", "fp", "tn", "fn")
SCORE_COLUMNS = ("sample_id", "occ1_score", "occ2_score", "true_label")
DEFAULT_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5)

_MNIST_FILES = {
    "train_images": ("train-images-idx3-ubyte", "train-images.idx3-ubyte"),
    "train_labels": ("train-labels-idx1-ubyte", "train-labels.idx1-ubyte"),
    "test_images": ("t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"),
    "test_labels": ("t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"),
}


def find_mnist_file(directory, key: str) -> Path:
    """Locate one of the four official MNIST files (optionally gzipped) in ``directory``."""
    directory = Path(directory)
    for stem in _MNIST_FILES[key]:
        for name in (stem, stem + ".gz"):
            if (directory / name).is_file():
                return directory / name
    raise ConfigError(f"no MNIST {key.replace('_', ' ')} file in {directory}")


@dataclass
class ExperimentConfig:
    """Everything needed to rerun one experiment.

    ``data`` is either ``{"format": "mnist", "dir": ...}`` or
    ``{"format": "image_dirs", "train": ..., "test_inliers": ..., "test_outliers": ...}``
    (optionally with ``"calibration"``, ``"size"`` and ``"channels"``).
    """

    data: dict
    target_class: int = 1
    n_train: int = 1000
    n_calibration: int = 200
    test_size: int = 400
    fractions: tuple = DEFAULT_FRACTIONS
    seeds: tuple = (0,)
    widths: tuple = (64, 128, 256)
    train: TrainConfig = field(default_factory=TrainConfig)
    tau: Optional[float] = None
    calibration_quantile: float = 0.05
    positive: str = POSITIVE_INLIER
    out_dir: str = "."

    def validate(self) -> None:
        self.train.validate()
        fmt = self.data.get("format")
        if fmt == "mnist":
            for key in _MNIST_FILES:
                find_mnist_file(self.data.get("dir", ""), key)
        elif fmt == "image_dirs":
            for key in ("train", "test_inliers", "test_outliers"):
                if key not in self.data:
                    raise ConfigError(f"image_dirs data source needs {key!r}")
            for key in ("train", "calibration", "test_inliers", "test_outliers"):
                if key in self.data and not Path(self.data[key]).is_dir():
                    raise ConfigError(f"data.{key}: {self.data[key]} is not a directory")
        else:
            raise ConfigError(f"unknown data format {fmt!r} (expected 'mnist' or 'image_dirs')")
        if not self.fractions or not all(0 < f < 1 for f in self.fractions):
            raise ConfigError(f"every outlier fraction must lie in (0, 1), got {list(self.fractions)}")
        if self.n_train < 1 or self.test_size < 2 or self.n_calibration < 0:
            raise ConfigError("n_train >= 1, test_size >= 2 and n_calibration >= 0 are required")
        if self.tau is None:
            if self.n_calibration < 1:
                raise ConfigError("without a fixed tau, n_calibration must be >= 1")
            if not 0 < self.calibration_quantile < 1:
                raise ConfigError(f"calibration_quantile must lie in (0, 1), got {self.calibration_quantile}")
        elif not 0 < self.tau < 1:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if self.positive not in (POSITIVE_INLIER, POSITIVE_OUTLIER):
            raise ConfigError(f"positive must be 'inlier' or 'outlier', got {self.positive!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.widths or any(int(w) < 1 for w in self.widths):
            raise ConfigError(f"widths must be positive, got {list(self.widths)}")

    def to_dict(self) -> dict:
        return {
            "data": dict(self.data),
            "target_class": self.target_class,
            "n_train": self.n_train,
            "n_calibration": self.n_calibration,
            "test_size": self.test_size,
            "fractions": list(self.fractions),
            "seeds": list(self.seeds),
            "widths": list(self.widths),
            "train": self.train.to_dict(),
            "detection": {"tau": self.tau, "calibration_quantile": self.calibration_quantile,
                          "positive": self.positive},
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "ExperimentConfig":
        if not isinstance(d, dict) or "data" not in d:
            raise ConfigError("experiment config needs a 'data' section")
        d = dict(d)
        data = dict(d.pop("data"))
        if base_dir is not None:
            for key in ("dir", "train", "calibration", "test_inliers", "test_outliers"):
                if key in data:
                    data[key] = str(Path(base_dir, data[key]))
        det = dict(d.pop("detection", {}))
        train_cfg = TrainConfig.from_dict(d.pop("train", {}))
        known = {"target_class", "n_train", "n_calibration", "test_size", "fractions", "seeds", "widths", "out_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment fields: {sorted(unknown)}")
        unknown = set(det) - {"tau", "calibration_quantile", "positive"}
        if unknown:
            raise ConfigError(f"unknown detection fields: {sorted(unknown)}")
        try:
            cfg = cls(
                data=data,
                train=train_cfg,
                tau=det.get("tau"),
                calibration_quantile=float(det.get("calibration_quantile", 0.05)),
                positive=det.get("positive", POSITIVE_INLIER),
                **{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()},
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if base_dir is not None and not Path(cfg.out_dir).is_absolute():
            cfg.out_dir = str(Path(base_dir, cfg.out_dir))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw, base_dir=path.parent)


# -- data ---------------------------------------------------------------------

@dataclass
class Splits:
    train: Dataset
    calibration: Dataset
    test_inliers: Dataset
    test_outliers: Dataset


def load_splits(cfg: ExperimentConfig) -> Splits:
    """Target-class training and calibration sets plus the test pools."""
    data = cfg.data
    if data.get("format") == "mnist":
        d = data["dir"]
        train_all = load_mnist_idx(find_mnist_file(d, "train_images"), find_mnist_file(d, "train_labels"))
        test_all = load_mnist_idx(find_mnist_file(d, "test_images"), find_mnist_file(d, "test_labels"))
        target = train_all.of_class(cfg.target_class)
        test_in, test_out = test_all.of_class(cfg.target_class), test_all.not_class(cfg.target_class)
        calibration = target.subset(slice(cfg.n_train, cfg.n_train + cfg.n_calibration))
    else:
        size, channels = data.get("size", 32), data.get("channels", 1)
        target = load_image_dir(data["train"], size, channels, label=cfg.target_class)
        test_in = load_image_dir(data["test_inliers"], size, channels, label=cfg.target_class)
        test_out = load_image_dir(data["test_outliers"], size, channels)
        if "calibration" in data:
            calibration = load_image_dir(data["calibration"], size, channels, label=cfg.target_class)
        else:
            calibration = target.subset(slice(cfg.n_train, cfg.n_train + cfg.n_calibration))
    train_set = target.subset(slice(0, cfg.n_train))
    if len(train_set) < cfg.n_train:
        raise UsageError(f"target class {cfg.target_class} has only {len(train_set)} training samples, "
                         f"{cfg.n_train} requested")
    if cfg.tau is None and len(calibration) == 0:
        raise UsageError("no target samples left for threshold calibration")
    if len(test_in) == 0:
        raise UsageError(f"no test samples of target class {cfg.target_class}")
    return Splits(train_set.with_role(INLIER), calibration.with_role(INLIER),
                  test_in.with_role(INLIER), test_out.with_role(OUTLIER))


def make_test_mixture(splits: Splits, fraction: float, test_size: int, seed: int) -> Dataset:
    """``test_size`` samples of which ``round(fraction * test_size)`` are outliers."""
    n_out = int(round(fraction * test_size))
    n_in = test_size - n_out
    if n_in > len(splits.test_inliers):
        raise UsageError(f"need {n_in} test inliers, pool has {len(splits.test_inliers)}")
    in_seed, mix_seed = np.random.SeedSequence([int(seed), int(round(fraction * 1e6))]).spawn(2)
    pick = np.sort(np.random.default_rng(in_seed).choice(len(splits.test_inliers), n_in, replace=False))
    return make_mixture(splits.test_inliers.subset(pick), splits.test_outliers, fraction, mix_seed)


# -- models -------------------------------------------------------------------

def build_pair(cfg: ExperimentConfig, seed: int, sample_shape=(1, 32, 32)) -> tuple:
    channels, size = sample_shape[0], sample_shape[1]
    gen = make_rng(seed)
    r_net = build_r(default_r_config(channels, size, tuple(cfg.widths)), gen)
    d_net = build_d(default_d_config(channels, size, tuple(cfg.widths)), gen)
    return r_net, d_net


def seeded_train_config(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    return TrainConfig.from_dict({**cfg.train.to_dict(), "seed": int(seed)})


def train_pair(cfg: ExperimentConfig, splits: Splits, seed: int) -> tuple:
    """Build and train (R, D) on the target class; returns ``(r_net, d_net, report)``."""
    r_net, d_net = build_pair(cfg, seed, splits.train.sample_shape)
    tcfg = seeded_train_config(cfg, seed)
    started = time.perf_counter()
    report = train(r_net, d_net, splits.train.images, tcfg)
    logger.info("trained seed %d: %d epochs (%s) in %.1fs", seed, report.epochs_run, report.stop_reason,
                time.perf_counter() - started)
    return r_net, d_net, report


# -- evaluation ---------------------------------------------------------------

def calibrate_tau(calibration_logits: np.ndarray, quantile: float) -> float:
    """Low quantile of target-sample logits (a log-odds threshold)."""
    if len(calibration_logits) == 0:
        raise UsageError("cannot calibrate tau without calibration samples")
    return float(np.quantile(np.asarray(calibration_logits, dtype=np.float64), quantile))


def thresholds(r_net: Network, d_net: Network, cfg: ExperimentConfig, splits: Splits) -> dict:
    """Log-odds threshold per rule: ``logit(cfg.tau)`` or a calibrated quantile."""
    if cfg.tau is not None:
        return {mode: float(logit(cfg.tau)) for mode in Mode}
    return {mode: calibrate_tau(logit_batch(r_net, d_net, splits.calibration.images, mode),
                                cfg.calibration_quantile) for mode in Mode}


@dataclass
class ScoreTable:
    """Per-sample D log-odds for both rules; the CSV holds probabilities."""

    occ1: np.ndarray
    occ2: np.ndarray
    roles: np.ndarray

    def logits(self, mode) -> np.ndarray:
        return self.occ1 if Mode.parse(mode) is Mode.OCC1 else self.occ2

    def scores(self, mode) -> np.ndarray:
        return expit(self.logits(mode))

    def labeled(self, mode) -> LabeledScores:
        """Log-odds with truth labels; rank and threshold metrics treat them like scores."""
        return LabeledScores(self.logits(mode), self.roles == INLIER)

    def write_csv(self, path) -> None:
        p1, p2 = expit(self.occ1), expit(self.occ2)
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(SCORE_COLUMNS)
            for i, (s1, s2, role) in enumerate(zip(p1, p2, self.roles)):
                w.writerow([i, repr(float(s1)), repr(float(s2)), "" if role not in (INLIER, OUTLIER) else role])


def score_dataset(r_net: Network, d_net: Network, ds: Dataset) -> ScoreTable:
    return ScoreTable(logit_batch(r_net, d_net, ds.images, Mode.OCC1),
                      logit_batch(r_net, d_net, ds.images, Mode.OCC2), ds.roles)


@dataclass
class MetricRow:
    fraction: float
    mode: Mode
    report: MetricReport
    tau_logit: float

    def as_list(self) -> list:
        r = self.report
        return [repr(float(self.fraction)), self.mode.value, repr(r.tau), repr(self.tau_logit), repr(r.f1), repr(r.auc), repr(r.eer),
                r.tp, r.fp, r.tn, r.fn]


@dataclass
class EvalResult:
    taus: dict
    rows: list
    tables: dict

    def row(self, fraction: float, mode) -> MetricRow:
        mode = Mode.parse(mode)
        for r in self.rows:
            if r.mode is mode and abs(r.fraction - fraction) < 1e-12:
                return r
        raise KeyError((fraction, mode))

    def write_metrics_csv(self, path) -> None:
        write_metrics_csv(path, self.rows)


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            w.writerow(row.as_list())


def evaluate_pair(r_net: Network, d_net: Network, cfg: ExperimentConfig, splits: Splits, seed: int) -> EvalResult:
    """Score every mixture fraction with both rules and compute F1/AUC/EER.

    ``EvalResult.taus`` holds log-odds thresholds; each report's ``tau`` is
    the matching probability.
    """
    taus = thresholds(r_net, d_net, cfg, splits)
    rows, tables = [], {}
    for fraction in cfg.fractions:
        mix = make_test_mixture(splits, fraction, cfg.test_size, seed)
        table = score_dataset(r_net, d_net, mix)
        tables[fraction] = table
        for mode in Mode:
            report = evaluate(table.labeled(mode), taus[mode], cfg.positive)
            report.tau = float(expit(taus[mode]))
            rows.append(MetricRow(fraction, mode, report, taus[mode]))
    return EvalResult(taus, rows, tables)


@dataclass
class RunResult:
    seed: int
    r_net: Network
    d_net: Network
    report: TrainReport
    evaluation: EvalResult
    seconds: float


def run(cfg: ExperimentConfig, seed: int, splits: Optional[Splits] = None) -> RunResult:
    """Train on the target class with ``seed`` and evaluate every fraction."""
    splits = splits or load_splits(cfg)
    started = time.perf_counter()
    r_net, d_net, report = train_pair(cfg, splits, seed)
    evaluation = evaluate_pair(r_net, d_net, cfg, splits, seed)
    return RunResult(seed, r_net, d_net, report, evaluation, time.perf_counter() - started)
