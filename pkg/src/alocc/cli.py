"""Command-line entry point.

Exit codes: 0 on success, 2 for invalid input (config, data, labels,
single-class metrics), 3 when training diverges to non-finite losses.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
from scipy.special import expit, logit

from .data import INLIER, OUTLIER
from .data.images import list_images, load_image_dir
from .data.patches import extract_patches
from .detection import DetectionConfig, Mode, logit_batch
from .errors import AloccError, NonFiniteError
from .experiment import (
    ExperimentConfig,
    evaluate_pair,
    load_splits,
    make_test_mixture,
    score_dataset,
    seeded_train_config,
    train_pair,
    write_metrics_csv,
)
from .metrics import LabeledScores, eer
from .model_io import load_model, save_model

logger = logging.getLogger("alocc")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3
FRAME_COLUMNS = ("frame_id", "file", "occ1_score", "occ2_score", "true_label", "verdict")


def _out_dir(args, cfg=None) -> Path:
    out = Path(args.out if args.out else (cfg.out_dir if cfg else "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    out = _out_dir(args, cfg)
    splits = load_splits(cfg)
    r_net, d_net, report = train_pair(cfg, splits, seed)
    save_model(out / "model.alocc", r_net, d_net, seeded_train_config(cfg, seed), seed)
    report.write_csv(out / "train_report.csv")
    logger.info("wrote %s and %s (%d epochs, %s)", out / "model.alocc", out / "train_report.csv",
                report.epochs_run, report.stop_reason)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.tau is not None:
        cfg.tau = args.tau
        cfg.validate()
    model = load_model(args.model)
    seed = args.seed if args.seed is not None else model.seed
    out = _out_dir(args, cfg)
    result = evaluate_pair(model.r_net, model.d_net, cfg, load_splits(cfg), seed)
    rows = result.rows
    if args.mode:
        rows = [r for r in rows if r.mode is Mode.parse(args.mode)]
    write_metrics_csv(out / "metrics.csv", rows)
    for fraction, table in result.tables.items():
        table.write_csv(out / f"scores_{fraction:.2f}.csv")
    for r in rows:
        logger.info("fraction %.2f %s: tau=%.4g F1=%.4f AUC=%.4f EER=%.4f", r.fraction, r.mode.value,
                    r.report.tau, r.report.f1, r.report.auc, r.report.eer)
    return EXIT_OK


def cmd_export_scores(args) -> int:
    model = load_model(args.model)
    size = model.r_net.config.input_size
    channels = model.r_net.config.in_channels
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        seed = args.seed if args.seed is not None else model.seed
        ds = make_test_mixture(load_splits(cfg), args.fraction, cfg.test_size, seed)
    elif args.data:
        if not Path(args.data).is_dir():
            raise FileNotFoundError(f"{args.data} is not a directory")
        ds = load_image_dir(args.data, size, channels)
        if args.label:
            ds = ds.with_role(INLIER if args.label == "inlier" else OUTLIER)
    else:
        raise AloccError("export-scores needs --data or --config")
    out = Path(args.out or "scores.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    score_dataset(model.r_net, model.d_net, ds).write_csv(out)
    logger.info("wrote %d scores to %s", len(ds), out)
    return EXIT_OK


def read_frame_labels(path) -> np.ndarray:
    """One 0/1 per line; 1 marks an anomalous frame."""
    values = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line not in ("0", "1"):
            raise AloccError(f"{path}:{n}: frame label must be 0 or 1, got {line!r}")
        values.append(int(line))
    return np.asarray(values, dtype=bool)


def cmd_score_frames(args) -> int:
    model = load_model(args.model)
    size = model.r_net.config.input_size
    channels = model.r_net.config.in_channels
    frames_dir = Path(args.data)
    if not frames_dir.is_dir():
        raise FileNotFoundError(f"{frames_dir} is not a directory")
    files = list_images(frames_dir)
    anomalous = read_frame_labels(args.labels) if args.labels else None
    if anomalous is not None and len(anomalous) != len(files):
        raise AloccError(f"{len(files)} frames but {len(anomalous)} labels")
    frames = load_image_dir(frames_dir, size=None, channels=channels)
    det = DetectionConfig(tau=args.tau if args.tau is not None else 0.5, mode=args.mode or Mode.OCC2)

    # a frame is novel if any patch is, i.e. if its lowest patch score is <= tau;
    # compared in log-odds so saturated patches still order correctly
    tau_logit = logit(det.tau)
    frame_logits = {Mode.OCC1: [], Mode.OCC2: []}
    for frame in frames.images:
        patches = extract_patches(frame, patch=args.patch, stride=args.stride, out_size=size)
        for mode in Mode:
            frame_logits[mode].append(logit_batch(model.r_net, model.d_net, patches, mode).min())
    out = _out_dir(args)
    with open(out / "frame_scores.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(FRAME_COLUMNS)
        for i, path in enumerate(files):
            z1, z2 = frame_logits[Mode.OCC1][i], frame_logits[Mode.OCC2][i]
            label = "" if anomalous is None else ("anomalous" if anomalous[i] else "normal")
            chosen = z1 if det.mode is Mode.OCC1 else z2
            verdict = "target" if chosen > tau_logit else "novelty"
            w.writerow([i, path.name, repr(float(expit(z1))), repr(float(expit(z2))), label, verdict])
    if anomalous is not None:
        with open(out / "frame_eer.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("mode", "eer"))
            for mode in Mode:
                value = eer(LabeledScores(frame_logits[mode], ~anomalous))
                w.writerow([mode.value, repr(value)])
                logger.info("frame-level EER %s: %.4f", mode.value, value)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alocc", description="One-class novelty detection with a reconstructor and a discriminator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train R and D on the target class")
    p.add_argument("--config", required=True, help="experiment JSON file")
    p.add_argument("--seed", type=int, help="overrides the first seed in the config")
    p.add_argument("--out", help="output directory (default: config out_dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score outlier mixtures and write metrics.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=[m.value for m in Mode], help="only report this rule")
    p.add_argument("--tau", type=float, help="fixed threshold instead of calibration")
    p.add_argument("--seed", type=int, help="mixture seed (default: the model's seed)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score-frames", help="patch-based frame scores and frame-level EER")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="directory of frame images")
    p.add_argument("--labels", help="text file, one 0/1 per frame (1 = anomalous)")
    p.add_argument("--mode", choices=[m.value for m in Mode], help="rule used for the verdict column")
    p.add_argument("--tau", type=float)
    p.add_argument("--patch", type=int, default=30)
    p.add_argument("--stride", type=int)
    p.add_argument("--seed", type=int, help="unused; accepted for a uniform interface")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score_frames)

    p = sub.add_parser("export-scores", help="per-sample OCC1/OCC2 scores as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", help="directory of images to score")
    p.add_argument("--label", choices=["inlier", "outlier"], help="true label for every image in --data")
    p.add_argument("--config", help="score a test mixture built from this experiment config instead")
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--mode", choices=[m.value for m in Mode], help="unused; both scores are exported")
    p.add_argument("--tau", type=float, help="unused; scores do not depend on tau")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV path (default: scores.csv)")
    p.set_defaults(func=cmd_export_scores)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NonFiniteError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (AloccError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
