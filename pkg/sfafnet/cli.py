#!/usr/bin/env python3
"""
sfafnet command line.

Subcommands: synth-data, train, infer, eval, verify-theorem, gradcheck,
dump-features. Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .checkpoint import load_model
from .data import BlurKind, DatasetManifest, split_dir, write_corpus
from .errors import ConfigError, SfafError
from .fdgm import certify_lowpass
from .gradcheck import SUITES, run_all
from .image_io import read_image, write_image
from .losses import LossConfig
from .metrics import mae, psnr, ssim
from .network import ArchConfig, SFAFNet, restore
from .trainer import TrainConfig, Trainer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

_log_handler: Optional[logging.Handler] = None


def setup_logging(log_file: str, log_level: str) -> None:
    """
    Configure logging.

    Args:
        log_file: Path to log file
        log_level: Logging level string
    """
    global _log_handler
    level = getattr(logging, log_level.upper(), logging.INFO)

    file_handler = logging.FileHandler(log_file)
    file_handler.setLevel(level)
    file_handler.setFormatter(
        logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    if _log_handler is not None:
        root_logger.removeHandler(_log_handler)
        _log_handler.close()
    root_logger.addHandler(file_handler)
    _log_handler = file_handler


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------


def cmd_synth_data(args: argparse.Namespace) -> int:
    train, test = write_corpus(
        args.out,
        count=args.count,
        size=args.size,
        seed=args.seed,
        blur=BlurKind.parse(args.blur),
        noise_sigma=args.noise,
        ext=args.format,
    )
    print(f"Wrote {len(train)} train and {len(test)} test pairs to {args.out}")
    return EXIT_OK


def _arch_from_args(args: argparse.Namespace) -> ArchConfig:
    config = ArchConfig(
        base_channels=args.channels,
        naf_blocks=args.naf_blocks,
        rows=args.rows,
        kernel_size=args.kernel,
        filter=args.filter,
        use_gate=not args.no_gate,
    )
    config.validate()
    return config


def cmd_train(args: argparse.Namespace) -> int:
    train_cfg = TrainConfig(
        lr_init=args.lr,
        batch_size=args.batch,
        total_steps=args.steps,
        seed=args.seed,
        patch_size=args.patch,
        val_every=args.val_every,
        ckpt_every=args.ckpt_every,
        clip_grad=args.clip_grad,
    )
    train_cfg.validate()
    loss_cfg = LossConfig(eps=args.eps, lambda_freq=args.lambda_freq, delta_edge=args.delta_edge)
    loss_cfg.validate()
    train_pairs = DatasetManifest.scan(split_dir(args.data, "train")).load()
    test_dir = os.path.join(args.data, "test")
    val_pairs = DatasetManifest.scan(test_dir).load() if os.path.isdir(test_dir) else []

    extra = None
    if args.resume and os.path.exists(args.out):
        model, extra = load_model(args.out)
    else:
        model = SFAFNet(_arch_from_args(args), seed=args.seed)

    log_csv = args.log_csv or f"{os.path.splitext(args.out)[0]}.csv"
    if extra is None and os.path.exists(log_csv):
        os.remove(log_csv)
    trainer = Trainer(
        model,
        train_pairs,
        train_cfg,
        loss_cfg=loss_cfg,
        val_pairs=val_pairs,
        log_path=log_csv,
        ckpt_path=args.out,
    )
    if extra is not None:
        trainer.restore_state(extra)
    rows = trainer.run()
    final = rows[-1]["loss_total"] if rows else float("nan")
    print(f"Trained to step {trainer.state.t}; final loss {final:.5f}; checkpoint {args.out}")
    if val_pairs:
        print(f"Validation PSNR {trainer.validate():.2f} dB")
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    model, _ = load_model(args.ckpt)
    image = read_image(args.input)
    write_image(args.output, restore(model, image))
    print(f"Restored {args.input} -> {args.output}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    model, _ = load_model(args.ckpt)
    pairs = DatasetManifest.scan(split_dir(args.data, "test")).load()
    rows = []
    baseline = []
    for pair in pairs:
        restored = restore(model, pair.degraded)
        rows.append(
            {
                "image_id": pair.id,
                "psnr": psnr(restored, pair.sharp),
                "ssim": ssim(restored, pair.sharp),
                "mae": mae(restored, pair.sharp),
            }
        )
        baseline.append(psnr(pair.degraded, pair.sharp))
    with open(args.csv, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["image_id", "psnr", "ssim", "mae"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
    if rows:
        mean_psnr = float(np.mean([r["psnr"] for r in rows]))
        mean_ssim = float(np.mean([r["ssim"] for r in rows]))
        print(
            f"{len(rows)} images: PSNR {mean_psnr:.2f} dB (degraded {np.mean(baseline):.2f} dB), "
            f"SSIM {mean_ssim:.4f}"
        )
    return EXIT_OK


def cmd_verify_theorem(args: argparse.Namespace) -> int:
    results = certify_lowpass(args.k, args.trials, args.max_p, seed=args.seed)
    trials = [r for r in results if r.label == "softmax"]
    identity = next(r for r in results if r.label == "identity")
    with open(args.csv, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["trial", "p", "ratio"])
        for result in trials:
            powers = range(1, args.max_p + 1) if args.trace else [args.max_p]
            for p in powers:
                writer.writerow([result.trial, p, f"{result.ratios[p - 1]:.6e}"])
    passed = sum(r.final < args.threshold for r in trials)
    drift = abs(identity.final - identity.ratios[0]) / max(identity.ratios[0], 1e-300)
    print(f"{passed}/{len(trials)} trials below {args.threshold:g} at p={args.max_p}")
    print(f"identity counterexample: ratio {identity.ratios[0]:.4f} at p=1, {identity.final:.4f} at p={args.max_p}")
    if passed != len(trials) or drift > 0.01:
        logger.error(f"Low-pass certificate failed: {passed}/{len(trials)} passed, identity drift {drift:.3g}")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    names = [args.module] if args.module else None
    failures = 0
    for name, results in run_all(names, seed=args.seed, samples=args.samples).items():
        for result in results:
            status = "ok" if result.passed else "FAIL"
            failures += not result.passed
            print(f"{name:16s} {result.name:40s} {result.rel_error:.2e} {status}")
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_dump_features(args: argparse.Namespace) -> int:
    model, _ = load_model(args.ckpt)
    image = read_image(args.input)
    model.capture_features()
    restore(model, image)
    features = model.captured_features()
    model.capture_features(False)
    os.makedirs(args.out, exist_ok=True)
    for name, array in features.items():
        array = np.ascontiguousarray(array, dtype="<f4")
        with open(os.path.join(args.out, f"{name}.bin"), "wb") as f:
            f.write(array.tobytes())
        with open(os.path.join(args.out, f"{name}.json"), "w") as f:
            json.dump({"shape": list(array.shape), "dtype": "float32", "byte_order": "little"}, f)
    print(f"Wrote {len(features)} feature maps to {args.out}")
    return EXIT_OK


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sfafnet", description="Spatial-frequency fusion deblurring network")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-file",
        default="/tmp/sfafnet.log",
        help="Log file path (default: /tmp/sfafnet.log)",
    )
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default="INFO",
        help="Log level (default: INFO)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="Generate a synthetic blurred/sharp corpus")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--count", type=_positive_int, default=64, help="Number of pairs (default: 64)")
    p.add_argument("--size", type=_positive_int, default=64, help="Image side in pixels (default: 64)")
    p.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    p.add_argument("--blur", default="gaussian:1.5",
                   help="gaussian:SIGMA or motion:LENGTH[:ANGLE] (default: gaussian:1.5)")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma (default: 0)")
    p.add_argument("--format", choices=["ppm", "png"], default="ppm", help="Image format (default: ppm)")
    p.set_defaults(handler=cmd_synth_data)

    p = sub.add_parser("train", help="Train a model")
    p.add_argument("--data", required=True, help="Corpus directory (uses train/ and test/ when present)")
    p.add_argument("--out", required=True, help="Checkpoint path")
    p.add_argument("--channels", type=_positive_int, default=8, help="Base channels C (default: 8)")
    p.add_argument("--naf-blocks", type=_positive_int, default=2, help="NAFBlocks per GSFFBlock (default: 2)")
    p.add_argument("--rows", type=_positive_int, default=2, help="Filter rows r (default: 2)")
    p.add_argument("--kernel", type=_positive_int, default=3, help="Filter kernel size k (default: 3)")
    p.add_argument("--filter", default="learned", help="learned or gaussian:SIGMA (default: learned)")
    p.add_argument("--no-gate", action="store_true", help="Disable GATE re-weighting")
    p.add_argument("--steps", type=_positive_int, default=2000, help="Total steps (default: 2000)")
    p.add_argument("--batch", type=_positive_int, default=4, help="Batch size (default: 4)")
    p.add_argument("--patch", type=_positive_int, default=32, help="Patch size (default: 32)")
    p.add_argument("--lr", type=float, default=2e-4, help="Initial learning rate (default: 2e-4)")
    p.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    p.add_argument("--val-every", type=_nonnegative_int, default=0,
                   help="Validate every N steps, 0 to disable (default: 0)")
    p.add_argument("--ckpt-every", type=_nonnegative_int, default=0,
                   help="Checkpoint every N steps, 0 for end only (default: 0)")
    p.add_argument("--clip-grad", type=float, default=None, help="Global gradient-norm clip (default: off)")
    p.add_argument("--eps", type=float, default=0.001, help="Charbonnier epsilon (default: 0.001)")
    p.add_argument("--lambda-freq", type=float, default=0.1, help="Frequency loss weight (default: 0.1)")
    p.add_argument("--delta-edge", type=float, default=0.05, help="Edge loss weight (default: 0.05)")
    p.add_argument("--resume", action="store_true", help="Continue from --out if it exists")
    p.add_argument("--log-csv", default=None, help="Training log CSV (default: <out>.csv)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("infer", help="Deblur one image")
    p.add_argument("--ckpt", required=True, help="Checkpoint path")
    p.add_argument("--in", dest="input", required=True, help="Input image (.ppm or .png)")
    p.add_argument("--out", dest="output", required=True, help="Output image (.ppm or .png)")
    p.set_defaults(handler=cmd_infer)

    p = sub.add_parser("eval", help="Score a checkpoint on a corpus")
    p.add_argument("--ckpt", required=True, help="Checkpoint path")
    p.add_argument("--data", required=True, help="Corpus directory (uses test/ when present)")
    p.add_argument("--csv", required=True, help="Per-image results CSV")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("verify-theorem", help="Certify that row-stochastic filters are low-pass")
    p.add_argument("--k", type=_positive_int, default=3, help="Kernel size k; matrices are k^2 x k^2 (default: 3)")
    p.add_argument("--trials", type=_positive_int, default=100, help="Random trials (default: 100)")
    p.add_argument("--max-p", type=_positive_int, default=64, help="Largest power (default: 64)")
    p.add_argument("--csv", required=True, help="Results CSV")
    p.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    p.add_argument("--threshold", type=float, default=1e-3, help="Pass threshold (default: 1e-3)")
    p.add_argument("--trace", action="store_true", help="Write one row per power instead of only max-p")
    p.set_defaults(handler=cmd_verify_theorem)

    p = sub.add_parser("gradcheck", help="Finite-difference gradient checks")
    p.add_argument("--module", choices=sorted(SUITES), default=None, help="Check one module (default: all)")
    p.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    p.add_argument("--samples", type=_positive_int, default=3, help="Entries per tensor (default: 3)")
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("dump-features", help="Write intermediate GSFFBlock feature maps")
    p.add_argument("--ckpt", required=True, help="Checkpoint path")
    p.add_argument("--in", dest="input", required=True, help="Input image")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(handler=cmd_dump_features)

    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run the subcommand, and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    setup_logging(args.log_file, args.log_level)
    logger.info(f"sfafnet {__version__}: {args.command}")

    try:
        return args.handler(args)
    except ConfigError as e:
        logger.exception(f"Invalid configuration: {e}")
        print(f"sfafnet {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SfafError, OSError) as e:
        logger.exception(f"{args.command} failed: {e}")
        print(f"sfafnet {args.command}: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    """Main entry point."""
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
