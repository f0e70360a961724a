"""
Patch-graph age estimator - command-line entry point.
Generates synthetic data, trains, evaluates, predicts and runs the
verification utilities. Contract output goes to stdout, logs to stderr.
"""

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError
from tabulate import tabulate

from config.logging_config import get_logger, setup_logging
from config.settings import (
    EXIT_DIVERGENCE,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VERIFICATION,
    get_settings,
)
from models.configs import ModelConfig, RunConfig
from models.params import EdgeWeightParams
from models.train_state import EpochRecord
from numerics.gradcheck import grad_check
from numerics.tensor import parameter
from processors.network import predict
from processors.patch_graph import compute_edge_weights, format_graph, knn_graph, patchify
from services.checkpoint_service import load_checkpoint, save_checkpoint
from services.dataset_service import export_dataset, load_dataset, synth_dataset
from services.image_codec import read_pnm
from services.training_service import check_image_shape, evaluate, init_params, sample_loss, train
from utils.errors import (
    CheckpointError,
    ConfigError,
    DatasetLoadError,
    DimensionError,
    DivergenceError,
    PnmParseError,
)

logger = get_logger(__name__)

# Errors reported as usage / validation failures
USAGE_ERRORS = (
    ValidationError,
    ConfigError,
    DimensionError,
    PnmParseError,
    DatasetLoadError,
    CheckpointError,
    OSError,
)

# Flags that map straight onto RunConfig keys
RUN_FLAGS = ("epochs", "seed", "repeats", "batch_size", "learning_rate", "val_fraction", "data", "checkpoint", "log")

LOG_COLUMNS = ["repeat", "seed", "epoch", "train_mae", "val_mae"]


def parse_size(text: str) -> Tuple[int, int]:
    """``HxW`` -> (H, W)."""
    parts = text.lower().split("x")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise ConfigError(f"size must look like HxW, got {text!r}")
    height, width = int(parts[0]), int(parts[1])
    if height < 1 or width < 1:
        raise ConfigError(f"size must be positive, got {text!r}")
    return height, width


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    """Flat JSON object from ``path``; empty when no file is given."""
    if path is None:
        return {}
    try:
        values = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(values, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return values


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge the JSON config file with command-line flags; flags win."""
    values = load_config_file(getattr(args, "config", None))
    for key in RUN_FLAGS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return RunConfig(**values)


def cmd_synth(args: argparse.Namespace) -> int:
    """Write a synthetic dataset as PGMs plus labels.csv."""
    dataset = synth_dataset(args.n, args.seed, parse_size(args.size))
    export_dataset(dataset, args.out)
    logger.info(f"Wrote {len(dataset)} images to {args.out}")
    return EXIT_OK


def append_epoch_log(path: str, rows: List[Dict[str, Any]]) -> None:
    """Append epoch rows to a CSV log, writing the header only for a new file."""
    target = Path(path)
    frame = pd.DataFrame(rows, columns=LOG_COLUMNS)
    frame.to_csv(target, mode="a", header=not target.exists(), index=False, float_format="%.6f", na_rep="nan")


def check_output_path(path: Optional[str], flag: str) -> None:
    """Fail early if ``path`` could not be written at the end of a run."""
    if path is None:
        return
    target = Path(path)
    if target.is_dir():
        raise ConfigError(f"{flag} {path} is a directory")
    parent = target.parent
    if not parent.is_dir():
        raise ConfigError(f"{flag} directory {parent} does not exist")
    if not os.access(parent, os.W_OK) or (target.exists() and not os.access(target, os.W_OK)):
        raise ConfigError(f"{flag} {path} is not writable")


def cmd_train(args: argparse.Namespace) -> int:
    """Train ``repeats`` times with consecutive seeds; keep the best-validation run."""
    run = build_run_config(args)
    if run.data is None:
        raise ConfigError("train needs --data")
    check_output_path(run.checkpoint, "--checkpoint")
    check_output_path(run.log, "--log")
    base_model = run.to_model_config()
    plans = []
    for repeat in range(run.repeats):
        seed = run.seed + repeat
        plans.append((repeat, seed, base_model.model_copy(update={"seed": seed}), run.to_train_config(seed=seed)))
    dataset = load_dataset(run.data)
    check_image_shape(dataset, base_model)

    summary = []
    log_rows: List[Dict[str, Any]] = []
    best: Optional[Tuple[float, Any, ModelConfig]] = None
    for repeat, seed, mconfig, tconfig in plans:
        def on_epoch(record: EpochRecord, repeat: int = repeat, seed: int = seed) -> None:
            print(record.log_line(), flush=True)
            log_rows.append({
                "repeat": repeat,
                "seed": seed,
                "epoch": record.epoch,
                "train_mae": record.train_mae,
                "val_mae": record.val_mae if record.val_mae is not None else float("nan"),
            })

        logger.info(f"Repeat {repeat + 1}/{run.repeats} (seed {seed})", extra={"repeat": repeat})
        params, state = train(dataset, mconfig, tconfig, on_epoch=on_epoch)
        final = state.final
        score = final.val_mae if final.val_mae is not None else final.train_mae
        summary.append([repeat, seed, final.train_mae, final.val_mae])
        if best is None or score < best[0]:
            best = (score, params, mconfig)

    val_scores = [row[3] for row in summary if row[3] is not None]
    mean_val = float(np.mean(val_scores)) if val_scores else float("nan")
    print(
        tabulate(summary, headers=["repeat", "seed", "train_mae", "val_mae"], floatfmt=".6f", missingval="nan"),
        file=sys.stderr,
    )
    print(f"mean_val_mae={mean_val:.6f}")

    if run.log is not None:
        append_epoch_log(run.log, log_rows)
    if run.checkpoint is not None:
        save_checkpoint(run.checkpoint, best[1], best[2])
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """Print the MAE of a checkpoint on a dataset directory."""
    config, params = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    check_image_shape(dataset, config)
    print(f"mae={evaluate(dataset, params, config):.4f}")
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    """Print the predicted age for one image."""
    config, params = load_checkpoint(args.checkpoint)
    image = read_pnm(args.image)
    expected = (config.image_height, config.image_width, config.channels)
    if image.shape != expected:
        raise DimensionError(f"image is {image.shape}, checkpoint expects {expected}")
    print(f"age={predict(image, params, config):.2f}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    """Finite-difference check of every parameter on the tiny config."""
    settings = get_settings()
    config = ModelConfig.tiny(seed=args.seed)
    params = init_params(config, args.seed)
    sample = synth_dataset(1, args.seed, (config.image_height, config.image_width)).samples[0]

    def objective(p: Any):
        return sample_loss(sample.image, sample.label, p, config)

    fault_scale = 1.5 if args.corrupt_backward else 1.0
    report = grad_check(objective, params, h=settings.gradcheck_step, fault_scale=fault_scale)
    print(
        f"max_rel_error={report.max_rel_error:.3e}\t"
        f"worst={report.worst_parameter}[{report.worst_index}]\tscalars={report.scalar_count}"
    )
    if not report.passed(settings.gradcheck_tolerance):
        logger.error(
            f"Gradient check failed: {report.worst_parameter} rel err {report.max_rel_error:.3e} "
            f">= {settings.gradcheck_tolerance}",
            extra={"parameter": report.worst_parameter},
        )
        return EXIT_VERIFICATION
    return EXIT_OK


def cmd_inspect_graph(args: argparse.Namespace) -> int:
    """
    Dump the KNN graph over the raw pixel patches of one image.

    Vertices are patchify rows, not stem embeddings, and the edge scorer is
    drawn fresh from the config seed. The dump shows how the image itself
    clusters, not the graph a trained model builds at stage 0.
    """
    config = build_run_config(args).to_model_config()
    image = read_pnm(args.image)
    expected = (config.image_height, config.image_width, config.channels)
    if image.shape != expected:
        raise DimensionError(f"image is {image.shape}, config expects {expected}")

    nodes = patchify(image, config.grid_side)
    graph = knn_graph(nodes, config.knn, config.metric)
    width = nodes.shape[1]
    rng = np.random.default_rng(config.seed)
    bound = float(np.sqrt(6.0 / (2 * width + 1)))
    edge = EdgeWeightParams(a=parameter(rng.uniform(-bound, bound, size=2 * width)), b=parameter(np.zeros(1)))
    dump = format_graph(compute_edge_weights(nodes, graph, edge))

    if args.out is None:
        sys.stdout.write(dump)
    else:
        Path(args.out).write_text(dump, encoding="utf-8")
        logger.info(f"Wrote {graph.node_count * graph.k} edges to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vigage", description=__doc__.strip().splitlines()[0])
    parser.add_argument(
        "--log-level",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Override VIGAGE_LOG_LEVEL",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="Write a synthetic dataset")
    synth.add_argument("--out", required=True)
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--size", default="32x32", help="HxW")
    synth.set_defaults(handler=cmd_synth)

    train_cmd = commands.add_parser("train", help="Train and report mean validation MAE")
    train_cmd.add_argument("--data")
    train_cmd.add_argument("--config", help="Flat JSON config; flags override it")
    train_cmd.add_argument("--epochs", type=int)
    train_cmd.add_argument("--seed", type=int)
    train_cmd.add_argument("--repeats", type=int)
    train_cmd.add_argument("--batch-size", dest="batch_size", type=int)
    train_cmd.add_argument("--learning-rate", dest="learning_rate", type=float)
    train_cmd.add_argument("--val-fraction", dest="val_fraction", type=float)
    train_cmd.add_argument("--checkpoint")
    train_cmd.add_argument("--log", help="Append the epoch log to this CSV file")
    train_cmd.set_defaults(handler=cmd_train)

    eval_cmd = commands.add_parser("eval", help="Print MAE of a checkpoint on a dataset")
    eval_cmd.add_argument("--data", required=True)
    eval_cmd.add_argument("--checkpoint", required=True)
    eval_cmd.set_defaults(handler=cmd_eval)

    infer = commands.add_parser("infer", help="Predict the age in one image")
    infer.add_argument("--image", required=True)
    infer.add_argument("--checkpoint", required=True)
    infer.set_defaults(handler=cmd_infer)

    gradcheck = commands.add_parser("gradcheck", help="Finite-difference gradient verification")
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--corrupt-backward", action="store_true", help="Scale leaf gradients (negative control)")
    gradcheck.set_defaults(handler=cmd_gradcheck)

    inspect = commands.add_parser(
        "inspect-graph",
        help="Dump the KNN graph over raw pixel patches (not the trained stem graph)",
    )
    inspect.add_argument("--image", required=True)
    inspect.add_argument("--config")
    inspect.add_argument("--out")
    inspect.set_defaults(handler=cmd_inspect_graph)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    settings = get_settings()
    setup_logging(
        level=args.log_level or settings.log_level,
        use_json=settings.log_json,
        log_file=settings.log_file,
        stream=sys.stderr,
    )

    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except USAGE_ERRORS as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_USAGE
    except DivergenceError as e:
        logger.error(f"{args.command}: training diverged: {e}", extra={"epoch": e.epoch, "step": e.step})
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
