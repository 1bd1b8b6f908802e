"""
Command line: train, evaluate and demo one-to-one translation models.

    python cli.py train configs/reflection.ini --seed 3 --epochs 50
    python cli.py eval configs/reflection.ini --checkpoint runs/.../checkpoint_0050.json
    python cli.py demo configs/reflection.ini --checkpoint ... --input a.csv --output b.csv --repeat 2

Exit codes: 0 success, 1 usage or parse error, 2 runtime or training failure.
"""
import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from utils.autodiff import Tensor
from utils.config import MODES, RunConfig, config_hash, config_to_text, parse_config, with_overrides, write_config
from utils.data import DomainTask, load_pgm, load_points_csv, make_task, save_pgm, save_points_csv
from utils.errors import (CheckpointError, ConfigError, DimensionError, One2OneError, ParseError,
                          SpecError, TrainingError)
from utils.gan import (BaselineSystem, System, network_specs, system_from_models, train, translate,
                       write_metrics_csv)
from utils.metrics import MetricsReport, evaluate, held_out_evaluator
from utils.nn import build_generator, load_checkpoint, param_count

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="one2one", description="Unpaired one-to-one translation with a shared generator")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("config", help="Run configuration file")
        sub.add_argument("--seed", type=int, help="Override the data, init and train seeds")
        sub.add_argument("--epochs", type=int, help="Override [run] epochs")
        sub.add_argument("--mode", choices=MODES, help="Override [run] mode")
        sub.add_argument("--out", help="Override [output] dir")
        sub.add_argument("--verbose", action="store_true", help="Log at DEBUG level")

    common(commands.add_parser("train", help="Train a system and write logs, metrics and checkpoints"))

    evaluate_cmd = commands.add_parser("eval", help="Evaluate a checkpoint on held-out data")
    common(evaluate_cmd)
    evaluate_cmd.add_argument("--checkpoint", required=True, help="Checkpoint file")
    evaluate_cmd.add_argument("--eval-seed", type=int, help="Held-out draw seed (default [eval] seed)")

    demo = commands.add_parser("demo", help="Translate one CSV of points or one PGM image")
    common(demo)
    demo.add_argument("--checkpoint", required=True, help="Checkpoint file")
    demo.add_argument("--input", required=True, help="Input .csv (points) or .pgm (image)")
    demo.add_argument("--output", required=True, help="Output file, same format as the input (created new)")
    demo.add_argument("--repeat", type=int, default=1, help="Apply the generator this many times")
    demo.add_argument("--direction", choices=("x2y", "y2x"), default="x2y",
                      help="Starting direction; only baseline checkpoints distinguish them")
    return parser


def load_run_config(args: argparse.Namespace) -> RunConfig:
    config = parse_config(args.config)
    return with_overrides(config, seed=args.seed, epochs=args.epochs, mode=args.mode, out=args.out)


def build_task(config: RunConfig, config_path: str) -> DomainTask:
    return make_task(config.task, config.seeds.data, base_dir=Path(config_path).parent)


def param_summary(system: System) -> Dict[str, int]:
    """Generator and discriminator parameter counts; the missing mode is derived from a same-spec copy of G"""
    generator = param_count(system.G)
    if isinstance(system, BaselineSystem):
        baseline = generator + param_count(system.F)
    else:
        baseline = 2 * generator
    return {
        "one2one_generators": generator,
        "baseline_generators": baseline,
        "discriminators": param_count(system.D_X) + param_count(system.D_Y),
    }


def format_summary(system: System, report: Optional[MetricsReport], chash: str, out_dir: Path) -> str:
    counts = param_summary(system)
    parts = [f"summary mode={system.mode}", f"config={chash}"]
    if report is not None:
        parts.append(f"epoch={report.epoch}")
        parts.append(f"residual={report.self_inverse_residual:.6g}")
        for name in ("psnr_x2y", "psnr_y2x", "ssim_x2y", "ssim_y2x", "bias_gap_x2y", "bias_gap_y2x",
                     "injectivity_score"):
            value = getattr(report, name)
            if value is not None:
                parts.append(f"{name}={value:.6g}")
    parts.append(f"params_G_one2one={counts['one2one_generators']}")
    parts.append(f"params_G_baseline={counts['baseline_generators']}")
    parts.append(f"params_D={counts['discriminators']}")
    parts.append(f"out={out_dir}")
    return " ".join(parts)


def run_directory(config: RunConfig) -> Path:
    name = f"{config.task.name}_{config.run.mode}_seed{config.seeds.train}_{config_hash(config)}"
    return Path(config.output.dir) / name


def dump_translations(system: System, task: DomainTask, out_dir: Path, config: RunConfig, chash: str) -> List[Path]:
    """
    Write translated held-out samples: a tidy CSV for point tasks, PGM
    triples (input, output, target when known) for image tasks.
    """
    count = config.output.dump_samples
    if count == 0:
        return []
    written = []
    comment = f"config_hash={chash}"
    for domain, direction, draw, oracle in (
        ("X", "x2y", task.sample_x, task.truth.forward if task.truth else None),
        ("Y", "y2x", task.sample_y, task.truth.inverse if task.truth else None),
    ):
        inputs = draw(config.eval.seed, count)
        outputs = np.stack([translate(system, Tensor(s), direction).data for s in inputs])
        targets = oracle(inputs) if oracle is not None else None
        if task.kind == "vector":
            dims = inputs.shape[-1]
            frame = pd.DataFrame({"domain": domain, "index": np.arange(len(inputs))})
            for label, values in (("input", inputs), ("output", outputs), ("target", targets)):
                if values is None:
                    continue
                flat = values.reshape(len(values), dims)
                for d in range(dims):
                    frame[f"{label}_{d}"] = flat[:, d]
            frame["config_hash"] = chash
            path = out_dir / f"translations_{direction}.csv"
            with open(path, "x", encoding="utf-8", newline="") as handle:
                frame.to_csv(handle, index=False)
            written.append(path)
        else:
            samples_dir = out_dir / "samples"
            samples_dir.mkdir(exist_ok=True)
            for i in range(len(inputs)):
                for label, values in (("input", inputs), ("output", outputs), ("target", targets)):
                    if values is None:
                        continue
                    written.append(save_pgm(samples_dir / f"{direction}_{i:03d}_{label}.pgm", values[i], comment))
    logger.info(f"Wrote {len(written)} translation dumps to {out_dir}")
    return written


def _registry_url(config: RunConfig) -> Optional[str]:
    return config.output.registry_url or os.environ.get("DATABASE_URL") or None


def _open_registry(config: RunConfig, out_dir: Path, chash: str, generator_params: int) -> Optional[int]:
    url = _registry_url(config)
    if not url:
        return None
    try:
        from database import initialize_database, register_run
        initialize_database(url)
        return register_run(chash, config.task.name, config.run.mode, config.seeds.train, config.run.epochs,
                            str(out_dir), config_to_text(config), generator_params)
    except Exception as e:
        logger.error(f"Run registry unavailable, continuing without it: {str(e)}")
        return None


def _close_registry(run_id: Optional[int], history: List[MetricsReport], status: str, message: Optional[str] = None) -> None:
    if run_id is None:
        return
    try:
        from database import finish_run, record_metrics
        if history:
            record_metrics(run_id, history)
        finish_run(run_id, status, message)
    except Exception as e:
        logger.error(f"Could not update run {run_id} in the registry: {str(e)}")


def cmd_train(config: RunConfig, config_path: str) -> int:
    """
    Train per config, writing everything into a new run directory.

    Returns:
        Exit status
    """
    chash = config_hash(config)
    out_dir = run_directory(config)
    out_dir.mkdir(parents=True, exist_ok=False)
    write_config(config, out_dir / "config.ini")
    task = build_task(config, config_path)

    run_id = None
    if _registry_url(config):
        g_spec, _ = network_specs(config, task.kind, task.sample_shape)
        run_id = _open_registry(config, out_dir, chash, param_count(build_generator(g_spec, 0)))

    try:
        evaluator = held_out_evaluator(task, n_eval=config.eval.n_eval, seed=config.eval.seed)
        result = train(task.training_data(), config, out_dir=out_dir, evaluator=evaluator)
    except TrainingError as e:
        _close_registry(run_id, [], "failed", str(e))
        raise

    dump_translations(result.system, task, out_dir, config, chash)
    _close_registry(run_id, result.history, "finished")
    final = result.history[-1] if result.history else None
    print(format_summary(result.system, final, chash, out_dir))
    return EXIT_OK


def _load_system(checkpoint: str, config: RunConfig) -> Tuple[System, Dict]:
    models, metadata = load_checkpoint(checkpoint)
    system = system_from_models(models, config)
    logger.info(f"Loaded {system.mode} checkpoint {checkpoint} (config {metadata.get('config_hash', '?')}, "
                f"epoch {metadata.get('epoch', '?')})")
    return system, metadata


def cmd_eval(config: RunConfig, config_path: str, checkpoint: str, seed: Optional[int] = None) -> int:
    """Evaluate a checkpoint, print the report and append it to the checkpoint's metrics.csv"""
    system, metadata = _load_system(checkpoint, config)
    task = build_task(config, config_path)
    if tuple(system.G.spec.input_shape) != tuple(task.sample_shape):
        raise DimensionError(f"Checkpoint does not fit task '{task.name}'", system.G.spec.input_shape,
                             task.sample_shape)
    seed = config.eval.seed if seed is None else seed
    chash = metadata.get("config_hash", config_hash(config))
    report = evaluate(system, task, n_eval=config.eval.n_eval, seed=seed, epoch=int(metadata.get("epoch", 0)))
    path = write_metrics_csv(Path(checkpoint).parent / "metrics.csv", [report], chash)
    for key, value in vars(report).items():
        print(f"{key}: {value}")
    print(f"appended to {path}")
    return EXIT_OK


def cmd_demo(config: RunConfig, checkpoint: str, input_path: str, output_path: str,
             repeat: int = 1, direction: str = "x2y") -> int:
    """
    Translate a single input file. With a shared generator every
    application is the same call; baseline checkpoints alternate G and F
    starting from ``direction``.
    """
    if repeat < 1:
        raise ValueError(f"--repeat must be >= 1, got {repeat}")
    system, metadata = _load_system(checkpoint, config)
    comment = f"config_hash={metadata.get('config_hash', config_hash(config))} repeat={repeat}"
    source = Path(input_path)
    if not source.exists():
        raise FileNotFoundError(f"Input file not found: {source}")

    def apply(sample: Tensor) -> Tensor:
        current, step_direction = sample, direction
        for _ in range(repeat):
            current = translate(system, current, step_direction)
            if isinstance(system, BaselineSystem):
                step_direction = "y2x" if step_direction == "x2y" else "x2y"
        return current

    if source.suffix.lower() == ".pgm":
        image = load_pgm(source)
        save_pgm(output_path, apply(image), comment)
    elif source.suffix.lower() == ".csv":
        points = load_points_csv(source)
        outputs = np.stack([apply(Tensor(p)).data for p in points])
        save_points_csv(output_path, outputs, comment)
    else:
        raise ParseError(source, None, "input must be a .csv point file or a .pgm image")
    print(f"wrote {output_path}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    try:
        config = load_run_config(args)
    except FileNotFoundError as e:
        print(f"error: config file not found: {e.filename}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "train":
            return cmd_train(config, args.config)
        if args.command == "eval":
            return cmd_eval(config, args.config, args.checkpoint, args.eval_seed)
        return cmd_demo(config, args.checkpoint, args.input, args.output, args.repeat, args.direction)
    except ParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as e:
        print(f"training aborted: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (CheckpointError, DimensionError, SpecError, One2OneError, FileNotFoundError,
            FileExistsError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
