"""
Run configuration: a sectioned key=value file with strict validation.

Every key has a default except ``[task] name``. Unknown sections or keys
are rejected so that a typo can never silently fall back to a default.
"""
import configparser
import dataclasses
import hashlib
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from utils.errors import ConfigError
from utils.optim import SCHEDULE_PRESETS

logger = logging.getLogger(__name__)

TASK_NAMES = ("reflection", "affine", "image_inversion", "overlap", "manifest")
MODES = ("one2one", "baseline")
NETWORK_KINDS = ("auto", "vector", "conv")


@dataclass(frozen=True)
class TaskConfig:
    name: str = ""
    n: int = 2000
    height: int = 16
    width: int = 16
    gap: float = 0.1
    scale: float = 0.8
    angle: float = 0.5235987755982988
    manifest: str = ""


@dataclass(frozen=True)
class RunSection:
    mode: str = "one2one"
    epochs: int = 200


@dataclass(frozen=True)
class NetworkConfig:
    kind: str = "auto"
    dims: Tuple[int, ...] = ()


@dataclass(frozen=True)
class LossConfig:
    lambda_x: float = 10.0
    lambda_y: float = 10.0
    # weight of the joint cycle term in baseline mode
    lambda_cyc: float = 10.0


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class ScheduleConfig:
    preset: str = ""
    fixed_epochs: int = 100
    decay_epochs: int = 100


@dataclass(frozen=True)
class PoolConfig:
    capacity: int = 50


@dataclass(frozen=True)
class SeedsConfig:
    data: int = 0
    init: int = 0
    train: int = 0


@dataclass(frozen=True)
class EvalConfig:
    every: int = 10
    n_eval: int = 200
    seed: int = 1000


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "runs"
    checkpoint_every: int = 50
    registry_url: str = ""
    dump_samples: int = 8


@dataclass(frozen=True)
class RunConfig:
    """Everything a train/eval/demo command needs, grouped by file section"""
    task: TaskConfig = field(default_factory=TaskConfig)
    run: RunSection = field(default_factory=RunSection)
    generator: NetworkConfig = field(default_factory=NetworkConfig)
    discriminator: NetworkConfig = field(default_factory=NetworkConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    pool: PoolConfig = field(default_factory=PoolConfig)
    seeds: SeedsConfig = field(default_factory=SeedsConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


SECTIONS = tuple(f.name for f in dataclasses.fields(RunConfig))
_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:\s#;\[][^=:]*?)\s*[=:]")


def _key_lines(text: str) -> Dict[Tuple[Optional[str], Optional[str]], int]:
    # configparser does not keep positions; recover them for error messages
    lines: Dict[Tuple[Optional[str], Optional[str]], int] = {}
    section = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        section_match = _SECTION_RE.match(line)
        if section_match:
            section = section_match.group(1).strip()
            lines.setdefault((section, None), line_no)
            continue
        key_match = _KEY_RE.match(line)
        if key_match and section is not None:
            lines.setdefault((section, key_match.group(1).strip()), line_no)
    return lines


def _convert(raw: str, default: Any, key: str, line: Optional[int]) -> Any:
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false"):
                raise ValueError(raw)
            return raw.lower() == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"Invalid value {raw!r} for a {type(default).__name__} setting", key, line)
    return raw


def _format(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _check(condition: bool, message: str, key: str, lines) -> None:
    if not condition:
        section, option = key.split(".")
        raise ConfigError(message, key, lines.get((section, option), lines.get((section, None))))


def validate_config(config: RunConfig, lines: Optional[Dict] = None) -> None:
    """
    Range-check every setting.

    Raises:
        ConfigError: naming the offending key (and its line when known)
    """
    lines = lines or {}
    task = config.task
    _check(task.name != "", "Missing required setting", "task.name", lines)
    _check(task.name in TASK_NAMES, f"Unknown task; choose from {', '.join(TASK_NAMES)}", "task.name", lines)
    if task.name in ("reflection", "affine", "overlap"):
        _check(task.n >= 100, "Point tasks need n >= 100", "task.n", lines)
    _check(task.n >= 1, "n must be positive", "task.n", lines)
    _check(1 <= task.height <= 32, "height must lie in 1..32", "task.height", lines)
    _check(1 <= task.width <= 32, "width must lie in 1..32", "task.width", lines)
    _check(task.gap >= 0, "gap must be >= 0", "task.gap", lines)
    _check(task.scale != 0, "scale must be non-zero", "task.scale", lines)
    if task.name == "manifest":
        _check(task.manifest != "", "Manifest tasks need a manifest path", "task.manifest", lines)

    _check(config.run.mode in MODES, f"mode must be one of {', '.join(MODES)}", "run.mode", lines)
    _check(config.run.epochs >= 0, "epochs must be >= 0", "run.epochs", lines)
    for section in ("generator", "discriminator"):
        network = getattr(config, section)
        _check(network.kind in NETWORK_KINDS, f"kind must be one of {', '.join(NETWORK_KINDS)}",
               f"{section}.kind", lines)
        _check(all(d > 0 for d in network.dims), "dims must be positive", f"{section}.dims", lines)
        _check(network.kind == "auto" or len(network.dims) >= 2,
               "dims must list at least two sizes when kind is set", f"{section}.dims", lines)

    for name in ("lambda_x", "lambda_y", "lambda_cyc"):
        _check(getattr(config.loss, name) >= 0, "loss weights must be >= 0", f"loss.{name}", lines)
    _check(config.optim.lr >= 0, "lr must be >= 0", "optim.lr", lines)
    _check(0 <= config.optim.beta1 < 1, "beta1 must lie in [0, 1)", "optim.beta1", lines)
    _check(0 <= config.optim.beta2 < 1, "beta2 must lie in [0, 1)", "optim.beta2", lines)
    _check(config.optim.eps > 0, "eps must be > 0", "optim.eps", lines)
    _check(config.schedule.preset in ("",) + tuple(SCHEDULE_PRESETS),
           f"preset must be one of {', '.join(SCHEDULE_PRESETS)}", "schedule.preset", lines)
    _check(config.schedule.fixed_epochs >= 0, "fixed_epochs must be >= 0", "schedule.fixed_epochs", lines)
    _check(config.schedule.decay_epochs >= 0, "decay_epochs must be >= 0", "schedule.decay_epochs", lines)
    _check(config.pool.capacity >= 0, "capacity must be >= 0", "pool.capacity", lines)
    _check(config.eval.every >= 0, "every must be >= 0", "eval.every", lines)
    _check(config.eval.n_eval >= 2, "n_eval must be >= 2", "eval.n_eval", lines)
    _check(config.output.checkpoint_every >= 0, "checkpoint_every must be >= 0", "output.checkpoint_every", lines)
    _check(config.output.dump_samples >= 0, "dump_samples must be >= 0", "output.dump_samples", lines)


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    lines = _key_lines(text)
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.DuplicateOptionError as e:
        raise ConfigError("Duplicate setting", f"{e.section}.{e.option}", e.lineno)
    except configparser.DuplicateSectionError as e:
        raise ConfigError("Duplicate section", e.section, e.lineno)
    except configparser.Error as e:
        raise ConfigError(f"Malformed config file {source}: {e}", line=getattr(e, "lineno", None))

    sections: Dict[str, Any] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError("Unknown section", section, lines.get((section, None)))
        section_cls = type(getattr(RunConfig(), section))
        defaults = {f.name: f.default for f in dataclasses.fields(section_cls)}
        values = {}
        for key, raw in parser.items(section):
            line = lines.get((section, key))
            if key not in defaults:
                raise ConfigError("Unknown setting", f"{section}.{key}", line)
            values[key] = _convert(raw, defaults[key], f"{section}.{key}", line)
        sections[section] = values

    schedule = sections.get("schedule", {})
    preset = schedule.get("preset", "")
    if preset:
        if preset not in SCHEDULE_PRESETS:
            raise ConfigError(f"Unknown preset; choose from {', '.join(SCHEDULE_PRESETS)}",
                              "schedule.preset", lines.get(("schedule", "preset")))
        if "fixed_epochs" in schedule or "decay_epochs" in schedule:
            raise ConfigError("A schedule preset cannot be combined with explicit epoch counts",
                              "schedule.preset", lines.get(("schedule", "preset")))
        schedule["fixed_epochs"], schedule["decay_epochs"] = SCHEDULE_PRESETS[preset]

    base = RunConfig()
    config = RunConfig(**{
        name: dataclasses.replace(getattr(base, name), **sections.get(name, {}))
        for name in SECTIONS
    })
    validate_config(config, lines)
    return config


def parse_config(path: Union[str, Path]) -> RunConfig:
    """
    Read and validate a run configuration file.

    Args:
        path: Config file path

    Returns:
        Validated RunConfig

    Raises:
        FileNotFoundError: if the file does not exist
        ConfigError: for missing, unknown or out-of-range settings
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    config = parse_config_text(text, source=str(path))
    logger.debug(f"Parsed config {path} (hash {config_hash(config)})")
    return config


def config_to_text(config: RunConfig) -> str:
    """Canonical text form; parse_config_text(config_to_text(c)) == c"""
    out = []
    for name in SECTIONS:
        section = getattr(config, name)
        out.append(f"[{name}]")
        for f in dataclasses.fields(section):
            if name == "schedule" and config.schedule.preset and f.name != "preset":
                continue
            out.append(f"{f.name} = {_format(getattr(section, f.name))}")
        out.append("")
    return "\n".join(out)


def write_config(config: RunConfig, path: Union[str, Path]) -> Path:
    """Write the canonical text to a new file; an existing file is never replaced"""
    path = Path(path)
    with open(path, "x", encoding="utf-8") as handle:
        handle.write(config_to_text(config))
    return path


def config_hash(config: RunConfig) -> str:
    """
    Identity of an experiment: SHA-256 prefix of the canonical text with
    the [output] section left out, so relocating a run keeps its hash.
    """
    config = dataclasses.replace(config, output=OutputConfig())
    return hashlib.sha256(config_to_text(config).encode("utf-8")).hexdigest()[:12]


def with_overrides(config: RunConfig, seed: Optional[int] = None, epochs: Optional[int] = None,
                   mode: Optional[str] = None, out: Optional[str] = None) -> RunConfig:
    """Apply command-line overrides; --seed sets the data, init and train seeds together"""
    if seed is not None:
        config = dataclasses.replace(config, seeds=SeedsConfig(data=seed, init=seed, train=seed))
    if epochs is not None:
        config = dataclasses.replace(config, run=dataclasses.replace(config.run, epochs=epochs))
    if mode is not None:
        config = dataclasses.replace(config, run=dataclasses.replace(config.run, mode=mode))
    if out is not None:
        config = dataclasses.replace(config, output=dataclasses.replace(config.output, dir=out))
    validate_config(config)
    return config
