"""
Adversarial training for one-to-one translation.

Two systems share this module:

* ``One2OneSystem``: a single generator G used for both X→Y and Y→X,
  trained with per-direction objectives (adversarial + λ·|G(G(s)) − s|)
  and two discriminators.
* ``BaselineSystem``: the classic two-generator setup (G: X→Y, F: Y→X)
  trained with one joint objective.

Discriminators use least-squares targets (real → 1, fake → 0) and read
their fakes from a history pool. Ground-truth mappings are never touched
here; they belong to evaluation only.
"""
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from utils.autodiff import Tensor, backward, l1_loss, mse_loss, no_grad
from utils.config import RunConfig, config_hash, validate_config
from utils.data import DomainTask, TrainingData
from utils.errors import DimensionError, SpecError, TrainingError
from utils.metrics import Evaluator, MetricsReport, metrics_to_row
from utils.nn import (DiscriminatorSpec, GeneratorSpec, Model, build_discriminator, build_generator,
                      forward, save_checkpoint, validate_spec)
from utils.optim import Adam, Schedule, lr_at

logger = logging.getLogger(__name__)

DEFAULT_POOL_CAPACITY = 50
SWAP_PROBABILITY = 0.5

LOSS_NAMES = ("loss_x2y_adv", "loss_x2y_cyc", "loss_y2x_adv", "loss_y2x_cyc", "loss_dx", "loss_dy")
LOSS_COLUMNS = ["iteration", "epoch", "lr", *LOSS_NAMES, "config_hash"]

# init-seed substreams, fixed so G starts identically in both modes; the
# leading key keeps them apart from data, shuffle and pool streams
_INIT_NAMESPACE = 9
_POOL_NAMESPACE = 7
_INIT_STREAMS = {"G": 0, "F": 1, "D_X": 2, "D_Y": 3}


class ImagePool:
    """
    History buffer of generated samples shown to a discriminator.

    Until ``capacity`` samples are stored every query returns its input.
    Afterwards, with probability ½ the input is returned unchanged, and
    otherwise a uniformly chosen stored sample is returned and replaced
    by the input. A capacity of 0 disables the pool.
    """

    def __init__(self, capacity: int = DEFAULT_POOL_CAPACITY, rng: Optional[np.random.Generator] = None):
        if capacity < 0:
            raise ValueError(f"Pool capacity must be >= 0, got {capacity}")
        self.capacity = capacity
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.stored: List[Tensor] = []
        self.swaps = 0
        self.queries = 0

    def __len__(self) -> int:
        return len(self.stored)

    def query(self, fake: Tensor) -> Tensor:
        if fake.requires_grad:
            fake = fake.detach()
        self.queries += 1
        if self.capacity == 0:
            return fake
        if len(self.stored) < self.capacity:
            self.stored.append(fake)
            return fake
        if self.rng.random() < SWAP_PROBABILITY:
            index = int(self.rng.integers(self.capacity))
            previous = self.stored[index]
            self.stored[index] = fake
            self.swaps += 1
            return previous
        return fake


def pool_query(pool: ImagePool, fake: Tensor) -> Tensor:
    return pool.query(fake)


@dataclass
class One2OneSystem:
    """Shared self-inverse generator G with one discriminator per domain"""
    G: Model
    D_X: Model
    D_Y: Model
    opt_G: Adam
    opt_D_X: Adam
    opt_D_Y: Adam
    pool_x: ImagePool
    pool_y: ImagePool
    schedule: Schedule = field(default_factory=Schedule)
    lambda_x: float = 10.0
    lambda_y: float = 10.0
    lr: float = 2e-4
    train_discriminators: bool = True
    iteration: int = 0

    mode = "one2one"

    def models(self) -> Dict[str, Model]:
        return {"G": self.G, "D_X": self.D_X, "D_Y": self.D_Y}

    def generators(self) -> Dict[str, Model]:
        return {"G": self.G}


@dataclass
class BaselineSystem:
    """Two generators (G: X→Y, F: Y→X) of identical spec with independent weights"""
    G: Model
    F: Model
    D_X: Model
    D_Y: Model
    opt_G: Adam
    opt_F: Adam
    opt_D_X: Adam
    opt_D_Y: Adam
    pool_x: ImagePool
    pool_y: ImagePool
    schedule: Schedule = field(default_factory=Schedule)
    lambda_cyc: float = 10.0
    lr: float = 2e-4
    train_discriminators: bool = True
    iteration: int = 0

    mode = "baseline"

    def __post_init__(self):
        if self.G.spec != self.F.spec:
            raise SpecError("Baseline generators G and F must share one spec")

    def models(self) -> Dict[str, Model]:
        return {"G": self.G, "F": self.F, "D_X": self.D_X, "D_Y": self.D_Y}

    def generators(self) -> Dict[str, Model]:
        return {"G": self.G, "F": self.F}


System = Union[One2OneSystem, BaselineSystem]


@dataclass
class IterationLosses:
    """Loss values of one training iteration (X→Y / Y→X generator terms and both discriminators)"""
    iteration: int
    loss_x2y_adv: float
    loss_x2y_cyc: float
    loss_y2x_adv: float
    loss_y2x_cyc: float
    loss_dx: float
    loss_dy: float

    def values(self) -> Dict[str, float]:
        row = asdict(self)
        row.pop("iteration")
        return row


@dataclass
class TrainResult:
    system: System
    history: List[MetricsReport]
    losses: pd.DataFrame
    checkpoints: List[Path] = field(default_factory=list)
    config_hash: str = ""


# ---- losses ----------------------------------------------------------------

def adv_loss_G(D: Model, fake: Tensor) -> Tensor:
    """Least-squares generator loss: mean((D(fake) − 1)²)"""
    scores = forward(D, fake)
    return mse_loss(scores, Tensor(np.ones(scores.shape)))


def adv_loss_D(D: Model, real: Tensor, fake_pooled: Tensor) -> Tensor:
    """
    Least-squares discriminator loss ½·[mean((D(real) − 1)²) + mean(D(fake)²)].

    Args:
        D: Discriminator being trained
        real: Sample from D's own domain
        fake_pooled: Detached generator output, usually drawn from a pool

    Returns:
        Scalar loss tensor
    """
    if fake_pooled.requires_grad:
        raise ValueError("adv_loss_D: the fake sample must be detached from the generator")
    real_scores = forward(D, real)
    fake_scores = forward(D, fake_pooled)
    real_term = mse_loss(real_scores, Tensor(np.ones(real_scores.shape)))
    fake_term = mse_loss(fake_scores, Tensor(np.zeros(fake_scores.shape)))
    return 0.5 * (real_term + fake_term)


def cycle_loss_x(G: Model, x: Tensor) -> Tensor:
    return l1_loss(forward(G, forward(G, x)), x)


def cycle_loss_y(G: Model, y: Tensor) -> Tensor:
    return l1_loss(forward(G, forward(G, y)), y)


@dataclass
class DirectionLosses:
    total: Tensor
    adversarial: Tensor
    cycle: Tensor
    fake: Tensor


def _direction_losses(G: Model, D: Model, source: Tensor, weight: float) -> DirectionLosses:
    # G(source) is computed once and reused by both terms
    fake = forward(G, source)
    adversarial = adv_loss_G(D, fake)
    cycle = l1_loss(forward(G, fake), source)
    return DirectionLosses(total=adversarial + weight * cycle, adversarial=adversarial, cycle=cycle, fake=fake)


def total_loss_x2y(system: One2OneSystem, x: Tensor) -> Tensor:
    """adv_loss_G(D_Y, G(x)) + λ_x·cycle_loss_x(G, x)"""
    return _direction_losses(system.G, system.D_Y, x, system.lambda_x).total


def total_loss_y2x(system: One2OneSystem, y: Tensor) -> Tensor:
    """adv_loss_G(D_X, G(y)) + λ_y·cycle_loss_y(G, y)"""
    return _direction_losses(system.G, system.D_X, y, system.lambda_y).total


@dataclass
class BaselineLosses:
    generator: Tensor
    adv_g: Tensor
    adv_f: Tensor
    cycle_x: Tensor
    cycle_y: Tensor
    fake_y: Tensor
    fake_x: Tensor
    d_x: Optional[Tensor] = None
    d_y: Optional[Tensor] = None


def _baseline_generator_losses(system: BaselineSystem, x: Tensor, y: Tensor) -> BaselineLosses:
    fake_y = forward(system.G, x)
    fake_x = forward(system.F, y)
    adv_g = adv_loss_G(system.D_Y, fake_y)
    adv_f = adv_loss_G(system.D_X, fake_x)
    cycle_x = l1_loss(forward(system.F, fake_y), x)
    cycle_y = l1_loss(forward(system.G, fake_x), y)
    joint = adv_g + adv_f + system.lambda_cyc * (cycle_x + cycle_y)
    return BaselineLosses(generator=joint, adv_g=adv_g, adv_f=adv_f, cycle_x=cycle_x, cycle_y=cycle_y,
                          fake_y=fake_y, fake_x=fake_x)


def baseline_losses(system: BaselineSystem, x: Tensor, y: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Joint generator loss and both discriminator losses for one (x, y) draw.

    The discriminator losses see the current fakes directly (no pool).
    All three share the active tape, so only one of them can be
    backpropagated; train_iteration_baseline computes them in turn.

    Returns:
        (generator joint loss, D_X loss, D_Y loss)
    """
    losses = _baseline_generator_losses(system, x, y)
    d_x = adv_loss_D(system.D_X, x, losses.fake_x.detach())
    d_y = adv_loss_D(system.D_Y, y, losses.fake_y.detach())
    return losses.generator, d_x, d_y


# ---- training --------------------------------------------------------------

def _check_finite(iteration: int, **named: Tensor) -> None:
    for name, value in named.items():
        scalar = value.item()
        if not np.isfinite(scalar):
            raise TrainingError(iteration, name, scalar)


def _zero_all(system: System) -> None:
    for model in system.models().values():
        model.zero_grad()


def _discriminator_step(D: Model, optimizer: Adam, pool: ImagePool, real: Tensor, fake: Tensor,
                        lr: float, train: bool, iteration: int, name: str) -> float:
    pooled = pool_query(pool, fake)
    if not train:
        with no_grad():
            loss = adv_loss_D(D, real, pooled)
        _check_finite(iteration, **{name: loss})
        return loss.item()
    loss = adv_loss_D(D, real, pooled)
    _check_finite(iteration, **{name: loss})
    backward(loss)
    optimizer.step(lr)
    D.zero_grad()
    return loss.item()


def _assert_generators_untouched(system: System) -> None:
    for key, model in system.generators().items():
        if any(p.grad is not None and np.any(p.grad) for p in model.parameter_list()):
            raise RuntimeError(f"Discriminator update leaked gradient into generator {key}")


def train_iteration_one2one(system: One2OneSystem, x: Tensor, y: Tensor) -> IterationLosses:
    """
    One iteration of the three-step schedule.

    1. X→Y objective, backward, Adam step on G.
    2. Y→X objective, backward, Adam step on G.
    3. D_Y on (y, pooled G(x)) and D_X on (x, pooled G(y)), one step each,
       using the detached fakes from steps 1 and 2.

    Raises:
        TrainingError: on the first non-finite loss, before any update it would feed
    """
    it = system.iteration
    _zero_all(system)

    x2y = _direction_losses(system.G, system.D_Y, x, system.lambda_x)
    _check_finite(it, loss_x2y_adv=x2y.adversarial, loss_x2y_cyc=x2y.cycle)
    fake_y = x2y.fake.detach()
    backward(x2y.total)
    system.opt_G.step(system.lr)
    _zero_all(system)

    y2x = _direction_losses(system.G, system.D_X, y, system.lambda_y)
    _check_finite(it, loss_y2x_adv=y2x.adversarial, loss_y2x_cyc=y2x.cycle)
    fake_x = y2x.fake.detach()
    backward(y2x.total)
    system.opt_G.step(system.lr)
    _zero_all(system)

    loss_dy = _discriminator_step(system.D_Y, system.opt_D_Y, system.pool_y, y, fake_y,
                                  system.lr, system.train_discriminators, it, "loss_dy")
    loss_dx = _discriminator_step(system.D_X, system.opt_D_X, system.pool_x, x, fake_x,
                                  system.lr, system.train_discriminators, it, "loss_dx")
    _assert_generators_untouched(system)

    system.iteration += 1
    return IterationLosses(
        iteration=it,
        loss_x2y_adv=x2y.adversarial.item(),
        loss_x2y_cyc=x2y.cycle.item(),
        loss_y2x_adv=y2x.adversarial.item(),
        loss_y2x_cyc=y2x.cycle.item(),
        loss_dx=loss_dx,
        loss_dy=loss_dy,
    )


def train_iteration_baseline(system: BaselineSystem, x: Tensor, y: Tensor) -> IterationLosses:
    """One joint G+F update followed by one pooled update per discriminator"""
    it = system.iteration
    _zero_all(system)

    losses = _baseline_generator_losses(system, x, y)
    _check_finite(it, loss_x2y_adv=losses.adv_g, loss_x2y_cyc=losses.cycle_x,
                  loss_y2x_adv=losses.adv_f, loss_y2x_cyc=losses.cycle_y)
    fake_y = losses.fake_y.detach()
    fake_x = losses.fake_x.detach()
    backward(losses.generator)
    system.opt_G.step(system.lr)
    system.opt_F.step(system.lr)
    _zero_all(system)

    loss_dy = _discriminator_step(system.D_Y, system.opt_D_Y, system.pool_y, y, fake_y,
                                  system.lr, system.train_discriminators, it, "loss_dy")
    loss_dx = _discriminator_step(system.D_X, system.opt_D_X, system.pool_x, x, fake_x,
                                  system.lr, system.train_discriminators, it, "loss_dx")
    _assert_generators_untouched(system)

    system.iteration += 1
    return IterationLosses(
        iteration=it,
        loss_x2y_adv=losses.adv_g.item(),
        loss_x2y_cyc=losses.cycle_x.item(),
        loss_y2x_adv=losses.adv_f.item(),
        loss_y2x_cyc=losses.cycle_y.item(),
        loss_dx=loss_dx,
        loss_dy=loss_dy,
    )


def train_iteration(system: System, x: Tensor, y: Tensor) -> IterationLosses:
    if isinstance(system, BaselineSystem):
        return train_iteration_baseline(system, x, y)
    return train_iteration_one2one(system, x, y)


# ---- construction ----------------------------------------------------------

def network_specs(config: RunConfig, task_kind: str,
                  sample_shape: Tuple[int, ...]) -> Tuple[GeneratorSpec, DiscriminatorSpec]:
    """
    Resolve generator/discriminator specs from the config, filling in
    defaults sized to the task when ``kind = auto``.
    """
    auto_kind = "conv" if task_kind == "image" else "vector"

    def resolve(network, role_defaults: Callable[[], Tuple[int, ...]]):
        kind = auto_kind if network.kind == "auto" else network.kind
        dims = tuple(network.dims) if network.dims else role_defaults() if kind == auto_kind else ()
        if not dims:
            raise SpecError(f"Network kind '{kind}' does not match a {task_kind} task without explicit dims")
        height, width = (sample_shape[-2], sample_shape[-1]) if kind == "conv" else (0, 0)
        return kind, dims, height, width

    if auto_kind == "conv":
        channels = sample_shape[0]
        g_default = lambda: (channels, 8, 16, 8, channels)
        d_default = lambda: (channels, 8, 16, 1)
    else:
        size = sample_shape[-1]
        g_default = lambda: (size, 32, 32, size)
        d_default = lambda: (size, 32, 1)

    generator = GeneratorSpec(*resolve(config.generator, g_default))
    discriminator = DiscriminatorSpec(*resolve(config.discriminator, d_default))
    for spec in (generator, discriminator):
        validate_spec(spec)
        if tuple(spec.input_shape) != tuple(sample_shape):
            raise SpecError(f"{spec.kind} network expects inputs of shape {spec.input_shape}, "
                            f"task samples have shape {tuple(sample_shape)}")
    return generator, discriminator


def _init_seed(root: int, role: str) -> int:
    sequence = np.random.SeedSequence(entropy=root, spawn_key=(_INIT_NAMESPACE, _INIT_STREAMS[role]))
    return int(sequence.generate_state(1)[0])


def _schedule(config: RunConfig) -> Schedule:
    if config.schedule.preset:
        return Schedule.preset(config.schedule.preset, base_lr=config.optim.lr)
    return Schedule(base_lr=config.optim.lr, fixed_epochs=config.schedule.fixed_epochs,
                    decay_epochs=config.schedule.decay_epochs)


def build_system(config: RunConfig, task_kind: str, sample_shape: Tuple[int, ...]) -> System:
    """
    Initialize a one2one or baseline system (per ``config.run.mode``).

    G is seeded identically in both modes so that matched runs differ only
    in the objective.
    """
    g_spec, d_spec = network_specs(config, task_kind, sample_shape)
    seed = config.seeds.init
    optim = config.optim

    def adam(model: Model) -> Adam:
        return Adam(model.parameter_list(), beta1=optim.beta1, beta2=optim.beta2, eps=optim.eps)

    G = build_generator(g_spec, _init_seed(seed, "G"))
    D_X = build_discriminator(d_spec, _init_seed(seed, "D_X"))
    D_Y = build_discriminator(d_spec, _init_seed(seed, "D_Y"))
    pool_x_seq, pool_y_seq = np.random.SeedSequence(entropy=config.seeds.train, spawn_key=(_POOL_NAMESPACE,)).spawn(2)
    pools = {
        "pool_x": ImagePool(config.pool.capacity, np.random.default_rng(pool_x_seq)),
        "pool_y": ImagePool(config.pool.capacity, np.random.default_rng(pool_y_seq)),
    }
    schedule = _schedule(config)

    if config.run.mode == "baseline":
        F = build_generator(g_spec, _init_seed(seed, "F"))
        system = BaselineSystem(G=G, F=F, D_X=D_X, D_Y=D_Y, opt_G=adam(G), opt_F=adam(F),
                                opt_D_X=adam(D_X), opt_D_Y=adam(D_Y), schedule=schedule,
                                lambda_cyc=config.loss.lambda_cyc, lr=schedule.base_lr, **pools)
    else:
        if config.loss.lambda_x == 0 or config.loss.lambda_y == 0:
            logger.warning("A cycle weight is 0; G receives adversarial gradient only in that direction")
        system = One2OneSystem(G=G, D_X=D_X, D_Y=D_Y, opt_G=adam(G), opt_D_X=adam(D_X), opt_D_Y=adam(D_Y),
                               schedule=schedule, lambda_x=config.loss.lambda_x,
                               lambda_y=config.loss.lambda_y, lr=schedule.base_lr, **pools)
    logger.info(f"Built {system.mode} system: G {g_spec.kind} {g_spec.dims}, D {d_spec.kind} {d_spec.dims}")
    return system


def system_from_models(models: Dict[str, Model], config: RunConfig) -> System:
    """Wrap checkpointed models into a system for evaluation or further training"""
    missing = [key for key in ("G", "D_X", "D_Y") if key not in models]
    if missing:
        raise SpecError(f"Checkpoint lacks models {missing}")
    optim = config.optim

    def adam(model: Model) -> Adam:
        return Adam(model.parameter_list(), beta1=optim.beta1, beta2=optim.beta2, eps=optim.eps)

    pools = {"pool_x": ImagePool(config.pool.capacity), "pool_y": ImagePool(config.pool.capacity)}
    schedule = _schedule(config)
    G, D_X, D_Y = models["G"], models["D_X"], models["D_Y"]
    if "F" in models:
        F = models["F"]
        return BaselineSystem(G=G, F=F, D_X=D_X, D_Y=D_Y, opt_G=adam(G), opt_F=adam(F), opt_D_X=adam(D_X),
                              opt_D_Y=adam(D_Y), schedule=schedule, lambda_cyc=config.loss.lambda_cyc, **pools)
    return One2OneSystem(G=G, D_X=D_X, D_Y=D_Y, opt_G=adam(G), opt_D_X=adam(D_X), opt_D_Y=adam(D_Y),
                         schedule=schedule, lambda_x=config.loss.lambda_x, lambda_y=config.loss.lambda_y, **pools)


# ---- artifacts -------------------------------------------------------------

def _checkpoint(system: System, out_dir: Path, epoch: int, chash: str) -> Path:
    metadata = {"mode": system.mode, "epoch": epoch, "iteration": system.iteration, "config_hash": chash}
    return save_checkpoint(out_dir / f"checkpoint_{epoch:04d}.json", system.models(), metadata)


def _write_diagnostic(system: System, out_dir: Path, error: TrainingError, chash: str) -> Path:
    metadata = {
        "mode": system.mode,
        "iteration": error.iteration,
        "loss_name": error.loss_name,
        "value": str(error.value),
        "lr": system.lr,
        "config_hash": chash,
    }
    return save_checkpoint(out_dir / f"diagnostic_{error.iteration:08d}.json", system.models(), metadata)


def _append_csv(path: Path, frame: pd.DataFrame, create: bool) -> None:
    if create:
        with open(path, "x", encoding="utf-8", newline="") as handle:
            frame.to_csv(handle, index=False)
    else:
        frame.to_csv(path, mode="a", header=False, index=False)


def write_metrics_csv(path: Union[str, Path], history: List[MetricsReport], chash: str) -> Path:
    """Write (or append to) a metrics CSV with one row per report"""
    path = Path(path)
    frame = pd.DataFrame([metrics_to_row(report, chash) for report in history])
    _append_csv(path, frame, create=not path.exists())
    return path


def train(data: TrainingData, config: RunConfig, out_dir: Optional[Union[str, Path]] = None,
          on_epoch: Optional[Callable[[int, pd.DataFrame], None]] = None,
          evaluator: Optional[Evaluator] = None) -> TrainResult:
    """
    Train a system on unpaired data.

    Each epoch runs max(|X|, |Y|) iterations on independently shuffled
    single samples from both domains at the epoch's scheduled learning
    rate. With an evaluator, evaluation runs before training, every
    ``eval.every`` epochs and after the last epoch.

    Args:
        data: The two training sets (``DomainTask.training_data()``); ground truth never reaches this loop
        config: Validated run configuration
        out_dir: When given, receives losses.csv, metrics.csv and checkpoints (all created new)
        on_epoch: Optional callback with (epoch, that epoch's loss rows)
        evaluator: Scores the system on held-out data, e.g. ``held_out_evaluator(task, ...)``

    Returns:
        TrainResult with the trained system, metrics history and loss log

    Raises:
        TypeError: if handed a whole DomainTask
        TrainingError: on a non-finite loss; a diagnostic snapshot is written first when out_dir is set
    """
    if isinstance(data, DomainTask):
        raise TypeError("train takes task.training_data(); pass the task to an evaluator instead")
    validate_config(config)
    chash = config_hash(config)
    system = build_system(config, data.kind, data.sample_shape)
    sampler_x, sampler_y = data.unpaired_samplers(config.seeds.train)
    epochs = config.run.epochs
    every = config.eval.every
    checkpoints: List[Path] = []
    history: List[MetricsReport] = []
    frames: List[pd.DataFrame] = []

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        _append_csv(out_path / "losses.csv", pd.DataFrame(columns=LOSS_COLUMNS), create=True)

    def run_eval(epoch: int) -> None:
        if evaluator is None:
            return
        report = evaluator(system, epoch)
        history.append(report)
        if out_path is not None:
            write_metrics_csv(out_path / "metrics.csv", [report], chash)

    if epochs > 0:
        run_eval(0)
    iterations_per_epoch = max(len(sampler_x), len(sampler_y))
    logger.info(f"Training {system.mode} on '{data.name}' for {epochs} epochs "
                f"({iterations_per_epoch} iterations each), config {chash}")

    for epoch in range(epochs):
        system.lr = lr_at(system.schedule, epoch)
        rows = []
        for _ in range(iterations_per_epoch):
            try:
                losses = train_iteration(system, sampler_x.next_batch(), sampler_y.next_batch())
            except TrainingError as e:
                if out_path is not None:
                    e.with_diagnostic(str(_write_diagnostic(system, out_path, e, chash)))
                logger.error(str(e))
                raise
            rows.append({"iteration": losses.iteration, "epoch": epoch, "lr": system.lr,
                         **losses.values(), "config_hash": chash})
        frame = pd.DataFrame(rows, columns=LOSS_COLUMNS)
        frames.append(frame)
        means = frame[list(LOSS_NAMES)].mean()
        logger.info(f"Epoch {epoch + 1}/{epochs} lr={system.lr:.2e} "
                    + " ".join(f"{name}={value:.4f}" for name, value in means.items()))
        if out_path is not None:
            _append_csv(out_path / "losses.csv", frame, create=False)
        if on_epoch is not None:
            on_epoch(epoch, frame)

        done = epoch + 1
        if (every and done % every == 0) or done == epochs:
            run_eval(done)
        if out_path is not None and config.output.checkpoint_every and done % config.output.checkpoint_every == 0:
            checkpoints.append(_checkpoint(system, out_path, done, chash))

    if out_path is not None and (not checkpoints or not checkpoints[-1].name.endswith(f"{epochs:04d}.json")):
        checkpoints.append(_checkpoint(system, out_path, epochs, chash))

    losses_frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=LOSS_COLUMNS)
    return TrainResult(system=system, history=history, losses=losses_frame, checkpoints=checkpoints,
                       config_hash=chash)


def translate(system: System, sample: Tensor, direction: str = "x2y") -> Tensor:
    """Map one sample with the generator for a direction (G both ways in one2one mode)"""
    if direction not in ("x2y", "y2x"):
        raise ValueError(f"direction must be 'x2y' or 'y2x', got '{direction}'")
    model = system.F if direction == "y2x" and isinstance(system, BaselineSystem) else system.G
    if tuple(sample.shape) != tuple(model.spec.input_shape):
        raise DimensionError("translate: sample does not fit the generator", sample.shape, model.spec.input_shape)
    with no_grad():
        return forward(model, sample)
