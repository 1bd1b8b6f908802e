"""
Adam optimizer and the constant-then-linear-decay learning rate schedule.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from utils.autodiff import Tensor
from utils.errors import DimensionError

logger = logging.getLogger(__name__)

MAX_STEPS = np.iinfo(np.int64).max

# (fixed_epochs, decay_epochs) budgets used for the published datasets
SCHEDULE_PRESETS: Dict[str, tuple] = {
    "standard": (100, 100),
    "brief": (4, 3),
    "extended": (90, 30),
}


@dataclass
class AdamState:
    """First/second moments per parameter and the step counter"""
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_parameters(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls(m=[np.zeros(p.shape) for p in params], v=[np.zeros(p.shape) for p in params], t=0)


@dataclass(frozen=True)
class Schedule:
    base_lr: float = 2e-4
    fixed_epochs: int = 100
    decay_epochs: int = 100

    @classmethod
    def preset(cls, name: str, base_lr: float = 2e-4) -> "Schedule":
        if name not in SCHEDULE_PRESETS:
            raise ValueError(f"Unknown schedule preset '{name}'; choose from {sorted(SCHEDULE_PRESETS)}")
        fixed, decay = SCHEDULE_PRESETS[name]
        return cls(base_lr=base_lr, fixed_epochs=fixed, decay_epochs=decay)

    @property
    def total_epochs(self) -> int:
        return self.fixed_epochs + self.decay_epochs


def adam_step(params: Sequence[np.ndarray], grads: Sequence[Optional[np.ndarray]], state: AdamState,
              lr: float, beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8) -> List[np.ndarray]:
    """
    One bias-corrected Adam update.

    Args:
        params: Current parameter arrays
        grads: Gradients aligned with params (None is treated as zero)
        state: Moments and step count, updated in place
        lr: Step size (>= 0)
        beta1: First-moment decay
        beta2: Second-moment decay
        eps: Denominator offset

    Returns:
        New parameter arrays (inputs are not modified)
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError(f"adam_step: {len(params)} params, {len(grads)} grads, "
                             f"{len(state.m)} moment slots")
    if lr < 0:
        raise ValueError(f"adam_step: lr must be >= 0, got {lr}")
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ValueError(f"adam_step: betas must lie in [0, 1), got {beta1}, {beta2}")
    if state.t >= MAX_STEPS:
        raise OverflowError(f"adam_step: step counter exhausted at t={state.t}")

    grads = [np.zeros_like(param) if grad is None else grad for param, grad in zip(params, grads)]
    for i, (param, grad) in enumerate(zip(params, grads)):
        if grad.shape != param.shape or state.m[i].shape != param.shape or state.v[i].shape != param.shape:
            raise DimensionError(f"adam_step: slot {i} shapes disagree", param.shape, grad.shape, state.m[i].shape)

    state.t += 1
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t
    updated = []
    for i, (param, grad) in enumerate(zip(params, grads)):
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad * grad
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        updated.append(param - lr * m_hat / (np.sqrt(v_hat) + eps))
    return updated


def lr_at(schedule: Schedule, epoch: int) -> float:
    """
    Learning rate for an epoch: base_lr for the first fixed_epochs, then a
    linear ramp reaching 0 at fixed_epochs + decay_epochs, 0 afterwards.
    """
    if epoch < 0:
        raise ValueError(f"lr_at: epoch must be >= 0, got {epoch}")
    if epoch < schedule.fixed_epochs:
        return schedule.base_lr
    if schedule.decay_epochs <= 0:
        return 0.0
    remaining = 1.0 - (epoch - schedule.fixed_epochs) / schedule.decay_epochs
    return schedule.base_lr * max(0.0, remaining)


class Adam:
    """Adam bound to a list of parameter tensors; reads their ``grad`` fields"""

    def __init__(self, params: Sequence[Tensor], beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState.for_parameters(self.params)

    @property
    def steps(self) -> int:
        return self.state.t

    def step(self, lr: float) -> None:
        new_values = adam_step([p.data for p in self.params], [p.grad for p in self.params],
                               self.state, lr, self.beta1, self.beta2, self.eps)
        for param, value in zip(self.params, new_values):
            param.data = value

    def zero_grad(self) -> None:
        for param in self.params:
            param.grad = None
