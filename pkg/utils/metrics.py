"""
Evaluation metrics: PSNR and SSIM image quality, plus the one-to-one
diagnostics (self-inverse residual, injectivity score, bias gap).
"""
import logging
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy.signal import correlate2d
from scipy.spatial.distance import pdist

from utils.autodiff import Tensor, no_grad
from utils.data import DomainTask
from utils.errors import DimensionError, MetricUnavailableError
from utils.nn import Model

logger = logging.getLogger(__name__)

PSNR_CAP = 99.0
SSIM_WINDOW = 7
SSIM_SIGMA = 1.5
DATA_RANGE = 2.0
EPS_IN_FACTOR = 0.1
EPS_OUT_FACTOR = 0.01

Mapping = Union[Model, Callable[[np.ndarray], np.ndarray]]


@dataclass
class MetricsReport:
    """One evaluation of a system on held-out data, both directions"""
    epoch: int
    mode: str
    psnr_x2y: Optional[float]
    psnr_y2x: Optional[float]
    ssim_x2y: Optional[float]
    ssim_y2x: Optional[float]
    self_inverse_residual: float
    residual_x: float
    residual_y: float
    residual_label: str
    injectivity_score: Optional[float]
    eps_in: Optional[float]
    eps_out: Optional[float]
    bias_gap_x2y: Optional[float]
    bias_gap_y2x: Optional[float]
    n_eval: int
    seed: int


def metrics_to_row(report: MetricsReport, config_hash: str = "") -> Dict[str, Any]:
    row = asdict(report)
    row["config_hash"] = config_hash
    return row


def apply_mapping(mapping: Mapping, samples: np.ndarray) -> np.ndarray:
    """
    Apply a model (one sample at a time, no tape recording) or a plain
    array function to a stack of samples.
    """
    if isinstance(mapping, Model):
        with no_grad():
            return np.stack([mapping(Tensor(s)).data for s in samples])
    return np.asarray(mapping(samples), dtype=np.float64)


def psnr(a: Union[Tensor, np.ndarray], b: Union[Tensor, np.ndarray], data_range: float = DATA_RANGE) -> float:
    """
    Peak signal-to-noise ratio 10·log10(range²/MSE) in dB, capped at 99 dB.
    """
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise DimensionError("psnr: inputs must have equal shapes", a.shape, b.shape)
    if data_range <= 0:
        raise ValueError(f"psnr: data_range must be positive, got {data_range}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(data_range ** 2 / mse)))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    coords = np.arange(size) - (size - 1) / 2.0
    profile = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    window = np.outer(profile, profile)
    return window / window.sum()


def ssim(a: Union[Tensor, np.ndarray], b: Union[Tensor, np.ndarray], data_range: float = DATA_RANGE,
         window: int = SSIM_WINDOW) -> float:
    """
    Mean structural similarity over all fully-contained Gaussian windows.

    Args:
        a: Image of shape (h, w) or (c, h, w)
        b: Image of the same shape
        data_range: Dynamic range of pixel values
        window: Side of the Gaussian window (σ = 1.5)

    Returns:
        Mean local SSIM, averaged over channels, within [−1, 1]
    """
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise DimensionError("ssim: inputs must have equal shapes", a.shape, b.shape)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise DimensionError("ssim: expected (h, w) or (c, h, w) images", a.shape)
    if a.shape[1] < window or a.shape[2] < window:
        raise DimensionError(f"ssim: image smaller than the {window}×{window} window", a.shape)

    kernel = gaussian_window(window)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    scores = []
    for img_a, img_b in zip(a, b):
        mu_a = correlate2d(img_a, kernel, mode="valid")
        mu_b = correlate2d(img_b, kernel, mode="valid")
        var_a = correlate2d(img_a * img_a, kernel, mode="valid") - mu_a * mu_a
        var_b = correlate2d(img_b * img_b, kernel, mode="valid") - mu_b * mu_b
        cov = correlate2d(img_a * img_b, kernel, mode="valid") - mu_a * mu_b
        numerator = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        denominator = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
        scores.append(np.mean(numerator / denominator))
    return float(np.clip(np.mean(scores), -1.0, 1.0))


def _as_array(value: Union[Tensor, np.ndarray]) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)


def _per_sample_l1(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b).reshape(len(a), -1).mean(axis=1)


def self_inverse_residual(G: Mapping, samples: np.ndarray) -> float:
    """
    Mean over samples of the L1 distance between G(G(z)) and z.

    Zero exactly when G is an involution on the sample set.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) == 0:
        raise ValueError("self_inverse_residual: no samples")
    return float(_per_sample_l1(apply_mapping(G, apply_mapping(G, samples)), samples).mean())


def composite_residual(first: Mapping, second: Mapping, samples: np.ndarray) -> float:
    """Mean L1 distance between second(first(z)) and z, e.g. F∘G for two generators"""
    samples = np.asarray(samples, dtype=np.float64)
    return float(_per_sample_l1(apply_mapping(second, apply_mapping(first, samples)), samples).mean())


def default_epsilons(inputs: np.ndarray, targets: np.ndarray) -> Tuple[float, float]:
    """ε_in = 0.1 × median input distance, ε_out = 0.01 × median target distance"""
    eps_in = EPS_IN_FACTOR * float(np.median(pdist(inputs.reshape(len(inputs), -1))))
    eps_out = EPS_OUT_FACTOR * float(np.median(pdist(targets.reshape(len(targets), -1))))
    return eps_in, eps_out


def injectivity_score(G: Mapping, samples: np.ndarray, eps_in: float, eps_out: float) -> float:
    """
    Fraction of sample pairs that G collapses: inputs farther apart than
    ε_in whose outputs land closer than ε_out.

    Returns:
        Collision rate in [0, 1]; 0 means injective at these scales
    """
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < 2:
        raise ValueError(f"injectivity_score: need at least 2 samples, got {len(samples)}")
    if not eps_in > eps_out > 0:
        raise ValueError(f"injectivity_score: need eps_in > eps_out > 0, got {eps_in}, {eps_out}")
    outputs = apply_mapping(G, samples)
    input_distance = pdist(samples.reshape(len(samples), -1))
    output_distance = pdist(outputs.reshape(len(outputs), -1))
    collisions = np.count_nonzero((input_distance > eps_in) & (output_distance < eps_out))
    return collisions / len(input_distance)


def _sample_distance(kind: str, predicted: np.ndarray, targets: np.ndarray) -> np.ndarray:
    if kind == "image":
        return _per_sample_l1(predicted, targets)
    return np.linalg.norm((predicted - targets).reshape(len(targets), -1), axis=1)


def _direction_data(task: DomainTask, direction: str, n_eval: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    if task.truth is None:
        raise MetricUnavailableError(f"Task '{task.name}' has no ground-truth oracle; bias gap is unavailable")
    if direction == "x2y":
        inputs = task.sample_x(seed, n_eval)
        return inputs, task.truth.forward(inputs)
    if direction == "y2x":
        inputs = task.sample_y(seed, n_eval)
        return inputs, task.truth.inverse(inputs)
    raise ValueError(f"direction must be 'x2y' or 'y2x', got {direction!r}")


def bias_gap(G: Mapping, task: DomainTask, direction: str = "x2y", n_eval: int = 200, seed: int = 0) -> float:
    """
    Mean distance between G's translation and the ground-truth target
    (L2 for point tasks, mean L1 for image tasks) on held-out samples.

    Raises:
        MetricUnavailableError: if the task has no ground truth
    """
    inputs, targets = _direction_data(task, direction, n_eval, seed)
    return float(_sample_distance(task.kind, apply_mapping(G, inputs), targets).mean())


def _quality(kind: str, predicted: np.ndarray, targets: np.ndarray) -> Tuple[float, Optional[float]]:
    if kind != "image":
        return psnr(predicted, targets), None
    psnr_value = float(np.mean([psnr(p, t) for p, t in zip(predicted, targets)]))
    window = min(SSIM_WINDOW, *targets.shape[-2:])
    ssim_value = float(np.mean([ssim(p, t, window=window) for p, t in zip(predicted, targets)]))
    return psnr_value, ssim_value


def evaluate(system, task: DomainTask, n_eval: int = 200, seed: int = 0, epoch: int = 0) -> MetricsReport:
    """
    Score a frozen system on a held-out set drawn with ``seed``.

    One2one systems use G in both directions and report the G∘G residual;
    baseline systems use G for X→Y and F for Y→X and report the F∘G and
    G∘F cycle residuals. Truth-dependent fields are None for tasks
    without ground truth.
    """
    G = system.G
    back = getattr(system, "F", G)
    mode = "baseline" if back is not G else "one2one"

    x_eval = task.sample_x(seed, n_eval)
    y_eval = task.sample_y(seed, n_eval)
    if mode == "one2one":
        residual_x = self_inverse_residual(G, x_eval)
        residual_y = self_inverse_residual(G, y_eval)
        label = "G∘G"
    else:
        residual_x = composite_residual(G, back, x_eval)
        residual_y = composite_residual(back, G, y_eval)
        label = "F∘G|G∘F"

    fields: Dict[str, Any] = dict.fromkeys(
        ("psnr_x2y", "psnr_y2x", "ssim_x2y", "ssim_y2x", "injectivity_score", "eps_in", "eps_out",
         "bias_gap_x2y", "bias_gap_y2x"))
    if task.truth is None:
        logger.warning(f"Task '{task.name}' has no ground truth; skipping PSNR, SSIM, bias gap and injectivity")
    else:
        x_targets = task.truth.forward(x_eval)
        y_targets = task.truth.inverse(y_eval)
        x_pred = apply_mapping(G, x_eval)
        y_pred = apply_mapping(back, y_eval)
        fields["psnr_x2y"], fields["ssim_x2y"] = _quality(task.kind, x_pred, x_targets)
        fields["psnr_y2x"], fields["ssim_y2x"] = _quality(task.kind, y_pred, y_targets)
        fields["bias_gap_x2y"] = float(_sample_distance(task.kind, x_pred, x_targets).mean())
        fields["bias_gap_y2x"] = float(_sample_distance(task.kind, y_pred, y_targets).mean())
        eps_in, eps_out = default_epsilons(x_eval, x_targets)
        fields["eps_in"], fields["eps_out"] = eps_in, eps_out
        if eps_in > eps_out > 0:
            fields["injectivity_score"] = injectivity_score(G, x_eval, eps_in, eps_out)
        else:
            logger.warning(f"Injectivity scales degenerate (eps_in={eps_in}, eps_out={eps_out}); score skipped")

    report = MetricsReport(
        epoch=epoch,
        mode=mode,
        self_inverse_residual=(residual_x + residual_y) / 2.0,
        residual_x=residual_x,
        residual_y=residual_y,
        residual_label=label,
        n_eval=n_eval,
        seed=seed,
        **fields,
    )
    logger.info(f"Eval epoch {epoch}: residual {report.self_inverse_residual:.4f}, "
                f"bias gap {report.bias_gap_x2y}/{report.bias_gap_y2x}, injectivity {report.injectivity_score}")
    return report


Evaluator = Callable[[Any, int], MetricsReport]


def held_out_evaluator(task: DomainTask, n_eval: int = 200, seed: int = 0) -> Evaluator:
    """
    Bind a task's held-out draws to ``evaluate`` so a training loop can
    score its system by epoch without holding the task itself.
    """
    def run(system, epoch: int) -> MetricsReport:
        with no_grad():
            return evaluate(system, task, n_eval=n_eval, seed=seed, epoch=epoch)
    return run
