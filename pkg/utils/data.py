"""
Synthetic domain pairs with known ground truth, unpaired samplers, and
readers/writers for point CSV files, 8-bit PGM images and dataset manifests.
"""
import configparser
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.ndimage import gaussian_filter
from scipy.spatial.distance import cdist

from utils.autodiff import Tensor
from utils.errors import DimensionError, EmptyDomainError, ParseError, TaskGenerationError

logger = logging.getLogger(__name__)

DEFAULT_GAP = 0.1
MIN_TASK_SIZE = 100
MAX_IMAGE_SIDE = 32

# independent random streams derived from one seed
STREAM_TRAIN_X = 0
STREAM_TRAIN_Y = 1
STREAM_EVAL_X = 2
STREAM_EVAL_Y = 3
STREAM_SHUFFLE = 8

SampleFn = Callable[[int, int], np.ndarray]
MapFn = Callable[[np.ndarray], np.ndarray]


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))


@dataclass(frozen=True)
class GroundTruth:
    """Known bijection between the domains; only evaluation code may use it"""
    forward: MapFn
    inverse: MapFn


@dataclass(frozen=True)
class TrainingData:
    """The part of a task training may see: two unpaired sample sets, no ground truth"""
    name: str
    kind: str
    sample_shape: Tuple[int, ...]
    x_samples: np.ndarray
    y_samples: np.ndarray

    def unpaired_samplers(self, seed) -> Tuple["UnpairedSampler", "UnpairedSampler"]:
        """Samplers over the training sets with independent shuffles (seed: int or SeedSequence)"""
        if isinstance(seed, np.random.SeedSequence):
            sequence = seed
        else:
            # own namespace, so equal data and train seeds never share a stream
            sequence = np.random.SeedSequence(entropy=seed, spawn_key=(STREAM_SHUFFLE,))
        seed_x, seed_y = sequence.spawn(2)
        return (UnpairedSampler(self.x_samples, seed_x, domain="X"),
                UnpairedSampler(self.y_samples, seed_y, domain="Y"))


@dataclass
class DomainTask:
    """
    Two unpaired sample sets plus fresh-draw functions for held-out data.

    Arrays are stacked samples of shape (n, *sample_shape): (n, 1, d) for
    point tasks and (n, c, h, w) for image tasks.
    """
    name: str
    kind: str
    sample_shape: Tuple[int, ...]
    x_samples: np.ndarray
    y_samples: np.ndarray
    sample_x: SampleFn
    sample_y: SampleFn
    truth: Optional[GroundTruth] = None
    margin: Optional[float] = None
    overlapping: bool = False

    def training_data(self) -> TrainingData:
        return TrainingData(self.name, self.kind, self.sample_shape, self.x_samples, self.y_samples)

    def unpaired_samplers(self, seed) -> Tuple["UnpairedSampler", "UnpairedSampler"]:
        return self.training_data().unpaired_samplers(seed)


class UnpairedSampler:
    """
    Visits every stored sample once per epoch in seeded-shuffled order.

    Args:
        samples: Stacked samples of one domain
        seed: Seed (int or SeedSequence) for the shuffles
        domain: Label used in log and error messages
    """

    def __init__(self, samples: np.ndarray, seed, domain: str = "X"):
        self.samples = samples
        self.domain = domain
        self.rng = np.random.default_rng(seed)
        self.order: Optional[np.ndarray] = None
        self.cursor = 0
        self.epoch = 0

    def __len__(self) -> int:
        return len(self.samples)

    def next_batch(self) -> Tensor:
        if len(self.samples) == 0:
            raise EmptyDomainError(f"Domain {self.domain} has no samples")
        if self.order is None or self.cursor >= len(self.order):
            if self.order is not None:
                self.epoch += 1
            self.order = self.rng.permutation(len(self.samples))
            self.cursor = 0
        index = self.order[self.cursor]
        self.cursor += 1
        return Tensor(self.samples[index])


def next_batch(sampler: UnpairedSampler) -> Tensor:
    """One sample (batch size 1) from the sampler"""
    return sampler.next_batch()


def _check_size(n: int) -> None:
    if n < MIN_TASK_SIZE:
        raise ValueError(f"Tasks need at least {MIN_TASK_SIZE} samples per domain, got {n}")


def _assert_margin(name: str, x: np.ndarray, y: np.ndarray, gap: float) -> float:
    distance = float(cdist(x.reshape(len(x), -1), y.reshape(len(y), -1)).min())
    if distance < gap:
        raise TaskGenerationError(f"Task '{name}': domains are only {distance:.4f} apart, "
                                  f"below the required gap {gap}")
    logger.debug(f"Task '{name}': support margin {distance:.4f} (gap {gap})")
    return distance


def _clipped_normal(rng: np.random.Generator, size) -> np.ndarray:
    return np.clip(rng.standard_normal(size), -3.0, 3.0)


def _mixture_points(rng: np.random.Generator, n: int, centers: np.ndarray, sigma: float) -> np.ndarray:
    component = rng.integers(0, len(centers), size=n)
    points = centers[component] + sigma * _clipped_normal(rng, (n, 2))
    return points.reshape(n, 1, 2)


def _point_task(name: str, seed: int, n: int, draw: Callable[[np.random.Generator, int], np.ndarray],
                forward: MapFn, inverse: MapFn, gap: Optional[float], overlapping: bool = False) -> DomainTask:
    x_samples = draw(_rng(seed, STREAM_TRAIN_X), n)
    y_samples = forward(draw(_rng(seed, STREAM_TRAIN_Y), n))
    margin = None if gap is None else _assert_margin(name, x_samples, y_samples, gap)
    return DomainTask(
        name=name,
        kind="vector",
        sample_shape=(1, 2),
        x_samples=x_samples,
        y_samples=y_samples,
        sample_x=lambda s, k: draw(_rng(s, STREAM_EVAL_X), k),
        sample_y=lambda s, k: forward(draw(_rng(s, STREAM_EVAL_Y), k)),
        truth=GroundTruth(forward=forward, inverse=inverse),
        margin=margin,
        overlapping=overlapping,
    )


REFLECTION_CENTERS = np.array([[-0.55, 0.45], [-0.55, -0.45], [-0.35, 0.0]])
REFLECTION_SIGMA = 0.08


def _reflect(points: np.ndarray) -> np.ndarray:
    return points * np.array([-1.0, 1.0])


def make_reflection_task(seed: int, n: int, gap: float = DEFAULT_GAP) -> DomainTask:
    """
    Mirror task: X is a Gaussian mixture in the left half-plane and
    f(u, v) = (−u, v) maps it onto the right half-plane. f is its own inverse.

    Args:
        seed: Data seed
        n: Samples per domain (>= 100)
        gap: Minimum distance required between the two training sets

    Returns:
        DomainTask with ground truth
    """
    _check_size(n)
    return _point_task(
        "reflection", seed, n,
        lambda rng, k: _mixture_points(rng, k, REFLECTION_CENTERS, REFLECTION_SIGMA),
        _reflect, _reflect, gap,
    )


AFFINE_SOURCE_CENTER = np.array([-0.5, 0.0])
AFFINE_TARGET_CENTER = np.array([0.5, 0.0])


def make_affine_task(seed: int, n: int, scale: float = 0.8, angle: float = np.pi / 6,
                     gap: float = DEFAULT_GAP) -> DomainTask:
    """
    Affine task f(p) = A p + b with A a scaled rotation, not an involution.

    A self-inverse G has to learn f on the X support and f⁻¹ on the Y
    support; the translation b keeps the two supports apart.

    Raises:
        TaskGenerationError: if A is (numerically) singular or the supports touch
    """
    _check_size(n)
    cos, sin = np.cos(angle), np.sin(angle)
    matrix = scale * np.array([[cos, -sin], [sin, cos]])
    if abs(np.linalg.det(matrix)) < 1e-6:
        raise TaskGenerationError(f"Affine task: matrix with scale={scale} is singular")
    inverse_matrix = np.linalg.inv(matrix)
    offset = AFFINE_TARGET_CENTER - matrix @ AFFINE_SOURCE_CENTER
    if np.allclose(matrix @ matrix, np.eye(2)):
        logger.warning("Affine task: chosen matrix is an involution, f and f⁻¹ coincide")

    def forward(points: np.ndarray) -> np.ndarray:
        return points @ matrix.T + offset

    def inverse(points: np.ndarray) -> np.ndarray:
        return (points - offset) @ inverse_matrix.T

    centers = AFFINE_SOURCE_CENTER + np.array([[0.0, 0.15], [0.0, -0.15]])
    return _point_task(
        "affine", seed, n,
        lambda rng, k: _mixture_points(rng, k, centers, 0.07),
        forward, inverse, gap,
    )


def make_overlap_task(seed: int, n: int) -> DomainTask:
    """
    Stress task with overlapping supports: X is a centered Gaussian blob and
    f is a quarter turn. A direction-free G cannot tell which way to map
    points in the overlap, so this task is expected to fail.
    """
    _check_size(n)
    rotate = np.array([[0.0, -1.0], [1.0, 0.0]])
    return _point_task(
        "overlap", seed, n,
        lambda rng, k: (0.25 * _clipped_normal(rng, (k, 2))).reshape(k, 1, 2),
        lambda p: p @ rotate.T, lambda p: p @ rotate, gap=None, overlapping=True,
    )


def _blob_images(rng: np.random.Generator, n: int, h: int, w: int) -> np.ndarray:
    # smoothed noise rescaled to [0.1, 0.9] per image
    fields = gaussian_filter(rng.random((n, h, w)), sigma=(0, 2.0, 2.0), mode="wrap")
    low = fields.min(axis=(1, 2), keepdims=True)
    span = fields.max(axis=(1, 2), keepdims=True) - low
    images = 0.1 + 0.8 * (fields - low) / np.where(span > 0, span, 1.0)
    return images.reshape(n, 1, h, w)


def _negate(images: np.ndarray) -> np.ndarray:
    return -images


def make_image_inversion_task(seed: int, n: int, h: int = 16, w: int = 16,
                              gap: float = DEFAULT_GAP) -> DomainTask:
    """
    Intensity inversion of bright smooth blob images: f(x) = −x.

    Y is produced from an independent image stream, so the two training
    sets share no pairs.
    """
    if not (0 < h <= MAX_IMAGE_SIDE and 0 < w <= MAX_IMAGE_SIDE):
        raise ValueError(f"Image side must be within 1..{MAX_IMAGE_SIDE}, got {h}×{w}")
    if n < 1:
        raise ValueError(f"Image task needs at least one sample, got {n}")
    x_samples = _blob_images(_rng(seed, STREAM_TRAIN_X), n, h, w)
    y_samples = _negate(_blob_images(_rng(seed, STREAM_TRAIN_Y), n, h, w))
    margin = _assert_margin("image_inversion", x_samples, y_samples, gap)
    return DomainTask(
        name="image_inversion",
        kind="image",
        sample_shape=(1, h, w),
        x_samples=x_samples,
        y_samples=y_samples,
        sample_x=lambda s, k: _blob_images(_rng(s, STREAM_EVAL_X), k, h, w),
        sample_y=lambda s, k: _negate(_blob_images(_rng(s, STREAM_EVAL_Y), k, h, w)),
        truth=GroundTruth(forward=_negate, inverse=_negate),
        margin=margin,
    )


def _subset_sampler(samples: np.ndarray, stream: int) -> SampleFn:
    def draw(seed: int, k: int) -> np.ndarray:
        rng = _rng(seed, stream)
        return samples[rng.choice(len(samples), size=min(k, len(samples)), replace=False)]
    return draw


def load_points_csv(path: Union[str, Path]) -> np.ndarray:
    """
    Read points, one sample per line as comma-separated decimals.

    Blank lines and lines starting with '#' are skipped.

    Returns:
        Array of shape (n, 1, d): one row tensor per point

    Raises:
        ParseError: on ragged or non-numeric rows (with the line number)
    """
    rows: List[List[float]] = []
    arity = None
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = text.split(",")
            if arity is None:
                arity = len(fields)
            elif len(fields) != arity:
                raise ParseError(path, line_no, f"expected {arity} values, found {len(fields)}")
            try:
                rows.append([float(f) for f in fields])
            except ValueError:
                raise ParseError(path, line_no, f"non-numeric value in row {text!r}")
    if not rows:
        raise ParseError(path, None, "no points found")
    return np.array(rows, dtype=np.float64).reshape(len(rows), 1, arity)


def save_points_csv(path: Union[str, Path], points: np.ndarray, comment: Optional[str] = None) -> Path:
    """Write points (n, 1, d) or (n, d) to a new CSV file loadable by load_points_csv"""
    path = Path(path)
    points = np.asarray(points, dtype=np.float64)
    frame = pd.DataFrame(points.reshape(len(points), -1))
    with open(path, "x", encoding="utf-8", newline="") as handle:
        if comment:
            handle.write(f"# {comment}\n")
        frame.to_csv(handle, header=False, index=False)
    return path


def _pgm_tokens(raw: bytes, pos: int, line: int, count: int, path) -> Tuple[List[Tuple[bytes, int]], int, int]:
    tokens = []
    while len(tokens) < count:
        if pos >= len(raw):
            raise ParseError(path, line, "unexpected end of file")
        ch = raw[pos:pos + 1]
        if ch == b"#":
            end = raw.find(b"\n", pos)
            pos = len(raw) if end < 0 else end
        elif ch.isspace():
            if ch == b"\n":
                line += 1
            pos += 1
        else:
            start = pos
            while pos < len(raw) and not raw[pos:pos + 1].isspace() and raw[pos:pos + 1] != b"#":
                pos += 1
            tokens.append((raw[start:pos], line))
    return tokens, pos, line


def _pgm_int(token: Tuple[bytes, int], what: str, path) -> int:
    text, line = token
    try:
        return int(text)
    except ValueError:
        raise ParseError(path, line, f"invalid {what} {text!r}")


def load_pgm(path: Union[str, Path]) -> Tensor:
    """
    Read a P2 (plain) or P5 (binary) PGM with maxval 255.

    Returns:
        Tensor of shape (1, h, w) with pixels mapped linearly to [−1, 1]
    """
    with open(path, "rb") as handle:
        raw = handle.read()
    header, pos, line = _pgm_tokens(raw, 0, 1, 4, path)
    magic = header[0][0]
    if magic not in (b"P2", b"P5"):
        raise ParseError(path, header[0][1], f"unsupported magic {magic!r}, expected P2 or P5")
    width = _pgm_int(header[1], "width", path)
    height = _pgm_int(header[2], "height", path)
    maxval = _pgm_int(header[3], "maxval", path)
    if width <= 0 or height <= 0:
        raise ParseError(path, header[1][1], f"invalid size {width}×{height}")
    if maxval != 255:
        raise ParseError(path, header[3][1], f"maxval must be 255, got {maxval}")

    count = width * height
    if magic == b"P5":
        start = pos + 1
        if len(raw) < start + count:
            raise ParseError(path, line, f"expected {count} pixel bytes, found {max(0, len(raw) - start)}")
        pixels = np.frombuffer(raw, dtype=np.uint8, count=count, offset=start).astype(np.float64)
    else:
        tokens, _, _ = _pgm_tokens(raw, pos, line, count, path)
        values = [_pgm_int(t, "pixel", path) for t in tokens]
        for value, (_, token_line) in zip(values, tokens):
            if not 0 <= value <= 255:
                raise ParseError(path, token_line, f"pixel {value} outside 0..255")
        pixels = np.array(values, dtype=np.float64)
    return Tensor((pixels / 127.5 - 1.0).reshape(1, height, width))


def save_pgm(path: Union[str, Path], image: Union[Tensor, np.ndarray], comment: Optional[str] = None) -> Path:
    """Write a (1, h, w) or (h, w) image in [−1, 1] as a new binary P5 PGM"""
    path = Path(path)
    data = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    if data.ndim == 3:
        if data.shape[0] != 1:
            raise DimensionError("PGM holds a single channel", data.shape)
        data = data[0]
    if data.ndim != 2:
        raise DimensionError("PGM needs a 2-D image", data.shape)
    pixels = np.clip(np.rint((data + 1.0) * 127.5), 0, 255).astype(np.uint8)
    height, width = pixels.shape
    header = b"P5\n"
    if comment:
        header += f"# {comment}\n".encode("ascii", "replace")
    header += f"{width} {height}\n255\n".encode("ascii")
    with open(path, "xb") as handle:
        handle.write(header + pixels.tobytes())
    return path


def _load_domain(kind: str, source: Path, manifest: Path) -> np.ndarray:
    if kind == "vector":
        return load_points_csv(source)
    files = sorted(source.glob("*.pgm"))
    if not files:
        raise ParseError(manifest, None, f"no .pgm files in {source}")
    images = [load_pgm(f).data for f in files]
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise ParseError(manifest, None, f"images in {source} have differing sizes {sorted(shapes)}")
    return np.stack(images)


def load_manifest(path: Union[str, Path]) -> DomainTask:
    """
    Build a DomainTask from user data described by an INI manifest.

    The [dataset] section names ``kind`` (points or image), ``x`` and ``y``
    (a CSV file per domain for points, a directory of PGM files per domain
    for images), and optionally ``name`` and ``shape``. Relative paths are
    resolved against the manifest's directory. File tasks have no ground
    truth.
    """
    path = Path(path)
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except configparser.Error as e:
        raise ParseError(path, getattr(e, "lineno", None), str(e))
    if not parser.has_section("dataset"):
        raise ParseError(path, None, "missing [dataset] section")
    section = parser["dataset"]
    kind = {"points": "vector", "image": "image"}.get(section.get("kind", "").strip())
    if kind is None:
        raise ParseError(path, None, "kind must be 'points' or 'image'")
    for key in ("x", "y"):
        if key not in section:
            raise ParseError(path, None, f"missing key '{key}'")

    x_samples = _load_domain(kind, path.parent / section["x"], path)
    y_samples = _load_domain(kind, path.parent / section["y"], path)
    if x_samples.shape[1:] != y_samples.shape[1:]:
        raise ParseError(path, None, f"X samples {x_samples.shape[1:]} and Y samples "
                                     f"{y_samples.shape[1:]} differ in shape")
    sample_shape = tuple(x_samples.shape[1:])
    if "shape" in section:
        declared = tuple(int(s) for s in section["shape"].split(","))
        if declared != sample_shape:
            raise ParseError(path, None, f"declared shape {declared} but files hold {sample_shape}")
    name = section.get("name", path.stem)
    logger.info(f"Loaded dataset '{name}': {len(x_samples)} X and {len(y_samples)} Y samples of shape {sample_shape}")
    return DomainTask(
        name=name,
        kind=kind,
        sample_shape=sample_shape,
        x_samples=x_samples,
        y_samples=y_samples,
        sample_x=_subset_sampler(x_samples, STREAM_EVAL_X),
        sample_y=_subset_sampler(y_samples, STREAM_EVAL_Y),
    )


def make_task(task_config, seed: int, base_dir: Union[str, Path] = ".") -> DomainTask:
    """
    Build the task a run config's [task] section names.

    Args:
        task_config: The [task] section (name, n, height, width, gap, scale, angle, manifest)
        seed: Data seed
        base_dir: Directory relative manifest paths are resolved against
    """
    name = task_config.name
    if name == "reflection":
        return make_reflection_task(seed, task_config.n, gap=task_config.gap)
    if name == "affine":
        return make_affine_task(seed, task_config.n, scale=task_config.scale, angle=task_config.angle,
                                gap=task_config.gap)
    if name == "overlap":
        return make_overlap_task(seed, task_config.n)
    if name == "image_inversion":
        return make_image_inversion_task(seed, task_config.n, h=task_config.height, w=task_config.width,
                                         gap=task_config.gap)
    if name == "manifest":
        manifest = Path(task_config.manifest)
        if not manifest.is_absolute():
            manifest = Path(base_dir) / manifest
        return load_manifest(manifest)
    raise ValueError(f"Unknown task '{name}'")
