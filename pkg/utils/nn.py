"""
Generators and discriminators built on the autodiff primitives.

Two sizes are supported: a ``vector`` multi-layer perceptron for 2-D point
tasks and a ``conv`` encoder-decoder / patch discriminator for tiny images.
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from utils.autodiff import (
    Tensor, conv2d, instance_norm, leaky_relu, matmul, tanh_act, upsample2x
)
from utils.errors import CheckpointError, DimensionError, SpecError

logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.2
INIT_STD = 0.02
CHECKPOINT_FORMAT = "one2one-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GeneratorSpec:
    """
    Shape of a generator.

    ``dims`` is the layer width sequence for ``vector`` generators
    (input, hidden..., output) and the channel progression for ``conv``
    generators; ``height``/``width`` are only used by ``conv``.
    """
    kind: str
    dims: Tuple[int, ...]
    height: int = 0
    width: int = 0

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return _input_shape(self.kind, self.dims, self.height, self.width)

    @property
    def output_shape(self) -> Tuple[int, ...]:
        if self.kind == "vector":
            return (1, self.dims[-1])
        return (self.dims[-1], self.height, self.width)

    def to_dict(self) -> Dict[str, Any]:
        return {"role": "generator", "kind": self.kind, "dims": list(self.dims),
                "height": self.height, "width": self.width}


@dataclass(frozen=True)
class DiscriminatorSpec:
    """
    Shape of a discriminator: ``dims`` as for GeneratorSpec, last entry is
    the score width (vector) or score channels of the patch grid (conv).
    """
    kind: str
    dims: Tuple[int, ...]
    height: int = 0
    width: int = 0

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return _input_shape(self.kind, self.dims, self.height, self.width)

    @property
    def output_shape(self) -> Tuple[int, ...]:
        if self.kind == "vector":
            return (1, self.dims[-1])
        downsample = 2 ** (len(self.dims) - 2)
        return (self.dims[-1], self.height // downsample, self.width // downsample)

    def to_dict(self) -> Dict[str, Any]:
        return {"role": "discriminator", "kind": self.kind, "dims": list(self.dims),
                "height": self.height, "width": self.width}


ModelSpec = Union[GeneratorSpec, DiscriminatorSpec]


def spec_from_dict(data: Dict[str, Any]) -> ModelSpec:
    role = data.get("role")
    cls = {"generator": GeneratorSpec, "discriminator": DiscriminatorSpec}.get(role)
    if cls is None:
        raise SpecError(f"Unknown model role: {role!r}")
    return cls(kind=data["kind"], dims=tuple(int(d) for d in data["dims"]),
               height=int(data.get("height", 0)), width=int(data.get("width", 0)))


def _input_shape(kind: str, dims: Tuple[int, ...], height: int, width: int) -> Tuple[int, ...]:
    if kind == "vector":
        return (1, dims[0])
    return (dims[0], height, width)


@dataclass
class Model:
    """An ordered set of named parameters plus the spec that defines the forward pass"""
    spec: ModelSpec
    parameters: Dict[str, Tensor] = field(default_factory=dict)

    @property
    def role(self) -> str:
        return "generator" if isinstance(self.spec, GeneratorSpec) else "discriminator"

    def __call__(self, x: Tensor) -> Tensor:
        return forward(self, x)

    def parameter_list(self) -> List[Tensor]:
        return list(self.parameters.values())

    def zero_grad(self) -> None:
        for param in self.parameters.values():
            param.grad = None


@dataclass(frozen=True)
class _ConvLayer:
    c_in: int
    c_out: int
    kernel: int
    stride: int
    pad: int
    upsample: bool = False
    norm: bool = True
    bias: bool = False
    activation: str = "leaky"


def _generator_conv_layers(dims: Tuple[int, ...]) -> List[_ConvLayer]:
    # stem at full resolution, n_down stride-2 encoders, n_down upsampling
    # decoders, stride-1 fill, then a biased tanh output layer
    n_layers = len(dims) - 1
    n_down = max(0, (n_layers - 2) // 2)
    layers = []
    for i in range(n_layers):
        c_in, c_out = dims[i], dims[i + 1]
        if i == n_layers - 1:
            layers.append(_ConvLayer(c_in, c_out, 3, 1, 1, norm=False, bias=True, activation="tanh"))
        elif 1 <= i <= n_down:
            layers.append(_ConvLayer(c_in, c_out, 3, 2, 1))
        elif n_down < i <= 2 * n_down:
            layers.append(_ConvLayer(c_in, c_out, 3, 1, 1, upsample=True))
        else:
            layers.append(_ConvLayer(c_in, c_out, 3, 1, 1))
    return layers


def _discriminator_conv_layers(dims: Tuple[int, ...]) -> List[_ConvLayer]:
    n_layers = len(dims) - 1
    layers = []
    for i in range(n_layers):
        c_in, c_out = dims[i], dims[i + 1]
        if i == n_layers - 1:
            layers.append(_ConvLayer(c_in, c_out, 3, 1, 1, norm=False, bias=True, activation="none"))
        elif i == 0:
            # no normalization on the first layer
            layers.append(_ConvLayer(c_in, c_out, 4, 2, 1, norm=False, bias=True))
        else:
            layers.append(_ConvLayer(c_in, c_out, 4, 2, 1))
    return layers


def _conv_layers(spec: ModelSpec) -> List[_ConvLayer]:
    if isinstance(spec, GeneratorSpec):
        return _generator_conv_layers(spec.dims)
    return _discriminator_conv_layers(spec.dims)


def validate_spec(spec: ModelSpec) -> None:
    """
    Check that a spec describes a buildable network.

    Raises:
        SpecError: for unknown kinds, non-positive sizes, generators whose
            input and output sizes differ, or spatial sizes the conv stack
            cannot halve cleanly
    """
    if spec.kind not in ("vector", "conv"):
        raise SpecError(f"Unknown network kind: {spec.kind!r}")
    if len(spec.dims) < 2 or any(d <= 0 for d in spec.dims):
        raise SpecError(f"Network dims must list at least two positive sizes, got {spec.dims}")
    if isinstance(spec, GeneratorSpec) and spec.dims[0] != spec.dims[-1]:
        raise SpecError(f"Generator input and output sizes differ ({spec.dims[0]} vs {spec.dims[-1]}); "
                        f"G(G(x)) would not be defined")
    if spec.kind == "vector":
        return

    if spec.height <= 0 or spec.width <= 0:
        raise SpecError(f"Conv networks need positive height and width, got {spec.height}×{spec.width}")
    h, w = spec.height, spec.width
    for index, layer in enumerate(_conv_layers(spec)):
        if layer.upsample:
            h, w = h * 2, w * 2
        if layer.stride == 2:
            if h % 2 or w % 2:
                raise SpecError(f"Layer {index} halves a {h}×{w} map; sizes must be even")
            h, w = h // 2, w // 2
        if layer.norm and h * w < 2:
            raise SpecError(f"Layer {index} normalizes a {h}×{w} map; at least 2 cells are needed")


def _parameter_shapes(spec: ModelSpec) -> List[Tuple[str, Tuple[int, ...]]]:
    shapes = []
    if spec.kind == "vector":
        for i in range(len(spec.dims) - 1):
            shapes.append((f"layer{i}.weight", (spec.dims[i], spec.dims[i + 1])))
            shapes.append((f"layer{i}.bias", (1, spec.dims[i + 1])))
        return shapes
    for i, layer in enumerate(_conv_layers(spec)):
        shapes.append((f"layer{i}.weight", (layer.c_out, layer.c_in, layer.kernel, layer.kernel)))
        if layer.bias:
            shapes.append((f"layer{i}.bias", (layer.c_out,)))
    return shapes


def _build(spec: ModelSpec, seed: int) -> Model:
    validate_spec(spec)
    rng = np.random.default_rng(seed)
    parameters = {
        name: Tensor(rng.normal(0.0, INIT_STD, size=shape), requires_grad=True, name=name)
        for name, shape in _parameter_shapes(spec)
    }
    return Model(spec=spec, parameters=parameters)


def build_generator(spec: GeneratorSpec, seed: int) -> Model:
    """
    Build a generator with Normal(0, 0.02) parameters.

    Args:
        spec: Generator shape; input and output sizes must match
        seed: Seed for parameter initialization

    Returns:
        Model whose output shape equals its input shape
    """
    if not isinstance(spec, GeneratorSpec):
        raise SpecError(f"build_generator expects a GeneratorSpec, got {type(spec).__name__}")
    model = _build(spec, seed)
    logger.debug(f"Built {spec.kind} generator {spec.dims} with {param_count(model)} parameters")
    return model


def build_discriminator(spec: DiscriminatorSpec, seed: int) -> Model:
    """
    Build a discriminator (MLP score or patch score grid), Normal(0, 0.02) init.
    """
    if not isinstance(spec, DiscriminatorSpec):
        raise SpecError(f"build_discriminator expects a DiscriminatorSpec, got {type(spec).__name__}")
    model = _build(spec, seed)
    logger.debug(f"Built {spec.kind} discriminator {spec.dims} with {param_count(model)} parameters")
    return model


def forward(model: Model, x: Tensor) -> Tensor:
    """
    Run a model on one sample.

    Raises:
        DimensionError: if x does not have the spec's input shape
    """
    spec = model.spec
    if x.shape != spec.input_shape:
        raise DimensionError(f"{model.role} expects input of shape {spec.input_shape}", x.shape)
    params = model.parameters
    is_generator = isinstance(spec, GeneratorSpec)

    if spec.kind == "vector":
        h = x
        last = len(spec.dims) - 2
        for i in range(last + 1):
            h = matmul(h, params[f"layer{i}.weight"]) + params[f"layer{i}.bias"]
            if i < last:
                h = leaky_relu(h, LEAKY_SLOPE)
            elif is_generator:
                h = tanh_act(h)
        return h

    h = x
    for i, layer in enumerate(_conv_layers(spec)):
        if layer.upsample:
            h = upsample2x(h)
        bias = params[f"layer{i}.bias"] if layer.bias else None
        h = conv2d(h, params[f"layer{i}.weight"], stride=layer.stride, pad=layer.pad, bias=bias)
        if layer.norm:
            h = instance_norm(h)
        if layer.activation == "leaky":
            h = leaky_relu(h, LEAKY_SLOPE)
        elif layer.activation == "tanh":
            h = tanh_act(h)
    return h


def param_count(model: Model) -> int:
    return sum(p.size for p in model.parameters.values())


def save_checkpoint(path: Union[str, Path], models: Dict[str, Model], metadata: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write models to a new checkpoint file (never overwrites).

    The container is UTF-8 JSON: a format tag and version, free-form
    metadata, then for every model its producing spec and its parameters
    in order, each as name, shape and row-major values. Floats use
    Python's shortest round-trip repr, so the text is platform independent
    and loads back bit-exactly.

    Args:
        path: Destination; must not exist yet
        models: Role name (e.g. "G", "D_X") to model
        metadata: Extra JSON-serializable fields (mode, epoch, config hash)

    Returns:
        The path written
    """
    path = Path(path)
    document = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "metadata": metadata or {},
        "models": {
            key: {
                "spec": model.spec.to_dict(),
                "parameters": [
                    {"name": name, "shape": list(p.shape), "values": p.data.reshape(-1).tolist()}
                    for name, p in model.parameters.items()
                ],
            }
            for key, model in models.items()
        },
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "x", encoding="utf-8") as handle:
        handle.write(json.dumps(document, indent=1))
        handle.write("\n")
    logger.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, Model], Dict[str, Any]]:
    """
    Read a checkpoint written by save_checkpoint.

    Returns:
        (models by role name, metadata)
    """
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as handle:
            document = json.load(handle)
    except FileNotFoundError:
        raise CheckpointError(f"Checkpoint not found: {path}")
    except json.JSONDecodeError as e:
        raise CheckpointError(f"Checkpoint {path} is not valid JSON: {e}")

    if document.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if document.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path} has unsupported checkpoint version {document.get('version')}")

    models = {}
    for key, entry in document["models"].items():
        try:
            spec = spec_from_dict(entry["spec"])
            validate_spec(spec)
        except (KeyError, SpecError) as e:
            raise CheckpointError(f"{path}: model {key} has an invalid spec: {e}")
        expected = _parameter_shapes(spec)
        stored = entry["parameters"]
        if [(p["name"], tuple(p["shape"])) for p in stored] != expected:
            raise CheckpointError(f"{path}: parameters of model {key} do not match its spec")
        parameters = {
            p["name"]: Tensor(np.array(p["values"], dtype=np.float64).reshape(p["shape"]),
                              requires_grad=True, name=p["name"])
            for p in stored
        }
        models[key] = Model(spec=spec, parameters=parameters)
    return models, document.get("metadata", {})
