"""Feed-forward ReLU networks: containers, evaluation, initialisation, file I/O.

A network is a chain of hidden layers ``v -> max(0, W v + b)`` followed by one
affine output layer.  Weight matrices are row-major: row ``i`` holds the
incoming weights of neuron ``i``.

Model files use the ``relu-mlp-v1`` JSON schema::

    {"format": "relu-mlp-v1",
     "hidden_layers": [{"weights": [[...], ...], "bias": [...]}, ...],
     "output": {"weights": [[...], ...], "bias": [...]}}

Numbers may use scientific notation.  Files written by :func:`save_model`
round-trip bit-exactly because floats are serialised with Python's
shortest-round-trip repr.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatchError, ModelFormatError, NonFiniteError

MODEL_FORMAT = "relu-mlp-v1"


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Layer:
    """One affine layer ``v -> weights @ v + bias``."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise DimensionMismatchError(
                f"layer weights must be a 2-d matrix, got shape {w.shape}"
            )
        if b.shape != (w.shape[0],):
            raise DimensionMismatchError(
                f"bias length {b.shape[0]} does not match {w.shape[0]} neurons"
            )
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise NonFiniteError("layer entries must be finite")
        object.__setattr__(self, "weights", _frozen_array(w))
        object.__setattr__(self, "bias", _frozen_array(b))

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class MLPNetwork:
    """A ReLU network: zero or more hidden layers plus an affine output layer."""

    hidden: tuple[Layer, ...]
    output: Layer

    def __post_init__(self):
        hidden = tuple(self.hidden)
        object.__setattr__(self, "hidden", hidden)
        prev = hidden[0].in_dim if hidden else self.output.in_dim
        for pos, layer in enumerate(hidden):
            if layer.in_dim != prev:
                raise DimensionMismatchError(
                    f"hidden layer {pos} expects {layer.in_dim} inputs, "
                    f"previous width is {prev}"
                )
            prev = layer.out_dim
        if self.output.in_dim != prev:
            raise DimensionMismatchError(
                f"output layer expects {self.output.in_dim} inputs, "
                f"last hidden width is {prev}"
            )

    @property
    def input_dim(self) -> int:
        return self.hidden[0].in_dim if self.hidden else self.output.in_dim

    @property
    def output_dim(self) -> int:
        return self.output.out_dim

    @property
    def depth(self) -> int:
        """Number of hidden (ReLU) layers."""
        return len(self.hidden)

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(layer.out_dim for layer in self.hidden)


@dataclass(frozen=True)
class ActivationPattern:
    """Binary on/off state of every hidden neuron, one 0/1 vector per layer."""

    layers: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        layers = tuple(tuple(int(v) for v in layer) for layer in self.layers)
        for layer in layers:
            if any(v not in (0, 1) for v in layer):
                raise ValueError("pattern entries must be 0 or 1")
        object.__setattr__(self, "layers", layers)

    def bits(self) -> tuple[int, ...]:
        """All layers concatenated; also the canonical sort key."""
        return tuple(v for layer in self.layers for v in layer)

    def __len__(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class Trace:
    """Per-layer post-ReLU activations plus the network output."""

    activations: tuple[np.ndarray, ...]
    output: np.ndarray


def _check_input(net: MLPNetwork, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape != (net.input_dim,):
        raise DimensionMismatchError(
            f"input has length {x.shape[0]}, network expects {net.input_dim}"
        )
    return x


def forward(net: MLPNetwork, x) -> Trace:
    """Evaluate the network at ``x`` and keep every hidden activation."""
    a = _check_input(net, x)
    activations = []
    for layer in net.hidden:
        a = np.maximum(layer.weights @ a + layer.bias, 0.0)
        activations.append(a)
    out = net.output.weights @ a + net.output.bias
    return Trace(tuple(activations), out)


def activation_pattern(net: MLPNetwork, x) -> ActivationPattern:
    """Pattern of ``x``: bit 1 iff the pre-activation is strictly positive.

    Zero pre-activations get bit 0, so points on a neuron's boundary
    belong to the closed side of that neuron's region.
    """
    a = _check_input(net, x)
    layers = []
    for layer in net.hidden:
        z = layer.weights @ a + layer.bias
        layers.append(tuple(int(v) for v in (z > 0.0)))
        a = np.maximum(z, 0.0)
    return ActivationPattern(tuple(layers))


def forward_many(net: MLPNetwork, points) -> np.ndarray:
    """Vectorised forward pass: ``points`` is (N, n), result is (N, m)."""
    a = np.asarray(points, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.input_dim:
        raise DimensionMismatchError(
            f"expected (N, {net.input_dim}) points, got shape {a.shape}"
        )
    for layer in net.hidden:
        a = np.maximum(a @ layer.weights.T + layer.bias, 0.0)
    return a @ net.output.weights.T + net.output.bias


def pattern_matrix(net: MLPNetwork, points) -> np.ndarray:
    """Concatenated pattern bits of many points as a (N, total_neurons) uint8."""
    a = np.asarray(points, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.input_dim:
        raise DimensionMismatchError(
            f"expected (N, {net.input_dim}) points, got shape {a.shape}"
        )
    blocks = []
    for layer in net.hidden:
        z = a @ layer.weights.T + layer.bias
        blocks.append((z > 0.0).astype(np.uint8))
        a = np.maximum(z, 0.0)
    if not blocks:
        return np.zeros((a.shape[0], 0), dtype=np.uint8)
    return np.hstack(blocks)


def random_init(dims: Sequence[int], output_dim: int, seed: int) -> MLPNetwork:
    """Xavier-uniform network: ``dims`` is input width plus hidden widths.

    Weights of a layer with fan-in ``a`` and fan-out ``b`` are drawn uniformly
    from ``[-sqrt(6/(a+b)), +sqrt(6/(a+b))]``; biases are zero.  The same seed
    always produces bit-identical weights.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 1 or any(d < 1 for d in dims) or output_dim < 1:
        raise ValueError("all dimensions must be >= 1")
    rng = np.random.default_rng(seed)

    def draw(fan_out: int, fan_in: int) -> Layer:
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        return Layer(w, np.zeros(fan_out))

    hidden = tuple(draw(dims[i + 1], dims[i]) for i in range(len(dims) - 1))
    output = draw(output_dim, dims[-1])
    return MLPNetwork(hidden, output)


# ---------------------------------------------------------------------------
# File I/O


def _layer_to_jsonable(layer: Layer) -> dict:
    return {"weights": layer.weights.tolist(), "bias": layer.bias.tolist()}


def _layer_from_jsonable(obj, what: str) -> Layer:
    if not isinstance(obj, dict) or "weights" not in obj or "bias" not in obj:
        raise ModelFormatError(f"{what} must be an object with weights and bias")
    weights, bias = obj["weights"], obj["bias"]
    if (
        not isinstance(weights, list)
        or not weights
        or not all(isinstance(row, list) for row in weights)
    ):
        raise ModelFormatError(f"{what} weights must be a non-empty list of rows")
    width = len(weights[0])
    if width < 1 or any(len(row) != width for row in weights):
        raise DimensionMismatchError(f"{what} weight rows have unequal lengths")
    if not isinstance(bias, list):
        raise ModelFormatError(f"{what} bias must be a list")
    for row in weights:
        for v in row:
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ModelFormatError(f"{what} weights must be numbers")
    for v in bias:
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ModelFormatError(f"{what} bias must be numbers")
    return Layer(np.array(weights, dtype=np.float64), np.array(bias, dtype=np.float64))


def _reject_constant(token: str):
    raise NonFiniteError(f"non-finite literal {token!r} is not allowed")


def loads_model(text: str) -> MLPNetwork:
    """Parse a ``relu-mlp-v1`` JSON document."""
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    if doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(
            f"expected format {MODEL_FORMAT!r}, got {doc.get('format')!r}"
        )
    raw_hidden = doc.get("hidden_layers")
    if not isinstance(raw_hidden, list):
        raise ModelFormatError("hidden_layers must be a list")
    hidden = tuple(
        _layer_from_jsonable(item, f"hidden layer {i}")
        for i, item in enumerate(raw_hidden)
    )
    output = _layer_from_jsonable(doc.get("output"), "output layer")
    return MLPNetwork(hidden, output)


def dumps_model(net: MLPNetwork) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "hidden_layers": [_layer_to_jsonable(layer) for layer in net.hidden],
        "output": _layer_to_jsonable(net.output),
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def load_model(path) -> MLPNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_model(fh.read())


def save_model(net: MLPNetwork, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(net))
