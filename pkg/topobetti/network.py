"""
Network Architecture, Parameters and Forward/Backward Passes

A small numpy network stack: dense and convolutional layers, max pooling,
flattening and a softmax or sigmoid output. Every pass keeps the
post-activation tensor of every layer, which the Betti experiments and the
filter scorer read.

Tensors are float64; images are (N, C, H, W); dense weights are (in, out).
"""

import copy
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from topobetti.activations import activation_eval, activation_grad, parse_activation
from topobetti.errors import ShapeMismatch
from topobetti.seeding import derive_rng
from topobetti.tensor_io import read_tensor, write_tensor

logger = logging.getLogger(__name__)

MODEL_SPEC_FILE = "model.json"


# Layer descriptors

@dataclass
class DenseSpec:
    in_features: int
    out_features: int
    activation: str = "relu"
    kind: str = field(default="dense", init=False)


@dataclass
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int = 3
    stride: int = 1
    activation: str = "relu"
    kind: str = field(default="conv", init=False)


@dataclass
class MaxPoolSpec:
    k: int = 2
    kind: str = field(default="maxpool", init=False)


@dataclass
class FlattenSpec:
    kind: str = field(default="flatten", init=False)


@dataclass
class OutputSpec:
    classes: int
    output: str = "softmax"
    kind: str = field(default="output", init=False)


LayerSpec = Union[DenseSpec, ConvSpec, MaxPoolSpec, FlattenSpec, OutputSpec]

_LAYER_TYPES = {
    "dense": DenseSpec,
    "conv": ConvSpec,
    "maxpool": MaxPoolSpec,
    "flatten": FlattenSpec,
    "output": OutputSpec,
}


def _layer_from_dict(data: Dict[str, Any]) -> LayerSpec:
    data = dict(data)
    kind = data.pop("kind", None)
    if kind not in _LAYER_TYPES:
        raise ValueError(f"Unknown layer kind '{kind}'")
    return _LAYER_TYPES[kind](**data)


@dataclass
class NetworkSpec:
    """
    Architecture description

    Args:
        input_shape: (features,) for MLPs or (channels, height, width) for CNNs
        layers: Layer descriptors; exactly one OutputSpec, last
        init_seed: Seed of the parameter initialization stream
    """

    input_shape: Tuple[int, ...]
    layers: List[LayerSpec]
    init_seed: int = 0

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        self.layers = [layer if not isinstance(layer, dict) else _layer_from_dict(layer) for layer in self.layers]
        self.shapes()

    def shapes(self) -> List[Tuple[int, ...]]:
        """Per-sample output shape of every layer; raises ShapeMismatch if layers do not compose"""
        outputs = [i for i, layer in enumerate(self.layers) if isinstance(layer, OutputSpec)]
        if outputs != [len(self.layers) - 1]:
            raise ShapeMismatch("A network needs exactly one output layer, and it must be last")

        shape = self.input_shape
        result = []
        for index, layer in enumerate(self.layers):
            if isinstance(layer, DenseSpec):
                if shape != (layer.in_features,):
                    raise ShapeMismatch(f"Layer {index}: dense expects ({layer.in_features},), got {shape}")
                parse_activation(layer.activation)
                shape = (layer.out_features,)
            elif isinstance(layer, ConvSpec):
                if len(shape) != 3 or shape[0] != layer.in_channels:
                    raise ShapeMismatch(f"Layer {index}: conv expects {layer.in_channels} channels, got {shape}")
                parse_activation(layer.activation)
                height = (shape[1] - layer.kernel) // layer.stride + 1
                width = (shape[2] - layer.kernel) // layer.stride + 1
                if height < 1 or width < 1:
                    raise ShapeMismatch(f"Layer {index}: kernel {layer.kernel} larger than input {shape}")
                shape = (layer.out_channels, height, width)
            elif isinstance(layer, MaxPoolSpec):
                if len(shape) != 3 or shape[1] < layer.k or shape[2] < layer.k:
                    raise ShapeMismatch(f"Layer {index}: cannot pool {shape} with k={layer.k}")
                shape = (shape[0], shape[1] // layer.k, shape[2] // layer.k)
            elif isinstance(layer, FlattenSpec):
                shape = (int(np.prod(shape)),)
            else:
                if len(shape) != 1:
                    raise ShapeMismatch(f"Layer {index}: output layer needs a flat input, got {shape}")
                if layer.output not in ("softmax", "sigmoid"):
                    raise ValueError(f"Output must be softmax or sigmoid, got '{layer.output}'")
                if layer.output == "sigmoid" and layer.classes != 2:
                    raise ShapeMismatch("A sigmoid output layer serves exactly 2 classes")
                shape = (layer.classes,)
            result.append(shape)
        return result

    @property
    def classes(self) -> int:
        return self.layers[-1].classes

    def with_activation(self, activation: str, only: Optional[str] = None) -> "NetworkSpec":
        """
        Same architecture with hidden activations replaced

        With `only`, just the layers currently using that activation are
        swapped, so a mixed network keeps its other layers.
        """
        parse_activation(activation)
        target = parse_activation(only) if only is not None else None
        layers = copy.deepcopy(self.layers)
        for layer in layers:
            if isinstance(layer, (DenseSpec, ConvSpec)):
                if target is None or parse_activation(layer.activation) == target:
                    layer.activation = activation
        return NetworkSpec(self.input_shape, layers, self.init_seed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input_shape": list(self.input_shape),
            "layers": [asdict(layer) for layer in self.layers],
            "init_seed": self.init_seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NetworkSpec":
        return cls(
            input_shape=tuple(data["input_shape"]),
            layers=[_layer_from_dict(layer) for layer in data["layers"]],
            init_seed=int(data.get("init_seed", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "NetworkSpec":
        return cls.from_dict(json.loads(text))


def mlp_spec(input_dim: int = 3, hidden_layers: int = 9, width: int = 25, activation: str = "relu",
             classes: int = 2, middle_activation: Optional[str] = None,
             middle_layers: Optional[Sequence[int]] = None, output: str = "softmax",
             init_seed: int = 0) -> NetworkSpec:
    """
    Fully connected classifier, 9 hidden layers of 25 units by default

    If middle_activation is given it replaces `activation` in the hidden
    layers listed in middle_layers (default: the middle third).
    """
    if middle_layers is None:
        third = hidden_layers // 3
        middle_layers = range(third, hidden_layers - third)
    middle = set(middle_layers)
    layers: List[LayerSpec] = []
    fan_in = input_dim
    for index in range(hidden_layers):
        act = middle_activation if (middle_activation and index in middle) else activation
        layers.append(DenseSpec(fan_in, width, act))
        fan_in = width
    layers.append(OutputSpec(classes, output))
    return NetworkSpec((input_dim,), layers, init_seed)


def cnn_spec(input_shape: Tuple[int, int, int] = (1, 28, 28), classes: int = 10, activation: str = "relu",
             middle_activation: Optional[str] = None, channels: Tuple[int, int] = (16, 32),
             hidden: int = 128, init_seed: int = 0) -> NetworkSpec:
    """
    conv 3x3 -> maxpool 2 -> conv 3x3 -> maxpool 2 -> flatten -> dense -> output

    middle_activation, if given, is used by the second convolution.
    """
    c1, c2 = channels
    layers: List[LayerSpec] = [
        ConvSpec(input_shape[0], c1, 3, 1, activation),
        MaxPoolSpec(2),
        ConvSpec(c1, c2, 3, 1, middle_activation or activation),
        MaxPoolSpec(2),
        FlattenSpec(),
    ]
    flat = NetworkSpec(input_shape, layers + [OutputSpec(classes)]).shapes()[-2][0]
    layers += [DenseSpec(flat, hidden, activation), OutputSpec(classes)]
    return NetworkSpec(tuple(input_shape), layers, init_seed)


# Parameters

@dataclass
class Network:
    """Architecture plus one (weight, bias) pair per parameterized layer (None elsewhere)"""

    spec: NetworkSpec
    params: List[Optional[Tuple[np.ndarray, np.ndarray]]]

    def copy(self) -> "Network":
        params = [None if p is None else (p[0].copy(), p[1].copy()) for p in self.params]
        return Network(copy.deepcopy(self.spec), params)

    def num_params(self) -> int:
        return int(sum(w.size + b.size for w, b in (p for p in self.params if p is not None)))

    def conv_layers(self) -> List[int]:
        return [i for i, layer in enumerate(self.spec.layers) if isinstance(layer, ConvSpec)]

    def validate(self) -> None:
        for index, (layer, p) in enumerate(zip(self.spec.layers, self.params)):
            expected = _param_shapes(layer, self.spec.shapes(), index, self.spec.input_shape)
            got = None if p is None else (p[0].shape, p[1].shape)
            if expected != got:
                raise ShapeMismatch(f"Layer {index}: parameter shapes {got} do not match {expected}")
            if p is not None and not (np.all(np.isfinite(p[0])) and np.all(np.isfinite(p[1]))):
                raise ShapeMismatch(f"Layer {index}: non-finite parameters")


def _param_shapes(layer: LayerSpec, shapes, index: int, input_shape):
    in_shape = input_shape if index == 0 else shapes[index - 1]
    if isinstance(layer, DenseSpec):
        return (layer.in_features, layer.out_features), (layer.out_features,)
    if isinstance(layer, ConvSpec):
        return (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel), (layer.out_channels,)
    if isinstance(layer, OutputSpec):
        units = 1 if layer.output == "sigmoid" else layer.classes
        return (in_shape[0], units), (units,)
    return None


def init_network(spec: NetworkSpec) -> Network:
    """
    Seeded initialization: He-uniform for ReLU-family and stacked-sine,
    Xavier-uniform for sigmoid/tanh and the output layer; zero biases
    """
    rng = derive_rng(spec.init_seed, "init")
    shapes = spec.shapes()
    params: List[Optional[Tuple[np.ndarray, np.ndarray]]] = []
    for index, layer in enumerate(spec.layers):
        expected = _param_shapes(layer, shapes, index, spec.input_shape)
        if expected is None:
            params.append(None)
            continue
        w_shape, b_shape = expected
        if isinstance(layer, ConvSpec):
            fan_in = layer.in_channels * layer.kernel ** 2
            fan_out = layer.out_channels * layer.kernel ** 2
        else:
            fan_in, fan_out = w_shape
        activation = getattr(layer, "activation", None)
        if activation is not None and parse_activation(activation).relu_family:
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.append((rng.uniform(-limit, limit, size=w_shape), np.zeros(b_shape)))
    return Network(spec, params)


# Layer passes

def _conv_columns(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    windows = sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, ho, wo = windows.shape[:4]
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kernel * kernel), (n, ho, wo)


def _conv_forward(x, w, b, stride):
    out_ch, _, kernel, _ = w.shape
    cols, (n, ho, wo) = _conv_columns(x, kernel, stride)
    z = cols @ w.reshape(out_ch, -1).T + b
    return z.reshape(n, ho, wo, out_ch).transpose(0, 3, 1, 2)


def _conv_backward(x, w, stride, dz):
    out_ch, in_ch, kernel, _ = w.shape
    cols, (n, ho, wo) = _conv_columns(x, kernel, stride)
    dz_mat = dz.transpose(0, 2, 3, 1).reshape(n * ho * wo, out_ch)
    dw = (dz_mat.T @ cols).reshape(w.shape)
    db = dz_mat.sum(axis=0)
    dcols = (dz_mat @ w.reshape(out_ch, -1)).reshape(n, ho, wo, in_ch, kernel, kernel)
    dx = np.zeros_like(x)
    for i in range(kernel):
        for j in range(kernel):
            dx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[..., i, j].transpose(0, 3, 1, 2)
    return dx, dw, db


def _pool_windows(x, k):
    n, c, h, w = x.shape
    ho, wo = h // k, w // k
    cropped = x[:, :, :ho * k, :wo * k]
    return cropped.reshape(n, c, ho, k, wo, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, k * k)


def _pool_backward(x, k, dout):
    n, c, h, w = x.shape
    ho, wo = h // k, w // k
    windows = _pool_windows(x, k)
    winner = windows.argmax(axis=-1)
    mask = np.zeros_like(windows)
    np.put_along_axis(mask, winner[..., None], 1.0, axis=-1)
    grads = mask * dout[..., None]
    grads = grads.reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * k, wo * k)
    dx = np.zeros_like(x)
    dx[:, :, :ho * k, :wo * k] = grads
    return dx


def _probabilities(logits: np.ndarray, output: str) -> np.ndarray:
    if output == "sigmoid":
        p1 = activation_eval("sigmoid", logits[:, 0])
        return np.column_stack([1.0 - p1, p1])
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


@dataclass
class ForwardResult:
    """Post-activation tensor of every hidden layer, output logits and class probabilities"""

    activations: List[np.ndarray]
    logits: np.ndarray
    probabilities: np.ndarray
    inputs: List[np.ndarray] = field(default_factory=list, repr=False)
    pre_activations: List[Optional[np.ndarray]] = field(default_factory=list, repr=False)


def forward(net: Network, batch: np.ndarray) -> ForwardResult:
    """
    Run a batch through the network

    Args:
        net: Network
        batch: Array of shape (N, *input_shape)

    Returns:
        ForwardResult; activations[i] is the output of layer i for every
        layer but the last
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != len(net.spec.input_shape) + 1 or x.shape[1:] != net.spec.input_shape:
        raise ShapeMismatch(f"Batch shape {x.shape} does not match input shape {net.spec.input_shape}")

    activations, inputs, pre = [], [], []
    logits = None
    for layer, p in zip(net.spec.layers, net.params):
        inputs.append(x)
        if isinstance(layer, DenseSpec):
            z = x @ p[0] + p[1]
            pre.append(z)
            x = activation_eval(layer.activation, z)
        elif isinstance(layer, ConvSpec):
            z = _conv_forward(x, p[0], p[1], layer.stride)
            pre.append(z)
            x = activation_eval(layer.activation, z)
        elif isinstance(layer, MaxPoolSpec):
            pre.append(None)
            x = _pool_windows(x, layer.k).max(axis=-1)
        elif isinstance(layer, FlattenSpec):
            pre.append(None)
            x = x.reshape(x.shape[0], -1)
        else:
            logits = x @ p[0] + p[1]
            pre.append(logits)
            break
        activations.append(x)

    probabilities = _probabilities(logits, net.spec.layers[-1].output)
    return ForwardResult(activations, logits, probabilities, inputs, pre)


def predict(net: Network, data: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Predicted class ids, computed in batches"""
    preds = []
    for start in range(0, len(data), batch_size):
        preds.append(forward(net, data[start:start + batch_size]).probabilities.argmax(axis=1))
    return np.concatenate(preds) if preds else np.empty(0, dtype=np.int64)


def cross_entropy(result: ForwardResult, labels: np.ndarray, output: str) -> float:
    """Mean cross-entropy computed from the logits"""
    logits = result.logits
    if output == "sigmoid":
        z = logits[:, 0]
        return float(np.mean(np.logaddexp(0.0, z) - labels * z))
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_norm - shifted[np.arange(len(labels)), labels]))


def backward(net: Network, result: ForwardResult, labels: np.ndarray):
    """
    Gradients of the mean cross-entropy with respect to every parameter

    Returns:
        List aligned with net.params holding (dW, db) or None
    """
    n = len(labels)
    output = net.spec.layers[-1]
    if output.output == "sigmoid":
        delta = (result.probabilities[:, 1] - labels)[:, None] / n
    else:
        delta = result.probabilities.copy()
        delta[np.arange(n), labels] -= 1.0
        delta /= n

    grads: List[Optional[Tuple[np.ndarray, np.ndarray]]] = [None] * len(net.params)
    grad = delta
    for index in range(len(net.spec.layers) - 1, -1, -1):
        layer, p = net.spec.layers[index], net.params[index]
        x = result.inputs[index]
        if isinstance(layer, OutputSpec):
            grads[index] = (x.T @ grad, grad.sum(axis=0))
            grad = grad @ p[0].T
        elif isinstance(layer, DenseSpec):
            dz = grad * activation_grad(layer.activation, result.pre_activations[index])
            grads[index] = (x.T @ dz, dz.sum(axis=0))
            grad = dz @ p[0].T
        elif isinstance(layer, ConvSpec):
            dz = grad * activation_grad(layer.activation, result.pre_activations[index])
            dx, dw, db = _conv_backward(x, p[0], layer.stride, dz)
            grads[index] = (dw, db)
            grad = dx
        elif isinstance(layer, MaxPoolSpec):
            grad = _pool_backward(x, layer.k, grad)
        else:
            grad = grad.reshape(x.shape)
    return grads


def loss_and_gradients(net: Network, batch: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its parameter gradients for one batch"""
    labels = np.asarray(labels, dtype=np.int64)
    result = forward(net, batch)
    loss = cross_entropy(result, labels, net.spec.layers[-1].output)
    return loss, backward(net, result, labels)


# Persistence

def save_network(net: Network, directory: str) -> List[str]:
    """Write model.json plus one tensor file per weight and bias; returns written paths"""
    os.makedirs(directory, exist_ok=True)
    paths = [os.path.join(directory, MODEL_SPEC_FILE)]
    with open(paths[0], "w", encoding="utf-8", newline="\n") as f:
        f.write(net.spec.to_json())
    for index, p in enumerate(net.params):
        if p is None:
            continue
        for name, array in zip(("weight", "bias"), p):
            path = os.path.join(directory, f"layer{index}_{name}.tnnt")
            write_tensor(path, array)
            paths.append(path)
    logger.info(f"Saved network with {net.num_params()} parameters to {directory}")
    return paths


def load_network(directory: str) -> Network:
    with open(os.path.join(directory, MODEL_SPEC_FILE), "r", encoding="utf-8") as f:
        spec = NetworkSpec.from_json(f.read())
    params: List[Optional[Tuple[np.ndarray, np.ndarray]]] = []
    for index, layer in enumerate(spec.layers):
        if isinstance(layer, (DenseSpec, ConvSpec, OutputSpec)):
            weight = read_tensor(os.path.join(directory, f"layer{index}_weight.tnnt")).astype(np.float64)
            bias = read_tensor(os.path.join(directory, f"layer{index}_bias.tnnt")).astype(np.float64)
            params.append((weight, bias))
        else:
            params.append(None)
    net = Network(spec, params)
    net.validate()
    logger.info(f"Loaded network with {net.num_params()} parameters from {directory}")
    return net


def layer_outputs(net: Network, data: np.ndarray, batch_size: int = 512) -> List[np.ndarray]:
    """Post-activation output of every non-output layer over the whole array, computed in batches"""
    chunks: List[List[np.ndarray]] = []
    for start in range(0, len(data), batch_size):
        result = forward(net, data[start:start + batch_size])
        chunks.append(result.activations)
    if not chunks:
        raise ShapeMismatch("No samples to run through the network")
    return [np.concatenate([chunk[i] for chunk in chunks]) for i in range(len(chunks[0]))]
