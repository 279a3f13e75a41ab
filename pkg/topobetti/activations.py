"""
Activation Functions

Legacy activations (ReLU, leaky ReLU, sigmoid, tanh) and the stacked-sine
many-to-one activation: the rising part of a sine segment of width c,
repeated on top of a ReLU ramp,

    y(x) = k * sin(c) + sin(x - k * c),  k = floor(x / c),  for x >= 0
    y(x) = 0                                                for x < 0

with c = 3*pi/4 by default. The function is continuous; its derivative jumps
at the knots x = k * c, where the right-derivative is used.
"""

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

STACKED_SINE_WIDTH = 3.0 * math.pi / 4.0

KINDS = ("relu", "leaky_relu", "sigmoid", "tanh", "stacked_sine")

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class ActivationKind:
    """An activation tag with its parameter (alpha for leaky_relu, c for stacked_sine)"""

    tag: str
    alpha: float = 0.01
    c: float = STACKED_SINE_WIDTH

    def __post_init__(self):
        if self.tag not in KINDS:
            raise ValueError(f"Unknown activation '{self.tag}'; expected one of {', '.join(KINDS)}")
        if self.tag == "leaky_relu" and not 0.0 < self.alpha < 1.0:
            raise ValueError(f"Leaky ReLU slope must lie in (0, 1), got {self.alpha}")
        if self.tag == "stacked_sine" and not self.c > 0.0:
            raise ValueError(f"Stacked-sine segment width must be positive, got {self.c}")

    @property
    def name(self) -> str:
        if self.tag == "leaky_relu":
            return f"leaky_relu({self.alpha:g})"
        if self.tag == "stacked_sine" and self.c != STACKED_SINE_WIDTH:
            return f"stacked_sine({self.c:g})"
        return self.tag

    @property
    def relu_family(self) -> bool:
        return self.tag in ("relu", "leaky_relu", "stacked_sine")


_PARAM_PATTERN = re.compile(r"^([a-z_\-]+)(?:\(([^)]*)\))?$")


def parse_activation(text: Union[str, ActivationKind]) -> ActivationKind:
    """
    Parse names such as "relu", "leaky_relu(0.2)", "stacked-sine" or "stacked_sine(2.0)"

    Hyphens and underscores are interchangeable.
    """
    if isinstance(text, ActivationKind):
        return text
    match = _PARAM_PATTERN.match(text.strip().lower())
    if not match:
        raise ValueError(f"Cannot parse activation '{text}'")
    tag = match.group(1).replace("-", "_")
    param = match.group(2)
    if param is None or param == "":
        return ActivationKind(tag)
    value = float(param)
    if tag == "leaky_relu":
        return ActivationKind(tag, alpha=value)
    if tag == "stacked_sine":
        return ActivationKind(tag, c=value)
    raise ValueError(f"Activation '{tag}' takes no parameter")


def _stacked_sine(x: np.ndarray, c: float) -> np.ndarray:
    s = math.sin(c)
    xp = np.maximum(x, 0.0)
    k = np.floor(xp / c)
    y = k * s + np.sin(xp - k * c)
    return np.where(x >= 0.0, y, 0.0)


def _stacked_sine_grad(x: np.ndarray, c: float) -> np.ndarray:
    xp = np.maximum(x, 0.0)
    k = np.floor(xp / c)
    return np.where(x >= 0.0, np.cos(xp - k * c), 0.0)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _as_array(x: ArrayLike):
    arr = np.asarray(x, dtype=np.float64)
    return arr.reshape(1) if arr.ndim == 0 else arr, np.ndim(x) == 0


def activation_eval(kind: Union[ActivationKind, str], x: ArrayLike) -> ArrayLike:
    """Apply an activation elementwise; scalars in, scalar out"""
    kind = parse_activation(kind)
    arr, scalar = _as_array(x)
    if kind.tag == "relu":
        y = np.maximum(arr, 0.0)
    elif kind.tag == "leaky_relu":
        y = np.where(arr >= 0.0, arr, kind.alpha * arr)
    elif kind.tag == "sigmoid":
        y = _sigmoid(arr)
    elif kind.tag == "tanh":
        y = np.tanh(arr)
    else:
        y = _stacked_sine(arr, kind.c)
    return float(y[0]) if scalar else y


def activation_grad(kind: Union[ActivationKind, str], x: ArrayLike) -> ArrayLike:
    """
    Elementwise derivative

    ReLU-family kinks take the subgradient 0 at x = 0 for relu (leaky: alpha);
    stacked-sine takes the right-derivative at x = 0 and at every knot.
    """
    kind = parse_activation(kind)
    arr, scalar = _as_array(x)
    if kind.tag == "relu":
        g = (arr > 0.0).astype(np.float64)
    elif kind.tag == "leaky_relu":
        g = np.where(arr > 0.0, 1.0, kind.alpha)
    elif kind.tag == "sigmoid":
        sig = _sigmoid(arr)
        g = sig * (1.0 - sig)
    elif kind.tag == "tanh":
        g = 1.0 - np.tanh(arr) ** 2
    else:
        g = _stacked_sine_grad(arr, kind.c)
    return float(g[0]) if scalar else g
