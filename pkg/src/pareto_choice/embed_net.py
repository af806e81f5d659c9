"""Weight-shared embedding network: ReLU + batch-norm MLP with a linear head.

Every object row goes through the same parameters.  Batch statistics in
training mode are taken over all rows handed to :func:`forward`, i.e. over
the objects of every task in the mini-batch.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .choice_core import InvalidArgument

AFTER_RELU = "after_relu"
BEFORE_RELU = "before_relu"


@dataclass
class HiddenLayer:
    W: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class NetworkParams:
    hidden: list[HiddenLayer]
    W_out: np.ndarray
    b_out: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5
    norm_position: str = AFTER_RELU

    def __post_init__(self):
        if self.eps <= 0:
            raise InvalidArgument("batch-norm epsilon must be positive")
        if not 0.0 <= self.momentum <= 1.0:
            raise InvalidArgument("batch-norm momentum must lie in [0, 1]")
        if self.norm_position not in (AFTER_RELU, BEFORE_RELU):
            raise InvalidArgument(f"unknown norm_position {self.norm_position!r}")
        dim = self.input_dim
        for i, layer in enumerate(self.hidden):
            if layer.W.shape[0] != dim:
                raise InvalidArgument(f"hidden layer {i} expects {layer.W.shape[0]} inputs, chain gives {dim}")
            dim = layer.W.shape[1]
            for name in ("b", "gamma", "beta", "running_mean", "running_var"):
                if getattr(layer, name).shape != (dim,):
                    raise InvalidArgument(f"hidden layer {i} {name} has wrong shape")
            if np.any(layer.running_var <= 0):
                raise InvalidArgument("running variances must be positive")
        if self.W_out.shape[0] != dim or self.b_out.shape != (self.W_out.shape[1],):
            raise InvalidArgument("output layer does not chain with the last hidden layer")

    @property
    def input_dim(self) -> int:
        return (self.hidden[0].W if self.hidden else self.W_out).shape[0]

    @property
    def output_dim(self) -> int:
        return self.W_out.shape[1]

    def trainable(self) -> dict[str, np.ndarray]:
        """Named views of all trainable arrays (updates in place act on the network)."""
        out = {}
        for i, layer in enumerate(self.hidden):
            out[f"hidden.{i}.W"] = layer.W
            out[f"hidden.{i}.b"] = layer.b
            out[f"hidden.{i}.gamma"] = layer.gamma
            out[f"hidden.{i}.beta"] = layer.beta
        out["out.W"] = self.W_out
        out["out.b"] = self.b_out
        return out

    def state(self) -> dict[str, np.ndarray]:
        """All arrays, trainable and running statistics."""
        out = self.trainable()
        for i, layer in enumerate(self.hidden):
            out[f"hidden.{i}.running_mean"] = layer.running_mean
            out[f"hidden.{i}.running_var"] = layer.running_var
        return out

    def copy(self) -> "NetworkParams":
        return copy.deepcopy(self)


@dataclass
class ForwardTrace:
    mode: str
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    xhat: list[np.ndarray] = field(default_factory=list)
    inv_std: list[np.ndarray] = field(default_factory=list)
    batch_mean: list[np.ndarray] = field(default_factory=list)
    batch_var: list[np.ndarray] = field(default_factory=list)
    last_hidden: np.ndarray | None = None


def init_params(
    input_dim: int,
    hidden_layers: int,
    hidden_units: int,
    output_dim: int,
    seed: int,
    *,
    momentum: float = 0.1,
    eps: float = 1e-5,
    norm_position: str = AFTER_RELU,
) -> NetworkParams:
    """He-scaled Gaussian weights for ReLU layers, 1/fan-in for the head, zero biases."""
    if input_dim < 1 or hidden_units < 1 or output_dim < 1 or hidden_layers < 0:
        raise InvalidArgument(
            f"invalid architecture: input={input_dim}, layers={hidden_layers}, "
            f"units={hidden_units}, output={output_dim}"
        )
    rng = np.random.default_rng(seed)
    hidden = []
    fan_in = input_dim
    for _ in range(hidden_layers):
        hidden.append(
            HiddenLayer(
                W=rng.standard_normal((fan_in, hidden_units)) * np.sqrt(2.0 / fan_in),
                b=np.zeros(hidden_units),
                gamma=np.ones(hidden_units),
                beta=np.zeros(hidden_units),
                running_mean=np.zeros(hidden_units),
                running_var=np.ones(hidden_units),
            )
        )
        fan_in = hidden_units
    W_out = rng.standard_normal((fan_in, output_dim)) * np.sqrt(1.0 / fan_in)
    return NetworkParams(hidden, W_out, np.zeros(output_dim), momentum, eps, norm_position)


def forward(batch, params: NetworkParams, mode: str = "inference", update_running: bool = True):
    """Embed every row of ``batch``.

    ``mode="train"`` normalizes with batch statistics and (unless
    ``update_running`` is False) folds them into the running averages;
    ``mode="inference"`` uses running statistics and mutates nothing.
    Returns ``(Z, trace)``.
    """
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise InvalidArgument(f"batch shape {X.shape} incompatible with input dimension {params.input_dim}")
    if mode not in ("train", "inference"):
        raise InvalidArgument(f"unknown mode {mode!r}")
    train = mode == "train"
    if train and X.shape[0] < 2:
        raise InvalidArgument("train mode needs at least 2 rows for batch statistics")

    trace = ForwardTrace(mode=mode)
    a = X
    for layer in params.hidden:
        trace.inputs.append(a)
        pre = a @ layer.W + layer.b
        trace.pre.append(pre)
        h = np.maximum(pre, 0.0) if params.norm_position == AFTER_RELU else pre
        if train:
            n = h.shape[0]
            ones = np.full(n, 1.0 / n)
            mu = ones @ h
            centered = h - mu
            var = ones @ (centered * centered)
            if update_running:
                m = params.momentum
                layer.running_mean *= 1.0 - m
                layer.running_mean += m * mu
                layer.running_var *= 1.0 - m
                layer.running_var += m * var * n / (n - 1)
        else:
            mu, var = layer.running_mean, layer.running_var
        inv_std = 1.0 / np.sqrt(var + params.eps)
        xhat = (h - mu) * inv_std
        trace.xhat.append(xhat)
        trace.inv_std.append(inv_std)
        trace.batch_mean.append(mu)
        trace.batch_var.append(var)
        y = layer.gamma * xhat + layer.beta
        a = y if params.norm_position == AFTER_RELU else np.maximum(y, 0.0)
    trace.last_hidden = a
    Z = a @ params.W_out + params.b_out
    return Z, trace


def backward(trace: ForwardTrace, params: NetworkParams, grad_Z) -> dict[str, np.ndarray]:
    """Reverse-mode gradients for every trainable array, keyed like ``params.trainable()``."""
    if trace.mode != "train":
        raise InvalidArgument("backward needs a trace from a train-mode forward pass")
    if len(trace.pre) != len(params.hidden) or trace.last_hidden is None:
        raise InvalidArgument("trace does not match network depth")
    if trace.last_hidden.shape[1] != params.W_out.shape[0]:
        raise InvalidArgument("trace does not match network widths")
    for layer, pre in zip(params.hidden, trace.pre):
        if pre.shape[1] != layer.W.shape[1]:
            raise InvalidArgument("trace does not match network widths")
    dZ = np.asarray(grad_Z, dtype=np.float64)
    if dZ.shape != (trace.last_hidden.shape[0], params.output_dim):
        raise InvalidArgument(f"grad_Z shape {dZ.shape} does not match forward output")

    grads: dict[str, np.ndarray] = {}
    grads["out.W"] = trace.last_hidden.T @ dZ
    n = dZ.shape[0]
    ones = np.ones(n)
    grads["out.b"] = ones @ dZ
    da = dZ @ params.W_out.T
    for i in range(len(params.hidden) - 1, -1, -1):
        layer = params.hidden[i]
        pre, xhat, inv_std = trace.pre[i], trace.xhat[i], trace.inv_std[i]
        if params.norm_position == BEFORE_RELU:
            dy = da * ((layer.gamma * xhat + layer.beta) > 0)
        else:
            dy = da
        dy_xhat = ones @ (dy * xhat)
        grads[f"hidden.{i}.gamma"] = dy_xhat
        grads[f"hidden.{i}.beta"] = ones @ dy
        # with dxhat = dy * gamma the column sums follow from those of dy
        dxhat = dy * layer.gamma
        dh = (inv_std / n) * (n * dxhat - layer.gamma * grads[f"hidden.{i}.beta"] - xhat * (layer.gamma * dy_xhat))
        dpre = dh * (pre > 0) if params.norm_position == AFTER_RELU else dh
        grads[f"hidden.{i}.W"] = trace.inputs[i].T @ dpre
        grads[f"hidden.{i}.b"] = ones @ dpre
        da = dpre @ layer.W.T
    return {k: grads[k] for k in params.trainable()}
