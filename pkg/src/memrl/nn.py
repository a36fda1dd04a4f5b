"""Layers, parameter initialization, Adam, and target-network updates.

Weights are drawn uniform in +/-sqrt(1/fan_in), biases start at zero
except the LSTM forget gate, which starts at 1 (standard stabilizer).
All state updates are in-place over float64 numpy buffers so runs are
bitwise reproducible given a seed.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError
from .tensor import Tensor


class ParamSet:
    """Ordered named parameter tensors plus per-parameter Adam state."""

    def __init__(self):
        self._names = []
        self._tensors = {}
        self._adam_m = {}
        self._adam_v = {}
        self.step_count = 0

    def add(self, name: str, t: Tensor):
        if name in self._tensors:
            raise ContractError(f"duplicate parameter name: {name}")
        if not t.is_param:
            raise ContractError(f"{name} is not a parameter tensor")
        self._names.append(name)
        self._tensors[name] = t
        self._adam_m[name] = np.zeros_like(t.data)
        self._adam_v[name] = np.zeros_like(t.data)

    def names(self):
        return list(self._names)

    def __iter__(self):
        return ((n, self._tensors[n]) for n in self._names)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __len__(self):
        return len(self._names)

    def num_values(self) -> int:
        return sum(t.data.size for _, t in self)

    def zero_grads(self):
        for _, t in self:
            t.zero_grad()

    def freeze(self, flag: bool = True):
        for _, t in self:
            t.frozen = flag


def _check_aligned(a: ParamSet, b: ParamSet, what: str):
    if a.names() != b.names():
        raise ContractError(f"{what}: parameter names differ")
    for name, t in a:
        if t.data.shape != b[name].data.shape:
            raise ContractError(
                f"{what}: shape mismatch for {name}: "
                f"{t.data.shape} vs {b[name].data.shape}")


def adam_step(params: ParamSet, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
    """Bias-corrected Adam update in place; gradients are zeroed after."""
    b1, b2 = betas
    params.step_count += 1
    t = params.step_count
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params:
        g = p.grad
        m = params._adam_m[name]
        v = params._adam_v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        g[...] = 0.0


def soft_update(target: ParamSet, main: ParamSet, tau: float):
    """target <- tau * main + (1 - tau) * target, entrywise."""
    _check_aligned(target, main, "soft_update")
    for name, t in target:
        t.data *= (1.0 - tau)
        t.data += tau * main[name].data


def hard_update(target: ParamSet, main: ParamSet):
    _check_aligned(target, main, "hard_update")
    for name, t in target:
        t.data[...] = main[name].data


def _uniform_fan_in(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / n_in)
    return rng.uniform(-bound, bound, size=(n_out, n_in))


_ACTIVATIONS = {"tanh": T.tanh, "relu": T.relu, "identity": lambda x: x}


class LinearLayer:
    """Fully connected layer y = act(x W^T + b)."""

    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int,
                 activation: str = "identity"):
        if n_in <= 0 or n_out <= 0:
            raise ContractError(f"widths must be positive, got {n_in}->{n_out}")
        if activation not in _ACTIVATIONS:
            raise ContractError(f"unknown activation: {activation}")
        self.weight = Tensor(_uniform_fan_in(rng, n_out, n_in), param=True)
        self.bias = Tensor(np.zeros(n_out), param=True)
        self.activation = activation

    def register(self, ps: ParamSet, prefix: str):
        ps.add(prefix + ".weight", self.weight)
        ps.add(prefix + ".bias", self.bias)

    def forward(self, x: Tensor) -> Tensor:
        y = T.add_rowvec(T.matmul_nt(x, self.weight), self.bias)
        return _ACTIVATIONS[self.activation](y)


class LstmLayer:
    """Single LSTM cell with separate weights per gate.

    Each gate weight is [hidden, in + hidden] acting on the concatenated
    [x, h]; state always starts at zero for a new sequence (replay
    sampling is random, so no state is carried across samples).
    """

    GATES = ("i", "f", "o", "g")

    def __init__(self, rng: np.random.Generator, n_in: int, hidden: int):
        if n_in <= 0 or hidden <= 0:
            raise ContractError(f"widths must be positive, got {n_in}->{hidden}")
        self.n_in = n_in
        self.hidden_size = hidden
        self.weights = {}
        self.biases = {}
        for gate in self.GATES:
            self.weights[gate] = Tensor(
                _uniform_fan_in(rng, hidden, n_in + hidden), param=True)
            b = np.ones(hidden) if gate == "f" else np.zeros(hidden)
            self.biases[gate] = Tensor(b, param=True)

    def register(self, ps: ParamSet, prefix: str):
        for gate in self.GATES:
            ps.add(f"{prefix}.W_{gate}", self.weights[gate])
            ps.add(f"{prefix}.b_{gate}", self.biases[gate])


def lstm_step(layer: LstmLayer, x: Tensor, h: Tensor, c: Tensor):
    """One LSTM cell update; returns (h', c')."""
    if x.shape[1] != layer.n_in or h.shape[1] != layer.hidden_size \
            or c.shape[1] != layer.hidden_size:
        raise DimensionError(
            f"lstm_step shapes {x.shape}/{h.shape}/{c.shape} inconsistent with "
            f"layer ({layer.n_in} -> {layer.hidden_size})")
    return _lstm_step_stacked(layer, _stack_gates(layer), x, h, c)


def _stack_gates(layer: LstmLayer):
    """Gate weights and biases stacked once for the fused preactivation."""
    w_all = layer.weights["i"]
    b_all = layer.biases["i"]
    for name in layer.GATES[1:]:
        w_all = T.concat(w_all, layer.weights[name], axis=0)
        b_all = T.concat(b_all, layer.biases[name], axis=0)
    return w_all, b_all


def _lstm_step_stacked(layer: LstmLayer, stacked, x: Tensor, h: Tensor,
                       c: Tensor):
    w_all, b_all = stacked
    z = T.concat(x, h, axis=1)
    # one matmul covers all four gates; split the preactivations after
    pre = T.add_rowvec(T.matmul_nt(z, w_all), b_all)
    width = layer.hidden_size
    i = T.sigmoid(T.slice_cols(pre, 0, width))
    f = T.sigmoid(T.slice_cols(pre, width, 2 * width))
    o = T.sigmoid(T.slice_cols(pre, 2 * width, 3 * width))
    g = T.tanh(T.slice_cols(pre, 3 * width, 4 * width))
    c_new = T.add(T.mul(f, c), T.mul(i, g))
    h_new = T.mul(o, T.tanh(c_new))
    return h_new, c_new


def lstm_sequence(layer: LstmLayer, xs: np.ndarray) -> Tensor:
    """Run the cell over xs[batch, time, features] from zero state.

    Returns the final hidden state; the input sequence is treated as a
    constant (only layer parameters receive gradient).
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 3:
        raise DimensionError(f"lstm_sequence expects [batch, T, in], got {xs.shape}")
    n, steps, _ = xs.shape
    if steps == 0:
        raise ContractError("lstm_sequence requires T >= 1 "
                            "(pass the zero dummy pair for empty histories)")
    h = Tensor(np.zeros((n, layer.hidden_size)))
    c = Tensor(np.zeros((n, layer.hidden_size)))
    stacked = _stack_gates(layer)
    for t in range(steps):
        h, c = _lstm_step_stacked(layer, stacked, Tensor(xs[:, t, :]), h, c)
    return h


class Mlp:
    """Stack of LinearLayers with one activation on every hidden layer."""

    def __init__(self, rng: np.random.Generator, widths, hidden_activation="relu",
                 output_activation="identity"):
        sizes = list(widths)
        if len(sizes) < 2:
            raise ContractError("Mlp needs at least input and output widths")
        self.layers = []
        for k in range(len(sizes) - 1):
            act = hidden_activation if k < len(sizes) - 2 else output_activation
            self.layers.append(LinearLayer(rng, sizes[k], sizes[k + 1], act))

    def register(self, ps: ParamSet, prefix: str):
        for k, layer in enumerate(self.layers):
            layer.register(ps, f"{prefix}.l{k}")

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer.forward(x)
        return x
