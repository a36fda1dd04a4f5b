"""Reverse-mode automatic differentiation over dense float64 arrays.

A single implicit Tape records every differentiable op in execution
order, which is automatically a topological order.  Parameters are
Tensors created with ``param=True``; they own a persistent ``grad``
buffer and are re-registered as tape leaves lazily whenever an op
consumes them on a fresh tape.  Constants (plain Tensors) never
receive gradient.

Subgradient conventions are fixed for test stability: clamp gradient
is 1 at the boundary, relu gradient is 0 at 0, min_pairwise routes
ties to the first operand.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError


class Tensor:
    """Dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "frozen", "node_id", "_tape")

    def __init__(self, data, param: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data) if param else None
        self.frozen = False
        self.node_id = None
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_param(self) -> bool:
        return self.grad is not None

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, param={self.is_param})"


class _Node:
    __slots__ = ("input_ids", "backward_fn", "leaf")

    def __init__(self, input_ids, backward_fn, leaf):
        self.input_ids = input_ids
        self.backward_fn = backward_fn
        self.leaf = leaf  # Tensor for parameter leaves, else None


class Tape:
    """Append-only op record; node ids are topologically ordered."""

    def __init__(self):
        self._nodes = []

    def __len__(self):
        return len(self._nodes)

    def add_leaf(self, tensor: Tensor) -> int:
        self._nodes.append(_Node((), None, tensor))
        return len(self._nodes) - 1

    def add_node(self, input_ids, backward_fn) -> int:
        self._nodes.append(_Node(tuple(input_ids), backward_fn, None))
        return len(self._nodes) - 1

    def backward(self, loss: Tensor):
        """Accumulate d(loss)/d(param) into every reachable parameter's grad."""
        if loss.data.size != 1:
            raise ContractError(
                f"backward requires a scalar loss, got shape {loss.data.shape}")
        if loss.node_id is None or loss._tape is not self:
            return  # constant loss: nothing reachable, all grads stay as-is
        pending = {loss.node_id: np.ones_like(loss.data)}
        for nid in range(loss.node_id, -1, -1):
            g = pending.pop(nid, None)
            if g is None:
                continue
            node = self._nodes[nid]
            if node.leaf is not None:
                node.leaf.grad += g.reshape(node.leaf.data.shape)
                continue
            for iid, gi in zip(node.input_ids, node.backward_fn(g)):
                if iid is None or gi is None:
                    continue
                acc = pending.get(iid)
                pending[iid] = gi if acc is None else acc + gi


_ACTIVE = Tape()


def active_tape() -> Tape:
    return _ACTIVE


def reset_tape() -> Tape:
    """Discard the recorded graph and start a fresh tape."""
    global _ACTIVE
    _ACTIVE = Tape()
    return _ACTIVE


def backward(loss: Tensor):
    """Backpropagate from a scalar loss through the active tape."""
    tape = loss._tape if loss._tape is not None else _ACTIVE
    tape.backward(loss)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _track(t: Tensor, tape: Tape):
    """Node id of t on this tape; registers live parameters as leaves."""
    if t._tape is tape and t.node_id is not None:
        return t.node_id
    if t.is_param and not t.frozen:
        t.node_id = tape.add_leaf(t)
        t._tape = tape
        return t.node_id
    return None


def _make(data, inputs, backward_fn) -> Tensor:
    tape = _ACTIVE
    ids = [_track(t, tape) for t in inputs]
    out = Tensor(data)
    if any(i is not None for i in ids):
        out.node_id = tape.add_node(ids, backward_fn)
        out._tape = tape
    return out


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(
            f"matmul shapes incompatible: {a.data.shape} x {b.data.shape}")
    ad, bd = a.data, b.data

    def back(g):
        return g @ bd.T, ad.T @ g

    return _make(ad @ bd, (a, b), back)


def matmul_nt(a: Tensor, b: Tensor) -> Tensor:
    """a @ b.T without materializing the transpose (dense-layer fast path)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise DimensionError(
            f"matmul_nt shapes incompatible: {a.data.shape} x {b.data.shape}^T")
    ad, bd = a.data, b.data

    def back(g):
        return g @ bd, g.T @ ad

    return _make(ad @ bd.T, (a, b), back)


def transpose(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D tensor, got {a.data.shape}")
    return _make(a.data.T.copy(), (a,), lambda g: (g.T,))


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Columns [start, stop) of a 2-D tensor; gradient zero-pads the rest."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise DimensionError(f"slice_cols expects a 2-D tensor, got {a.data.shape}")
    if not 0 <= start <= stop <= a.data.shape[1]:
        raise DimensionError(
            f"slice [{start}, {stop}) out of range for {a.data.shape}")
    shape = a.data.shape

    def back(g):
        ga = np.zeros(shape)
        ga[:, start:stop] = g
        return (ga,)

    return _make(a.data[:, start:stop].copy(), (a,), back)


def concat(a: Tensor, b: Tensor, axis: int = 0) -> Tensor:
    """Concatenate along one axis; gradient splits at the seam."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.size == 0:
        return _make(b.data.copy(), (b,), lambda g: (g,))
    if b.data.size == 0:
        return _make(a.data.copy(), (a,), lambda g: (g,))
    sa, sb = list(a.data.shape), list(b.data.shape)
    if len(sa) != len(sb) or sa[:axis] + sa[axis + 1:] != sb[:axis] + sb[axis + 1:]:
        raise DimensionError(
            f"concat shapes incompatible on axis {axis}: {a.data.shape}, {b.data.shape}")
    split = a.data.shape[axis]

    def back(g):
        ga, gb = np.split(g, [split], axis=axis)
        return ga, gb

    return _make(np.concatenate([a.data, b.data], axis=axis), (a, b), back)


# ---------------------------------------------------------------------------
# elementwise

def _binary_shapes(a: Tensor, b: Tensor, opname: str):
    """Allow identical shapes or scalar-with-tensor; anything else errors."""
    if a.data.shape == b.data.shape:
        return
    if a.data.size == 1 or b.data.size == 1:
        return
    raise DimensionError(
        f"{opname} shapes incompatible: {a.data.shape} vs {b.data.shape}")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_grad_bcast(g, a.data.shape), _grad_bcast(g, b.data.shape)))


def _grad_bcast(g, shape):
    """Gradient of x -> broadcast(x) for scalar-with-tensor broadcasting."""
    if g.shape == tuple(shape):
        return g
    return np.sum(g).reshape(shape)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_grad_bcast(g, a.data.shape), _grad_bcast(-g, b.data.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _binary_shapes(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_grad_bcast(g * bd, ad.shape), _grad_bcast(g * ad, bd.shape)))


def scale(a, c: float) -> Tensor:
    """Multiply by a python constant (never differentiated w.r.t. c)."""
    a = _as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def add_rowvec(a: Tensor, v: Tensor) -> Tensor:
    """Add a length-M vector to every row of an [N, M] tensor (bias add)."""
    a, v = _as_tensor(a), _as_tensor(v)
    if a.data.ndim != 2 or v.data.ndim != 1 or a.data.shape[1] != v.data.shape[0]:
        raise DimensionError(
            f"add_rowvec shapes incompatible: {a.data.shape} + {v.data.shape}")
    return _make(a.data + v.data, (a, v), lambda g: (g, g.sum(axis=0)))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    y = 1.0 / (1.0 + np.exp(-a.data))
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0.0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient is 1 inside and at the boundary, 0 outside."""
    a = _as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions

def tsum(a) -> Tensor:
    a = _as_tensor(a)
    shape = a.data.shape
    return _make(np.asarray(a.data.sum()), (a,),
                 lambda g: (np.ones(shape) * g,))


def mean(a) -> Tensor:
    a = _as_tensor(a)
    shape = a.data.shape
    n = a.data.size
    return _make(np.asarray(a.data.mean()), (a,),
                 lambda g: (np.ones(shape) * (g / n),))


def min_pairwise(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise minimum; gradient goes to the smaller operand (ties: first)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise DimensionError(
            f"min_pairwise shapes differ: {a.data.shape} vs {b.data.shape}")
    mask = a.data <= b.data
    return _make(np.minimum(a.data, b.data), (a, b),
                 lambda g: (g * mask, g * ~mask))
