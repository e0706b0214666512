"""Tensor-level reverse-mode automatic differentiation on numpy arrays.

Only first-order gradients are supported. Every trainable model in the package
(generators, detectors, probes) is built from :class:`DenseNet` and the ops here.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "parents", "_backward", "requires_grad")

    def __init__(self, data, parents=(), backward=None, requires_grad=False):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, power(as_tensor(other), -1.0))

    def __rtruediv__(self, other):
        return mul(as_tensor(other), power(self, -1.0))

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(as_tensor(other), self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return tsum(self, axis, keepdims) * (1.0 / n)

    def backward(self, upstream=None) -> "Tape":
        tape = Tape(self)
        tape.backward(upstream)
        return tape


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


class Tape:
    """The recorded graph behind one output, in topological order."""

    def __init__(self, output: Tensor, inputs: Tensor | None = None, params=None):
        self.output = output
        self.inputs = inputs
        self.params = list(params) if params is not None else []
        order, seen = [], set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self.nodes = order

    def backward(self, upstream=None):
        for node in self.nodes:
            node.grad = None
        out = self.output
        out.grad = np.ones_like(out.data) if upstream is None else np.asarray(upstream, dtype=float).reshape(out.data.shape)
        for node in reversed(self.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        return self


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.data.shape)
    t.grad = g.copy() if t.grad is None else t.grad + g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, g)
        _accum(b, g)

    return Tensor(a.data + b.data, (a, b), bw)


def neg(a) -> Tensor:
    return Tensor(-a.data, (a,), lambda g: _accum(a, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return Tensor(a.data * b.data, (a, b), bw)


def power(a, p: float) -> Tensor:
    out = a.data**p

    def bw(g):
        _accum(a, g * p * a.data ** (p - 1))

    return Tensor(out, (a,), bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return Tensor(a.data @ b.data, (a, b), bw)


def transpose(a) -> Tensor:
    return Tensor(a.data.T, (a,), lambda g: _accum(a, g.T))


def reshape(a, shape) -> Tensor:
    return Tensor(a.data.reshape(shape), (a,), lambda g: _accum(a, g.reshape(a.data.shape)))


def tsum(a, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.data.shape))

    return Tensor(out, (a,), bw)


def exp(a) -> Tensor:
    out = np.exp(a.data)
    return Tensor(out, (a,), lambda g: _accum(a, g * out))


def log(a) -> Tensor:
    return Tensor(np.log(a.data), (a,), lambda g: _accum(a, g / a.data))


def tanh(a) -> Tensor:
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: _accum(a, g * (1.0 - out * out)))


def relu(a) -> Tensor:
    mask = a.data > 0
    return Tensor(a.data * mask, (a,), lambda g: _accum(a, g * mask))


def sigmoid(a) -> Tensor:
    out = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))), np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
    return Tensor(out, (a,), lambda g: _accum(a, g * out * (1.0 - out)))


def softplus(a) -> Tensor:
    out = np.logaddexp(0.0, a.data)

    def bw(g):
        s = 0.5 * (1.0 + np.tanh(0.5 * a.data))
        _accum(a, g * s)

    return Tensor(out, (a,), bw)


def identity(a) -> Tensor:
    return a


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accum(t, piece)

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def logdet(a) -> Tensor:
    """log|det A| for a square matrix."""
    _, ld = np.linalg.slogdet(a.data)
    return Tensor(ld, (a,), lambda g: _accum(a, g * np.linalg.inv(a.data).T))


ACTIVATIONS = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid, "linear": identity}


class DenseNet:
    """Stack of affine layers with per-layer activations."""

    def __init__(self, sizes, activations, rng=None, seed=None):
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        for act in activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.activations = list(activations)
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            a = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(parameter(rng.uniform(-a, a, size=(fan_in, fan_out))))
            self.biases.append(parameter(np.zeros(fan_out)))

    @property
    def sizes(self):
        return [self.weights[0].data.shape[0]] + [w.data.shape[1] for w in self.weights]

    @property
    def input_dim(self):
        return self.sizes[0]

    @property
    def output_dim(self):
        return self.sizes[-1]

    @property
    def layers(self):
        return list(zip(self.weights, self.biases, self.activations))

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def __call__(self, x) -> Tensor:
        h = as_tensor(x)
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = ACTIVATIONS[act](h @ w + b)
        return h

    def predict(self, x) -> np.ndarray:
        """Forward pass on plain arrays without recording a graph."""
        h = np.asarray(x, dtype=float)
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = h @ w.data + b.data
            if act == "relu":
                h = np.maximum(h, 0.0)
            elif act == "tanh":
                h = np.tanh(h)
            elif act == "sigmoid":
                h = 1.0 / (1.0 + np.exp(-h))
        return h

    def get_state(self):
        return [p.data.copy() for p in self.parameters()]

    def set_state(self, arrays):
        for p, a in zip(self.parameters(), arrays):
            if p.data.shape != np.shape(a):
                raise ValueError(f"shape mismatch {p.data.shape} vs {np.shape(a)}")
            p.data = np.array(a, dtype=float)

    def to_dict(self):
        return {
            "sizes": self.sizes,
            "activations": self.activations,
            "tensors": [{"shape": list(p.data.shape), "data": p.data.ravel().tolist()} for p in self.parameters()],
        }

    @classmethod
    def from_dict(cls, d):
        net = cls(d["sizes"], d["activations"], seed=0)
        net.set_state([np.array(t["data"], dtype=float).reshape(t["shape"]) for t in d["tensors"]])
        return net


def save_checkpoint(nets: dict, path) -> None:
    """JSON checkpoint; float repr round-trips bit-exactly."""
    Path(path).write_text(json.dumps({name: net.to_dict() for name, net in nets.items()}))


def load_checkpoint(path) -> dict:
    return {name: DenseNet.from_dict(d) for name, d in json.loads(Path(path).read_text()).items()}


def forward(net: DenseNet, x) -> Tape:
    xt = Tensor(x, requires_grad=True)
    return Tape(net(xt), inputs=xt, params=net.parameters())


def backward(tape: Tape, upstream=None):
    """Run the reverse sweep; returns ``(param_grads, input_grad)``."""
    tape.backward(upstream)
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in tape.params]
    x_grad = tape.inputs.grad if tape.inputs is not None else None
    return grads, x_grad


def adam_step(params, grads, state, lr=1e-3, beta1=0.5, beta2=0.999, eps=1e-8):
    """One Adam update. ``state`` is a dict holding ``t``, ``m`` and ``v``; arrays are updated in place."""
    if not state:
        state.update(t=0, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])
    state["t"] += 1
    t = state["t"]
    bc1, bc2 = 1.0 - beta1**t, 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params


class Adam:
    def __init__(self, params, lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = {}

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient")
        adam_step([p.data for p in self.params], grads, self.state, self.lr, self.beta1, self.beta2, self.eps)


def finite_diff_check(net: DenseNet, x, epsilon=1e-5, seed=0, floor=1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    The scalar probed is a fixed random projection of the outputs; both parameter
    and input gradients are checked. ``floor`` bounds the denominator away from 0.
    """
    x = np.asarray(x, dtype=float)
    w = np.random.default_rng(seed).standard_normal((x.shape[0], net.output_dim))

    def loss():
        return float(np.sum(net.predict(x) * w))

    tape = forward(net, x)
    pgrads, xgrad = backward(tape, w)
    worst = 0.0
    targets = [(p.data, g) for p, g in zip(net.parameters(), pgrads)]
    targets.append((x, xgrad))
    for arr, grad in targets:
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + epsilon
            up = loss()
            arr[idx] = old - epsilon
            down = loss()
            arr[idx] = old
            num = (up - down) / (2 * epsilon)
            err = abs(num - grad[idx]) / max(abs(num), abs(grad[idx]), floor)
            worst = max(worst, err)
    return worst
