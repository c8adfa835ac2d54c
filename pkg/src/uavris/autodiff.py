"""Minimal dense-tensor reverse-mode autodiff.

Supports rank-0/1/2 float64 tensors, the handful of primitives needed by
MLP encoders, an LSTM cell, categorical and squashed-Gaussian heads, and a
bias-corrected Adam update.  Graphs are define-by-run: a ``Tape`` records
operation nodes in creation order (which is a topological order), and a
single reversed sweep propagates adjoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


_TAPE_STACK: list["Tape"] = []


def _active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tape:
    """Ordered record of operation nodes; usable as a context manager."""

    def __init__(self) -> None:
        self.nodes: list[Tensor] = []
        self.last_visit_counts: list[int] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def backward(self, output: "Tensor") -> None:
        """Reverse sweep from a scalar output; visits each node exactly once."""
        if output.data.size != 1:
            raise ShapeError(f"backward needs a scalar output, got shape {output.shape}")
        if not output.requires_grad:
            raise ValueError("output is not connected to the tape")
        output.grad = output.grad + 1.0
        self.last_visit_counts = [0] * len(self.nodes)
        for i in range(len(self.nodes) - 1, -1, -1):
            node = self.nodes[i]
            self.last_visit_counts[i] += 1
            if node._vjp is not None:
                node._vjp(node.grad)


def backward(tape: Tape, output: "Tensor") -> None:
    tape.backward(output)


def _finite(arr: np.ndarray) -> np.ndarray:
    # a single reduction: any NaN/Inf makes the sum non-finite
    with np.errstate(over="ignore", invalid="ignore"):
        if not math.isfinite(float(arr.sum())):
            raise NonFiniteError("non-finite value produced")
    return arr


class Tensor:
    """Dense float64 array with an optional adjoint buffer."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_vjp")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 2:
            raise ShapeError(f"rank {arr.ndim} tensors are not supported")
        _finite(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.name = name
        self._vjp = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, grad={self.requires_grad})"

    # operator sugar; python scalars are wrapped as constants
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return add(self, neg(_wrap(other)))

    def __rsub__(self, other):
        return add(_wrap(other), neg(self))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        raise TypeError("tensor division is only supported by python scalars")


def _wrap(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], vjp) -> Tensor:
    """Build an op output and record it when a tape is active."""
    out = Tensor(_finite(data))
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.grad = np.zeros_like(out.data)
        out._vjp = vjp
        tape.nodes.append(out)
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        if g.shape != t.data.shape:
            g = g.reshape(t.data.shape) if g.size == t.data.size else np.sum(g).reshape(t.data.shape)
        t.grad = t.grad + g


def _conform(a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape and a.data.size != 1 and b.data.size != 1:
        raise ShapeError(f"shapes {a.shape} and {b.shape} do not conform")


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    _conform(a, b)

    def vjp(g):
        _accum(a, g if a.data.size > 1 else np.array(np.sum(g)))
        _accum(b, g if b.data.size > 1 else np.array(np.sum(g)))

    return _make(a.data + b.data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    def vjp(g):
        _accum(a, -g)

    return _make(-a.data, (a,), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _conform(a, b)
    ad, bd = a.data, b.data

    def vjp(g):
        ga = g * bd
        gb = g * ad
        _accum(a, ga if a.data.size > 1 else np.array(np.sum(ga)))
        _accum(b, gb if b.data.size > 1 else np.array(np.sum(gb)))

    return _make(ad * bd, (a, b), vjp)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def vjp(g):
        _accum(a, g * c)

    return _make(a.data * c, (a,), vjp)


def matvec(w: Tensor, x: Tensor) -> Tensor:
    if w.data.ndim != 2 or x.data.ndim != 1 or w.data.shape[1] != x.data.shape[0]:
        raise ShapeError(f"matvec shapes {w.shape} @ {x.shape} do not conform")
    wd, xd = w.data, x.data

    def vjp(g):
        _accum(w, np.outer(g, xd))
        _accum(x, wd.T @ g)

    return _make(wd @ xd, (w, x), vjp)


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape or a.data.ndim != 1:
        raise ShapeError(f"dot shapes {a.shape} . {b.shape} do not conform")
    ad, bd = a.data, b.data

    def vjp(g):
        s = float(g)
        _accum(a, s * bd)
        _accum(b, s * ad)

    return _make(np.array(ad @ bd), (a, b), vjp)


def tsum(a: Tensor) -> Tensor:
    shape = a.data.shape

    def vjp(g):
        _accum(a, np.full(shape, float(g)))

    return _make(np.array(np.sum(a.data)), (a,), vjp)


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    shape = a.data.shape

    def vjp(g):
        _accum(a, np.full(shape, float(g) / n))

    return _make(np.array(np.mean(a.data)), (a,), vjp)


def concat(parts: list[Tensor]) -> Tensor:
    if not parts:
        raise ShapeError("concat needs at least one part")
    sizes = [p.data.reshape(-1).shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accum(p, g[lo:hi].reshape(p.data.shape))

    return _make(np.concatenate([p.data.reshape(-1) for p in parts]), tuple(parts), vjp)


def narrow(a: Tensor, lo: int, hi: int) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeError("narrow expects a vector")

    def vjp(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            buf[lo:hi] = g
            a.grad = a.grad + buf

    return _make(a.data[lo:hi].copy(), (a,), vjp)


def take(a: Tensor, index: int) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeError("take expects a vector")
    index = int(index)

    def vjp(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            buf[index] = float(g)
            a.grad = a.grad + buf

    return _make(np.array(a.data[index]), (a,), vjp)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0  # subgradient 0 at the kink

    def vjp(g):
        _accum(a, g * mask)

    return _make(np.maximum(a.data, 0.0), (a,), vjp)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)

    def vjp(g):
        _accum(a, g * (1.0 - t * t))

    return _make(t, (a,), vjp)


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        _accum(a, g * s * (1.0 - s))

    return _make(s, (a,), vjp)


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        e = np.exp(a.data)

    def vjp(g):
        _accum(a, g * e)

    return _make(e, (a,), vjp)


def log(a: Tensor) -> Tensor:
    ad = a.data

    def vjp(g):
        _accum(a, g / ad)

    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(ad)
    return _make(out, (a,), vjp)


def softplus(a: Tensor) -> Tensor:
    # stable log(1 + e^x)
    out = np.logaddexp(0.0, a.data)
    s = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        _accum(a, g * s)

    return _make(out, (a,), vjp)


def softmax(logits: Tensor) -> Tensor:
    if logits.data.ndim != 1 or logits.data.size < 1:
        raise ShapeError("softmax expects a non-empty vector")
    shifted = logits.data - np.max(logits.data)
    e = np.exp(shifted)
    p = e / np.sum(e)

    def vjp(g):
        _accum(logits, p * (g - float(np.dot(g, p))))

    return _make(p, (logits,), vjp)


def log_softmax(logits: Tensor) -> Tensor:
    shifted = logits.data - np.max(logits.data)
    lse = np.log(np.sum(np.exp(shifted)))
    p = np.exp(shifted - lse)

    def vjp(g):
        _accum(logits, g - p * np.sum(g))

    return _make(shifted - lse, (logits,), vjp)


def gaussian_log_prob(mu: Tensor, log_std: Tensor, sample: np.ndarray) -> Tensor:
    """Summed log-density of a diagonal Gaussian at a fixed sample.

    The sample is a constant (score-function estimator); gradients flow into
    the mean and the log standard deviation only.
    """
    z = np.asarray(sample, dtype=float).reshape(mu.data.shape)
    std = np.exp(log_std.data)
    diff = (z - mu.data) / std
    out = np.array(np.sum(-0.5 * diff * diff - log_std.data - 0.5 * math.log(2.0 * math.pi)))

    def vjp(g):
        s = float(g)
        _accum(mu, s * diff / std)
        _accum(log_std, s * (diff * diff - 1.0))

    return _make(out, (mu, log_std), vjp)


# ---------------------------------------------------------------------------
# composites


def linear(weights: Tensor, bias: Tensor, x: Tensor) -> Tensor:
    """weights @ x + bias."""
    return add(matvec(weights, x), bias)


def lstm_step(
    w_x: Tensor, w_h: Tensor, b: Tensor, x: Tensor, hidden: Tensor, cell: Tensor
) -> tuple[Tensor, Tensor]:
    """One LSTM cell step; gate rows are stacked as [input|forget|candidate|output]."""
    u = hidden.data.shape[0]
    if w_x.data.shape[0] != 4 * u or w_h.data.shape != (4 * u, u) or b.data.shape != (4 * u,):
        raise ShapeError("lstm parameter shapes do not conform")
    z = add(add(matvec(w_x, x), matvec(w_h, hidden)), b)
    i = sigmoid(narrow(z, 0, u))
    f = sigmoid(narrow(z, u, 2 * u))
    g = tanh(narrow(z, 2 * u, 3 * u))
    o = sigmoid(narrow(z, 3 * u, 4 * u))
    cell_new = add(mul(f, cell), mul(i, g))
    hidden_new = mul(o, tanh(cell_new))
    return hidden_new, cell_new


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, name: str | None = None) -> Tensor:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) parameter."""
    bound = 1.0 / math.sqrt(max(1, fan_in))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


def grad_check(fn, params: list[Tensor], epsilon: float = 1e-5) -> float:
    """Compare reverse-mode gradients of ``fn()`` against central differences.

    ``fn`` must rebuild its graph from ``params`` on every call and be
    deterministic.  Returns max over coordinates of
    |analytic - numeric| / max(1e-8, |numeric|).
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        out = fn()
    tape.backward(out)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            f_plus = fn().item()
            flat[idx] = orig - epsilon
            f_minus = fn().item()
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            err = abs(gflat[idx] - numeric) / max(1e-8, abs(numeric))
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0

    @classmethod
    def for_param(cls, param: np.ndarray, learning_rate: float, **kw) -> "AdamState":
        return cls(np.zeros_like(param), np.zeros_like(param), learning_rate, **kw)


def adam_step(param: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
    """Bias-corrected Adam update; mutates ``state`` and returns the new parameter."""
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("non-finite gradient")
    state.step_count += 1
    t = state.step_count
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = state.first_moment / (1.0 - state.beta1**t)
    v_hat = state.second_moment / (1.0 - state.beta2**t)
    return param - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


class Adam:
    """Convenience wrapper applying ``adam_step`` to a named parameter set."""

    def __init__(self, params: dict[str, Tensor], learning_rate: float):
        self.params = params
        self.states = {
            name: AdamState.for_param(p.data, learning_rate) for name, p in params.items()
        }

    def step(self) -> None:
        for name, p in self.params.items():
            p.data = adam_step(p.data, p.grad, self.states[name])

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
