"""Small dense reverse-mode autodiff on top of numpy.

Only what the split-latent VAE, its baselines and the probes need: a
``Tensor`` that records how it was produced, a handful of differentiable
ops, MLP layers with PReLU / LeakyReLU / dropout, Adam, and the
reparameterisation trick. Everything is float64.

The recorded graph doubles as the "tape": :func:`backward` walks it from a
scalar loss and returns exact gradients for a requested parameter list.
Parameters carry a version counter bumped by every optimiser update, so a
graph built before an update cannot be differentiated afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, NumericError, StaleTapeError

__all__ = [
    "Tensor", "Parameter", "as_tensor", "backward", "concat", "exp", "log",
    "sqrt", "clip", "prelu", "leaky_relu", "softmax", "log_softmax",
    "xlogx", "l2_normalize", "MlpSpec", "Mlp", "mlp_forward", "AdamState",
    "Adam", "adam_step", "reparameterize", "make_rng", "spawn_rngs",
]

BackwardFn = Callable[[np.ndarray, tuple], tuple]


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Tensor:
    """Float64 array plus the record of the op that produced it."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self._version = 0
        self._parents: tuple = ()
        self._backward: BackwardFn | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # arithmetic
    def __add__(self, other):
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return _node(self.data + other.data, (self, other),
                     lambda g, n: (_unbroadcast(g, a_shape) if n[0] else None,
                                   _unbroadcast(g, b_shape) if n[1] else None))

    __radd__ = __add__

    def __neg__(self):
        return _node(-self.data, (self,), lambda g, n: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data

        def bw(g, n):
            return (_unbroadcast(g * b, a.shape) if n[0] else None,
                    _unbroadcast(g * a, b.shape) if n[1] else None)
        return _node(a * b, (self, other), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data

        def bw(g, n):
            return (_unbroadcast(g / b, a.shape) if n[0] else None,
                    _unbroadcast(-g * a / (b * b), b.shape) if n[1] else None)
        return _node(a / b, (self, other), bw)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, k: float):
        a = self.data
        return _node(a ** k, (self,), lambda g, n: (g * k * a ** (k - 1),))

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ContractError(f"matmul shape mismatch {a.shape} @ {b.shape}")

        def bw(g, n):
            return (g @ b.T if n[0] else None, a.T @ g if n[1] else None)
        return _node(a @ b, (self, other), bw)

    def __getitem__(self, index):
        a_shape = self.shape

        def bw(g, n):
            out = np.zeros(a_shape)
            np.add.at(out, index, g)
            return (out,)
        return _node(self.data[index], (self,), bw)

    @property
    def T(self):
        return _node(self.data.T, (self,), lambda g, n: (g.T,))

    def sum(self, axis=None, keepdims: bool = False):
        a_shape = self.shape

        def bw(g, n):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a_shape).copy(),)
        return _node(self.data.sum(axis=axis, keepdims=keepdims), (self,), bw)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    def reshape(self, *shape):
        a_shape = self.shape
        return _node(self.data.reshape(*shape), (self,), lambda g, n: (g.reshape(a_shape),))


class Parameter(Tensor):
    """Trainable leaf tensor."""

    def __init__(self, data, name: str | None = None):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)

    def assign(self, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.data.shape:
            raise ContractError(f"cannot assign shape {value.shape} to {self.data.shape}")
        self.data[...] = value
        self._version += 1


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple, bw: BackwardFn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple((p, p._version) for p in parents)
        out._backward = bw
    return out


def backward(loss: Tensor, params: Sequence[Tensor], seed: float = 1.0) -> list[np.ndarray]:
    """Gradients of a scalar ``loss`` w.r.t. ``params``.

    Parameters not reached by the graph get zeros. Raises
    :class:`StaleTapeError` if any tensor in the graph was updated after the
    graph was recorded.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return [np.zeros_like(p.data) for p in params]

    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, version in node._parents:
            if parent._version != version:
                raise StaleTapeError(
                    f"tensor {parent.name or parent.shape} changed after the graph was recorded")
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(loss): np.full(loss.shape, float(seed))}
    for node in reversed(order):
        if node._backward is None:
            continue
        g = grads.pop(id(node), None)
        if g is None:
            continue
        parents = [p for p, _ in node._parents]
        needs = tuple(p.requires_grad for p in parents)
        for parent, pg in zip(parents, node._backward(g, needs)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    return [grads.get(id(p), np.zeros_like(p.data)) for p in params]


# elementwise and reduction ops

def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g, n):
        return tuple(np.split(g, splits, axis=axis))
    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _node(y, (x,), lambda g, n: (g * y,))


def log(x: Tensor) -> Tensor:
    a = x.data
    return _node(np.log(a), (x,), lambda g, n: (g / a,))


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)
    return _node(y, (x,), lambda g, n: (g * 0.5 / y,))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    a = x.data
    inside = (a >= lo) & (a <= hi)
    return _node(np.clip(a, lo, hi), (x,), lambda g, n: (g * inside,))


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    a, s = x.data, slope.data
    neg = np.minimum(a, 0.0)

    def bw(g, n):
        return (g * np.where(a > 0, 1.0, s) if n[0] else None,
                _unbroadcast(g * neg, s.shape) if n[1] else None)
    return _node(np.where(a > 0, a, s * a), (x, slope), bw)


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    a = x.data
    d = np.where(a > 0, 1.0, slope)
    return _node(a * d, (x,), lambda g, n: (g * d,))


def log_softmax(logits: Tensor, axis: int = -1) -> Tensor:
    a = logits.data
    shifted = a - a.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    p = np.exp(out)

    def bw(g, n):
        return (g - p * g.sum(axis=axis, keepdims=True),)
    return _node(out, (logits,), bw)


def softmax(logits: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted softmax; rows sum to one."""
    logits = as_tensor(logits)
    if not np.all(np.isfinite(logits.data)):
        raise NumericError("softmax received non-finite logits")
    a = logits.data
    e = np.exp(a - a.max(axis=axis, keepdims=True))
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(g, n):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)
    return _node(p, (logits,), bw)


def xlogx(p: Tensor) -> Tensor:
    """Elementwise p*log(p) with 0*log(0) = 0."""
    a = p.data
    pos = a > 0
    safe = np.where(pos, a, 1.0)
    y = np.where(pos, a * np.log(safe), 0.0)
    return _node(y, (p,), lambda g, n: (g * np.where(pos, np.log(safe) + 1.0, 0.0),))


def l2_normalize(x: Tensor, axis: int = -1, min_norm: float = 1e-12) -> Tensor:
    a = x.data
    norm = np.sqrt((a * a).sum(axis=axis, keepdims=True))
    if np.any(norm < min_norm):
        raise NumericError(f"cannot normalise a vector with norm below {min_norm:g}")
    y = a / norm

    def bw(g, n):
        return ((g - y * (g * y).sum(axis=axis, keepdims=True)) / norm,)
    return _node(y, (x,), bw)


# MLP layers

ACTIVATIONS = ("identity", "prelu", "leaky_relu")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths and nonlinearity for a fully connected stack.

    ``slope`` is the initial PReLU slope (learnable, one per layer) or the
    fixed LeakyReLU negative slope. ``activate_output`` applies the
    activation and dropout after the last layer too, which is what a shared
    trunk feeding separate heads wants.
    """

    layer_widths: tuple
    activation: str = "identity"
    slope: float = 0.25
    dropout_rate: float = 0.0
    activate_output: bool = False

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2 or min(widths) < 1:
            raise ContractError(f"need at least two positive layer widths, got {widths}")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ContractError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not np.isfinite(self.slope):
            raise ContractError("activation slope must be finite")

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1


class Mlp:
    """Fully connected network built from an :class:`MlpSpec`.

    Weights are uniform in +-sqrt(6/fan_in), biases zero.
    """

    def __init__(self, spec: MlpSpec, rng: np.random.Generator, name: str = "mlp"):
        self.spec = spec
        self.name = name
        self.weights: list[Parameter] = []
        self.biases: list[Parameter] = []
        self.slopes: list[Parameter] = []
        widths = spec.layer_widths
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = np.sqrt(6.0 / fan_in)
            self.weights.append(Parameter(rng.uniform(-bound, bound, (fan_in, fan_out)),
                                          name=f"{name}.{i}.weight"))
            self.biases.append(Parameter(np.zeros(fan_out), name=f"{name}.{i}.bias"))
            if spec.activation == "prelu" and self._activated(i):
                self.slopes.append(Parameter(np.array(spec.slope), name=f"{name}.{i}.slope"))

    def _activated(self, i: int) -> bool:
        return i < self.spec.n_layers - 1 or self.spec.activate_output

    def named_parameters(self) -> list[tuple[str, Parameter]]:
        out = []
        slopes = iter(self.slopes)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out += [(w.name, w), (b.name, b)]
            if self.spec.activation == "prelu" and self._activated(i):
                s = next(slopes)
                out.append((s.name, s))
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def __call__(self, x: Tensor, train: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        x = as_tensor(x)
        spec = self.spec
        if x.ndim == 0 or x.shape[-1] != spec.layer_widths[0]:
            raise ContractError(
                f"{self.name}: input last dim {x.shape[-1:]} != {spec.layer_widths[0]}")
        squeeze = x.ndim == 1
        h = x.reshape(1, -1) if squeeze else x
        slopes = iter(self.slopes)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if self._activated(i):
                if spec.activation == "prelu":
                    h = prelu(h, next(slopes))
                elif spec.activation == "leaky_relu":
                    h = leaky_relu(h, spec.slope)
                if train and spec.dropout_rate > 0:
                    if rng is None:
                        raise ContractError(f"{self.name}: dropout in train mode needs an rng")
                    keep = 1.0 - spec.dropout_rate
                    h = h * ((rng.random(h.shape) < keep) / keep)
            if not np.all(np.isfinite(h.data)):
                raise NumericError(f"non-finite activation in {self.name} layer {i}")
        return h.reshape(-1) if squeeze else h


def mlp_forward(mlp: Mlp, x, train_mode: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
    """Functional alias for ``mlp(x, train_mode, rng)``."""
    return mlp(x, train=train_mode, rng=rng)


# optimisation

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    def __post_init__(self):
        if not self.lr > 0:
            raise ContractError(f"Adam lr must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ContractError("Adam betas must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ContractError("Adam epsilon must be positive")


def adam_step(params: Sequence[Parameter], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, applied in place to ``params`` and ``state``."""
    if len(params) != len(grads):
        raise ContractError(f"{len(params)} params but {len(grads)} gradients")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.data) for p in params]
        state.second_moment = [np.zeros_like(p.data) for p in params]
    for p, g, m in zip(params, grads, state.first_moment):
        if g.shape != p.data.shape or m.shape != p.data.shape:
            raise ContractError(f"gradient shape {g.shape} does not match {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {p.name or p.shape}")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        p._version += 1


class Adam:
    def __init__(self, params: Iterable[Parameter], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)

    def step(self, grads: Sequence[np.ndarray]) -> None:
        adam_step(self.params, grads, self.state)


# sampling

def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the same seed gives the same stream on every platform."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """``n`` independent generators derived from one seed."""
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(int(seed)).spawn(n)]


def reparameterize(mu: Tensor, sigma: Tensor, rng: np.random.Generator | None,
                   eps: np.ndarray | None = None) -> Tensor:
    """``mu + sigma * eps`` with ``eps ~ N(0, I)`` drawn from ``rng``.

    Passing ``eps`` explicitly bypasses the generator (test hook); in that
    case a zero ``sigma`` is tolerated.
    """
    mu, sigma = as_tensor(mu), as_tensor(sigma)
    if mu.shape != sigma.shape:
        raise ContractError(f"mu shape {mu.shape} != sigma shape {sigma.shape}")
    if eps is None:
        if not np.all(sigma.data > 0):
            raise ContractError("sigma must be strictly positive")
        eps = rng.standard_normal(mu.shape)
    else:
        eps = np.broadcast_to(np.asarray(eps, dtype=np.float64), mu.shape)
        if not np.all(sigma.data >= 0):
            raise ContractError("sigma must be non-negative")
    return mu + sigma * Tensor(eps)
