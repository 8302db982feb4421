"""Dense N-dimensional tensors with tape-based reverse-mode differentiation.

The layer set is exactly what the snippet encoder needs: 3D convolution,
fully connected (matmul), ReLU, Sigmoid, global average pooling, dropout,
softmax, plus scalar reductions and elementwise arithmetic. Activations are
float32 by default; float64 inputs are preserved end-to-end so gradient
checks can run at full precision. Reductions accumulate in float64.

Tensors are immutable values once constructed. One forward pass records one
tape (parent links plus backward closures); ``backward`` replays it in
reverse topological order.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from . import kernels
from .errors import ConfigError, ContractError, DimensionError, InputError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A dense row-major array, optionally a node on the autodiff tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None, check: bool = True):
        # float32 unless handed an explicit float64 array (verification paths)
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64) or (
                dtype is None and arr.dtype == np.float64
                and not isinstance(data, (np.ndarray, np.generic, Tensor))):
            arr = arr.astype(np.float32)
        # ascontiguousarray would promote 0-d scalars to shape (1,); keep rank 0
        self.data = np.ascontiguousarray(arr) if arr.ndim else arr
        if check:
            if not np.all(np.isfinite(self.data)):
                raise InputError("tensor rejects non-finite values (NaN/Inf)")
            if any(e <= 0 for e in self.data.shape):
                raise InputError(f"tensor extents must be positive, got {self.data.shape}")
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self.dtype), self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError("division is supported by constants only")
        return mul(self, _as_tensor(1.0 / float(other), self.dtype))

    def __neg__(self):
        return mul(self, _as_tensor(-1.0, self.dtype))

    def __pow__(self, exponent):
        return pow_const(self, float(exponent))

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 or isinstance(shape[0], int) else shape[0])


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype), check=False)


def make_node(data: np.ndarray, parents: Sequence[Tensor],
              backward: Callable[[np.ndarray], None]) -> Tensor:
    """Build an op output, recording the tape only when a parent needs grads."""
    out = Tensor(data, check=False)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accumulate(t: Tensor, g) -> None:
    # grad arrays are never mutated in place, so aliasing a child's grad is safe
    if not t.requires_grad:
        return
    g = np.asarray(g, dtype=t.data.dtype)
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise ops ---------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))
    return make_node(a.data + b.data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))
    return make_node(a.data - b.data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))
    return make_node(a.data * b.data, (a, b), bwd)


def pow_const(a: Tensor, exponent: float) -> Tensor:
    def bwd(g):
        if exponent == 0.0:
            _accumulate(a, np.zeros_like(a.data))
        else:
            _accumulate(a, g * exponent * a.data ** (exponent - 1.0))
    return make_node(a.data ** exponent, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bwd(g):
        _accumulate(a, g * mask)
    # np.maximum (not where/mask) so NaN propagates instead of flushing to 0
    return make_node(np.maximum(a.data, 0), (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        _accumulate(a, g * s * (1.0 - s))
    return make_node(s, (a,), bwd)


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)

    def bwd(g):
        _accumulate(a, g * e)
    return make_node(e, (a,), bwd)


def log(a: Tensor) -> Tensor:
    def bwd(g):
        _accumulate(a, g / a.data)
    return make_node(np.log(a.data), (a,), bwd)


def clip_min(a: Tensor, floor: float) -> Tensor:
    """max(x, floor); gradient is zero on the clamped region."""
    mask = a.data > floor

    def bwd(g):
        _accumulate(a, g * mask)
    return make_node(np.maximum(a.data, floor), (a,), bwd)


# -- shape / indexing --------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def bwd(g):
        _accumulate(a, g.reshape(a.shape))
    return make_node(a.data.reshape(shape), (a,), bwd)


def index(a: Tensor, i: int) -> Tensor:
    """Select element i of a vector as a scalar node."""
    if a.data.ndim != 1:
        raise ContractError(f"index expects a vector, got shape {a.shape}")
    if not 0 <= i < a.data.shape[0]:
        raise InputError(f"index {i} out of range for length {a.data.shape[0]}")

    def bwd(g):
        buf = np.zeros_like(a.data)
        buf[i] = float(g)
        _accumulate(a, buf)
    return make_node(a.data[i], (a,), bwd)


# -- reductions --------------------------------------------------------------


def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        _accumulate(a, np.broadcast_to(g, a.shape))
    total = np.asarray(a.data.sum(dtype=np.float64), dtype=a.dtype)
    return make_node(total, (a,), bwd)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def bwd(g):
        _accumulate(a, np.broadcast_to(g / n, a.shape))
    m = np.asarray(a.data.mean(dtype=np.float64), dtype=a.dtype)
    return make_node(m, (a,), bwd)


def global_avg_pool(a: Tensor) -> Tensor:
    """[C, T, H, W] -> [C], mean over the spatiotemporal axes."""
    if a.data.ndim != 4:
        raise DimensionError(f"global_avg_pool expects rank-4 [C,T,H,W], got {a.shape}")
    c = a.shape[0]
    n = a.data.size // c

    def bwd(g):
        _accumulate(a, np.broadcast_to((g / n).reshape(c, 1, 1, 1), a.shape))
    pooled = a.data.reshape(c, -1).mean(axis=1, dtype=np.float64).astype(a.dtype)
    return make_node(pooled, (a,), bwd)


# -- linear / conv layers ----------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Vector-matrix or matrix-matrix product."""
    if a.data.ndim == 1 and b.data.ndim == 2:
        if a.shape[0] != b.shape[0]:
            raise DimensionError(
                f"matmul inner axis mismatch: {a.shape[0]} vs {b.shape[0]}")

        def bwd(g):
            _accumulate(a, b.data @ g)
            _accumulate(b, np.outer(a.data, g))
        return make_node(a.data @ b.data, (a, b), bwd)
    if a.data.ndim == 2 and b.data.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise DimensionError(
                f"matmul inner axis mismatch: {a.shape[1]} vs {b.shape[0]}")

        def bwd(g):
            _accumulate(a, g @ b.data.T)
            _accumulate(b, a.data.T @ g)
        return make_node(a.data @ b.data, (a, b), bwd)
    raise DimensionError(f"matmul supports 1D@2D or 2D@2D, got {a.shape} @ {b.shape}")


def conv3d(x: Tensor, kernel: Tensor, stride=(1, 1, 1), padding=(0, 0, 0)) -> Tensor:
    """Cross-correlation of [C_in,T,H,W] input with [C_out,C_in,kT,kH,kW] kernel."""
    stride = tuple(int(s) for s in stride)
    padding = tuple(int(p) for p in padding)
    if x.data.ndim != 4:
        raise DimensionError(f"conv3d input must be rank-4 [C,T,H,W], got {x.shape}")
    if kernel.data.ndim != 5:
        raise DimensionError(f"conv3d kernel must be rank-5, got {kernel.shape}")
    if kernel.shape[1] != x.shape[0]:
        raise DimensionError(
            f"channel axis mismatch: input has {x.shape[0]} channels, kernel expects {kernel.shape[1]}")
    axis_names = ("temporal (T)", "vertical (H)", "horizontal (W)")
    for i, name in enumerate(axis_names):
        if stride[i] < 1:
            raise DimensionError(f"stride on {name} axis must be >= 1, got {stride[i]}")
        if padding[i] < 0:
            raise DimensionError(f"padding on {name} axis must be >= 0, got {padding[i]}")
        if kernel.shape[2 + i] > x.shape[1 + i] + 2 * padding[i]:
            raise DimensionError(
                f"kernel extent {kernel.shape[2 + i]} exceeds padded input extent "
                f"{x.shape[1 + i] + 2 * padding[i]} on {name} axis")
    if x.dtype != kernel.dtype:
        raise DimensionError(f"dtype mismatch: input {x.dtype} vs kernel {kernel.dtype}")

    y = kernels.conv3d_forward(x.data, kernel.data, stride, padding)

    def bwd(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            _accumulate(x, kernels.conv3d_backward_input(g, kernel.data, x.shape, stride, padding))
        if kernel.requires_grad:
            _accumulate(kernel, kernels.conv3d_backward_kernel(g, x.data, kernel.shape, stride, padding))
    return make_node(y, (x, kernel), bwd)


def dropout(a: Tensor, drop_prob: float, rng: Optional[np.random.Generator] = None,
            training: bool = False) -> Tensor:
    """Inverted dropout: scales by 1/keep at train time, identity in eval mode."""
    if not 0.0 <= drop_prob < 1.0:
        raise ConfigError(f"drop_prob must be in [0, 1), got {drop_prob}")
    if not training or drop_prob == 0.0:
        def bwd_id(g):
            _accumulate(a, g)
        return make_node(a.data, (a,), bwd_id)
    if rng is None:
        raise ContractError("training-mode dropout needs an explicit rng")
    keep = 1.0 - drop_prob
    mask = (rng.random(a.shape) >= drop_prob).astype(a.dtype) / keep

    def bwd(g):
        _accumulate(a, g * mask)
    return make_node(a.data * mask, (a,), bwd)


def softmax(a: Tensor) -> Tensor:
    """Stable softmax over a vector (max subtraction, float64 normalizer)."""
    if a.data.ndim != 1:
        raise ContractError(f"softmax expects a vector, got shape {a.shape}")
    shifted = a.data - a.data.max()
    e = np.exp(shifted)
    p = (e / e.sum(dtype=np.float64)).astype(a.dtype)

    def bwd(g):
        dot = float(np.sum(g * p, dtype=np.float64))
        _accumulate(a, p * (g - dot))
    return make_node(p, (a,), bwd)


# -- backward pass -----------------------------------------------------------


def backward(loss: Tensor, params: Optional["ParamSet"] = None) -> None:
    """Backpropagate from a scalar loss; optionally zero-fill params the loss
    never touched so every parameter ends up with a populated gradient."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    if params is not None:
        for _, p in params.items():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


# -- parameters and optimizer ------------------------------------------------


@dataclass
class AdamConfig:
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 < self.beta1 < self.beta2 < 1:
            raise ConfigError(f"need 0 < beta1 < beta2 < 1, got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")


class ParamSet:
    """Named learnable tensors plus their gradient and Adam state slots.

    Single-writer: one training loop mutates parameter data; the shared step
    count advances once per optimizer step.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = True
        self._params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> Iterable[str]:
        return self._params.keys()

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._params.items())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def copy(self) -> "ParamSet":
        dup = ParamSet()
        for name, p in self._params.items():
            dup.add(name, Tensor(p.data.copy(), check=False))
        dup.step_count = self.step_count
        return dup


def adam_step(params: ParamSet, config: AdamConfig) -> ParamSet:
    """Bias-corrected Adam update; increments the shared step count and
    clears gradients. Requires every parameter's gradient to be populated."""
    for name, p in params.items():
        if p.grad is None:
            raise ContractError(f"missing gradient for parameter {name!r}")
        if p.grad.shape != p.data.shape:
            raise ContractError(
                f"gradient shape {p.grad.shape} != parameter shape {p.data.shape} for {name!r}")
    params.step_count += 1
    t = params.step_count
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = p.grad
        m = params._m[name]
        v = params._v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.epsilon)
        p.data -= update.astype(p.data.dtype)
        p.grad = None
    return params
