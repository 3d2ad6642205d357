"""Minimal reverse-mode automatic differentiation over dense real tensors.

Defines the Tensor/Tape pair used by every agent, the op set needed for
recurrent message games (matmul, elementwise activations, softmax,
cross-entropy, straight-through Gumbel-Softmax), an Adam optimizer with
bias correction, and a central-finite-difference gradient checker.

The tape is define-by-run: ops record themselves on the innermost active
`Tape` context, and `backward` replays the records in reverse. Running ops
outside any tape context skips all bookkeeping, which is the fast path for
evaluation-only passes.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

Array = np.ndarray
RandomStream = np.random.Generator

DTYPE = np.float64

# Gumbel noise: u is clamped away from {0, 1} so -ln(-ln u) stays finite.
_GUMBEL_EPS = 1e-12


def new_rng(*entropy: int) -> RandomStream:
    """Deterministic generator from one or more integer seed components."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(entropy))))


class Tensor:
    """Dense float tensor of rank <= 2 with an optional gradient buffer.

    `grad` stays None until `backward` writes to it; gradients accumulate
    across backward calls until `zero_grad`.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=DTYPE):
        arr = np.asarray(data, dtype=dtype)
        if arr.ndim > 2:
            raise DimensionError(f"rank-{arr.ndim} tensors unsupported (shape {arr.shape})")
        self.data = arr
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the named functions below do the real work.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


@dataclass
class _TapeEntry:
    out: Tensor
    inputs: tuple[Tensor, ...]
    vjp: Callable[[Array], Sequence[Array | None]]


class Tape:
    """Ordered record of executed ops, appended in execution (topological) order.

    Ops record onto the innermost active tape of the *current thread*, so
    independent runs on separate threads never see each other's graphs.
    """

    def __init__(self):
        self.entries: list[_TapeEntry] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack().pop()
        return False

    def __len__(self) -> int:
        return len(self.entries)


_TAPES_LOCAL = threading.local()


def _tape_stack() -> list[Tape]:
    stack = getattr(_TAPES_LOCAL, "stack", None)
    if stack is None:
        stack = _TAPES_LOCAL.stack = []
    return stack


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: Tensor, inputs: tuple[Tensor, ...], vjp) -> Tensor:
    out.requires_grad = any(t.requires_grad for t in inputs)
    if out.requires_grad:
        stack = _tape_stack()
        if stack:
            stack[-1].entries.append(_TapeEntry(out, inputs, vjp))
    return out


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum a gradient back down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)
    a_data, b_data = a.data, b.data

    def vjp(g):
        return _unbroadcast(g * b_data, a.shape), _unbroadcast(g * a_data, b.shape)

    return _record(out, (a, b), vjp)


def matmul(a, b) -> Tensor:
    """Matrix product with reverse rules dA = g @ B^T, dB = A^T @ g."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    a_data, b_data = a.data, b.data

    def vjp(g):
        return g @ b_data.T, a_data.T @ g

    return _record(out, (a, b), vjp)


_ACTIVATIONS: dict[str, tuple[Callable[[Array], Array], Callable[[Array, Array], Array]]] = {
    # name -> (forward, derivative given (input, output))
    "tanh": (np.tanh, lambda x, y: 1.0 - y * y),
    "sigmoid": (lambda x: 1.0 / (1.0 + np.exp(-x)), lambda x, y: y * (1.0 - y)),
    "relu": (lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(x.dtype)),
    "identity": (lambda x: x, lambda x, y: np.ones_like(x)),
}

ACTIVATION_NAMES = tuple(_ACTIVATIONS)


def elementwise(name: str, x) -> Tensor:
    """Apply one of {tanh, sigmoid, relu, identity} componentwise."""
    if name not in _ACTIVATIONS:
        raise ContractError(f"unknown activation {name!r}; expected one of {ACTIVATION_NAMES}")
    fwd, deriv = _ACTIVATIONS[name]
    x = _as_tensor(x)
    out = Tensor(fwd(x.data))
    x_data, out_data = x.data, out.data

    def vjp(g):
        return (g * deriv(x_data, out_data),)

    return _record(out, (x,), vjp)


def tanh(x) -> Tensor:
    return elementwise("tanh", x)


def sigmoid(x) -> Tensor:
    return elementwise("sigmoid", x)


def relu(x) -> Tensor:
    return elementwise("relu", x)


def _softmax_data(z: Array) -> Array:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(logits) -> Tensor:
    """Row softmax with max-subtraction for overflow safety."""
    x = _as_tensor(logits)
    out = Tensor(_softmax_data(x.data))
    s = out.data

    def vjp(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _record(out, (x,), vjp)


def cross_entropy(logits, targets) -> Tensor:
    """Mean over the batch of -log softmax(logits)[target].

    `logits` is (b, k); `targets` is an integer index per row.
    """
    x = _as_tensor(logits)
    if x.data.ndim != 2:
        raise DimensionError(f"cross_entropy expects (batch, classes) logits, got {x.shape}")
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    b, k = x.shape
    if t.shape[0] != b:
        raise DimensionError(f"{t.shape[0]} targets for {b} logit rows")
    if (t < 0).any() or (t >= k).any():
        raise IndexError(f"target out of range [0, {k})")
    z = x.data
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    out = Tensor(np.mean(lse - z[np.arange(b), t]))
    probs = _softmax_data(z)

    def vjp(g):
        d = probs.copy()
        d[np.arange(b), t] -= 1.0
        return (d * (float(g) / b), None)

    return _record(out, (x, Tensor(t.astype(DTYPE))), vjp)


def sum_all(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.sum(x.data))
    shape = x.shape

    def vjp(g):
        return (np.full(shape, float(g), dtype=DTYPE),)

    return _record(out, (x,), vjp)


def mean_all(x) -> Tensor:
    x = _as_tensor(x)
    n = x.data.size
    out = Tensor(np.mean(x.data))
    shape = x.shape

    def vjp(g):
        return (np.full(shape, float(g) / n, dtype=DTYPE),)

    return _record(out, (x,), vjp)


def cols(x, start: int, stop: int) -> Tensor:
    """Column slice of a rank-2 tensor; gradient scatters back into place."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"cols expects rank-2 input, got {x.shape}")
    out = Tensor(x.data[:, start:stop])
    shape = x.shape

    def vjp(g):
        full = np.zeros(shape, dtype=DTYPE)
        full[:, start:stop] = g
        return (full,)

    return _record(out, (x,), vjp)


def candidate_scores(out, candidates: Array) -> Tensor:
    """Dot products of each output row against that row's candidate vectors.

    `out` is (b, z); `candidates` is a constant (b, c, z) array. Returns (b, c).
    """
    x = _as_tensor(out)
    cands = np.asarray(candidates, dtype=DTYPE)
    if x.data.ndim != 2 or cands.ndim != 3 or cands.shape[0] != x.shape[0] or cands.shape[2] != x.shape[1]:
        raise DimensionError(f"candidate_scores shapes: out {x.shape}, candidates {cands.shape}")
    res = Tensor(np.einsum("bz,bcz->bc", x.data, cands))

    def vjp(g):
        return (np.einsum("bc,bcz->bz", g, cands),)

    return _record(res, (x,), vjp)


def sample_gumbel(shape, rng: RandomStream) -> Array:
    """i.i.d. Gumbel(0,1) draws via -ln(-ln u) with clamped uniforms."""
    u = np.clip(rng.random(shape), _GUMBEL_EPS, 1.0 - _GUMBEL_EPS)
    return -np.log(-np.log(u))


def gumbel_softmax_st(logits, tau: float, rng: RandomStream) -> Tensor:
    """Straight-through Gumbel-Softmax.

    Forward: exact one-hot at argmax(logits + g), g ~ Gumbel(0,1).
    Backward: gradient of softmax((logits + g) / tau) substituted in.
    """
    if tau <= 0:
        raise ContractError(f"tau must be positive, got {tau}")
    x = _as_tensor(logits)
    y = x.data + sample_gumbel(x.shape, rng)
    flat = y.reshape(-1, y.shape[-1])
    hard = np.zeros_like(flat)
    hard[np.arange(flat.shape[0]), flat.argmax(axis=1)] = 1.0
    out = Tensor(hard.reshape(y.shape))
    soft = _softmax_data(y / tau)

    def vjp(g):
        return (soft * (g - (g * soft).sum(axis=-1, keepdims=True)) / tau,)

    return _record(out, (x,), vjp)


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate `grad` on every requires_grad tensor reachable from `loss`.

    Each call propagates a fresh unit seed, so repeated calls accumulate.
    Tensors recorded on the tape but unreachable from the loss get zero grads.
    """
    if loss.data.ndim != 0:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    on_tape = any(entry.out is loss for entry in tape.entries)
    if not on_tape:
        raise ContractError("loss tensor was not produced on this tape")

    scratch: dict[int, Array] = {id(loss): np.ones((), dtype=DTYPE)}
    for entry in reversed(tape.entries):
        g = scratch.get(id(entry.out))
        if g is None:
            continue
        for t, gi in zip(entry.inputs, entry.vjp(g)):
            if gi is None or not t.requires_grad:
                continue
            acc = scratch.get(id(t))
            scratch[id(t)] = gi if acc is None else acc + gi

    committed: set[int] = set()
    for entry in tape.entries:
        for t in (entry.out, *entry.inputs):
            if not t.requires_grad or id(t) in committed:
                continue
            committed.add(id(t))
            g = scratch.get(id(t))
            if g is None:
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
            elif t.grad is None:
                t.grad = g  # grads are only ever read or replaced, never mutated
            else:
                t.grad = t.grad + g


@dataclass
class AdamState:
    """Per-parameter Adam moment buffers plus the shared step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, Array] = field(default_factory=dict)
    v: dict[str, Array] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, Array | None], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, in place on the parameter tensors."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    `f` must be a pure scalar-valued function of `x` (re-evaluated 2·size
    times), so any randomness inside must be re-seeded per call.
    """
    if h <= 0:
        raise ContractError(f"step size must be positive, got {h}")
    x.zero_grad()
    with Tape() as tape:
        loss = f(x)
    backward(tape, loss)
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f(x).item()
        flat[i] = orig - h
        lo = f(x).item()
        flat[i] = orig
        num_flat[i] = (hi - lo) / (2.0 * h)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom)) if flat.size else 0.0
