"""Reverse-mode automatic differentiation over dense float64 tensors.

Define-by-run tape design: while a Tape is active (``with Tape() as tape``)
every operation appends a node holding the inputs it needs for backward.
``tape.backward(loss)`` walks the nodes in reverse recording order, which is
reverse topological order by construction, and accumulates gradients into
every tensor with ``requires_grad``. Without an active tape the same
functions compute plain forward values, which is how evaluation mode and
the finite-difference oracle run.

All data is float64. The single activation function of the package is GELU
in its tanh approximation; it is smooth everywhere, which the
finite-difference gradient checks rely on.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ContractError, DimensionError, StateError

_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


class Tensor:
    """Dense n-dimensional float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node_id: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; all arithmetic goes through the module-level ops so
    # everything is recorded uniformly.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)


class _Node:
    __slots__ = ("out", "parents", "backward_fn")

    def __init__(self, out, parents, backward_fn):
        self.out = out
        self.parents = parents
        self.backward_fn = backward_fn


_tls = threading.local()


def _stack() -> list:
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of executed operations; one training step's graph.

    Recording order is topological order, so reversing it gives a valid
    backward order in which each node is visited exactly once.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._done = False
        self.nodes_visited = 0
        self.backward_calls = 0

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _stack().pop()
        assert popped is self, "tape context exited out of order"

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, out: Tensor, parents: Sequence[Tensor], backward_fn) -> None:
        out.node_id = len(self._nodes)
        self._nodes.append(_Node(out, tuple(parents), backward_fn))

    def backward(self, loss: Tensor) -> None:
        """Accumulate dLoss/dTensor into every requires_grad tensor.

        The loss must be a scalar produced while this tape was active, and
        backward may run only once per tape.
        """
        if self._done:
            raise StateError("backward already ran on this tape; record a new graph")
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        node_id = loss.node_id
        if node_id is None or node_id >= len(self._nodes) or self._nodes[node_id].out is not loss:
            raise ContractError("loss tensor was not produced by this tape")
        self._done = True
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self._nodes):
            self.nodes_visited += 1
            gout = node.out.grad
            if gout is None:
                continue
            self.backward_calls += 1
            grads = node.backward_fn(gout)
            for parent, pgrad in zip(node.parents, grads):
                if pgrad is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += pgrad


def _emit(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    tape = active_tape()
    if tape is not None:
        tape._record(out, parents, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a_shape, b_shape, op_name: str) -> None:
    try:
        np.broadcast_shapes(a_shape, b_shape)
    except ValueError:
        raise DimensionError(
            f"{op_name}: shapes {a_shape} and {b_shape} are not broadcastable"
        ) from None


# ---------------------------------------------------------------------------
# Elementwise operations


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape, "add")
    data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit(data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape, "sub")
    data = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a.shape, b.shape, "mul")
    data = a.data * b.data
    a_data, b_data = a.data, b.data

    def backward(g):
        ga = _unbroadcast(g * b_data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a_data, b.shape) if b.requires_grad else None
        return ga, gb

    return _emit(data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    data = a.data * c

    def backward(g):
        return (g * c,)

    return _emit(data, (a,), backward)


def gelu(a: Tensor) -> Tensor:
    """GELU activation, tanh approximation."""
    x = a.data
    inner = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)

    def backward(g):
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return _emit(data, (a,), backward)


def elementwise(op_kind: str, a: Tensor, b=None) -> Tensor:
    """Dispatch by kind: add | mul | scale | gelu.

    ``scale`` takes a scalar constant as ``b``; ``gelu`` is unary.
    """
    if op_kind == "add":
        return add(a, b)
    if op_kind == "mul":
        return mul(a, b)
    if op_kind == "scale":
        return scale(a, b)
    if op_kind == "gelu":
        return gelu(a)
    raise ContractError(f"unknown elementwise op kind: {op_kind!r}")


# ---------------------------------------------------------------------------
# Matrix and shape operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; stacked (leading batch) dimensions broadcast."""
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul needs rank >= 2 operands, got shapes {a.shape} and {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions differ: {a.shape} @ {b.shape}"
        )
    _check_broadcast(a.shape[:-2], b.shape[:-2], "matmul (batch dims)")
    data = a.data @ b.data
    a_data, b_data = a.data, b.data

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b_data, -1, -2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a_data, -1, -2) @ g, b.shape)
        return ga, gb

    return _emit(data, (a, b), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = a.data.reshape(shape)
    orig = a.shape

    def backward(g):
        return (g.reshape(orig),)

    return _emit(data, (a,), backward)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    data = np.transpose(a.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return _emit(data, (a,), backward)


def slice_rows(a: Tensor, n: int) -> Tensor:
    """First n rows along axis 0 (positional-embedding lookup)."""
    if not 0 < n <= a.shape[0]:
        raise DimensionError(f"cannot take {n} rows from shape {a.shape}")
    data = a.data[:n]

    def backward(g):
        full = np.zeros_like(a.data)
        full[:n] = g
        return (full,)

    return _emit(data, (a,), backward)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table`` by integer id; gradient scatter-adds."""
    ids = np.asarray(ids)
    data = table.data[ids]

    def backward(g):
        if not table.requires_grad:
            return (None,)
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _emit(data, (table,), backward)


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)
    in_shape = a.shape

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, in_shape).copy(),)
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(ax % len(in_shape) for ax in axes)
        if not keepdims:
            for ax in sorted(axes):
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, in_shape).copy(),)

    return _emit(data, (a,), backward)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax % a.ndim] for ax in axes]))
    return scale(tensor_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def take_diag(a: Tensor) -> Tensor:
    """Diagonal of a square matrix."""
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"take_diag needs a square matrix, got {a.shape}")
    data = np.diagonal(a.data).copy()

    def backward(g):
        full = np.zeros_like(a.data)
        np.fill_diagonal(full, g)
        return (full,)

    return _emit(data, (a,), backward)


# ---------------------------------------------------------------------------
# Normalizations and softmax-family operations


def softmax_rows(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row softmax over the last axis, max-subtracted for stability.

    ``mask`` is an optional boolean array broadcastable to ``a`` marking
    valid lanes; masked lanes get probability exactly 0 and never influence
    the row max or the normalizer, so appending masked lanes is bit-exact.
    Every row must keep at least one valid lane.
    """
    x = a.data
    if mask is None:
        m = x.max(axis=-1, keepdims=True)
        e = np.exp(x - m)
    else:
        maskb = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not maskb.any(axis=-1).all():
            raise ContractError("softmax_rows: some row has no valid lane")
        neg = np.where(maskb, x, -np.inf)
        m = neg.max(axis=-1, keepdims=True)
        e = np.where(maskb, np.exp(np.where(maskb, x, m) - m), 0.0)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit(y, (a,), backward)


def logsumexp_rows(a: Tensor) -> Tensor:
    """log(sum(exp(x), last axis)), max-subtracted; reduces the last axis."""
    x = a.data
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    s = e.sum(axis=-1, keepdims=True)
    data = (m + np.log(s)).squeeze(-1)
    soft = e / s

    def backward(g):
        return (soft * np.expand_dims(g, -1),)

    return _emit(data, (a,), backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance, then affine."""
    d = a.shape[-1]
    if d < 2:
        raise DimensionError(f"layer_norm needs last dimension >= 2, got {a.shape}")
    if eps <= 0:
        raise ContractError(f"layer_norm eps must be > 0, got {eps}")
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}"
        )
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gain.data + bias.data
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        gx = None
        if a.requires_grad:
            gg = g * gain.data
            gx = (
                gg
                - gg.mean(axis=-1, keepdims=True)
                - xhat * (gg * xhat).mean(axis=-1, keepdims=True)
            ) * inv
        ggain = (g * xhat).sum(axis=lead) if gain.requires_grad else None
        gbias = g.sum(axis=lead) if bias.requires_grad else None
        return gx, ggain, gbias

    return _emit(data, (a, gain, bias), backward)


def l2_normalize_rows(a: Tensor) -> Tensor:
    """Scale each row (last axis) to unit Euclidean norm."""
    x = a.data
    norms = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    if np.any(norms == 0.0):
        raise ContractError("l2_normalize_rows: zero-norm row")
    y = x / norms

    def backward(g):
        return ((g - y * (g * y).sum(axis=-1, keepdims=True)) / norms,)

    return _emit(y, (a,), backward)


# ---------------------------------------------------------------------------
# Gradient checking


@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    max_abs_err: float
    passed: bool


@dataclass
class GradCheckReport:
    tol: float
    h: float
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def worst(self) -> GradCheckEntry:
        return max(self.entries, key=lambda e: e.max_rel_err)


def grad_check(
    build_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    denom_floor: float = 1e-3,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    ``build_fn`` rebuilds the scalar loss from the current parameter values
    and must be deterministic (any stochastic layer frozen or disabled);
    determinism is checked by evaluating it twice. Relative error is
    |a - n| / max(|a|, |n|, denom_floor): the floor keeps roundoff in the
    difference quotient from exploding the ratio where the true gradient is
    near zero.
    """
    first = float(build_fn().data)
    second = float(build_fn().data)
    if first != second:
        raise ContractError(
            f"grad_check needs a deterministic build_fn; saw {first!r} then {second!r}"
        )

    for p in params.values():
        p.zero_grad()
    with Tape() as tape:
        loss = build_fn()
        tape.backward(loss)

    report = GradCheckReport(tol=tol, h=h)
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(build_fn().data)
            flat[i] = orig - h
            f_minus = float(build_fn().data)
            flat[i] = orig
            numeric[i] = (f_plus - f_minus) / (2.0 * h)
        numeric = numeric.reshape(p.data.shape)
        abs_err = np.abs(analytic - numeric)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), denom_floor)
        rel = abs_err / denom
        max_rel = float(rel.max()) if rel.size else 0.0
        max_abs = float(abs_err.max()) if abs_err.size else 0.0
        report.entries.append(
            GradCheckEntry(name=name, max_rel_err=max_rel, max_abs_err=max_abs, passed=max_rel < tol)
        )
    return report
