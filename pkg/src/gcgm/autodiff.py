"""Minimal reverse-mode differentiation over dense float64 matrices.

Every value is a 2-D ``numpy`` array. Broadcasting is limited to
scalar-times-matrix and row-vector-plus-matrix, so most shape slips
surface as :class:`~gcgm.errors.ShapeMismatch` instead of silently
producing a wrong answer.

Example::

    x = Tensor([[1.0, 2.0, 3.0]], requires_grad=True)
    loss = total(x * x)
    backward(loss)
    x.grad  # [[2., 4., 6.]]
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NonFiniteValue, NotScalar, ShapeMismatch

LOG_FLOOR = 1e-30
NORM_FLOOR = 1e-12


class Tensor:
    """A node in the computation graph."""

    __slots__ = ("value", "_grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
        name: str | None = None,
    ):
        arr = np.array(value, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeMismatch(f"tensors are 2-D, got ndim={arr.ndim}")
        self.value = arr
        self._grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    def zero_grad(self) -> None:
        self._grad = None

    def item(self) -> float:
        if self.value.size != 1:
            raise NotScalar(f"item() on shape {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NonFiniteValue(f"non-finite output in {op}")
    needs = any(p.requires_grad for p in parents)
    return Tensor(value, requires_grad=needs, parents=parents if needs else (),
                  backward_fn=backward_fn if needs else None)


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# primitives


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return _make(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g), "matmul")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.value.T.copy(), (a,), lambda g: (g.T,), "transpose")


def _broadcast_add(a: Tensor, b: Tensor, sign: float, op: str) -> Tensor:
    # same shape, or b a (1, d) row broadcast over a's rows
    if a.shape == b.shape:
        return _make(a.value + sign * b.value, (a, b), lambda g: (g, sign * g), op)
    if b.shape[0] == 1 and b.shape[1] == a.shape[1]:
        return _make(a.value + sign * b.value, (a, b),
                     lambda g: (g, sign * g.sum(axis=0, keepdims=True)), op)
    if a.shape[0] == 1 and a.shape[1] == b.shape[1] and sign > 0:
        return _broadcast_add(b, a, sign, op)
    raise ShapeMismatch(f"{op}: {a.shape} vs {b.shape}")


def add(a, b) -> Tensor:
    """Elementwise sum; a bare Python number is added to every entry."""
    if not isinstance(a, Tensor) and np.isscalar(a):
        a, b = b, a
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = as_tensor(a)
        c = float(b)
        return _make(a.value + c, (a,), lambda g: (g,), "add_scalar")
    return _broadcast_add(as_tensor(a), as_tensor(b), 1.0, "add")


def sub(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        return add(a, -float(b))
    if not isinstance(a, Tensor) and np.isscalar(a):
        return add(scale(b, -1.0), float(a))
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape or (b.shape[0] == 1 and b.shape[1] == a.shape[1]):
        return _broadcast_add(a, b, -1.0, "sub")
    raise ShapeMismatch(f"sub: {a.shape} vs {b.shape}")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "mul")
    av, bv = a.value, b.value
    return _make(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "div")
    av, bv = a.value, b.value
    return _make(av / bv, (a, b), lambda g: (g / bv, -g * av / (bv * bv)), "div")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _make(a.value * c, (a,), lambda g: (g * c,), "scale")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.value)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    """Natural log of ``max(a, 1e-30)``; the gradient is zero where clamped."""
    a = as_tensor(a)
    clamped = np.maximum(a.value, LOG_FLOOR)
    live = a.value > LOG_FLOOR
    return _make(np.log(clamped), (a,), lambda g: (np.where(live, g / clamped, 0.0),), "log")


def relu(a) -> Tensor:
    a = as_tensor(a)
    on = a.value > 0  # subgradient at 0 is 0
    return _make(np.where(on, a.value, 0.0), (a,), lambda g: (g * on,), "relu")


def absolute(a) -> Tensor:
    a = as_tensor(a)
    sgn = np.sign(a.value)
    return _make(np.abs(a.value), (a,), lambda g: (g * sgn,), "abs")


def row_l2_normalize(a) -> Tensor:
    """Scale each row to unit length; norms below 1e-12 are floored."""
    a = as_tensor(a)
    x = a.value
    raw = np.sqrt((x * x).sum(axis=1, keepdims=True))
    norm = np.maximum(raw, NORM_FLOOR)
    live = raw > NORM_FLOOR
    y = x / norm

    def back(g):
        proj = (g * y).sum(axis=1, keepdims=True)
        return (np.where(live, (g - y * proj) / norm, g / norm),)

    return _make(y, (a,), back, "row_l2_normalize")


def row_mean(a) -> Tensor:
    """Mean over rows, giving a (1, d) row."""
    a = as_tensor(a)
    n = a.shape[0]
    return _make(a.value.mean(axis=0, keepdims=True), (a,),
                 lambda g: (np.repeat(g / n, n, axis=0),), "row_mean")


def row_max(a) -> Tensor:
    """Max over rows, giving a (1, d) row; ties route gradient to the first max."""
    a = as_tensor(a)
    idx = a.value.argmax(axis=0)
    cols = np.arange(a.shape[1])

    def back(g):
        out = np.zeros_like(a.value)
        out[idx, cols] = g[0]
        return (out,)

    return _make(a.value[idx, cols][None, :], (a,), back, "row_max")


def total(a) -> Tensor:
    """Sum of every entry, as a (1, 1) scalar."""
    a = as_tensor(a)
    shape = a.shape
    return _make(np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),), "sum")


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.value.size
    shape = a.shape
    return _make(np.array([[a.value.mean()]]), (a,), lambda g: (np.full(shape, g[0, 0] / n),), "mean")


def sum_axis(a, axis: int) -> Tensor:
    """Sum along ``axis`` keeping two dimensions: axis=1 gives (N, 1), axis=0 gives (1, d)."""
    a = as_tensor(a)
    shape = a.shape
    return _make(a.value.sum(axis=axis, keepdims=True), (a,),
                 lambda g: (np.broadcast_to(g, shape).copy(),), "sum_axis")


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise ShapeMismatch(f"concat_cols: row counts {sorted(rows)}")
    edges = np.cumsum([0] + [p.shape[1] for p in parts])
    return _make(np.concatenate([p.value for p in parts], axis=1), parts,
                 lambda g: tuple(g[:, edges[k]:edges[k + 1]] for k in range(len(parts))),
                 "concat_cols")


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    cols = {p.shape[1] for p in parts}
    if len(cols) != 1:
        raise ShapeMismatch(f"concat_rows: column counts {sorted(cols)}")
    edges = np.cumsum([0] + [p.shape[0] for p in parts])
    return _make(np.concatenate([p.value for p in parts], axis=0), parts,
                 lambda g: tuple(g[edges[k]:edges[k + 1]] for k in range(len(parts))),
                 "concat_rows")


def slice_rows(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    if not 0 <= start <= stop <= a.shape[0]:
        raise ShapeMismatch(f"slice_rows [{start}:{stop}] of {a.shape}")
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        out[start:stop] = g
        return (out,)

    return _make(a.value[start:stop].copy(), (a,), back, "slice_rows")


def slice_cols(a, start: int, stop: int) -> Tensor:
    return transpose(slice_rows(transpose(a), start, stop))


def log_normalize_rows(a) -> Tensor:
    """Subtract each row's log-sum-exp, so ``exp`` of the result has unit row sums."""
    a = as_tensor(a)
    x = a.value
    m = x.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(x - m).sum(axis=1, keepdims=True))
    y = x - lse
    soft = np.exp(y)
    return _make(y, (a,), lambda g: (g - soft * g.sum(axis=1, keepdims=True),),
                 "log_normalize_rows")


def log_normalize_cols(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    m = x.max(axis=0, keepdims=True)
    lse = m + np.log(np.exp(x - m).sum(axis=0, keepdims=True))
    y = x - lse
    soft = np.exp(y)
    return _make(y, (a,), lambda g: (g - soft * g.sum(axis=0, keepdims=True),),
                 "log_normalize_cols")


def _lse(x: np.ndarray, axis: int) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))


def log_sinkhorn(a, iters: int, eps: float) -> tuple[Tensor, int]:
    """Alternate :func:`log_normalize_rows` and :func:`log_normalize_cols` on a square input.

    Stops after ``iters`` rounds or once every row of ``exp(result)`` sums
    to within ``eps`` of 1 (columns are exact after each round). The
    backward pass replays every executed normalization step. Returns the
    output tensor and the number of rounds run.
    """
    a = as_tensor(a)
    x = a.value
    steps: list[tuple[int, np.ndarray]] = []
    rounds = 0
    for rounds in range(1, iters + 1):
        x = x - _lse(x, 1)
        steps.append((1, np.exp(x)))
        x = x - _lse(x, 0)
        soft = np.exp(x)
        steps.append((0, soft))
        if np.abs(soft.sum(axis=1) - 1.0).max() < eps:
            break

    def back(g):
        for axis, soft in reversed(steps):
            g = g - soft * g.sum(axis=axis, keepdims=True)
        return (g,)

    return _make(x, (a,), back, "log_sinkhorn"), rounds


# ---------------------------------------------------------------------------
# backward pass


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into ``.grad`` of every reachable leaf.

    Interior nodes are freed of their gradient buffers once consumed.
    """
    if root.value.size != 1:
        raise NotScalar(f"backward needs a scalar, got shape {root.shape}")
    if not root.requires_grad:
        return
    order = _topological(root)
    pending: dict[int, np.ndarray] = {id(root): np.ones((1, 1))}
    for node in reversed(order):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node._grad = g.copy() if node._grad is None else node._grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()
