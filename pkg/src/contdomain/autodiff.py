"""Small reverse-mode autodiff over numpy arrays.

Only the primitives the classifier needs are provided. Every primitive
computes its forward value eagerly and, when a :class:`Tape` is active,
appends a node holding a vector-Jacobian closure. :func:`backpropagate`
replays the tape in reverse.

Elementwise binary primitives follow numpy broadcasting for the common
``(B, n) op (n,)`` / ``(B, 1)`` cases; gradients are summed back to the
input shape.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from typing import Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

_logger = logging.getLogger(__name__)

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805
COS_EPS = 1e-12

_active_tape: Optional["Tape"] = None


class Tensor:
    """A float64 array plus bookkeeping for the tape."""

    __slots__ = ("value", "name", "requires_grad", "_node")

    def __init__(self, value, name: Optional[str] = None, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.name = name
        self.requires_grad = requires_grad
        self._node: Optional[_Node] = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    # operator sugar; keeps model code readable
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("op", "inputs", "output", "vjp")

    def __init__(self, op: str, inputs: Sequence[Tensor], output: Tensor,
                 vjp: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


class Tape:
    """Ordered record of primitive applications (the computation record).

    Use as a context manager; primitives executed inside the ``with`` block
    are recorded on it. Outside any tape, primitives run without recording.
    """

    def __init__(self):
        self.nodes: List[_Node] = []
        self._prev: Optional[Tape] = None

    def __enter__(self):
        global _active_tape
        self._prev = _active_tape
        _active_tape = self
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = self._prev
        return False

    def __len__(self):
        return len(self.nodes)


@contextmanager
def no_record():
    """Suspend recording for the enclosed block (inference)."""
    global _active_tape
    prev, _active_tape = _active_tape, None
    try:
        yield
    finally:
        _active_tape = prev


def _record(op: str, inputs: Sequence[Tensor], out_value: np.ndarray, vjp) -> Tensor:
    out = Tensor(out_value)
    tape = _active_tape
    if tape is not None and any(t.requires_grad or t._node is not None for t in inputs):
        node = _Node(op, inputs, out, vjp)
        out._node = node
        tape.nodes.append(node)
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return _record("add", (a, b), a.value + b.value,
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return _record("sub", (a, b), a.value - b.value,
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("mul", a, b)
    av, bv = a.value, b.value
    return _record("mul", (a, b), av * bv,
                   lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("div", a, b)
    av, bv = a.value, b.value
    out = av / bv
    return _record("div", (a, b), out,
                   lambda g: (_unbroadcast(g / bv, av.shape),
                              _unbroadcast(-g * out / bv, bv.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    return _record("scale", (a,), a.value * c, lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 2-D/1-D operands (covers matrix-vector)."""
    av, bv = a.value, b.value
    if av.ndim not in (1, 2) or bv.ndim not in (1, 2) or av.shape[-1] != bv.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {av.shape} and {bv.shape}")

    def vjp(g):
        if bv.ndim == 1:
            ga = np.multiply.outer(g, bv) if av.ndim == 2 else g * bv
            gb = av.T @ g if av.ndim == 2 else av * g
        elif av.ndim == 1:
            ga = bv @ g
            gb = np.multiply.outer(av, g)
        else:
            ga = g @ bv.T
            gb = av.T @ g
        return ga, gb

    return _record("matmul", (a, b), av @ bv, vjp)


def matvec(m: Tensor, v: Tensor) -> Tensor:
    if m.value.ndim != 2 or v.value.ndim != 1:
        raise ValueError(f"matvec: expected matrix and vector, got {m.shape} and {v.shape}")
    return matmul(m, v)


def transpose(a: Tensor) -> Tensor:
    if a.value.ndim != 2:
        raise ValueError(f"transpose: expected a matrix, got {a.shape}")
    return _record("transpose", (a,), a.value.T, lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ValueError(f"reshape: cannot reshape {old} to {shape}") from None
    return _record("reshape", (a,), out, lambda g: (g.reshape(old),))


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise ValueError("concat: no inputs")
    values = [p.value for p in parts]
    try:
        out = np.concatenate(values, axis=axis)
    except ValueError:
        shapes = [v.shape for v in values]
        raise ValueError(f"concat: incompatible shapes {shapes} on axis {axis}") from None
    sizes = np.cumsum([v.shape[axis] for v in values])[:-1]

    def vjp(g):
        return np.split(g, sizes, axis=axis)

    return _record("concat", tuple(parts), out, vjp)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        full[..., start:stop] = g
        return (full,)

    return _record("slice", (a,), a.value[..., start:stop], vjp)


def take_rows(table: Tensor, index) -> Tensor:
    """Row gather, used for embedding lookup."""
    idx = np.asarray(index, dtype=np.int64)
    n = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"take_rows: index out of range for table with {n} rows")
    shape = table.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _record("take_rows", (table,), table.value[idx], vjp)


def sigmoid(a: Tensor) -> Tensor:
    x = a.value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _record("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    return _record("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return _record("exp", (a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    x = a.value
    return _record("log", (a,), np.log(x), lambda g: (g / x,))


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), computed stably."""
    x = a.value
    out = np.logaddexp(0.0, x)
    sig = np.exp(x - out)
    return _record("softplus", (a,), out, lambda g: (g * sig,))


def maximum(a: Tensor, c: float) -> Tensor:
    """max(a, c) against a constant; subgradient 0 at the kink."""
    x = a.value
    out = np.maximum(x, c)
    mask = (x > c).astype(np.float64)
    return _record("maximum", (a,), out, lambda g: (g * mask,))


def selu(a: Tensor) -> Tensor:
    x = a.value
    neg = SELU_SCALE * SELU_ALPHA * np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0, SELU_SCALE * x, neg)
    deriv = np.where(x > 0, SELU_SCALE, neg + SELU_SCALE * SELU_ALPHA)
    return _record("selu", (a,), out, lambda g: (g * deriv,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.value)
    return _record("sqrt", (a,), out, lambda g: (g * 0.5 / out,))


def l2norm(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    x = a.value
    out = np.sqrt(np.sum(x * x, axis=axis, keepdims=True))

    def vjp(g):
        g = g if keepdims else np.expand_dims(g, axis)
        safe = np.where(out > 0, out, 1.0)
        return (g * x / safe,)

    return _record("l2norm", (a,), out if keepdims else np.squeeze(out, axis), vjp)


def sum(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = a.value
    shape = x.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _record("sum", (a,), np.sum(x, axis=axis, keepdims=keepdims), vjp)


def mean(a: Tensor, axis: Optional[int] = None) -> Tensor:
    n = a.value.size if axis is None else a.value.shape[axis]
    return scale(sum(a, axis=axis), 1.0 / n)


# --------------------------------------------------------------- composites


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """cos(a, b) for two vectors, denominator guarded by ``COS_EPS``."""
    if a.value.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"cosine_similarity: need equal-length vectors, got {a.shape}, {b.shape}")
    denom_raw = float(np.linalg.norm(a.value) * np.linalg.norm(b.value))
    if denom_raw < COS_EPS:
        _logger.debug("cosine_similarity: near-zero norm product %.3g guarded", denom_raw)
    dot = sum(mul(a, b))
    return div(dot, maximum(mul(l2norm(a), l2norm(b)), COS_EPS))


def cosine_matrix(h: Tensor, w: Tensor) -> Tensor:
    """Pairwise cosines between rows of ``h`` (B, d) and rows of ``w`` (k, d)."""
    if h.value.ndim != 2 or w.value.ndim != 2 or h.shape[1] != w.shape[1]:
        raise ValueError(f"cosine_matrix: incompatible shapes {h.shape} and {w.shape}")
    dots = matmul(h, transpose(w))
    norms = mul(l2norm(h, keepdims=True), transpose(l2norm(w, keepdims=True)))
    return div(dots, maximum(norms, COS_EPS))


def softmax_weights(scores: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax along the last axis, shifted by the (constant) row max.

    With ``mask`` (0/1 array of the same shape), masked-out entries get zero
    weight; an all-zero mask row yields all-zero weights.
    """
    x = scores.value
    if x.size == 0:
        raise ValueError("softmax_weights: empty input")
    if mask is None:
        shift = np.max(x, axis=-1, keepdims=True)
    else:
        mask = np.asarray(mask, dtype=np.float64)
        shift = np.max(np.where(mask > 0, x, -np.inf), axis=-1, keepdims=True)
        shift = np.where(np.isfinite(shift), shift, 0.0)
    e = exp(sub(scores, Tensor(shift)))
    if mask is not None:
        e = mul(e, Tensor(mask))
    total = sum(e, axis=-1, keepdims=True)
    # only empty-mask rows hit the guard; their numerators are zero too
    return div(e, maximum(total, 1e-300))


# ----------------------------------------------------------------- backward


def backpropagate(tape: Tape, loss: Tensor, params: Optional[Iterable[Tensor]] = None
                  ) -> Dict[str, np.ndarray]:
    """Reverse sweep over ``tape`` from scalar ``loss``.

    Returns gradients keyed by parameter name for every named
    ``requires_grad`` tensor reached (or for ``params`` when given; those not
    reached get zeros).
    """
    if loss.value.size != 1:
        raise ValueError(f"backpropagate: loss must be scalar, got shape {loss.shape}")
    node = loss._node
    if node is None or not tape.nodes or all(n is not node for n in reversed(tape.nodes)):
        raise ValueError("backpropagate: loss was not produced on this tape")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    leaves: Dict[int, Tensor] = {}
    for n in reversed(tape.nodes):
        g = grads.pop(id(n.output), None)
        if g is None:
            continue
        for inp, gi in zip(n.inputs, n.vjp(g)):
            if gi is None or not (inp.requires_grad or inp._node is not None):
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if inp.requires_grad:
                leaves[key] = inp

    out: Dict[str, np.ndarray] = {}
    if params is not None:
        for p in params:
            out[p.name] = grads.get(id(p), np.zeros_like(p.value))
        return out
    for key, t in leaves.items():
        name = t.name if t.name is not None else f"tensor_{key}"
        out[name] = grads[key]
    return out


def finite_difference_check(f: Callable[[], Tensor], params: Sequence[Tensor],
                            eps: float = 1e-5, floor: float = 1e-6) -> float:
    """Worst relative error between tape gradients and central differences.

    ``f`` rebuilds the scalar from the current parameter values. Relative
    error is ``|a - n| / max(|a|, |n|, floor)``. Points on a kink of
    max/hinge terms must be avoided by the caller.
    """
    if eps <= 0:
        raise ValueError("finite_difference_check: eps must be positive")
    with Tape() as tape:
        loss = f()
    if loss.value.size != 1:
        raise ValueError("finite_difference_check: f must return a scalar")
    if loss._node is None:
        analytic = {p.name: np.zeros_like(p.value) for p in params}
    else:
        analytic = backpropagate(tape, loss, params)

    worst = 0.0
    for p in params:
        flat = p.value.flat
        ga = analytic[p.name].reshape(-1)
        for i in range(p.value.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f().value)
            flat[i] = orig - eps
            down = float(f().value)
            flat[i] = orig
            num = (up - down) / (2 * eps)
            err = abs(ga[i] - num) / max(abs(ga[i]), abs(num), floor)
            worst = max(worst, err)
    return worst
