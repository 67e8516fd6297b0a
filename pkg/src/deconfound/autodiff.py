"""Tape-based reverse-mode differentiation over float64 numpy arrays.

A ``Tape`` records every primitive applied to ``Tensor`` handles, in execution
order, so a single ``backward`` sweep yields exact gradients for any recorded
scalar loss. The same tape can be replayed to reproduce the forward values
bit-for-bit. Broadcasting is deliberately restricted to scalar-with-tensor;
the one structured exception is ``add_bias`` (matrix plus row vector), which
has its own explicit reverse rule.

Every public operation checks its output for NaN/Inf and raises
``NumericsError`` instead of letting bad values propagate.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import NumericsError, ShapeMismatchError, ValidationError

__all__ = [
    "Tape",
    "Tensor",
    "matmul",
    "tanh",
    "sigmoid",
    "relu",
    "concat",
    "add_bias",
    "tanh_values",
    "backward",
    "finite_diff_grad",
    "relative_gradient_error",
    "gradient_check",
]


def _open_unit_clip(y: np.ndarray, low: float, high: float) -> np.ndarray:
    # float64 rounds tanh/sigmoid to exactly +-1 / 0/1 for large |x|; nudge back
    # inside the open interval so the documented bounds hold for every input.
    y[y >= high] = np.nextafter(high, low)
    y[y <= low] = np.nextafter(low, high)
    return y


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _scalar_reduce(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape != shape:
        return np.asarray(grad.sum()).reshape(shape)
    return grad


# op name -> forward(input_values, aux) -> output value
_FORWARD: dict[str, Callable] = {
    "matmul": lambda v, aux: v[0] @ v[1],
    "add": lambda v, aux: v[0] + v[1],
    "sub": lambda v, aux: v[0] - v[1],
    "mul": lambda v, aux: v[0] * v[1],
    "neg": lambda v, aux: -v[0],
    "tanh": lambda v, aux: _open_unit_clip(np.tanh(v[0]), -1.0, 1.0),
    "sigmoid": lambda v, aux: _open_unit_clip(_stable_sigmoid(v[0]), 0.0, 1.0),
    "relu": lambda v, aux: np.maximum(v[0], 0.0),
    "sum": lambda v, aux: np.asarray(v[0].sum()),
    "mean": lambda v, aux: np.asarray(v[0].mean()),
    "concat": lambda v, aux: np.concatenate(v, axis=aux),
    "add_bias": lambda v, aux: v[0] + v[1],
    "add_scalar": lambda v, aux: v[0] + aux,
    "mul_scalar": lambda v, aux: v[0] * aux,
}

# op name -> backward(grad_out, input_values, out_value, aux) -> per-input grads
_BACKWARD: dict[str, Callable] = {
    "matmul": lambda g, v, out, aux: (g @ v[1].T, v[0].T @ g),
    "add": lambda g, v, out, aux: (_scalar_reduce(g, v[0].shape), _scalar_reduce(g, v[1].shape)),
    "sub": lambda g, v, out, aux: (_scalar_reduce(g, v[0].shape), _scalar_reduce(-g, v[1].shape)),
    "mul": lambda g, v, out, aux: (
        _scalar_reduce(g * v[1], v[0].shape),
        _scalar_reduce(g * v[0], v[1].shape),
    ),
    "neg": lambda g, v, out, aux: (-g,),
    "tanh": lambda g, v, out, aux: (g * (1.0 - out * out),),
    "sigmoid": lambda g, v, out, aux: (g * out * (1.0 - out),),
    "relu": lambda g, v, out, aux: (g * (v[0] > 0.0),),
    "sum": lambda g, v, out, aux: (np.full(v[0].shape, float(g)),),
    "mean": lambda g, v, out, aux: (np.full(v[0].shape, float(g) / v[0].size),),
    "concat": lambda g, v, out, aux: _concat_backward(g, v, aux),
    "add_bias": lambda g, v, out, aux: (g, g.sum(axis=0, keepdims=True)),
    "add_scalar": lambda g, v, out, aux: (g,),
    "mul_scalar": lambda g, v, out, aux: (g * aux,),
}


def _run(op: str, vals, aux=None) -> np.ndarray:
    # non-finite results raise NumericsError at recording time; silence the
    # redundant numpy overflow warnings here
    with np.errstate(over="ignore", invalid="ignore"):
        return _FORWARD[op](vals, aux)


def _concat_backward(g, vals, axis):
    sizes = [v.shape[axis] for v in vals]
    offsets = np.cumsum([0] + sizes)
    slicer = [slice(None)] * g.ndim
    out = []
    for i in range(len(vals)):
        slicer[axis] = slice(offsets[i], offsets[i + 1])
        out.append(g[tuple(slicer)])
    return tuple(out)


class Tape:
    """Ordered record of primitive operations with their inputs and values.

    Node ids are indices into parallel lists, so topological order is the
    recording order by construction.
    """

    def __init__(self):
        self.values: list[np.ndarray] = []
        self.ops: list[tuple[str, tuple[int, ...], object]] = []

    def __len__(self) -> int:
        return len(self.values)

    def _record(self, value: np.ndarray, op: str, inputs: tuple[int, ...], aux=None) -> "Tensor":
        # overflow is reported through NumericsError, not a numpy warning
        if not np.isfinite(value).all():
            raise NumericsError(f"operation '{op}' produced a non-finite value")
        nid = len(self.values)
        self.values.append(value)
        self.ops.append((op, inputs, aux))
        return Tensor(self, nid)

    def leaf(self, value) -> "Tensor":
        """Register an input node (parameter or constant)."""
        arr = np.ascontiguousarray(value, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NumericsError("leaf value contains NaN or Inf")
        nid = len(self.values)
        self.values.append(arr)
        self.ops.append(("leaf", (), None))
        return Tensor(self, nid)

    def is_leaf(self, nid: int) -> bool:
        return self.ops[nid][0] == "leaf"

    def replay(self) -> list[np.ndarray]:
        """Re-execute the recorded forward pass from the leaf values.

        Returns the recomputed value list; replay is bit-exact because the
        identical primitives run in the identical order.
        """
        values: list[np.ndarray] = []
        for nid, (op, inputs, aux) in enumerate(self.ops):
            if op == "leaf":
                values.append(self.values[nid])
            else:
                values.append(_run(op, [values[i] for i in inputs], aux))
        return values


class Tensor:
    """Handle to one node on a tape; ``value`` is the recorded float64 array."""

    __slots__ = ("tape", "nid")

    def __init__(self, tape: Tape, nid: int):
        self.tape = tape
        self.nid = nid

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.nid]

    @property
    def shape(self) -> tuple:
        return self.tape.values[self.nid].shape

    def __repr__(self) -> str:
        return f"Tensor(nid={self.nid}, shape={self.shape})"

    # -- elementwise arithmetic (same shape, or one operand scalar) --

    def _binary(self, other, op: str):
        if isinstance(other, Tensor):
            a, b = self.value, other.value
            if a.shape != b.shape and a.size != 1 and b.size != 1:
                raise ShapeMismatchError(
                    f"'{op}' needs equal shapes or a scalar operand, got {a.shape} and {b.shape}"
                )
            return self.tape._record(_run(op, (a, b)), op, (self.nid, other.nid))
        return self.tape._record(
            _run(op + "_scalar", (self.value,), float(other)), op + "_scalar", (self.nid,), float(other)
        )

    def __add__(self, other):
        return self._binary(other, "add")

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, "sub")

    def __mul__(self, other):
        return self._binary(other, "mul")

    __rmul__ = __mul__

    def __neg__(self):
        return self.tape._record(-self.value, "neg", (self.nid,))

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self) -> "Tensor":
        return self.tape._record(np.asarray(self.value.sum()), "sum", (self.nid,))

    def mean(self) -> "Tensor":
        return self.tape._record(np.asarray(self.value.mean()), "mean", (self.nid,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-d tensors recorded on the active tape."""
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2:
        raise ShapeMismatchError(f"matmul needs 2-d operands, got {av.shape} and {bv.shape}")
    if av.shape[1] != bv.shape[0]:
        raise ShapeMismatchError(f"matmul inner dimensions disagree: {av.shape} vs {bv.shape}")
    return a.tape._record(_run("matmul", (av, bv)), "matmul", (a.nid, b.nid))


def tanh(t: Tensor) -> Tensor:
    return t.tape._record(_run("tanh", (t.value,)), "tanh", (t.nid,))


def sigmoid(t: Tensor) -> Tensor:
    return t.tape._record(_run("sigmoid", (t.value,)), "sigmoid", (t.nid,))


def relu(t: Tensor) -> Tensor:
    return t.tape._record(np.maximum(t.value, 0.0), "relu", (t.nid,))


def tanh_values(x: np.ndarray) -> np.ndarray:
    """tanh for forward-only numpy code paths; identical to the tape op,
    including the open-interval bound."""
    return _open_unit_clip(np.tanh(np.asarray(x, dtype=np.float64)), -1.0, 1.0)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Concatenate 2-d tensors along ``axis``."""
    if len(tensors) == 0:
        raise ValidationError("concat needs at least one tensor")
    tape = tensors[0].tape
    vals = [t.value for t in tensors]
    other = 1 - axis
    if any(v.ndim != 2 for v in vals) or len({v.shape[other] for v in vals}) != 1:
        raise ShapeMismatchError(f"concat axis={axis} got incompatible shapes {[v.shape for v in vals]}")
    return tape._record(np.concatenate(vals, axis=axis), "concat", tuple(t.nid for t in tensors), axis)


def add_bias(m: Tensor, bias: Tensor) -> Tensor:
    """Add a (1, n) row vector to every row of an (N, n) matrix."""
    mv, bv = m.value, bias.value
    if mv.ndim != 2 or bv.shape != (1, mv.shape[1]):
        raise ShapeMismatchError(f"add_bias needs (N, n) and (1, n), got {mv.shape} and {bv.shape}")
    return m.tape._record(mv + bv, "add_bias", (m.nid, bias.nid))


def backward(tape: Tape, loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Gradient of a scalar loss node with respect to each tensor in ``wrt``.

    Tensors not on any path to the loss receive exact zero gradients.
    """
    if loss.tape is not tape:
        raise ValidationError("loss tensor does not belong to the given tape")
    if loss.value.size != 1:
        raise ValidationError(f"loss must be scalar, got shape {loss.value.shape}")
    for t in wrt:
        if t.tape is not tape or not 0 <= t.nid < len(tape):
            raise ValidationError(f"node {getattr(t, 'nid', t)} is not on the tape")

    grads: list[np.ndarray | None] = [None] * len(tape)
    grads[loss.nid] = np.ones_like(tape.values[loss.nid])
    for nid in range(loss.nid, -1, -1):
        g = grads[nid]
        if g is None:
            continue
        op, inputs, aux = tape.ops[nid]
        if op == "leaf":
            continue
        vals = [tape.values[i] for i in inputs]
        for i, gi in zip(inputs, _BACKWARD[op](g, vals, tape.values[nid], aux)):
            grads[i] = gi if grads[i] is None else grads[i] + gi
    return [
        grads[t.nid] if grads[t.nid] is not None else np.zeros_like(tape.values[t.nid])
        for t in wrt
    ]


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient (f(x+h*e_i) - f(x-h*e_i)) / (2h) per coordinate."""
    if not h > 0:
        raise ValidationError(f"h must be > 0, got {h}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = grad.ravel()
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.ravel()[i] += h
        xm.ravel()[i] -= h
        flat[i] = (float(f(xp)) - float(f(xm))) / (2.0 * h)
    return grad


def relative_gradient_error(a: np.ndarray, b: np.ndarray) -> float:
    """max over coordinates of |a - b| / max(1, |a|, |b|)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"gradient shapes disagree: {a.shape} vs {b.shape}")
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b) / denom))


def gradient_check(
    loss_and_grads: Callable[[dict], tuple[float, dict]],
    params: dict[str, np.ndarray],
    h: float = 1e-5,
) -> float:
    """Worst relative error between analytic gradients and central differences.

    ``loss_and_grads(params)`` must return ``(loss, {name: grad})`` and be
    deterministic in ``params``.
    """
    _, grads = loss_and_grads(params)
    worst = 0.0
    for name, p in params.items():

        def f(x, _name=name):
            return loss_and_grads({**params, _name: x})[0]

        fd = finite_diff_grad(f, p, h)
        worst = max(worst, relative_gradient_error(grads[name], fd))
    return worst
