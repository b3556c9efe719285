"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything trainable in this package runs on the `Tensor` type below: a thin
wrapper around a C-contiguous float64 numpy array plus a `requires_grad` flag
and a lazily allocated gradient buffer.  Differentiable operations record
themselves on the currently active `Tape`; `Tape.backward` replays the records
in exact reverse execution order, once each, accumulating gradients in a fixed
order so repeated backward passes over the same tape are bit-identical.

Only the generic array operations live here (arithmetic, matmul, reductions,
reshapes, pointwise nonlinearities, softmax).  Structured layers (convolution,
layer norm, the selective scan, the spectral loss) are fused operations defined
in their own modules; they plug into the same tape via `record_op`.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError, DomainError

__all__ = [
    "Tensor",
    "Tape",
    "record_op",
    "active_tape",
    "add",
    "sub",
    "mul",
    "neg",
    "square",
    "matmul",
    "reshape",
    "transpose",
    "concat",
    "tsum",
    "tmean",
    "exp",
    "sigmoid",
    "silu",
    "softplus",
    "softmax",
    "grad_check",
]


class Tensor:
    """A float64 array with an autodiff flag.

    Construction from external data rejects non-finite values; results of
    internal operations skip that check (they are products of finite inputs
    under finite-preserving ops, and divergence is detected at the training
    loop level instead).
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        # note: order="C" (not ascontiguousarray) so 0-d scalars keep shape ()
        arr = np.asarray(data, dtype=np.float64, order="C")
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        if not all(int(s) > 0 for s in arr.shape):
            raise DimensionError(f"tensor extents must be positive, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("tensor construction requires finite values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @staticmethod
    def _wrap(data: np.ndarray) -> "Tensor":
        # internal fast path: trusted finite data, no validation
        t = object.__new__(Tensor)
        t.data = data
        t.requires_grad = False
        t.grad = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # operator sugar; scalars are promoted to constant tensors
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


class _OpRecord:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


_TAPE_STACK: list["Tape"] = []


def active_tape() -> "Tape | None":
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager around the forward computation, then call
    `backward(loss)`.  Each backward pass starts from a clean gradient map and
    visits every recorded operation exactly once, in reverse execution order,
    so two backward passes over the same tape produce bit-identical gradients.
    """

    def __init__(self):
        self._ops: list[_OpRecord] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        if popped is not self:
            raise ContractError("tape stack corrupted: exited a tape that is not innermost")
        return False

    def __len__(self) -> int:
        return len(self._ops)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(input) into `.grad` of every tensor on the tape."""
        if loss.shape != ():
            raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
        for rec in reversed(self._ops):
            out_grad = grads.pop(id(rec.output), None)
            if out_grad is None:
                continue
            in_grads = rec.backward(out_grad)
            for tensor, g in zip(rec.inputs, in_grads):
                if g is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
            # expose the gradient on intermediates too; cheap and useful
            rec.output.grad = out_grad
        for rec in self._ops:
            for tensor in rec.inputs:
                if tensor.requires_grad and id(tensor) in grads:
                    tensor.grad = grads[id(tensor)]
        if loss.requires_grad:
            loss.grad = np.ones((), dtype=np.float64)


def record_op(output_data: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    """Wrap an op result and record it on the active tape if gradients are needed.

    `backward(out_grad)` must return one gradient array (or None) per input, in
    input order.  This is the single entry point every fused op in the package
    uses to join the tape.
    """
    out = Tensor._wrap(output_data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._ops.append(_OpRecord(tuple(inputs), out, backward))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record_op(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record_op(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record_op(out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return record_op(-a.data, (a,), lambda g: (-g,))


def square(a: Tensor) -> Tensor:
    return record_op(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


# ---------------------------------------------------------------------------
# linear algebra and shape ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul operands must have at least 2 dimensions")
    out = a.data @ b.data

    def backward(g):
        ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape)
        gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape)
        return ga, gb

    return record_op(out, (a, b), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)
    return record_op(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inv = np.argsort(axes)
    out = np.ascontiguousarray(a.data.transpose(axes))
    return record_op(out, (a,), lambda g: (g.transpose(inv),))


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise DimensionError("concat requires at least one tensor")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, offsets, axis=axis))

    return record_op(out, tuple(tensors), backward)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.shape).copy(),)

    return record_op(np.asarray(out), (a,), backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    s = tsum(a, axis=axis, keepdims=keepdims)
    return mul(s, _as_tensor(1.0 / n))


# ---------------------------------------------------------------------------
# pointwise nonlinearities


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return record_op(out, (a,), lambda g: (g * out,))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return record_op(out, (a,), lambda g: (g * out * (1.0 - out),))


def silu(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    out = a.data * s
    return record_op(out, (a,), lambda g: (g * (s + a.data * s * (1.0 - s)),))


def softplus(a: Tensor) -> Tensor:
    out = np.logaddexp(0.0, a.data)
    return record_op(out, (a,), lambda g: (g * _sigmoid(a.data),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp(-x) overflowing to inf in the far negative tail still yields the
    # correct 0.0, so suppress the warning instead of masking (much faster)
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis`."""
    if a.ndim == 0 or a.shape[axis] == 0:
        raise DomainError("softmax requires a non-empty axis")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return record_op(out, (a,), backward)


# ---------------------------------------------------------------------------
# finite-difference verification


def grad_check(f, inputs: list[Tensor], eps: float = 1e-5) -> float:
    """Compare tape gradients of scalar-valued `f` against central differences.

    Returns the worst relative error max |analytic - numeric| / max(1, |numeric|)
    over every coordinate of every input.  `eps` must lie in [1e-7, 1e-3].
    Inputs are perturbed in place and restored.
    """
    if not (1e-7 <= eps <= 1e-3):
        raise DomainError(f"grad_check eps must lie in [1e-7, 1e-3], got {eps}")
    for t in inputs:
        t.requires_grad = True
    with Tape() as tape:
        out = f(*inputs)
    if not isinstance(out, Tensor) or out.shape != ():
        raise ContractError("grad_check requires f to return a scalar Tensor")
    tape.backward(out)
    analytic = []
    for t in inputs:
        if t.grad is None:
            analytic.append(np.zeros_like(t.data))
        else:
            analytic.append(t.grad.copy())
    worst = 0.0
    for t, ga in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = f(*inputs).item()
            flat[i] = orig - eps
            fm = f(*inputs).item()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * eps)
            err = abs(gflat[i] - numeric) / max(1.0, abs(numeric))
            if err > worst:
                worst = err
    return worst
