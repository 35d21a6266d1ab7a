"""Reverse-mode differentiation over dense float64 matrices.

Every op output is a 2-D :class:`DTensor`. When any input requires a gradient
the op appends a record (output, inputs, local backward rule) to the active
:class:`Tape`; :func:`backward` walks that tape once in reverse.

Tapes are per-thread. Inside ``with Tape() as t:`` ops record onto ``t``;
otherwise they record onto a per-thread default tape that is replaced after
each backward pass.
"""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import NumericError

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class TapeError(RuntimeError):
    pass


class DTensor:
    """A dense matrix value, optionally tracked for gradients."""

    __slots__ = ("value", "requires_grad", "grad", "name", "_tape", "__weakref__")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        value = np.array(value, dtype=np.float64)
        if value.ndim == 0:
            value = value.reshape(1, 1)
        elif value.ndim == 1:
            value = value.reshape(1, -1)
        elif value.ndim != 2:
            raise ValueError(f"DTensor must be 2-D, got shape {value.shape}")
        self.value = value
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    def item(self) -> float:
        if self.value.size != 1:
            raise ValueError("item() requires a 1x1 tensor")
        return float(self.value[0, 0])

    def numpy(self) -> np.ndarray:
        return self.value

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "DTensor":
        return DTensor(self.value.copy())

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"DTensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


@dataclass(eq=False)
class _Record:
    out: DTensor
    inputs: tuple[DTensor, ...]
    backward: BackwardFn
    op: str


@dataclass(eq=False)
class Tape:
    """Ordered log of executed ops; a single backward pass consumes it."""

    records: list[_Record] = field(default_factory=list)
    consumed: bool = False

    def __enter__(self) -> "Tape":
        _state().stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state().stack.pop()

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: DTensor) -> None:
        if loss.shape != (1, 1):
            raise ValueError(f"backward() needs a 1x1 loss, got {loss.shape}")
        if self.consumed:
            raise TapeError("backward already ran on this tape; rebuild the loss first")
        self.consumed = True
        loss.grad = np.ones((1, 1)) if loss.grad is None else loss.grad + 1.0
        for rec in reversed(self.records):
            g = rec.out.grad
            if g is None:
                continue
            for inp, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if not np.isfinite(gi).all():
                    raise NumericError(f"non-finite gradient in backward of {rec.op}")
                inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
        st = _state()
        if st.default is self:
            st.default = None


class _State(threading.local):
    def __init__(self):
        self.stack: list[Tape] = []
        self.default: Tape | None = None
        self.enabled = True


_local = _State()


def _state() -> _State:
    return _local


def current_tape() -> Tape:
    st = _state()
    if st.stack:
        return st.stack[-1]
    if st.default is None or st.default.consumed:
        st.default = Tape()
    return st.default


def new_default_tape() -> Tape:
    """Discard any partially recorded default tape (e.g. after an aborted forward)."""
    st = _state()
    st.default = Tape()
    return st.default


@contextlib.contextmanager
def no_grad():
    st = _state()
    prev = st.enabled
    st.enabled = False
    try:
        yield
    finally:
        st.enabled = prev


def backward(loss: DTensor) -> None:
    """Populate ``.grad`` on every tensor that ``loss`` depends on."""
    if loss.shape != (1, 1):
        raise ValueError(f"backward() needs a 1x1 loss, got {loss.shape}")
    if loss._tape is None:
        if loss.requires_grad:
            loss.grad = np.ones((1, 1)) if loss.grad is None else loss.grad + 1.0
        return
    loss._tape.backward(loss)


def zero_grad(params: Sequence[DTensor]) -> None:
    for p in params:
        p.grad = None


def as_tensor(x) -> DTensor:
    return x if isinstance(x, DTensor) else DTensor(x)


def custom_op(
    value: np.ndarray, inputs: Sequence[DTensor], backward_fn: BackwardFn, op: str
) -> DTensor:
    """Wrap a forward result and its local backward rule as a tape-recorded op."""
    value = np.asarray(value, dtype=np.float64)
    if not np.isfinite(value).all():
        raise NumericError(f"non-finite output from {op}")
    out = DTensor.__new__(DTensor)
    out.value = value if value.ndim == 2 else value.reshape(value.shape[0], -1)
    out.grad = None
    out.name = None
    out._tape = None
    st = _state()
    out.requires_grad = st.enabled and any(t.requires_grad for t in inputs)
    if out.requires_grad:
        tape = current_tape()
        for t in inputs:
            if t._tape is not None and t._tape is not tape and t._tape.consumed:
                raise TapeError(
                    f"{op}: an input was recorded on a tape that already ran backward; rebuild it"
                )
        out._tape = tape
        tape.records.append(_Record(out, tuple(inputs), backward_fn, op))
    return out


def _check_same(a: DTensor, b: DTensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ----------------------------------------------------------------- forward ops


def matmul(a, b) -> DTensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return custom_op(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g), "matmul")


def add(a, b) -> DTensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "add")
    return custom_op(a.value + b.value, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> DTensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "sub")
    return custom_op(a.value - b.value, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> DTensor:
    """Elementwise product of equal-shape tensors."""
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "mul")
    av, bv = a.value, b.value
    return custom_op(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def add_bias_row(a, b) -> DTensor:
    a, b = as_tensor(a), as_tensor(b)
    if b.shape != (1, a.shape[1]):
        raise ValueError(f"add_bias_row: bias shape {b.shape} does not fit {a.shape}")
    return custom_op(
        a.value + b.value, (a, b), lambda g: (g, g.sum(axis=0, keepdims=True)), "add_bias_row"
    )


def relu(a) -> DTensor:
    a = as_tensor(a)
    mask = a.value > 0
    return custom_op(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,), "relu")


def tanh(a) -> DTensor:
    a = as_tensor(a)
    y = np.tanh(a.value)
    return custom_op(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def exp(a) -> DTensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        y = np.exp(a.value)
    return custom_op(y, (a,), lambda g: (g * y,), "exp")


def scale(a, c: float) -> DTensor:
    a = as_tensor(a)
    c = float(c)
    return custom_op(a.value * c, (a,), lambda g: (g * c,), "scale")


def clamp(a, lo: float, hi: float) -> DTensor:
    a = as_tensor(a)
    mask = (a.value >= lo) & (a.value <= hi)
    return custom_op(np.clip(a.value, lo, hi), (a,), lambda g: (g * mask,), "clamp")


def sparse_matmul(s: sp.spmatrix, a) -> DTensor:
    """``S @ A`` for a constant sparse ``S``."""
    a = as_tensor(a)
    if s.shape[1] != a.shape[0]:
        raise ValueError(f"sparse_matmul: shape mismatch {s.shape} @ {a.shape}")
    s = sp.csr_matrix(s)
    st = s.T.tocsr()
    return custom_op(
        np.asarray(s @ a.value), (a,), lambda g: (np.asarray(st @ g),), "sparse_matmul"
    )


def gather_rows(a, index) -> DTensor:
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.int64)
    n = a.shape[0]

    def bwd(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return (out,)

    if idx.size and (idx.min() < -n or idx.max() >= n):
        raise IndexError("gather_rows: index out of range")
    return custom_op(a.value[idx], (a,), bwd, "gather_rows")


def reshape(a, shape: tuple[int, int]) -> DTensor:
    a = as_tensor(a)
    orig = a.shape
    return custom_op(a.value.reshape(shape), (a,), lambda g: (g.reshape(orig),), "reshape")


def mse(a, b) -> DTensor:
    """Mean of squared differences over all entries, as a 1x1 tensor."""
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "mse")
    diff = a.value - b.value
    n = diff.size
    return custom_op(
        np.array([[np.mean(diff * diff)]]),
        (a, b),
        lambda g: (g * (2.0 / n) * diff, -g * (2.0 / n) * diff),
        "mse",
    )


def total(a) -> DTensor:
    """Sum of all entries as a 1x1 tensor."""
    a = as_tensor(a)
    shape = a.shape
    return custom_op(
        np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),), "total"
    )


def row_sum(a) -> DTensor:
    a = as_tensor(a)
    cols = a.shape[1]
    return custom_op(
        a.value.sum(axis=1, keepdims=True), (a,), lambda g: (np.repeat(g, cols, axis=1),), "row_sum"
    )


def row_sq_dist(a, b) -> DTensor:
    """Per-row squared Euclidean distance ``||a_i - b_i||^2`` as an (N, 1) tensor."""
    a, b = as_tensor(a), as_tensor(b)
    _check_same(a, b, "row_sq_dist")
    diff = a.value - b.value
    return custom_op(
        (diff * diff).sum(axis=1, keepdims=True),
        (a, b),
        lambda g: (2.0 * g * diff, -2.0 * g * diff),
        "row_sq_dist",
    )


def group_mean(a, group_size: int) -> DTensor:
    """Mean over consecutive blocks of ``group_size`` rows: (B*q, p) -> (B, p)."""
    a = as_tensor(a)
    rows, p = a.shape
    if group_size < 1 or rows % group_size:
        raise ValueError(f"group_mean: {rows} rows not divisible by {group_size}")
    b = rows // group_size
    mean = a.value.reshape(b, group_size, p).mean(axis=1)
    return custom_op(
        mean, (a,), lambda g: (np.repeat(g / group_size, group_size, axis=0),), "group_mean"
    )


def group_cov(a, group_size: int, diagonal: bool = False) -> DTensor:
    """Sample covariance (denominator q-1) of consecutive row blocks.

    Returns a (B, p*p) tensor whose row ``b`` is the flattened p x p covariance
    of rows ``b*q .. b*q+q-1``. With ``diagonal`` the off-diagonal entries are zero.
    """
    a = as_tensor(a)
    rows, p = a.shape
    q = group_size
    if q < 2 or rows % q:
        raise ValueError(f"group_cov: need group_size >= 2 dividing {rows}, got {q}")
    b = rows // q
    x = a.value.reshape(b, q, p)
    centered = x - x.mean(axis=1, keepdims=True)
    cov = (np.swapaxes(centered, 1, 2) @ centered) / (q - 1)
    eye = np.eye(p, dtype=bool)
    if diagonal:
        cov = np.where(eye, cov, 0.0)

    def bwd(g):
        gm = g.reshape(b, p, p)
        if diagonal:
            gm = np.where(eye, gm, 0.0)
        sym = gm + np.swapaxes(gm, 1, 2)
        # the mean's contribution cancels because centered rows sum to zero
        gx = (centered @ sym) / (q - 1)
        return (gx.reshape(rows, p),)

    return custom_op(cov.reshape(b, p * p), (a,), bwd, "group_cov")
