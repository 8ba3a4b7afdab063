"""Minimal define-by-run reverse-mode autodiff over float64 numpy arrays.

Only the operations the model graph needs are provided. Shapes never
broadcast: every binary op requires identical shapes, and the few ops that
accept a leading batch axis (``linear``, ``batch_outer``, ``maxpool2d``) say
so explicitly.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

DTYPE = np.float64

_debug = False
_branch_log: list | None = None


class ShapeError(ValueError):
    """Raised when operand shapes, ranks, or extents are incompatible."""


class NonFiniteError(FloatingPointError):
    """Raised in debug mode when an op produces NaN or Inf."""

    def __init__(self, op: str):
        super().__init__(f"non-finite value produced by op '{op}'")
        self.op = op


def set_debug(flag: bool) -> None:
    global _debug
    _debug = bool(flag)


@contextlib.contextmanager
def detect_anomaly():
    """Check every op output for NaN/Inf while the block runs."""
    global _debug
    prev = _debug
    _debug = True
    try:
        yield
    finally:
        _debug = prev


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=DTYPE, copy=True, order="C")
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if any(n <= 0 for n in arr.shape):
            raise ShapeError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the value buffer."""
        return self.data.reshape(-1)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar output, got shape {self.shape}")
        order = _topo_order(self)
        for node in order:
            if node._backward is not None:
                node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # operator sugar; all shape checks live in the functions below
    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __sub__(self, other: Tensor) -> Tensor:
        return sub(self, other)

    def __mul__(self, other: Tensor) -> Tensor:
        return mul(self, other)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)


def _topo_order(root: Tensor) -> list[Tensor]:
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
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def _make(data: np.ndarray, parents: Sequence[Tensor], op: str,
          backward: Callable[[np.ndarray], None]) -> Tensor:
    if _debug and not np.all(np.isfinite(data)):
        raise NonFiniteError(op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.op = op
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    out.grad = None
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _acc(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad += g


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data

    def backward(g):
        _acc(a, g @ b.data.T)
        _acc(b, a.data.T @ g)

    return _make(out, (a, b), "matmul", backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight.T + bias`` for x of shape [B, in] or [in].

    ``weight`` is stored [out, in]. The bias is added row-wise; this is the
    only place a vector is combined with every row of a matrix.
    """
    if weight.ndim != 2:
        raise ShapeError(f"linear: weight must be rank 2, got {weight.shape}")
    n_out, n_in = weight.shape
    if x.ndim not in (1, 2) or x.shape[-1] != n_in:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    if bias is not None and bias.shape != (n_out,):
        raise ShapeError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        _acc(x, g @ weight.data)
        if x.ndim == 1:
            _acc(weight, np.outer(g, x.data))
        else:
            _acc(weight, g.T @ x.data)
        if bias is not None:
            _acc(bias, g if g.ndim == 1 else g.sum(axis=0))

    return _make(out, parents, "linear", backward)


def outer(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 1 or b.ndim != 1:
        raise ShapeError(f"outer: both inputs must be rank 1, got {a.shape} and {b.shape}")
    out = np.outer(a.data, b.data)

    def backward(g):
        _acc(a, g @ b.data)
        _acc(b, g.T @ a.data)

    return _make(out, (a, b), "outer", backward)


def batch_outer(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise outer product: [B, D] x [B, E] -> [B, D, E]."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(f"batch_outer: need [B,D] and [B,E], got {a.shape} and {b.shape}")
    out = a.data[:, :, None] * b.data[:, None, :]

    def backward(g):
        _acc(a, np.einsum("bij,bj->bi", g, b.data))
        _acc(b, np.einsum("bij,bi->bj", g, a.data))

    return _make(out, (a, b), "batch_outer", backward)


# ---------------------------------------------------------------- pooling

def maxpool2d(t: Tensor) -> Tensor:
    """2x2 max pooling with stride 2 over the last two axes.

    Accepts [H, W] or [B, H, W]. Ties go to the lowest flat index of the
    window, so the backward pass is deterministic.
    """
    if t.ndim not in (2, 3):
        raise ShapeError(f"maxpool2d: expected [H,W] or [B,H,W], got {t.shape}")
    h, w = t.shape[-2:]
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2d: extents must be even, got {h}x{w}")
    lead = t.shape[:-2]
    x = t.data.reshape(*lead, h // 2, 2, w // 2, 2)
    x = np.moveaxis(x, -3, -2).reshape(*lead, h // 2, w // 2, 4)
    idx = np.argmax(x, axis=-1)
    out = np.take_along_axis(x, idx[..., None], axis=-1)[..., 0]
    if _branch_log is not None:
        _branch_log.append(idx.copy())

    def backward(g):
        if not t.requires_grad:
            return
        gw = np.zeros(x.shape, dtype=DTYPE)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gw = gw.reshape(*lead, h // 2, w // 2, 2, 2)
        gw = np.moveaxis(gw, -2, -3).reshape(t.shape)
        t.grad += gw

    return _make(np.ascontiguousarray(out), (t,), "maxpool2d", backward)


# ---------------------------------------------------------------- elementwise

def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    if kind == "mul":
        return mul(a, b)
    if kind == "add":
        return add(a, b)
    if kind == "sub":
        return sub(a, b)
    raise ValueError(f"unknown elementwise kind {kind!r}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")

    def backward(g):
        _acc(a, g)
        _acc(b, g)

    return _make(a.data + b.data, (a, b), "add", backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")

    def backward(g):
        _acc(a, g)
        _acc(b, -g)

    return _make(a.data - b.data, (a, b), "sub", backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")

    def backward(g):
        _acc(a, g * b.data)
        _acc(b, g * a.data)

    return _make(a.data * b.data, (a, b), "mul", backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        _acc(a, g * c)

    return _make(a.data * c, (a,), "scale", backward)


def where(cond: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Pick ``a`` where ``cond`` is true, else ``b``; cond is a constant mask."""
    _same_shape(a, b, "where")
    cond = np.asarray(cond, dtype=bool)
    if cond.shape != a.shape:
        raise ShapeError(f"where: mask {cond.shape} does not match {a.shape}")

    def backward(g):
        _acc(a, np.where(cond, g, 0.0))
        _acc(b, np.where(cond, 0.0, g))

    return _make(np.where(cond, a.data, b.data), (a, b), "where", backward)


# ---------------------------------------------------------------- activations

def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def backward(g):
        _acc(a, g * out * (1.0 - out))

    return _make(out, (a,), "sigmoid", backward)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def backward(g):
        _acc(a, g * (1.0 - out * out))

    return _make(out, (a,), "tanh", backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    if _branch_log is not None:
        _branch_log.append(mask.copy())

    def backward(g):
        _acc(a, g * mask)

    return _make(a.data * mask, (a,), "relu", backward)


# ---------------------------------------------------------------- shape ops

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.data.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")

    def backward(g):
        _acc(a, g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), "reshape", backward)


def flatten(a: Tensor, start_axis: int = 0) -> Tensor:
    """Collapse every axis from ``start_axis`` on into one."""
    if not 0 <= start_axis < a.ndim:
        raise ShapeError(f"flatten: invalid start axis {start_axis} for {a.shape}")
    return reshape(a, a.shape[:start_axis] + (int(np.prod(a.shape[start_axis:])),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: empty input list")
    ndim = tensors[0].ndim
    if not -ndim <= axis < ndim:
        raise ShapeError(f"concat: invalid axis {axis} for rank {ndim}")
    axis %= ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            t.shape[k] != tensors[0].shape[k] for k in range(ndim) if k != axis
        ):
            raise ShapeError(
                f"concat: shapes {[x.shape for x in tensors]} disagree off axis {axis}"
            )
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * ndim
                sl[axis] = slice(lo, hi)
                t.grad += g[tuple(sl)]

    return _make(out, tensors, "concat", backward)


def slice_axis(a: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"slice_axis: invalid axis {axis} for {a.shape}")
    axis %= a.ndim
    if not 0 <= start < stop <= a.shape[axis]:
        raise ShapeError(f"slice_axis: [{start}:{stop}] out of range for extent {a.shape[axis]}")
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)

    def backward(g):
        if a.requires_grad:
            a.grad[sl] += g

    return _make(np.ascontiguousarray(a.data[sl]), (a,), "slice", backward)


# ---------------------------------------------------------------- reductions

def tensor_sum(a: Tensor) -> Tensor:
    def backward(g):
        _acc(a, np.full(a.shape, g.reshape(-1)[0]))

    return _make(np.array([a.data.sum()]), (a,), "sum", backward)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        n = a.data.size

        def backward(g):
            _acc(a, np.full(a.shape, g.reshape(-1)[0] / n))

        return _make(np.array([a.data.mean()]), (a,), "mean", backward)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"mean: invalid axis {axis} for {a.shape}")
    axis %= a.ndim
    n = a.shape[axis]
    out = a.data.mean(axis=axis)
    if out.ndim == 0:
        out = out.reshape(1)

    def backward(g):
        if a.ndim == 1:
            _acc(a, np.full(a.shape, g[0] / n))
        else:
            _acc(a, np.broadcast_to(np.expand_dims(g, axis) / n, a.shape).copy())

    return _make(out, (a,), "mean", backward)


def softmax_cross_entropy(logits: Tensor, classes) -> Tensor:
    """Mean cross-entropy of [N, K] logits against integer class ids."""
    if logits.ndim == 1:
        logits2 = logits.data[None, :]
    elif logits.ndim == 2:
        logits2 = logits.data
    else:
        raise ShapeError(f"softmax_cross_entropy: logits must be [K] or [N,K], got {logits.shape}")
    n, k = logits2.shape
    cls = np.atleast_1d(np.asarray(classes))
    if cls.shape != (n,):
        raise ShapeError(f"softmax_cross_entropy: {cls.shape[0]} labels for {n} rows")
    if not np.issubdtype(cls.dtype, np.integer):
        if not np.all(cls == np.floor(cls)):
            raise ValueError("softmax_cross_entropy: class ids must be integers")
        cls = cls.astype(np.int64)
    if np.any(cls < 0) or np.any(cls >= k):
        raise ValueError(f"softmax_cross_entropy: class id out of range [0, {k})")
    shifted = logits2 - logits2.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    rows = np.arange(n)
    loss = -log_p[rows, cls].mean()

    def backward(g):
        p = np.exp(log_p)
        p[rows, cls] -= 1.0
        _acc(logits, (g.reshape(-1)[0] / n * p).reshape(logits.shape))

    return _make(np.array([loss]), (logits,), "softmax_cross_entropy", backward)


def mse(pred: Tensor, target) -> Tensor:
    """Mean over rows of the squared residual norm; a 1-d input is N scalars."""
    tgt = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=DTYPE)
    if tgt.shape != pred.shape:
        raise ShapeError(f"mse: prediction {pred.shape} vs target {tgt.shape}")
    n = pred.shape[0]
    diff = pred.data - tgt
    loss = float((diff * diff).sum()) / n
    parents = (pred, target) if isinstance(target, Tensor) else (pred,)

    def backward(g):
        grad = 2.0 * g.reshape(-1)[0] / n * diff
        _acc(pred, grad)
        if isinstance(target, Tensor):
            _acc(target, -grad)

    return _make(np.array([loss]), parents, "mse", backward)


# ---------------------------------------------------------------- gradient check

class GradCheckResult(NamedTuple):
    max_rel_error: float
    checked: int
    skipped: int


@contextlib.contextmanager
def _record_branches():
    global _branch_log
    prev = _branch_log
    _branch_log = []
    try:
        yield _branch_log
    finally:
        _branch_log = prev


def _branches_equal(x: list, y: list) -> bool:
    return len(x) == len(y) and all(np.array_equal(p, q) for p, q in zip(x, y))


def grad_check_detail(f: Callable[..., Tensor], inputs: Iterable[Tensor],
                      eps: float = 1e-6) -> GradCheckResult:
    """Compare backprop gradients with central differences on every coordinate.

    A coordinate whose +eps and -eps evaluations take different branches of a
    max-pool or relu is straddling a kink; it is skipped rather than scored.
    """
    inputs = list(inputs)
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps {eps} outside the supported range")
    for t in inputs:
        t.requires_grad = True
        t.zero_grad()
    out = f(*inputs)
    if out.data.size != 1:
        raise ShapeError(f"grad_check: f must return a scalar, got shape {out.shape}")
    out.backward()
    analytic = [t.grad.copy() for t in inputs]

    worst = 0.0
    checked = skipped = 0
    with no_grad():
        for t, an in zip(inputs, analytic):
            flat = t.data.reshape(-1)
            an_flat = an.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                with _record_branches() as bp:
                    fp = f(*inputs).item()
                flat[j] = orig - eps
                with _record_branches() as bm:
                    fm = f(*inputs).item()
                flat[j] = orig
                if not _branches_equal(bp, bm):
                    skipped += 1
                    continue
                num = (fp - fm) / (2 * eps)
                err = abs(an_flat[j] - num) / max(1.0, abs(an_flat[j]), abs(num))
                worst = max(worst, err)
                checked += 1
    return GradCheckResult(worst, checked, skipped)


def grad_check(f: Callable[..., Tensor], inputs: Iterable[Tensor], eps: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients."""
    return grad_check_detail(f, inputs, eps).max_rel_error
