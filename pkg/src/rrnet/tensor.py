"""Dense 2-D tensors with reverse-mode automatic differentiation.

Every operation that touches a tensor with ``requires_grad`` records itself
by linking the output to its inputs together with a local backward rule.
The records are stamped with a global sequence number, so sorting the
reachable records by that number recovers a topological order of the tape.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import BoundsError, ContractError, NumericError, ShapeError

DTYPE = np.float64

_sequence = itertools.count()

BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """A dense ``rows x cols`` float64 array that can take part in autodiff."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_rule", "_seq", "_op")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.array(data, dtype=DTYPE)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got array of shape {arr.shape}")
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._rule: Optional[BackwardRule] = None
        self._seq = -1
        self._op = ""

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def is_leaf(self) -> bool:
        return self._rule is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return add(self, scale(other, -1.0))

    def __mul__(self, c: float) -> "Tensor":
        return scale(self, c)

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def _check_finite(arr: np.ndarray, where: str) -> None:
    # one reduction instead of an elementwise scan; any NaN/Inf poisons the sum
    if arr.size and not math.isfinite(float(arr.sum())):
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values produced by {where}")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(op: str, data: np.ndarray, parents: Sequence[Tensor], rule: BackwardRule) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._rule = rule
        out._seq = next(_sequence)
    else:
        out.requires_grad = False
        out._parents = ()
        out._rule = None
        out._seq = -1
    return out


def _index_array(idx, n: int, what: str) -> np.ndarray:
    arr = np.asarray(idx, dtype=np.int64).reshape(-1)
    if arr.size:
        bad = (arr < 0) | (arr >= n)
        if bad.any():
            raise BoundsError(f"{what} index {int(arr[np.argmax(bad)])} out of range [0, {n})")
    return arr


def segment_sum(values: np.ndarray, idx: np.ndarray, n: int) -> np.ndarray:
    """Sum rows of ``values`` into ``n`` buckets given by ``idx`` (plain numpy)."""
    out = np.zeros((n, values.shape[1]), dtype=DTYPE)
    if idx.size == 0:
        return out
    for c in range(values.shape[1]):
        out[:, c] = np.bincount(idx, weights=values[:, c], minlength=n)
    return out


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    A, B = a.data, b.data

    def rule(g):
        return (g @ B.T if a.requires_grad else None, A.T @ g if b.requires_grad else None)

    return _record("matmul", A @ B, (a, b), rule)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may also be a ``1 x cols`` row added to every row."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        def rule(g):
            return (g, g)
    elif b.rows == 1 and b.cols == a.cols:
        def rule(g):
            return (g, g.sum(axis=0, keepdims=True) if b.requires_grad else None)
    else:
        raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}")
    return _record("add", a.data + b.data, (a, b), rule)


def scale(x: Tensor, c: float) -> Tensor:
    x = _as_tensor(x)
    c = float(c)
    return _record("scale", x.data * c, (x,), lambda g: (g * c,))


def scale_rows(x: Tensor, w) -> Tensor:
    """Multiply row ``i`` of ``x`` by the constant ``w[i]``."""
    x = _as_tensor(x)
    w = np.asarray(w, dtype=DTYPE).reshape(-1, 1)
    if w.shape[0] != x.rows:
        raise ShapeError(f"scale_rows: {w.shape[0]} weights for {x.rows} rows")
    return _record("scale_rows", x.data * w, (x,), lambda g: (g * w,))


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.rows != b.rows:
        raise ShapeError(f"concat_cols row mismatch: {a.shape} and {b.shape}")
    p = a.cols

    def rule(g):
        return (g[:, :p], g[:, p:])

    return _record("concat_cols", np.concatenate([a.data, b.data], axis=1), (a, b), rule)


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.cols != b.cols:
        raise ShapeError(f"concat_rows column mismatch: {a.shape} and {b.shape}")
    m = a.rows

    def rule(g):
        return (g[:m], g[m:])

    return _record("concat_rows", np.concatenate([a.data, b.data], axis=0), (a, b), rule)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    if not 0 <= start <= stop <= x.cols:
        raise BoundsError(f"column slice [{start}:{stop}] outside {x.shape}")
    shape = x.shape

    def rule(g):
        full = np.zeros(shape, dtype=DTYPE)
        full[:, start:stop] = g
        return (full,)

    return _record("slice_cols", x.data[:, start:stop].copy(), (x,), rule)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    if not 0 <= start <= stop <= x.rows:
        raise BoundsError(f"row slice [{start}:{stop}] outside {x.shape}")
    shape = x.shape

    def rule(g):
        full = np.zeros(shape, dtype=DTYPE)
        full[start:stop] = g
        return (full,)

    return _record("slice_rows", x.data[start:stop].copy(), (x,), rule)


def transpose(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    return _record("transpose", x.data.T.copy(), (x,), lambda g: (g.T,))


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    return _record("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


_SIG_LO = np.finfo(DTYPE).tiny
_SIG_HI = np.nextafter(1.0, 0.0)


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    z = np.exp(-np.abs(x.data))
    s = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    # keep the output strictly inside (0, 1) even where it saturates
    s = np.clip(s, _SIG_LO, _SIG_HI)
    return _record("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))


def total(x: Tensor) -> Tensor:
    """Sum of all entries as a ``1 x 1`` tensor."""
    x = _as_tensor(x)
    shape = x.shape
    return _record("sum", np.array([[x.data.sum()]]), (x,), lambda g: (np.full(shape, g[0, 0]),))


def gather_rows(t: Tensor, idx) -> Tensor:
    t = _as_tensor(t)
    n = t.rows
    ix = _index_array(idx, n, "gather_rows")

    def rule(g):
        return (segment_sum(g, ix, n),)

    return _record("gather_rows", t.data[ix], (t,), rule)


def scatter_add(values: Tensor, targets, n: int) -> Tensor:
    values = _as_tensor(values)
    tg = _index_array(targets, n, "scatter_add target")
    if tg.size != values.rows:
        raise ShapeError(f"scatter_add: {tg.size} targets for {values.rows} rows")
    return _record("scatter_add", segment_sum(values.data, tg, n), (values,), lambda g: (g[tg],))


def scatter_mean(values: Tensor, targets, n: int) -> Tensor:
    """Row ``t`` of the output is the mean of value rows with target ``t`` (zero if none)."""
    values = _as_tensor(values)
    tg = _index_array(targets, n, "scatter_mean target")
    if tg.size != values.rows:
        raise ShapeError(f"scatter_mean: {tg.size} targets for {values.rows} rows")
    counts = np.bincount(tg, minlength=n).astype(DTYPE)
    inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0).reshape(-1, 1)
    out = segment_sum(values.data, tg, n) * inv

    def rule(g):
        return ((g * inv)[tg],)

    return _record("scatter_mean", out, (values,), rule)


BCE_EPS = 1e-7


def bce_loss(p: Tensor, y, reduction: str = "sum") -> Tensor:
    """Binary cross-entropy summed (default) or averaged over the rows of ``p``.

    ``p`` is clamped to ``[1e-7, 1 - 1e-7]`` before the logs; clamped entries
    receive zero gradient.
    """
    p = _as_tensor(p)
    y = np.asarray(y.data if isinstance(y, Tensor) else y, dtype=DTYPE)
    if y.ndim == 1:
        y = y.reshape(-1, 1)
    if y.shape != p.shape:
        raise ShapeError(f"bce_loss shape mismatch: p {p.shape} vs y {y.shape}")
    if reduction not in ("sum", "mean"):
        raise ContractError(f"unknown reduction {reduction!r}")
    pc = np.clip(p.data, BCE_EPS, 1.0 - BCE_EPS)
    inside = (p.data >= BCE_EPS) & (p.data <= 1.0 - BCE_EPS)
    value = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)).sum()
    k = max(p.rows, 1)
    factor = 1.0 / k if reduction == "mean" else 1.0

    def rule(g):
        dp = -(y / pc - (1.0 - y) / (1.0 - pc)) * inside
        return (dp * (g[0, 0] * factor),)

    return _record("bce_loss", np.array([[value * factor]]), (p,), rule)


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------


def tape(root: Tensor) -> list[Tensor]:
    """Recorded tensors reachable from ``root`` in execution order."""
    seen: set[int] = set()
    found: list[Tensor] = []
    stack = [root]
    while stack:
        t = stack.pop()
        if id(t) in seen or t._rule is None:
            continue
        seen.add(id(t))
        found.append(t)
        stack.extend(t._parents)
    found.sort(key=lambda t: t._seq)
    return found


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
    if not loss.requires_grad:
        return
    if loss._rule is None:
        loss.grad = np.ones((1, 1)) if loss.grad is None else loss.grad + 1.0
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1), dtype=DTYPE)}
    for node in reversed(tape(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._rule(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._rule is None:
                parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
            else:
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
