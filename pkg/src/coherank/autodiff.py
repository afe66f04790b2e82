"""Reverse-mode automatic differentiation over dense 2-D float64 matrices.

A Tape records primitive applications during the forward pass; backward()
walks the record in reverse, accumulating vector-Jacobian products into the
marked leaves. Primitives executed with no active tape run forward-only.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateRowError, NumericalError, ShapeError

EPS_NORM = 1e-12

_ACTIVE_TAPES = []


class Tensor:
    """Immutable 2-D float64 matrix; scalars are 1x1."""

    __slots__ = ("values", "_id")

    def __init__(self, values, _id=None):
        arr = np.atleast_2d(np.asarray(values, dtype=np.float64))
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got ndim={arr.ndim}")
        self.values = np.ascontiguousarray(arr).copy()
        self.values.flags.writeable = False
        self._id = _id

    @property
    def shape(self):
        return self.values.shape

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    def item(self) -> float:
        if self.values.shape != (1, 1):
            raise ShapeError(f"item() requires a scalar tensor, got {self.shape}")
        return float(self.values[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


def tensor(values) -> Tensor:
    """A constant tensor; gradients never flow into it."""
    t = Tensor(values)
    if not np.isfinite(t.values).all():
        raise NumericalError("tensor values must be finite")
    return t


def scalar(x: float) -> Tensor:
    return tensor([[float(x)]])


class Tape:
    """Forward-pass record; usable as a context manager to activate recording."""

    def __init__(self):
        self._nodes = []
        self._leaf_ids = {}
        self._grads = {}
        self._next_id = 0
        self.consumed = False

    def __enter__(self):
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPES.pop()
        return False

    def leaf(self, values) -> Tensor:
        """Create a tensor whose gradient will be tracked."""
        t = Tensor(values, _id=self._fresh_id())
        if not np.isfinite(t.values).all():
            raise NumericalError("leaf values must be finite")
        self._leaf_ids[t._id] = t
        return t

    def _fresh_id(self):
        i = self._next_id
        self._next_id += 1
        return i

    def _record(self, out: Tensor, inputs, vjp):
        out._id = self._fresh_id()
        self._nodes.append((out._id, inputs, vjp))

    def backward(self, loss: Tensor):
        """Accumulate d(loss)/d(leaf) for every leaf; consumes the tape."""
        if self.consumed:
            raise RuntimeError("tape already consumed by a previous backward()")
        if loss.shape != (1, 1):
            raise ShapeError(f"backward requires a scalar loss, got {loss.shape}")
        if loss._id is None or loss._id >= self._next_id:
            raise ShapeError("loss tensor was not recorded on this tape")
        self.consumed = True
        self._grads = {loss._id: np.ones((1, 1), dtype=np.float64)}
        for out_id, inputs, vjp in reversed(self._nodes):
            g = self._grads.pop(out_id, None)
            if g is None:
                continue
            for t, gi in zip(inputs, vjp(g)):
                if t._id is None or gi is None:
                    continue
                acc = self._grads.get(t._id)
                if acc is None:
                    # own a copy: vjp outputs may alias g or each other
                    self._grads[t._id] = np.array(gi, dtype=np.float64)
                else:
                    acc += gi

    def grad(self, leaf: Tensor) -> np.ndarray:
        """Gradient for a marked leaf; zeros when the loss did not depend on it."""
        if leaf._id not in self._leaf_ids:
            raise ShapeError("grad() is only available for leaves of this tape")
        if not self.consumed:
            raise RuntimeError("call backward() before grad()")
        g = self._grads.get(leaf._id)
        if g is None:
            return np.zeros(leaf.shape, dtype=np.float64)
        return g


def _active_tape():
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


def _emit(values, inputs, vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    arr = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
    arr.flags.writeable = False
    out.values = arr
    out._id = None
    tape = _active_tape()
    if tape is not None:
        tape._record(out, inputs, vjp)
    return out


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ ({a.shape} @ {b.shape})")
    av, bv = a.values, b.values
    return _emit(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a: Tensor) -> Tensor:
    return _emit(a.values.T, (a,), lambda g: (g.T,))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes differ ({a.shape} vs {b.shape})")
    return _emit(a.values + b.values, (a, b), lambda g: (g, g))


def elementwise_sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: shapes differ ({a.shape} vs {b.shape})")
    return _emit(a.values - b.values, (a, b), lambda g: (g, -g))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit(a.values * c, (a,), lambda g: (g * c,))


def rowwise_l2_normalize(a: Tensor) -> Tensor:
    norms = np.sqrt(np.einsum("ij,ij->i", a.values, a.values))[:, None]
    if np.any(norms < EPS_NORM):
        bad = int(np.argmin(norms))
        raise DegenerateRowError(f"row {bad} has norm {float(norms[bad, 0]):.3e} < {EPS_NORM}")
    out_values = a.values / norms

    def vjp(g):
        dots = np.einsum("ij,ij->i", g, out_values)[:, None]
        return ((g - out_values * dots) / norms,)

    return _emit(out_values, (a,), vjp)


def rowwise_mean_groups(w: Tensor, indices, offsets) -> Tensor:
    """Group g of the output is the mean of w's rows listed in
    indices[offsets[g]:offsets[g+1]] (repeats counted with multiplicity)."""
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if offsets.ndim != 1 or offsets.shape[0] < 2 or offsets[0] != 0 or offsets[-1] != indices.shape[0]:
        raise ShapeError("offsets must start at 0 and end at len(indices)")
    if np.any(np.diff(offsets) < 1):
        raise ShapeError("every group must contain at least one row")
    if indices.shape[0] and (indices.min() < 0 or indices.max() >= w.rows):
        raise ShapeError("row index out of range")
    n_rows = w.rows
    out_values = _kernels.bag_mean_forward(w.values, indices, offsets)
    return _emit(
        out_values,
        (w,),
        lambda g: (_kernels.bag_mean_backward(np.ascontiguousarray(g), indices, offsets, n_rows),),
    )


def rowwise_dot(a: Tensor, b: Tensor) -> Tensor:
    """Per-row dot product, returned as an n x 1 column."""
    if a.shape != b.shape:
        raise ShapeError(f"rowwise_dot: shapes differ ({a.shape} vs {b.shape})")
    av, bv = a.values, b.values
    out = np.einsum("ij,ij->i", av, bv)[:, None]
    return _emit(out, (a, b), lambda g: (g * bv, g * av))


def concat_cols(parts) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_cols needs at least one tensor")
    rows = parts[0].rows
    if any(p.rows != rows for p in parts):
        raise ShapeError("concat_cols: row counts differ")
    widths = [p.cols for p in parts]
    splits = np.cumsum(widths)[:-1]

    def vjp(g):
        return tuple(np.ascontiguousarray(piece) for piece in np.split(g, splits, axis=1))

    return _emit(np.concatenate([p.values for p in parts], axis=1), tuple(parts), vjp)


def sum_squares(a: Tensor) -> Tensor:
    av = a.values
    return _emit([[float(np.einsum("ij,ij->", av, av))]], (a,), lambda g: (2.0 * g[0, 0] * av,))


def rowwise_sum_squares(a: Tensor) -> Tensor:
    av = a.values
    out = np.einsum("ij,ij->i", av, av)[:, None]
    return _emit(out, (a,), lambda g: (2.0 * g * av,))


def mean_all(a: Tensor) -> Tensor:
    av = a.values
    inv = 1.0 / av.size
    return _emit([[float(av.mean())]], (a,), lambda g: (np.full_like(av, g[0, 0] * inv),))


def cosine_similarity_matrix(q: Tensor, d: Tensor) -> Tensor:
    """Pairwise cosine scores for rowwise unit-normalized inputs (caller contract)."""
    if q.cols != d.cols:
        raise ShapeError(f"cosine: embedding dims differ ({q.cols} vs {d.cols})")
    return matmul(q, transpose(d))


def softmax_cross_entropy_rows(s: Tensor, target_cols, scale: float) -> Tensor:
    """Mean over rows of -log softmax(scale * s_row)[target]."""
    scale = float(scale)
    if scale <= 0:
        raise ValueError("scale must be positive")
    targets = np.asarray(target_cols, dtype=np.int64).reshape(-1)
    n, m = s.shape
    if targets.shape[0] != n:
        raise ShapeError(f"need one target per row ({targets.shape[0]} targets, {n} rows)")
    if targets.size and (targets.min() < 0 or targets.max() >= m):
        raise IndexError("target column out of range")
    z = scale * s.values
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    lse = np.log(ez.sum(axis=1, keepdims=True)) + zmax
    picked = z[np.arange(n), targets][:, None]
    loss = float((lse - picked).mean())
    probs = ez / ez.sum(axis=1, keepdims=True)

    def vjp(g):
        d = probs.copy()
        d[np.arange(n), targets] -= 1.0
        return (g[0, 0] * (scale / n) * d,)

    return _emit([[loss]], (s,), vjp)


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    per_leaf: list


def grad_check(f, leaf_values, h: float = 1e-5, tol_rel: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of f against central finite differences.

    f takes one Tensor per entry of leaf_values and returns a scalar Tensor;
    it must be deterministic. Relative error per coordinate is
    |a - n| / max(1, |a|, |n|).
    """
    if not (1e-7 <= h <= 1e-3):
        raise ValueError(f"h must lie in [1e-7, 1e-3], got {h}")
    leaf_values = [np.atleast_2d(np.asarray(v, dtype=np.float64)) for v in leaf_values]

    tape = Tape()
    with tape:
        leaves = [tape.leaf(v) for v in leaf_values]
        loss = f(*leaves)
    if loss.shape != (1, 1):
        raise ShapeError("grad_check target must return a scalar tensor")
    tape.backward(loss)
    analytic = [tape.grad(leaf) for leaf in leaves]

    def eval_at(vals) -> float:
        out = f(*[tensor(v) for v in vals])
        return out.item()

    max_err = 0.0
    per_leaf = []
    for li, base in enumerate(leaf_values):
        num = np.zeros_like(base)
        for r in range(base.shape[0]):
            for c in range(base.shape[1]):
                bumped = [v.copy() for v in leaf_values]
                bumped[li][r, c] = base[r, c] + h
                f_plus = eval_at(bumped)
                bumped[li][r, c] = base[r, c] - h
                f_minus = eval_at(bumped)
                num[r, c] = (f_plus - f_minus) / (2.0 * h)
        a, n = analytic[li], num
        if not (np.isfinite(a).all() and np.isfinite(n).all()):
            raise NumericalError("non-finite values during grad_check")
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        err = float(np.max(np.abs(a - n) / denom)) if a.size else 0.0
        per_leaf.append(err)
        max_err = max(max_err, err)

    return GradCheckReport(max_rel_err=max_err, passed=max_err < tol_rel, per_leaf=per_leaf)
