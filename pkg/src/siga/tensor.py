"""Dense float64 tensors with reverse-mode automatic differentiation.

Execution is define-by-run: every differentiable op appends a backward
closure to a global tape as a side effect of running forward.  Calling
:func:`backward` on a scalar replays the tape in reverse recording
order, which is a valid reverse topological order of the dataflow graph,
accumulating gradients additively into every tensor that was created
with ``requires_grad=True``.

Conventions:
  * all payloads are float64; nothing here ever downcasts,
  * gradients accumulate with ``+=``; callers zero parameter grads
    between steps (see the optimizer),
  * one ``backward`` per tape, then ``tape().clear()``.  Replaying a
    tape twice double-counts.
  * generic ops never clamp their operands.  Loss code is responsible
    for clamping arguments of ``log``/``div`` away from 0 by ``EPS``.

The op set is closed and enumerated in ``OPS``; :func:`forward_op`
dispatches by name for harnesses that drive ops generically.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, NumericError, ShapeError

# Loss-side clamp bound. Generic ops do not apply it.
EPS = 1e-7


def rng(seed) -> np.random.Generator:
    """Deterministic generator; the only sanctioned randomness source.

    seed: an int, or a sequence of ints for hierarchical keys such as
    (corpus seed, sample index).
    """
    key = [int(s) for s in seed] if isinstance(seed, (list, tuple)) else int(seed)
    return np.random.Generator(np.random.PCG64(key))


class Tape:
    """Ordered record of backward closures for one forward execution."""

    def __init__(self):
        self._entries: list = []
        self._enabled = True

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def enabled(self) -> bool:
        return self._enabled

    def clear(self) -> None:
        self._entries.clear()


_TAPE = Tape()


def tape() -> Tape:
    return _TAPE


class no_grad:
    """Context manager that suspends tape recording."""

    def __enter__(self):
        self._prev = _TAPE._enabled
        _TAPE._enabled = False
        return self

    def __exit__(self, *exc):
        _TAPE._enabled = self._prev
        return False


class Tensor:
    """A float64 ndarray plus an optional same-shape gradient buffer.

    Leaves created with ``requires_grad=True`` get their buffer up
    front; op outputs allocate lazily on first accumulation.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if self.requires_grad else None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_err(self)

    def detach(self) -> "Tensor":
        """Same values, bitwise, with no tape participation."""
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; everything routes through the named ops below
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return tensor_slice(self, key)


def _scalar_err(t):
    raise ContractError(f"item() needs a 1-element tensor, got shape {t.shape}")


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _out(data, *inputs) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
    t.requires_grad = _TAPE._enabled and any(i.requires_grad for i in inputs)
    t.grad = None
    return t


def _record(fn) -> None:
    _TAPE._entries.append(fn)


def _acc(t: Tensor, v) -> None:
    """Accumulate into a (possibly not yet allocated) gradient buffer."""
    g = t.grad
    if g is None:
        if isinstance(v, np.ndarray) and v.shape == t.data.shape:
            t.grad = v.copy()       # copy: v may alias another buffer
        else:
            t.grad = np.zeros_like(t.data)
            t.grad += v
    else:
        g += v


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = _out(_bcast_apply(np.add, a, b, "add"), a, b)
    if out.requires_grad:
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _acc(a, _unbroadcast(g, a.data.shape))
            if b.requires_grad:
                _acc(b, _unbroadcast(g, b.data.shape))
        _record(bwd)
    return out


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = _out(_bcast_apply(np.subtract, a, b, "sub"), a, b)
    if out.requires_grad:
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _acc(a, _unbroadcast(g, a.data.shape))
            if b.requires_grad:
                _acc(b, -_unbroadcast(g, b.data.shape))
        _record(bwd)
    return out


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = _out(_bcast_apply(np.multiply, a, b, "mul"), a, b)
    if out.requires_grad:
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _acc(a, _unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                _acc(b, _unbroadcast(g * a.data, b.data.shape))
        _record(bwd)
    return out


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = _out(_bcast_apply(np.divide, a, b, "div"), a, b)
    if out.requires_grad:
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _acc(a, _unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                _acc(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))
        _record(bwd)
    return out


def _bcast_apply(ufunc, a: Tensor, b: Tensor, name: str) -> np.ndarray:
    try:
        return ufunc(a.data, b.data)
    except ValueError:
        raise ShapeError(
            f"{name}: shapes {a.data.shape} and {b.data.shape} do not broadcast"
        ) from None


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul needs two 2-D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.data.shape} vs {b.data.shape}")
    out = _out(a.data @ b.data, a, b)
    if out.requires_grad:
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _acc(a, g @ b.data.T)
            if b.requires_grad:
                _acc(b, a.data.T @ g)
        _record(bwd)
    return out


# -------------------------------------------------------------- elementwise


def relu(x) -> Tensor:
    x = _lift(x)
    out = _out(np.maximum(x.data, 0.0), x)
    if out.requires_grad:
        mask = x.data > 0.0
        def bwd():
            if out.grad is not None:
                _acc(x, out.grad * mask)
        _record(bwd)
    return out


def tanh(x) -> Tensor:
    x = _lift(x)
    y = np.tanh(x.data)
    out = _out(y, x)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                _acc(x, out.grad * (1.0 - y * y))
        _record(bwd)
    return out


def sigmoid(x) -> Tensor:
    x = _lift(x)
    # numerically symmetric form, stable for large |x|
    y = np.where(x.data >= 0,
                 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                 np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))
    out = _out(y, x)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                _acc(x, out.grad * y * (1.0 - y))
        _record(bwd)
    return out


def exp(x) -> Tensor:
    x = _lift(x)
    y = np.exp(x.data)
    out = _out(y, x)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                _acc(x, out.grad * y)
        _record(bwd)
    return out


def log(x) -> Tensor:
    x = _lift(x)
    out = _out(np.log(x.data), x)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                _acc(x, out.grad / x.data)
        _record(bwd)
    return out


def clamp(x, lo: float, hi: float) -> Tensor:
    if lo > hi:
        raise ContractError(f"clamp: lo {lo} exceeds hi {hi}")
    x = _lift(x)
    out = _out(np.clip(x.data, lo, hi), x)
    if out.requires_grad:
        # gradient passes on the closed interval, zero outside
        mask = (x.data >= lo) & (x.data <= hi)
        def bwd():
            if out.grad is not None:
                _acc(x, out.grad * mask)
        _record(bwd)
    return out


# --------------------------------------------------------------- reductions


def _norm_axes(axis, ndim: int):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tensor_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _lift(x)
    axes = _norm_axes(axis, x.data.ndim)
    out = _out(x.data.sum(axis=axes, keepdims=keepdims), x)
    if out.requires_grad:
        def bwd():
            g = out.grad
            if g is None:
                return
            if not keepdims:
                g = np.expand_dims(g, axes)
            _acc(x, np.broadcast_to(g, x.data.shape))
        _record(bwd)
    return out


def tensor_mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _lift(x)
    axes = _norm_axes(axis, x.data.ndim)
    count = 1
    for a in axes:
        count *= x.data.shape[a]
    out = _out(x.data.mean(axis=axes, keepdims=keepdims), x)
    if out.requires_grad:
        inv = 1.0 / count
        def bwd():
            g = out.grad
            if g is None:
                return
            if not keepdims:
                g = np.expand_dims(g, axes)
            _acc(x, np.broadcast_to(g, x.data.shape) * inv)
        _record(bwd)
    return out


def softmax(x, axis: int = -1) -> Tensor:
    x = _lift(x)
    if not np.isfinite(x.data).all():
        raise NumericError("softmax: non-finite input")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _out(y, x)
    if out.requires_grad:
        def bwd():
            g = out.grad
            if g is None:
                return
            _acc(x, y * (g - (g * y).sum(axis=axis, keepdims=True)))
        _record(bwd)
    return out


# ------------------------------------------------------------ shape plumbing


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    if not tensors:
        raise ContractError("concat of an empty list")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.data.shape for t in tensors]
        raise ShapeError(f"concat along axis {axis}: incompatible shapes {shapes}") from None
    out = _out(data, *tensors)
    if out.requires_grad:
        ax = axis % data.ndim
        sizes = [t.data.shape[ax] for t in tensors]
        offsets = np.cumsum([0] + sizes)
        def bwd():
            g = out.grad
            if g is None:
                return
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    idx = [slice(None)] * data.ndim
                    idx[ax] = slice(lo, hi)
                    _acc(t, g[tuple(idx)])
        _record(bwd)
    return out


def tensor_slice(x, key) -> Tensor:
    """Basic indexing (ints / slices / Ellipsis); a view-shaped copy."""
    x = _lift(x)
    if not isinstance(key, tuple):
        key = (key,)
    for k in key:
        if not isinstance(k, (int, np.integer, slice, type(Ellipsis))):
            raise ContractError(f"slice supports basic indexing only, got {type(k).__name__}")
    try:
        data = x.data[key]
    except IndexError:
        raise ShapeError(f"slice {key} out of range for shape {x.data.shape}") from None
    out = _out(np.ascontiguousarray(data), x)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[key] += out.grad
        _record(bwd)
    return out


def reshape(x, shape) -> Tensor:
    x = _lift(x)
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.data.shape} to {shape}") from None
    out = _out(data.copy(), x)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                _acc(x, out.grad.reshape(x.data.shape))
        _record(bwd)
    return out


def broadcast(x, shape) -> Tensor:
    x = _lift(x)
    try:
        data = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeError(f"cannot broadcast {x.data.shape} to {shape}") from None
    out = _out(data, x)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                _acc(x, _unbroadcast(out.grad, x.data.shape))
        _record(bwd)
    return out


def standardize(x, gamma, beta, axes=(0, 2, 3), eps: float = 1e-5) -> Tensor:
    """Affine standardization: gamma * (x - m) / sqrt(v + eps) + beta.

    m, v are mean and biased variance of x over ``axes`` (statistics
    always come from the current call).  Fused so one tape entry covers
    the whole chain; the backward uses the closed form for batch
    statistics rather than differentiating through m and v separately.
    """
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    axes = _norm_axes(axes, x.data.ndim)
    m = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - m
    v = np.mean(xc * xc, axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(v + eps)
    xhat = xc * inv
    out = _out(gamma.data * xhat + beta.data, x, gamma, beta)
    if out.requires_grad:
        def bwd():
            g = out.grad
            if g is None:
                return
            if beta.requires_grad:
                _acc(beta, _unbroadcast(g, beta.data.shape))
            if gamma.requires_grad:
                _acc(gamma, _unbroadcast(g * xhat, gamma.data.shape))
            if x.requires_grad:
                gx = g * gamma.data
                mg = gx.mean(axis=axes, keepdims=True)
                mgx = np.mean(gx * xhat, axis=axes, keepdims=True)
                _acc(x, inv * (gx - mg - xhat * mgx))
        _record(bwd)
    return out


def upsample_nearest_2x(x) -> Tensor:
    """Repeat each pixel 2x2 along the trailing two axes."""
    x = _lift(x)
    if x.data.ndim < 2:
        raise ShapeError(f"upsample_nearest_2x needs >=2 axes, got shape {x.data.shape}")
    data = np.repeat(np.repeat(x.data, 2, axis=-2), 2, axis=-1)
    out = _out(data, x)
    if out.requires_grad:
        h, w = x.data.shape[-2], x.data.shape[-1]
        lead = x.data.shape[:-2]
        def bwd():
            g = out.grad
            if g is None:
                return
            _acc(x, g.reshape(lead + (h, 2, w, 2)).sum(axis=(-3, -1)))
        _record(bwd)
    return out


# ---------------------------------------------------- interpolation / lookup

_INTERP_CACHE: dict = {}


def _interp_matrix(n: int, w: int) -> np.ndarray:
    """(n, w) matrix M with out = in @ M; column j blends the two
    source cells bracketing position j*(n-1)/(w-1)."""
    key = (n, w)
    m = _INTERP_CACHE.get(key)
    if m is None:
        m = np.zeros((n, w))
        if w == 1:
            m[0, 0] = 1.0
        else:
            pos = np.arange(w) * (n - 1) / (w - 1)
            i0 = np.floor(pos).astype(np.int64)
            i0 = np.minimum(i0, n - 2) if n > 1 else i0
            frac = pos - i0
            if n == 1:
                m[0, :] = 1.0
            else:
                np.add.at(m, (i0, np.arange(w)), 1.0 - frac)
                np.add.at(m, (i0 + 1, np.arange(w)), frac)
        _INTERP_CACHE[key] = m
    return m


def linear_interp_1d(x, out_size: int) -> Tensor:
    """Resample the last axis to ``out_size`` by linear interpolation.

    Endpoints map to endpoints; constant rows stay constant.
    """
    x = _lift(x)
    n = x.data.shape[-1]
    if n < 1 or out_size < 1:
        raise ShapeError(f"linear_interp_1d: bad sizes {n} -> {out_size}")
    m = _interp_matrix(n, out_size)
    out = _out(x.data @ m, x)
    if out.requires_grad:
        def bwd():
            if out.grad is not None:
                _acc(x, out.grad @ m.T)
        _record(bwd)
    return out


def embedding_lookup(table, indices) -> Tensor:
    """Row gather: out[..., :] = table[indices[...], :]."""
    table = _lift(table)
    idx = np.asarray(indices, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-D, got {table.data.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ContractError(
            f"embedding_lookup: index out of range for table with {table.data.shape[0]} rows")
    out = _out(table.data[idx], table)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, idx, out.grad)
        _record(bwd)
    return out


# ------------------------------------------------------------- convolutions


def conv2d(x, k) -> Tensor:
    """3x3 convolution, stride 1, zero padding 1 (shape preserving).

    x: (B, Cin, H, W), k: (Cout, Cin, 3, 3) -> (B, Cout, H, W).
    """
    x, k = _lift(x), _lift(k)
    if x.data.ndim != 4 or k.data.ndim != 4 or k.data.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d: need x (B,C,H,W) and k (O,C,3,3), got {x.data.shape} and {k.data.shape}")
    if x.data.shape[1] != k.data.shape[1]:
        raise ShapeError(f"conv2d: channel mismatch, x {x.data.shape} vs k {k.data.shape}")
    b, cin, h, w = x.data.shape
    cout = k.data.shape[0]
    xp = np.zeros((b, cin, h + 2, w + 2))
    xp[:, :, 1:h + 1, 1:w + 1] = x.data
    # 9 shifted views flattened to an im2col buffer: (B, Cin*9, H*W)
    cols = np.empty((b, cin, 9, h, w))
    for o in range(9):
        di, dj = divmod(o, 3)
        cols[:, :, o] = xp[:, :, di:di + h, dj:dj + w]
    cols = cols.reshape(b, cin * 9, h * w)
    kf = k.data.reshape(cout, cin * 9)
    y = np.matmul(kf, cols)                       # (B, Cout, H*W)
    out = _out(y.reshape(b, cout, h, w), x, k)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            g = out.grad.reshape(b, cout, h * w)
            if k.requires_grad:
                dk = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0)
                _acc(k, dk.reshape(cout, cin, 3, 3))
            if x.requires_grad:
                dcols = np.matmul(kf.T, g).reshape(b, cin, 9, h, w)
                dxp = np.zeros((b, cin, h + 2, w + 2))
                for o in range(9):
                    di, dj = divmod(o, 3)
                    dxp[:, :, di:di + h, dj:dj + w] += dcols[:, :, o]
                _acc(x, dxp[:, :, 1:h + 1, 1:w + 1])
        _record(bwd)
    return out


def conv2d_1x1(x, k) -> Tensor:
    """Pointwise channel mix: x (B, Cin, H, W), k (Cout, Cin)."""
    x, k = _lift(x), _lift(k)
    if x.data.ndim != 4 or k.data.ndim != 2:
        raise ShapeError(f"conv2d_1x1: need x (B,C,H,W) and k (O,C), got {x.data.shape} and {k.data.shape}")
    if x.data.shape[1] != k.data.shape[1]:
        raise ShapeError(f"conv2d_1x1: channel mismatch, x {x.data.shape} vs k {k.data.shape}")
    b, cin, h, w = x.data.shape
    cout = k.data.shape[0]
    xf = x.data.reshape(b, cin, h * w)
    y = np.matmul(k.data, xf)
    out = _out(y.reshape(b, cout, h, w), x, k)
    if out.requires_grad:
        def bwd():
            if out.grad is None:
                return
            g = out.grad.reshape(b, cout, h * w)
            if k.requires_grad:
                _acc(k, np.matmul(g, xf.transpose(0, 2, 1)).sum(axis=0))
            if x.requires_grad:
                _acc(x, np.matmul(k.data.T, g).reshape(b, cin, h, w))
        _record(bwd)
    return out


# ------------------------------------------------------------------ backward


def backward(loss: Tensor) -> None:
    """Replay the tape in reverse, seeding d(loss)/d(loss) = 1."""
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        shape = getattr(loss, "shape", type(loss).__name__)
        raise ContractError(f"backward expects a scalar tensor, got {shape}")
    if not loss.requires_grad:
        raise ContractError("backward: loss is not attached to the tape")
    _acc(loss, 1.0)
    for fn in reversed(_TAPE._entries):
        fn()


# ------------------------------------------------------------- grad checking


def grad_check(f, x: Tensor, h: float = 1e-5) -> float:
    """Max relative gap between tape gradients and central differences.

    ``f`` maps one Tensor to a scalar Tensor and must treat everything
    except its argument as a constant.  Returns
    ``max_i |a_i - d_i| / max(1, |a_i|, |d_i|)`` where ``a`` is the tape
    gradient and ``d`` the central difference with step ``h``.
    Never mutates ``x``.  Runs on a private tape.
    """
    if not (1e-7 <= h <= 1e-3):
        raise ContractError(f"grad_check: step {h} outside [1e-7, 1e-3]")
    saved = _TAPE._entries
    _TAPE._entries = []
    try:
        probe = Tensor(x.data.copy(), requires_grad=True)
        y = f(probe)
        if not isinstance(y, Tensor) or y.data.size != 1:
            raise ContractError("grad_check: f must return a scalar tensor")
        backward(y)
        analytic = probe.grad.copy()
    finally:
        _TAPE._entries = saved

    flat = x.data.copy().reshape(-1)
    numeric = np.empty_like(flat)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(Tensor(flat.reshape(x.data.shape))).item()
            flat[i] = orig - h
            fm = f(Tensor(flat.reshape(x.data.shape))).item()
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"grad_check: non-finite probe value at coordinate {i}")
            numeric[i] = (fp - fm) / (2.0 * h)
    a = analytic.reshape(-1)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(numeric)))
    return float(np.max(np.abs(a - numeric) / denom)) if flat.size else 0.0


# ------------------------------------------------------------------ dispatch

OPS = {
    "add": lambda ins, at: add(ins[0], ins[1]),
    "sub": lambda ins, at: sub(ins[0], ins[1]),
    "mul": lambda ins, at: mul(ins[0], ins[1]),
    "div": lambda ins, at: div(ins[0], ins[1]),
    "matmul": lambda ins, at: matmul(ins[0], ins[1]),
    "conv2d": lambda ins, at: conv2d(ins[0], ins[1]),
    "conv2d_1x1": lambda ins, at: conv2d_1x1(ins[0], ins[1]),
    "relu": lambda ins, at: relu(ins[0]),
    "tanh": lambda ins, at: tanh(ins[0]),
    "sigmoid": lambda ins, at: sigmoid(ins[0]),
    "exp": lambda ins, at: exp(ins[0]),
    "log": lambda ins, at: log(ins[0]),
    "softmax": lambda ins, at: softmax(ins[0], at.get("axis", -1)),
    "sum": lambda ins, at: tensor_sum(ins[0], at.get("axis"), at.get("keepdims", False)),
    "mean": lambda ins, at: tensor_mean(ins[0], at.get("axis"), at.get("keepdims", False)),
    "concat": lambda ins, at: concat(ins, at.get("axis", 0)),
    "standardize": lambda ins, at: standardize(
        ins[0], ins[1], ins[2], at.get("axes", (0, 2, 3)), at.get("eps", 1e-5)),
    "upsample_nearest_2x": lambda ins, at: upsample_nearest_2x(ins[0]),
    "slice": lambda ins, at: tensor_slice(ins[0], at["key"]),
    "broadcast": lambda ins, at: broadcast(ins[0], at["shape"]),
    "reshape": lambda ins, at: reshape(ins[0], at["shape"]),
    "linear_interp_1d": lambda ins, at: linear_interp_1d(ins[0], at["out_size"]),
    "clamp": lambda ins, at: clamp(ins[0], at["lo"], at["hi"]),
    "embedding_lookup": lambda ins, at: embedding_lookup(ins[0], at["indices"]),
}


def forward_op(name: str, inputs, attrs: dict | None = None) -> Tensor:
    """Run one op by name. ``inputs`` is a list of tensors/arrays."""
    attrs = attrs or {}
    fn = OPS.get(name)
    if fn is None:
        raise ContractError(f"unknown op {name!r}")
    ins = [i if isinstance(i, Tensor) else _lift(i) for i in inputs]
    if attrs.get("require_finite"):
        for i, t in enumerate(ins):
            if not np.isfinite(t.data).all():
                raise NumericError(f"{name}: non-finite input at position {i}")
    return fn(ins, attrs)
