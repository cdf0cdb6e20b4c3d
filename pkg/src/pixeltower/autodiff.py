"""Dense tensors with reverse-mode automatic differentiation.

Just enough machinery for a vision transformer: matmul, elementwise
arithmetic, softmax, layer normalization, GELU, reductions, reshaping,
and the contrastive-loss pieces. Values live in numpy arrays; the tape
records every primitive applied to a tracked tensor so that backward()
can replay vector-Jacobian products in reverse execution order.

Broadcasting is restricted to leading batch dimensions: two operands are
compatible when the smaller one's shape equals the trailing shape of the
larger. Reductions run in numpy's row-major order, so results are
reproducible run to run on the same platform.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ContractError, ShapeError

LAYERNORM_EPS = 1e-6
_GELU_C = math.sqrt(2.0 / math.pi)


class Tensor:
    """A shaped float buffer, optionally marked trainable (a leaf)."""

    __slots__ = ("data", "trainable")

    def __init__(self, data, trainable: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.trainable = trainable

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, trainable={self.trainable})"


class Tape:
    """Ordered record of primitive ops for one forward pass.

    Use as a context manager around the forward computation, then call
    backward(tape, loss). Records are appended in execution order, which
    is already a topological order of the graph.
    """

    def __init__(self):
        self.records = []  # (out, inputs, vjp) with vjp(grad_out) -> grads per input
        self._tracked = set()

    def __enter__(self):
        _STACK.append(self)
        return self

    def __exit__(self, *exc):
        _STACK.pop()
        return False

    def _tracks(self, t: Tensor) -> bool:
        return t.trainable or id(t) in self._tracked

    def record(self, out, inputs, vjp):
        self._tracked.add(id(out))
        self.records.append((out, inputs, vjp))


_STACK: list[Tape] = []


def _active() -> Tape | None:
    return _STACK[-1] if _STACK else None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _record(out, inputs, vjp):
    tape = _active()
    if tape is not None and any(tape._tracks(t) for t in inputs):
        tape.record(out, inputs, vjp)


def backward(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Reverse-mode gradients of a scalar loss for every trainable leaf.

    Returns a mapping id(tensor) -> gradient array; use grad_of() to pull
    a specific leaf's gradient. Each tape record is visited exactly once.
    """
    if loss.data.shape != ():
        raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.data.dtype)}
    owned: set[int] = set()  # keys whose buffer we may accumulate into
    leaf_grads: dict[int, np.ndarray] = {}
    for out, inputs, vjp in reversed(tape.records):
        g_out = grads.pop(id(out), None)
        if g_out is None:
            continue
        for t, g in zip(inputs, vjp(g_out)):
            if g is None:
                continue
            if t.trainable:
                store = leaf_grads
            elif tape._tracks(t):
                store = grads
            else:
                continue
            key = id(t)
            prev = store.get(key)
            if prev is None:
                store[key] = g
            elif key in owned and prev.shape == g.shape:
                prev += g
            else:
                store[key] = prev + g
                owned.add(key)
    return leaf_grads


def grad_of(grads: dict[int, np.ndarray], t: Tensor) -> np.ndarray:
    return grads.get(id(t), np.zeros_like(t.data))


def _check_leading_broadcast(a_shape, b_shape):
    small, big = sorted((a_shape, b_shape), key=len)
    if len(big) == len(small):
        if a_shape != b_shape:
            raise ShapeError(f"shape mismatch: {a_shape} vs {b_shape}")
    elif big[len(big) - len(small) :] != small:
        raise ShapeError(
            f"only leading-batch broadcasting is supported: {a_shape} vs {b_shape}"
        )


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(extra)))


def _binary(a, b, fwd, vjp_builder):
    # Bare python scalars adopt the tensor operand's dtype so float32
    # programs stay float32.
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.data.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.data.dtype))
    else:
        a, b = _as_tensor(a), _as_tensor(b)
    _check_leading_broadcast(a.shape, b.shape)
    out = Tensor(fwd(a.data, b.data))
    _record(out, (a, b), vjp_builder(a, b, out))
    return out


def add(a, b):
    return _binary(a, b, np.add, lambda a, b, o: lambda g: (
        _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    return _binary(a, b, np.subtract, lambda a, b, o: lambda g: (
        _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    return _binary(a, b, np.multiply, lambda a, b, o: lambda g: (
        _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    return _binary(a, b, np.divide, lambda a, b, o: lambda g: (
        _unbroadcast(g / b.data, a.shape),
        _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


def neg(a):
    return mul(a, -1.0)


def scale(a, s: float):
    return mul(a, float(s))


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul operands need at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} vs {b.shape}")
    if a.data.ndim == b.data.ndim:
        if a.shape[:-2] != b.shape[:-2]:
            raise ShapeError(f"matmul batch dims incompatible: {a.shape} vs {b.shape}")
    else:
        small, big = sorted((a.shape, b.shape), key=len)
        if big[len(big) - len(small) : -2] != small[:-2]:
            raise ShapeError(f"matmul batch dims incompatible: {a.shape} vs {b.shape}")

    if b.data.ndim == 2 and a.data.ndim > 2:
        # One large GEMM beats a loop of stacked small ones.
        k, m = b.shape
        lead = a.shape[:-1]
        flat = a.data.reshape(-1, k)
        out = Tensor((flat @ b.data).reshape(*lead, m))

        def vjp(g):
            gflat = g.reshape(-1, m)
            ga = (gflat @ b.data.T).reshape(a.shape)
            gb = flat.T @ gflat
            return ga, gb

    else:
        out = Tensor(a.data @ b.data)

        def vjp(g):
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
            return ga, gb

    _record(out, (a, b), vjp)
    return out


def exp(a):
    a = _as_tensor(a)
    out = Tensor(np.exp(a.data))
    _record(out, (a,), lambda g: (g * out.data,))
    return out


def log(a):
    a = _as_tensor(a)
    out = Tensor(np.log(a.data))
    _record(out, (a,), lambda g: (g / a.data,))
    return out


def gelu(a):
    """GELU, tanh approximation (pinned for reproducibility)."""
    a = _as_tensor(a)
    x = a.data
    sq = x * x
    t = sq * x
    t *= 0.044715
    t += x
    t *= _GELU_C
    np.tanh(t, out=t)
    half_1pt = t + 1.0
    half_1pt *= 0.5
    out = Tensor(x * half_1pt)

    def vjp(g):
        d_inner = (3 * 0.044715) * sq
        d_inner += 1.0
        d_inner *= _GELU_C
        tt = t * t
        np.subtract(1.0, tt, out=tt)
        tt *= d_inner
        tt *= x
        tt *= 0.5
        tt += half_1pt
        tt *= g
        return (tt,)

    _record(out, (a,), vjp)
    return out


def softmax_lastdim(a):
    a = _as_tensor(a)
    s = a.data - a.data.max(axis=-1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=-1, keepdims=True)
    out = Tensor(s)

    def vjp(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        return (s * (g - dot),)

    _record(out, (a,), vjp)
    return out


def layernorm(x, gain, bias, eps: float = LAYERNORM_EPS):
    """Normalize the last dimension to zero mean / unit variance, then
    apply elementwise gain and bias (both shaped like the last dim)."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"gain/bias must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.data + bias.data)

    def vjp(g):
        gx_hat = g * gain.data
        gm = gx_hat.mean(axis=-1, keepdims=True)
        gv = (gx_hat * xhat).mean(axis=-1, keepdims=True)
        gx = inv * (gx_hat - gm - xhat * gv)
        axes = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    _record(out, (x, gain, bias), vjp)
    return out


def transpose(a, axes=None):
    a = _as_tensor(a)
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.data.ndim)))
    out = Tensor(np.transpose(a.data, axes))
    inverse = np.argsort(axes)
    _record(out, (a,), lambda g: (np.transpose(g, inverse),))
    return out


def swap_last_axes(a):
    a = _as_tensor(a)
    axes = list(range(a.data.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def reshape(a, shape):
    a = _as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    _record(out, (a,), lambda g: (g.reshape(a.shape),))
    return out


def slice_(a, key):
    """Basic slicing (a tuple of slices/ints); gradient scatters back."""
    a = _as_tensor(a)
    out = Tensor(a.data[key])

    def vjp(g):
        full = np.zeros_like(a.data)
        full[key] = g
        return (full,)

    _record(out, (a,), vjp)
    return out


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    _record(out, tuple(tensors), vjp)
    return out


def _reduce(a, axis, np_fn, grad_fn):
    a = _as_tensor(a)
    out = Tensor(np_fn(a.data, axis=axis))
    _record(out, (a,), lambda g: (grad_fn(g, a.data, axis),))
    return out


def _spread(g, like, axis):
    if axis is None:
        return np.broadcast_to(g, like.shape).copy()
    return np.broadcast_to(np.expand_dims(g, axis), like.shape).copy()


def tsum(a, axis=None):
    return _reduce(a, axis, np.sum, lambda g, x, ax: _spread(g, x, ax))


def tmean(a, axis=None):
    def grad(g, x, ax):
        n = x.size if ax is None else x.shape[ax]
        return _spread(g, x, ax) / n

    return _reduce(a, axis, np.mean, grad)


def l2_normalize_lastdim(a, eps: float = 1e-30):
    """Scale rows (last dim) to unit Euclidean norm."""
    a = _as_tensor(a)
    norm = np.sqrt((a.data * a.data).sum(axis=-1, keepdims=True))
    norm = np.maximum(norm, eps)
    y = a.data / norm
    out = Tensor(y)

    def vjp(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return ((g - y * dot) / norm,)

    _record(out, (a,), vjp)
    return out


def cross_entropy_rows(logits, targets):
    """Per-row cross entropy of logits against integer target indices.

    Returns a vector of length N; backward is softmax(logits) - onehot,
    row-scaled by the incoming gradient.
    """
    logits = _as_tensor(logits)
    targets = np.asarray(targets)
    if logits.data.ndim != 2:
        raise ShapeError(f"logits must be 2-D, got {logits.shape}")
    n, c = logits.shape
    if targets.shape != (n,):
        raise ShapeError(f"targets must have shape ({n},)")
    if targets.min() < 0 or targets.max() >= c:
        raise ContractError("target index out of range")
    z = logits.data
    zmax = z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z - zmax).sum(axis=-1)) + zmax[:, 0]
    out = Tensor(lse - z[np.arange(n), targets])

    def vjp(g):
        soft = np.exp(z - zmax)
        soft /= soft.sum(axis=-1, keepdims=True)
        soft[np.arange(n), targets] -= 1.0
        return (soft * g[:, None],)

    _record(out, (logits,), vjp)
    return out


def check_gradients(f, params, eps: float = 1e-5, sample_per_tensor: int | None = None, seed: int = 0):
    """Compare reverse-mode gradients of f() against central differences.

    f is a deterministic callable returning a scalar Tensor built from
    the trainable tensors in params (a dict name -> Tensor). Checks every
    coordinate, or a seeded sample of sample_per_tensor coordinates per
    tensor. Returns the maximum relative error, where the error for one
    coordinate is |g - fd| / max(|g|, |fd|, 1e-4); the floor makes
    near-zero gradients compare absolutely.
    """
    with Tape() as tape:
        loss = f()
    grads = backward(tape, loss)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, t in params.items():
        if not t.trainable:
            continue
        g = grad_of(grads, t)
        flat = t.data.reshape(-1)
        n = flat.size
        if sample_per_tensor is None or sample_per_tensor >= n:
            coords = range(n)
        else:
            coords = rng.choice(n, size=sample_per_tensor, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f().data)
            flat[i] = orig - eps
            down = float(f().data)
            flat[i] = orig
            fd = (up - down) / (2 * eps)
            gi = float(g.reshape(-1)[i])
            err = abs(gi - fd) / max(abs(gi), abs(fd), 1e-4)
            worst = max(worst, err)
    return worst
