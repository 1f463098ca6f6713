"""A small reverse-mode autodiff engine over numpy arrays.

Every forward op builds a ``Tensor`` whose ``_backward`` closure pushes the
upstream gradient into its parents. ``Tensor.backward`` walks the graph in
reverse topological order and then frees it.

Besides the elementary ops there are fused ops (conv1d, bilstm, layer_norm,
batch_norm, masked_softmax, cross_entropy, embedding) with hand-written
adjoints; they are checked against finite differences in the test suite.
"""
import numpy as np

from . import kernels
from .errors import (
    GraphFreed,
    NonDeterministicFunction,
    NonFiniteValue,
    NotScalar,
    OutOfVocabId,
    ShapeMismatch,
)

STD_EPS = 1e-9


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op", "_freed")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None
        self._op = None
        self._freed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def op(self):
        return self._op

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f", op={self._op}" if self._op else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise NotScalar(f"backward needs a scalar, got shape {self.shape}")
        if self._freed:
            raise GraphFreed("graph already consumed; run the forward pass again")
        order = []
        seen = set()
        stack = [(self, False)]
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
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not (parent.requires_grad or parent._parents):
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        for node in order:
            if node._backward is not None:
                node._backward = None
                node._parents = ()
                node._freed = True

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _check_finite(arr, op):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{op} produced NaN/Inf")


def _needs_grad(tensors):
    return any(t.requires_grad or t._parents for t in tensors)


def _make(data, parents, backward, op):
    _check_finite(data, op)
    out = Tensor(data)
    out._op = op
    if _needs_grad(parents):
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    nd = g.ndim - len(shape)
    if nd > 0:
        g = g.sum(axis=tuple(range(nd)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shapes(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    _broadcast_shapes(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    _broadcast_shapes(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    _broadcast_shapes(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), bw, "mul")


def relu(x):
    mask = x.data > 0

    def bw(g):
        return (g * mask,)

    return _make(x.data * mask, (x,), bw, "relu")


def tanh(x):
    y = np.tanh(x.data)

    def bw(g):
        return (g * (1.0 - y * y),)

    return _make(y, (x,), bw, "tanh")


def sigmoid(x):
    y = kernels._sigmoid(x.data)

    def bw(g):
        return (g * y * (1.0 - y),)

    return _make(y, (x,), bw, "sigmoid")


def exp(x):
    with np.errstate(over="ignore"):
        y = np.exp(x.data)

    def bw(g):
        return (g * y,)

    return _make(y, (x,), bw, "exp")


def log(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(x.data)

    def bw(g):
        return (g / x.data,)

    return _make(y, (x,), bw, "log")


def sqrt(x):
    with np.errstate(invalid="ignore"):
        y = np.sqrt(x.data)

    def bw(g):
        return (g * 0.5 / y,)

    return _make(y, (x,), bw, "sqrt")


# ---------------------------------------------------------------- structural

def matmul(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")

    def bw(g):
        ad, bd = a.data, b.data
        if bd.ndim == 1:
            ga = g[..., None] * bd
            gb = (ad * g[..., None]).reshape(-1, bd.shape[0]).sum(axis=0)
            return ga, gb
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g if ad.ndim > 1 else np.outer(ad, g)
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _make(a.data @ b.data, (a, b), bw, "matmul")


def linear(x, W, b=None):
    """x @ W + b with a single node; x may carry any number of leading dims."""
    if x.shape[-1] != W.shape[0]:
        raise ShapeMismatch(f"linear: {x.shape} @ {W.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, W.shape[0])
    y = x2 @ W.data
    if b is not None:
        y = y + b.data
    y = y.reshape(lead + (W.shape[1],))
    parents = (x, W) if b is None else (x, W, b)

    def bw(g):
        g2 = g.reshape(-1, W.shape[1])
        gx = (g2 @ W.data.T).reshape(x.shape)
        gW = x2.T @ g2
        if b is None:
            return gx, gW
        return gx, gW, g2.sum(axis=0)

    return _make(y, parents, bw, "linear")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    nd = tensors[0].ndim
    ax = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(t.shape[i] != tensors[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeMismatch(f"concat: incompatible shapes {[t.shape for t in tensors]}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors))
        )

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tensors, bw, "concat")


def slice_(x, idx):
    y = x.data[idx]

    def bw(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g) if _is_fancy(idx) else out.__setitem__(idx, g)
        return (out,)

    return _make(np.array(y, copy=True), (x,), bw, "slice")


def _is_fancy(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def transpose(x, axes=None):
    if axes is None:
        axes = tuple(range(x.ndim))[::-1]
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeMismatch(f"transpose: bad axes {axes} for rank {x.ndim}")
    inv = np.argsort(axes)

    def bw(g):
        return (np.transpose(g, inv),)

    return _make(np.transpose(x.data, axes), (x,), bw, "transpose")


def reshape(x, shape):
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: {x.shape} -> {shape}") from None

    def bw(g):
        return (g.reshape(x.shape),)

    return _make(y, (x,), bw, "reshape")


# ---------------------------------------------------------------- reductions

def sum_(x, axis=None, keepdims=False):
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(y), (x,), bw, "sum")


def _mask_weights(x, axis, mask):
    """Broadcastable 0/1 weights and per-slice counts for a masked reduction."""
    if mask is None:
        w = np.ones((1,) * x.ndim, dtype=x.dtype)
        n = np.full((1,) * x.ndim, x.shape[axis], dtype=x.dtype)
        return w, n
    m = np.asarray(mask, dtype=x.dtype)
    while m.ndim < x.ndim:
        m = m[..., None]
    n = m.sum(axis=axis, keepdims=True)
    if np.any(n == 0):
        raise ShapeMismatch("masked reduction over an empty slice")
    return m, n


def mean(x, axis=None, mask=None, keepdims=False):
    """Mean over ``axis``; ``mask`` (broadcastable, leading dims) selects valid entries."""
    if axis is None:
        y = np.asarray(x.data.mean())

        def bw_all(g):
            return (np.full(x.shape, g / x.data.size, dtype=x.dtype),)

        return _make(y, (x,), bw_all, "mean")
    ax = axis % x.ndim
    w, n = _mask_weights(x, ax, mask)
    y = (x.data * w).sum(axis=ax, keepdims=True) / n

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g * w / n, x.shape).copy(),)

    return _make(y if keepdims else np.squeeze(y, ax), (x,), bw, "mean")


def std(x, axis, mask=None, keepdims=False):
    """Population standard deviation smoothed as sqrt(var + 1e-9)."""
    ax = axis % x.ndim
    w, n = _mask_weights(x, ax, mask)
    mu = (x.data * w).sum(axis=ax, keepdims=True) / n
    d = (x.data - mu) * w
    var = (d * d).sum(axis=ax, keepdims=True) / n
    s = np.sqrt(var + STD_EPS)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (g * d / (n * s),)

    return _make(s if keepdims else np.squeeze(s, ax), (x,), bw, "std")


def softmax(x, axis=-1):
    return masked_softmax(x, None, axis)


def masked_softmax(x, mask, axis=-1):
    """Softmax where entries with ``mask == 0`` get exactly zero weight.

    Equivalent to adding -inf to masked logits, without ever materialising
    a non-finite value.
    """
    if x.ndim == 0 or not -x.ndim <= axis < x.ndim:
        raise ShapeMismatch(f"softmax: axis {axis} invalid for rank {x.ndim}")
    z = x.data
    if mask is not None:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        zmax = np.where(keep, z, -np.inf).max(axis=axis, keepdims=True)
        e = np.where(keep, np.exp(np.minimum(z - zmax, 0.0)), 0.0)
    else:
        e = np.exp(z - z.max(axis=axis, keepdims=True))
    y = (e / e.sum(axis=axis, keepdims=True)).astype(z.dtype, copy=False)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), bw, "softmax")


def log_softmax(x, axis=-1):
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    p = np.exp(y)

    def bw(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _make(y, (x,), bw, "log_softmax")


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatch(f"cross_entropy: logits {logits.shape}, labels {labels.shape}")
    B = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = -logp[np.arange(B), labels].mean()

    def bw(g):
        d = np.exp(logp)
        d[np.arange(B), labels] -= 1.0
        return (d * (g / B),)

    return _make(np.asarray(loss, dtype=logits.dtype), (logits,), bw, "cross_entropy")


# ---------------------------------------------------------------- stochastic

class DropoutStream:
    """Counter-based RNG: call k draws from SeedSequence((seed, k))."""

    def __init__(self, seed=0):
        self.seed = int(seed)
        self.counter = 0

    def next_generator(self):
        rng = np.random.default_rng([self.seed, self.counter])
        self.counter += 1
        return rng


def dropout(x, p, train, stream=None):
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    rng = stream.next_generator() if stream is not None else np.random.default_rng()
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)

    def bw(g):
        return (g * keep,)

    return _make(x.data * keep, (x,), bw, "dropout")


# ---------------------------------------------------------------- fused layers

def embedding(ids, table, pad_id=0):
    ids = np.asarray(ids, dtype=np.int64)
    V = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise OutOfVocabId(f"ids outside [0, {V})")
    y = table.data[ids]
    if pad_id is not None:
        # pad positions read as exact zeros, so the pad row has no influence
        y = y * (ids != pad_id)[..., None].astype(y.dtype)

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        if pad_id is not None:
            gt[pad_id] = 0.0
        return (gt,)

    return _make(y, (table,), bw, "embedding")


def conv1d(x, W, b=None, stride=1):
    """Valid 1-D convolution over time.

    x: (B, T, C_in); W: (C_out, C_in, k); b: (C_out,) or None. Returns (B, T', C_out).
    """
    B, T, C = x.shape
    C_out, C_in, k = W.shape
    if C != C_in:
        raise ShapeMismatch(f"conv1d: input channels {C} != weight channels {C_in}")
    if T < k:
        raise ShapeMismatch(f"conv1d: sequence length {T} < kernel {k}")
    T_out = (T - k) // stride + 1
    xd = np.ascontiguousarray(x.data)
    sB, sT, sC = xd.strides
    cols = np.lib.stride_tricks.as_strided(
        xd, shape=(B, T_out, k, C), strides=(sB, sT * stride, sT, sC), writeable=False
    ).reshape(B * T_out, k * C)
    Wm = W.data.transpose(2, 1, 0).reshape(k * C, C_out)
    y = cols @ Wm
    if b is not None:
        y = y + b.data
    y = y.reshape(B, T_out, C_out)

    def bw(g):
        g2 = g.reshape(B * T_out, C_out)
        gW = (cols.T @ g2).reshape(k, C, C_out).transpose(2, 1, 0)
        gcols = (g2 @ Wm.T).reshape(B, T_out, k, C)
        gx = np.zeros_like(xd)
        stop = (T_out - 1) * stride + 1
        for j in range(k):
            gx[:, j : j + stop : stride] += gcols[:, :, j]
        if b is None:
            return gx, gW
        return gx, gW, g2.sum(axis=0)

    return _make(y, (x, W) if b is None else (x, W, b), bw, "conv1d")


def batch_norm(x, gamma, beta, mask, running_mean, running_var, train, momentum=0.1, eps=1e-5):
    """Per-channel batch norm over (batch, time) restricted to valid frames.

    Running statistics (plain arrays) are updated in place in train mode.
    Padded positions of the output are zeroed.
    """
    m = np.asarray(mask, dtype=x.dtype)[..., None]
    if train:
        n = m.sum()
        mu = (x.data * m).sum(axis=(0, 1)) / n
        d = (x.data - mu) * m
        var = (d * d).sum(axis=(0, 1)) / n
        unbiased = var * n / max(n - 1.0, 1.0)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv * m
    y = (xhat * gamma.data + beta.data) * m

    def bw(g):
        g = g * m
        gg = (g * xhat).sum(axis=(0, 1))
        gb = g.sum(axis=(0, 1))
        gxhat = g * gamma.data
        if train:
            gx = inv / n * (n * gxhat - gxhat.sum(axis=(0, 1)) - xhat * (gxhat * xhat).sum(axis=(0, 1)))
            gx = gx * m
        else:
            gx = gxhat * inv
        return gx, gg, gb

    return _make(y.astype(x.dtype, copy=False), (x, gamma, beta), bw, "batch_norm")


def layer_norm(x, gamma, beta, eps=1e-5):
    mu = x.data.mean(axis=-1, keepdims=True)
    d = x.data - mu
    var = (d * d).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = d * inv
    y = xhat * gamma.data + beta.data
    D = x.shape[-1]

    def bw(g):
        lead = tuple(range(g.ndim - 1))
        gg = (g * xhat).sum(axis=lead)
        gb = g.sum(axis=lead)
        gxhat = g * gamma.data
        gx = inv / D * (D * gxhat - gxhat.sum(-1, keepdims=True) - xhat * (gxhat * xhat).sum(-1, keepdims=True))
        return gx, gg, gb

    return _make(y, (x, gamma, beta), bw, "layer_norm")


def _reverse_index(lengths, T):
    """Per-row index that reverses the first ``len`` steps and keeps padding in place."""
    t = np.arange(T)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


def lstm(x, W, U, b, lengths=None, reverse=False):
    """Unidirectional LSTM over (B, T, D) with zero initial state.

    With ``reverse`` each row is read backwards over its own valid length, so
    padding never feeds into valid outputs.
    """
    B, T, D = x.shape
    H = U.shape[0]
    if T < 1:
        raise ShapeMismatch("lstm: empty sequence")
    if W.shape != (D, 4 * H) or U.shape != (H, 4 * H) or b.shape != (4 * H,):
        raise ShapeMismatch(f"lstm: bad parameter shapes {W.shape}, {U.shape}, {b.shape}")
    xd = x.data
    rows = np.arange(B)[:, None]
    ridx = None
    if reverse:
        lengths = np.full(B, T) if lengths is None else np.asarray(lengths)
        ridx = _reverse_index(lengths, T)
        xd = xd[rows, ridx]
    x2 = xd.reshape(B * T, D)
    xp = (x2 @ W.data + b.data).reshape(B, T, 4 * H)
    hs, cs, gates = kernels.lstm_forward(xp, U.data)
    y = hs[rows, ridx] if reverse else hs

    def bw(g):
        if reverse:
            g = g[rows, ridx]
        dxp, dU = kernels.lstm_backward(np.ascontiguousarray(g), hs, cs, gates, U.data)
        dxp2 = dxp.reshape(B * T, 4 * H)
        gx = (dxp2 @ W.data.T).reshape(B, T, D)
        if reverse:
            gx = gx[rows, ridx]
        return gx, x2.T @ dxp2, dU, dxp2.sum(axis=0)

    return _make(y, (x, W, U, b), bw, "lstm")


# ---------------------------------------------------------------- optimizer

class AdamState:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def adam_step(params, grads, state, lr):
    """Bias-corrected Adam update applied in place to ``params``.

    ``grads`` entries may be None (treated as zero).
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("adam_step: params, grads and state differ in length")
    state.t += 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape or m.shape != p.data.shape:
            raise ShapeMismatch(f"adam_step: grad {g.shape} vs param {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.data.dtype, copy=False)
    return params, state


# ---------------------------------------------------------------- verification

def rel_err(a, n):
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


def grad_check(f, params, eps=1e-5, max_coords=None, seed=0):
    """Max relative error between backprop and central differences.

    ``f`` takes no arguments and returns a scalar Tensor computed from
    ``params`` (a Tensor or list of Tensors, ideally 64-bit), which it must
    read by reference. With ``max_coords`` set, that many coordinates are
    sampled uniformly across all parameters instead of checking every one.
    """
    if isinstance(params, Tensor):
        params = [params]
    for p in params:
        p.requires_grad = True
        p.grad = None
    out = f()
    if float(f().data) != float(out.data):
        raise NonDeterministicFunction("two forward passes disagree")
    out.backward()
    sizes = np.array([p.data.size for p in params])
    coords = [(k, i) for k, n in enumerate(sizes) for i in range(n)]
    if max_coords is not None and len(coords) > max_coords:
        pick = np.random.default_rng(seed).choice(len(coords), size=max_coords, replace=False)
        coords = [coords[j] for j in np.sort(pick)]
    worst = 0.0
    for k, i in coords:
        p = params[k]
        flat = p.data.reshape(-1)
        old = flat[i]
        flat[i] = old + eps
        fp = float(f().data)
        flat[i] = old - eps
        fm = float(f().data)
        flat[i] = old
        num = (fp - fm) / (2 * eps)
        analytic = 0.0 if p.grad is None else p.grad.reshape(-1)[i]
        worst = max(worst, float(rel_err(analytic, num)))
    return worst
