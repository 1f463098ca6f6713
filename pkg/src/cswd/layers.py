"""Neural building blocks: conv blocks, Bi-LSTM, embedding, self-attention.

All sequence tensors are batch-major ``(B, T, C)`` and travel with a vector of
valid lengths. Positions at or beyond a row's length are padding; every layer
guarantees that padding cannot influence valid positions.
"""
import math

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import EmptySequence, ShapeMismatch, SequenceTooShort


def length_mask(lengths, T):
    """Boolean (B, T) mask, True on valid positions."""
    return np.arange(T)[None, :] < np.asarray(lengths)[:, None]


def conv_out_len(n, kernel_size, stride):
    return (n - kernel_size) // stride + 1


class Module:
    """Parameter container; attributes that are Tensors or Modules are walked in order."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def named_buffers(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, np.ndarray) and name.startswith("running_"):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{name}.")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{prefix}{name}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]


def _param(arr, dtype):
    return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, dtype=np.float32, bias=True):
        limit = math.sqrt(6.0 / (n_in + n_out))
        self.W = _param(rng.uniform(-limit, limit, (n_in, n_out)), dtype)
        self.b = _param(np.zeros(n_out), dtype) if bias else None

    def __call__(self, x):
        return ag.linear(x, self.W, self.b)


class Conv1dBlock(Module):
    """Valid 1-D convolution, masked batch norm, ReLU.

    The convolution has no bias: batch norm's shift makes it redundant.
    """

    def __init__(self, in_channels, out_channels, kernel_size, stride, rng, dtype=np.float32):
        self.kernel_size = kernel_size
        self.stride = stride
        fan_in = in_channels * kernel_size
        self.W = _param(rng.normal(0.0, math.sqrt(2.0 / fan_in), (out_channels, in_channels, kernel_size)), dtype)
        self.gamma = _param(np.ones(out_channels), dtype)
        self.beta = _param(np.zeros(out_channels), dtype)
        self.running_mean = np.zeros(out_channels, dtype=dtype)
        self.running_var = np.ones(out_channels, dtype=dtype)
        self.momentum = 0.1

    def out_lengths(self, lengths):
        return conv_out_len(np.asarray(lengths), self.kernel_size, self.stride)

    def __call__(self, x, lengths, train=False):
        new_len = self.out_lengths(lengths)
        if np.any(new_len < 1):
            bad = int(np.asarray(lengths)[new_len < 1].min())
            raise SequenceTooShort(f"length {bad} < kernel {self.kernel_size}")
        y = ag.conv1d(x, self.W, None, self.stride)
        # padded input may be longer than any valid output needs
        y = y[:, : int(new_len.max())] if y.shape[1] > new_len.max() else y
        mask = length_mask(new_len, y.shape[1])
        y = ag.batch_norm(y, self.gamma, self.beta, mask, self.running_mean, self.running_var,
                          train, momentum=self.momentum)
        return ag.relu(y), new_len


class BiLSTM(Module):
    """Stacked bidirectional LSTM; output at t is [forward_t, backward_t]."""

    def __init__(self, n_in, hidden, rng, layers=1, dropout=0.0, dtype=np.float32):
        self.hidden = hidden
        self.dropout = dropout
        self.layers = []
        bound = 1.0 / math.sqrt(hidden)
        for i in range(layers):
            d_in = n_in if i == 0 else 2 * hidden
            self.layers.append(_LstmPair(d_in, hidden, bound, rng, dtype))

    def __call__(self, x, lengths, train=False, stream=None):
        if x.shape[1] < 1 or np.any(np.asarray(lengths) < 1):
            raise EmptySequence("Bi-LSTM input has no valid steps")
        for pair in self.layers:
            fwd = ag.lstm(x, pair.W_f, pair.U_f, pair.b_f, lengths)
            bwd = ag.lstm(x, pair.W_b, pair.U_b, pair.b_b, lengths, reverse=True)
            x = ag.concat([fwd, bwd], axis=-1)
            x = ag.dropout(x, self.dropout, train, stream)
        return x


class _LstmPair(Module):
    def __init__(self, d_in, hidden, bound, rng, dtype):
        for tag in ("f", "b"):
            b = rng.uniform(-bound, bound, 4 * hidden)
            b[hidden : 2 * hidden] += 1.0  # forget-gate bias
            setattr(self, f"W_{tag}", _param(rng.uniform(-bound, bound, (d_in, 4 * hidden)), dtype))
            setattr(self, f"U_{tag}", _param(rng.uniform(-bound, bound, (hidden, 4 * hidden)), dtype))
            setattr(self, f"b_{tag}", _param(b, dtype))


class Embedding(Module):
    def __init__(self, vocab_size, dim, rng, pad_id=0, dtype=np.float32):
        table = rng.normal(0.0, 1.0, (vocab_size, dim))
        table[pad_id] = 0.0
        self.pad_id = pad_id
        self.table = _param(table, dtype)

    def __call__(self, ids):
        return ag.embedding(ids, self.table, self.pad_id)

    def zero_pad_row(self):
        self.table.data[self.pad_id] = 0.0


class LayerNorm(Module):
    def __init__(self, dim, dtype=np.float32):
        self.gamma = _param(np.ones(dim), dtype)
        self.beta = _param(np.zeros(dim), dtype)

    def __call__(self, x):
        return ag.layer_norm(x, self.gamma, self.beta)


class MultiHeadAttention(Module):
    """Scaled dot-product self-attention with key-padding mask.

    ``last_attention`` keeps the (B, heads, T, T) weights of the latest call.
    """

    def __init__(self, d_model, heads, rng, dtype=np.float32):
        if d_model % heads:
            raise ShapeMismatch(f"d_model {d_model} not divisible by {heads} heads")
        self.heads = heads
        self.d_q = d_model // heads
        self.q = Linear(d_model, d_model, rng, dtype)
        # a key bias only shifts every score in a row equally, so it is omitted
        self.k = Linear(d_model, d_model, rng, dtype, bias=False)
        self.v = Linear(d_model, d_model, rng, dtype)
        self.out = Linear(d_model, d_model, rng, dtype)
        self.last_attention = None

    def _split(self, x):
        B, T, _ = x.shape
        return ag.transpose(x.reshape(B, T, self.heads, self.d_q), (0, 2, 1, 3))

    def __call__(self, h, lengths=None):
        B, T, D = h.shape
        if D != self.heads * self.d_q:
            raise ShapeMismatch(f"attention expects width {self.heads * self.d_q}, got {D}")
        lengths = np.full(B, T) if lengths is None else np.asarray(lengths)
        if np.any(lengths > T) or np.any(lengths < 1):
            raise ShapeMismatch("valid lengths must lie in [1, T]")
        q, k, v = self._split(self.q(h)), self._split(self.k(h)), self._split(self.v(h))
        scores = ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(self.d_q))
        key_mask = length_mask(lengths, T)[:, None, None, :]
        attn = ag.masked_softmax(scores, key_mask, axis=-1)
        self.last_attention = attn.data
        ctx = ag.transpose(ag.matmul(attn, v), (0, 2, 1, 3)).reshape(B, T, D)
        return self.out(ctx)


class TransformerEncoderLayer(Module):
    """Pre-norm block: y = h + MHA(LN(h)); out = y + FFN(LN(y))."""

    def __init__(self, d_model, heads, ffn_dim, rng, dropout=0.0, dtype=np.float32):
        self.norm1 = LayerNorm(d_model, dtype)
        self.attn = MultiHeadAttention(d_model, heads, rng, dtype)
        self.norm2 = LayerNorm(d_model, dtype)
        self.ff1 = Linear(d_model, ffn_dim, rng, dtype)
        self.ff2 = Linear(ffn_dim, d_model, rng, dtype)
        self.dropout = dropout

    def __call__(self, h, lengths=None, train=False, stream=None):
        a = self.attn(self.norm1(h), lengths)
        y = h + ag.dropout(a, self.dropout, train, stream)
        f = self.ff2(ag.relu(self.ff1(self.norm2(y))))
        return y + ag.dropout(f, self.dropout, train, stream)


def stats_pool(x, lengths):
    """Concatenate per-channel mean and std over valid time steps: (B, T, C) -> (B, 2C)."""
    mask = length_mask(lengths, x.shape[1])
    return ag.concat([ag.mean(x, axis=1, mask=mask), ag.std(x, axis=1, mask=mask)], axis=-1)
