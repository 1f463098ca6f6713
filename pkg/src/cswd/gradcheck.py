"""Finite-difference checks for every layer and for the small full model.

Each check builds 64-bit inputs, reduces the layer output to a scalar with a
fixed random projection (so no coordinate has a trivially symmetric
gradient) and reports the worst relative error from ``grad_check``.
"""
import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .layers import (
    BiLSTM,
    Conv1dBlock,
    Embedding,
    Linear,
    MultiHeadAttention,
    TransformerEncoderLayer,
    stats_pool,
)
from .model import CswModel, ModelConfig, UtteranceBatch

THRESHOLD = 1e-4
DT = np.float64


def _project(y, rng):
    r = Tensor(rng.normal(size=y.shape).astype(y.dtype))
    return ag.sum_(ag.mul(y, r))


def _leaf(rng, *shape):
    return Tensor(rng.normal(size=shape).astype(DT), requires_grad=True)


def check_primitives(seed=0):
    """Worst error over the elementary ops on random inputs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    a, b = _leaf(rng, 3, 4), _leaf(rng, 4, 2)
    pos = Tensor(rng.uniform(0.5, 2.0, (3, 4)).astype(DT), requires_grad=True)
    mask = np.array([[1, 1, 0, 1], [1, 0, 0, 0], [1, 1, 1, 1]], dtype=bool)
    cases = [
        (lambda: _project(ag.matmul(a, b), rng_fixed()), [a, b]),
        (lambda: _project(ag.add(a, ag.slice_(a, (slice(None), slice(0, 1)))), rng_fixed()), [a]),
        (lambda: _project(ag.mul(a, a), rng_fixed()), [a]),
        (lambda: _project(ag.concat([a, ag.transpose(b)], axis=0), rng_fixed()), [a, b]),
        (lambda: _project(ag.relu(a), rng_fixed()), [a]),
        (lambda: _project(ag.tanh(a), rng_fixed()), [a]),
        (lambda: _project(ag.sigmoid(a), rng_fixed()), [a]),
        (lambda: _project(ag.exp(a), rng_fixed()), [a]),
        (lambda: _project(ag.log(pos), rng_fixed()), [pos]),
        (lambda: _project(ag.softmax(a, axis=1), rng_fixed()), [a]),
        (lambda: _project(ag.masked_softmax(a, mask, axis=1), rng_fixed()), [a]),
        (lambda: _project(ag.mean(a, axis=0), rng_fixed()), [a]),
        (lambda: _project(ag.std(a, axis=1), rng_fixed()), [a]),
        (lambda: _project(ag.std(a, axis=1, mask=mask), rng_fixed()), [a]),
        (lambda: ag.cross_entropy(a, np.array([0, 3, 1])), [a]),
    ]
    for f, params in cases:
        worst = max(worst, ag.grad_check(f, params))
    return worst


def rng_fixed():
    return np.random.default_rng(1234)


def check_conv(seed=0):
    rng = np.random.default_rng(seed)
    block = Conv1dBlock(3, 4, 3, 2, rng, DT)
    x = _leaf(rng, 2, 11, 3)
    lengths = np.array([11, 8])
    return ag.grad_check(lambda: _project(block(x, lengths, train=True)[0], rng_fixed()),
                         [x] + block.parameters())


def check_bilstm(seed=0):
    """Bi-LSTM, T=5, input dim 8, with one shorter row."""
    rng = np.random.default_rng(seed)
    lstm = BiLSTM(8, 6, rng, dtype=DT)
    x = _leaf(rng, 2, 5, 8)
    lengths = np.array([5, 3])
    return ag.grad_check(lambda: _project(lstm(x, lengths), rng_fixed()), [x] + lstm.parameters())


def check_embedding(seed=0):
    rng = np.random.default_rng(seed)
    emb = Embedding(7, 5, rng, dtype=DT)
    ids = np.array([[2, 5, 5, 0], [1, 3, 6, 2]])
    return ag.grad_check(lambda: _project(emb(ids), rng_fixed()), emb.parameters())


def check_mha(seed=0):
    rng = np.random.default_rng(seed)
    mha = MultiHeadAttention(8, 2, rng, DT)
    h = _leaf(rng, 2, 4, 8)
    lengths = np.array([4, 2])
    return ag.grad_check(lambda: _project(mha(h, lengths), rng_fixed()), [h] + mha.parameters())


def check_transformer(seed=0):
    """Full pre-norm encoder layer, T=4, d_model=8."""
    rng = np.random.default_rng(seed)
    layer = TransformerEncoderLayer(8, 2, 12, rng, dtype=DT)
    h = _leaf(rng, 2, 4, 8)
    lengths = np.array([4, 3])
    return ag.grad_check(lambda: _project(layer(h, lengths), rng_fixed()), [h] + layer.parameters())


def check_pooling(seed=0):
    rng = np.random.default_rng(seed)
    x = _leaf(rng, 3, 6, 4)
    lengths = np.array([6, 1, 4])
    return ag.grad_check(lambda: _project(stats_pool(x, lengths), rng_fixed()), [x])


def check_heads(seed=0):
    """Projection + ReLU + classifier + cross-entropy."""
    rng = np.random.default_rng(seed)
    proj, cls = Linear(10, 6, rng, DT), Linear(6, 2, rng, DT)
    u = _leaf(rng, 4, 10)
    labels = np.array([0, 1, 1, 0])
    return ag.grad_check(lambda: ag.cross_entropy(cls(ag.relu(proj(u))), labels),
                         [u] + proj.parameters() + cls.parameters())


def tiny_batch(config, seed=0, frames=(25, 31, 40), phonemes=(8, 10, 12)):
    rng = np.random.default_rng(seed)
    mf = [rng.normal(size=(t, config.n_mfcc)) for t in frames]
    ph = [rng.integers(1, config.vocab_size, size=n) for n in phonemes]
    return UtteranceBatch.from_items(mf, ph, labels=[0, 1, 1][: len(frames)])


def check_model(seed=0, max_coords=300, variant="multi_modal", arch="cnn_bilstm_transformer"):
    """Whole tiny-dimension model in train mode (batch statistics, no dropout)."""
    config = ModelConfig.tiny(variant=variant, arch=arch, precision=64 if DT == np.float64 else 32)
    model = CswModel(config, seed=seed)
    batch = tiny_batch(config, seed)
    return ag.grad_check(lambda: ag.cross_entropy(model.logits(batch, train=True), batch.labels),
                         model.parameters(), max_coords=max_coords, seed=seed)


SCOPES = {
    "primitives": check_primitives,
    "conv": check_conv,
    "bilstm": check_bilstm,
    "embedding": check_embedding,
    "mha": check_mha,
    "transformer": check_transformer,
    "pooling": check_pooling,
    "heads": check_heads,
    "model": check_model,
}


def run(scope="all", seed=0, precision=64):
    """Mapping scope -> worst relative error."""
    global DT
    names = list(SCOPES) if scope == "all" else [scope]
    prev, DT = DT, (np.float64 if precision == 64 else np.float32)
    try:
        return {name: SCOPES[name](seed) for name in names}
    finally:
        DT = prev
