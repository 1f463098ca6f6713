"""Two-stream code-switch classifier (audio MFCC stream + phoneme stream).

Each stream runs conv blocks -> Bi-LSTM -> transformer layers -> statistics
pooling. The multi-modal head concatenates both pooled vectors, projects to
``projection_dim`` with ReLU and classifies with a softmax.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import DropoutStream, Tensor
from .errors import ShapeMismatch, VariantMismatch
from .layers import (
    BiLSTM,
    Conv1dBlock,
    Embedding,
    Linear,
    Module,
    TransformerEncoderLayer,
    conv_out_len,
    stats_pool,
)

VARIANTS = ("multi_modal", "audio_only", "phoneme_only")
ARCHS = ("cnn_bilstm", "cnn_transformer", "cnn_bilstm_transformer")
PAD_ID = 0
UNK_ID = 1


@dataclass
class ModelConfig:
    # (kernel, stride, channels) per conv block
    audio_conv: tuple = ((7, 3, 64), (5, 3, 64))
    audio_lstm_hidden: int = 128
    audio_lstm_layers: int = 1
    n_mfcc: int = 13
    phoneme_embed_dim: int = 128
    phoneme_conv: tuple = ((3, 1, 64), (5, 1, 64))
    phoneme_lstm_hidden: int = 128
    phoneme_lstm_layers: int = 1
    vocab_size: int = 2
    transformer_layers: int = 2
    heads: int = 4
    ffn_dim: int = 256
    dropout: float = 0.3
    projection_dim: int = 128
    n_classes: int = 2
    variant: str = "multi_modal"
    arch: str = "cnn_bilstm_transformer"
    precision: int = 32

    def __post_init__(self):
        self.audio_conv = tuple(tuple(int(v) for v in c) for c in self.audio_conv)
        self.phoneme_conv = tuple(tuple(int(v) for v in c) for c in self.phoneme_conv)
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}; expected one of {ARCHS}")
        if self.precision not in (32, 64):
            raise ValueError("precision must be 32 or 64")
        for hidden in (self.audio_lstm_hidden, self.phoneme_lstm_hidden):
            if (2 * hidden) % self.heads:
                raise ValueError(f"d_model {2 * hidden} not divisible by {self.heads} heads")

    @property
    def dtype(self):
        return np.float64 if self.precision == 64 else np.float32

    @property
    def uses_audio(self):
        return self.variant in ("multi_modal", "audio_only")

    @property
    def uses_phoneme(self):
        return self.variant in ("multi_modal", "phoneme_only")

    @property
    def audio_dim(self):
        return 2 * self.audio_lstm_hidden

    @property
    def phoneme_dim(self):
        return 2 * self.phoneme_lstm_hidden

    @property
    def fused_dim(self):
        return 2 * self.audio_dim * self.uses_audio + 2 * self.phoneme_dim * self.uses_phoneme

    def min_audio_frames(self):
        return _min_input_len(self.audio_conv)

    def min_phonemes(self):
        return _min_input_len(self.phoneme_conv)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    @classmethod
    def tiny(cls, **overrides):
        """Small dimensions for finite-difference checks (d_model 16, 2 heads)."""
        base = dict(
            audio_conv=((7, 3, 4), (5, 3, 4)),
            audio_lstm_hidden=8,
            phoneme_embed_dim=6,
            phoneme_conv=((3, 1, 4), (5, 1, 4)),
            phoneme_lstm_hidden=8,
            vocab_size=6,
            heads=2,
            ffn_dim=12,
            projection_dim=8,
            precision=64,
            dropout=0.0,
        )
        base.update(overrides)
        return cls(**base)


def _min_input_len(convs):
    """Smallest input length whose conv stack leaves at least one position."""
    need = 1
    for k, s, _ in reversed(convs):
        need = (need - 1) * s + k
    return need


def conv_stack_lengths(n, convs):
    out = [int(n)]
    for k, s, _ in convs:
        out.append(conv_out_len(out[-1], k, s))
    return out


@dataclass
class UtteranceBatch:
    mfcc: np.ndarray  # (B, T_max, 13), zero padded
    mfcc_len: np.ndarray
    phonemes: np.ndarray  # (B, N_max) int, PAD_ID padded
    phoneme_len: np.ndarray
    labels: np.ndarray = None
    utt_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.mfcc_len = np.asarray(self.mfcc_len, dtype=np.int64)
        self.phoneme_len = np.asarray(self.phoneme_len, dtype=np.int64)
        if np.any(self.mfcc_len > self.mfcc.shape[1]) or np.any(self.phoneme_len > self.phonemes.shape[1]):
            raise ShapeMismatch("valid length exceeds padded length")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if not np.all((self.labels == 0) | (self.labels == 1)):
                raise ValueError("labels must be 0 (mono) or 1 (code-switched)")

    def __len__(self):
        return len(self.mfcc_len)

    @classmethod
    def from_items(cls, mfccs, phoneme_ids, labels=None, utt_ids=None, t_max=None, n_max=None):
        """Pad a list of (T_i, 13) arrays and id sequences into one batch."""
        B = len(mfccs)
        mlen = np.array([m.shape[0] for m in mfccs], dtype=np.int64)
        plen = np.array([len(p) for p in phoneme_ids], dtype=np.int64)
        t_max = max(int(mlen.max()), t_max or 0)
        n_max = max(int(plen.max()), n_max or 0)
        n_feat = mfccs[0].shape[1]
        mf = np.zeros((B, t_max, n_feat), dtype=np.float64)
        ph = np.full((B, n_max), PAD_ID, dtype=np.int64)
        for i in range(B):
            mf[i, : mlen[i]] = mfccs[i]
            ph[i, : plen[i]] = phoneme_ids[i]
        return cls(mf, mlen, ph, plen, labels, list(utt_ids or []))


class _Stream(Module):
    """Conv blocks, optional Bi-LSTM (or linear adapter), transformer layers."""

    def __init__(self, n_in, convs, hidden, lstm_layers, cfg, rng, dtype):
        self.convs = []
        ch = n_in
        for k, s, out in convs:
            self.convs.append(Conv1dBlock(ch, out, k, s, rng, dtype))
            ch = out
        d_model = 2 * hidden
        self.lstm = None
        self.adapter = None
        if cfg.arch in ("cnn_bilstm", "cnn_bilstm_transformer"):
            self.lstm = BiLSTM(ch, hidden, rng, layers=lstm_layers, dropout=cfg.dropout, dtype=dtype)
        else:
            self.adapter = Linear(ch, d_model, rng, dtype)
        self.transformer = []
        if cfg.arch in ("cnn_transformer", "cnn_bilstm_transformer"):
            self.transformer = [
                TransformerEncoderLayer(d_model, cfg.heads, cfg.ffn_dim, rng, cfg.dropout, dtype)
                for _ in range(cfg.transformer_layers)
            ]

    def __call__(self, x, lengths, train, stream):
        for conv in self.convs:
            x, lengths = conv(x, lengths, train)
        if self.lstm is not None:
            x = self.lstm(x, lengths, train, stream)
        else:
            x = self.adapter(x)
        for layer in self.transformer:
            x = layer(x, lengths, train, stream)
        return x, lengths


class CswModel(Module):
    def __init__(self, config, seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        dt = config.dtype
        self.audio = None
        self.phoneme = None
        self.embedding = None
        if config.uses_audio:
            self.audio = _Stream(config.n_mfcc, config.audio_conv, config.audio_lstm_hidden,
                                 config.audio_lstm_layers, config, rng, dt)
        if config.uses_phoneme:
            self.embedding = Embedding(config.vocab_size, config.phoneme_embed_dim, rng, PAD_ID, dt)
            self.phoneme = _Stream(config.phoneme_embed_dim, config.phoneme_conv,
                                   config.phoneme_lstm_hidden, config.phoneme_lstm_layers, config, rng, dt)
        self.proj = Linear(config.fused_dim, config.projection_dim, rng, dt)
        self.classifier = Linear(config.projection_dim, config.n_classes, rng, dt)
        self.stream = DropoutStream(seed)

    # ------------------------------------------------------------ branches
    def audio_branch(self, mfcc, lengths, train=False):
        """Returns (sequence A^a, valid lengths, pooled U^A)."""
        x = Tensor(np.asarray(mfcc, dtype=self.config.dtype))
        seq, lengths = self.audio(x, lengths, train, self.stream)
        return seq, lengths, stats_pool(seq, lengths)

    def phoneme_branch(self, ids, lengths, train=False):
        """Returns (sequence A^p, valid lengths, pooled U^P)."""
        x = self.embedding(ids)
        seq, lengths = self.phoneme(x, lengths, train, self.stream)
        return seq, lengths, stats_pool(seq, lengths)

    def head(self, pooled):
        return self.classifier(ag.relu(self.proj(pooled)))

    def fuse_and_classify(self, u_audio, u_phoneme):
        if self.config.variant != "multi_modal":
            raise VariantMismatch("fusion requires the multi_modal variant")
        return ag.softmax(self.head(ag.concat([u_audio, u_phoneme], axis=-1)), axis=-1)

    # ------------------------------------------------------------ full model
    def logits(self, batch, train=False):
        pooled = []
        if self.config.uses_audio:
            pooled.append(self.audio_branch(batch.mfcc, batch.mfcc_len, train)[2])
        if self.config.uses_phoneme:
            pooled.append(self.phoneme_branch(batch.phonemes, batch.phoneme_len, train)[2])
        fused = pooled[0] if len(pooled) == 1 else ag.concat(pooled, axis=-1)
        return self.head(fused)

    def forward(self, batch, train=False):
        """Class probabilities, shape (B, n_classes)."""
        return ag.softmax(self.logits(batch, train), axis=-1)

    __call__ = forward

    def after_step(self):
        if self.embedding is not None:
            self.embedding.zero_pad_row()

    def state_dict(self):
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        bufs = dict(self.named_buffers())
        missing = (set(own) | set(bufs)) - set(state)
        if missing:
            raise KeyError(f"checkpoint lacks {sorted(missing)[:5]}")
        for name, p in own.items():
            if state[name].shape != p.data.shape:
                raise ShapeMismatch(f"{name}: {state[name].shape} vs {p.data.shape}")
            p.data[...] = state[name]
        for name, b in bufs.items():
            b[...] = state[name]


def parameter_count(config):
    """Trainable parameter count, computed from shapes without building arrays."""
    total = 0

    def stream(n_in, convs, hidden, layers):
        n = 0
        ch = n_in
        for k, _, out in convs:
            n += out * ch * k + 2 * out
            ch = out
        d = 2 * hidden
        if config.arch != "cnn_transformer":
            for i in range(layers):
                d_in = ch if i == 0 else d
                n += 2 * (d_in * 4 * hidden + hidden * 4 * hidden + 4 * hidden)
        else:
            n += ch * d + d
        if config.arch != "cnn_bilstm":
            per = 4 * d * d + 3 * d + 2 * 2 * d + d * config.ffn_dim + config.ffn_dim + config.ffn_dim * d + d
            n += config.transformer_layers * per
        return n

    if config.uses_audio:
        total += stream(config.n_mfcc, config.audio_conv, config.audio_lstm_hidden, config.audio_lstm_layers)
    if config.uses_phoneme:
        total += config.vocab_size * config.phoneme_embed_dim
        total += stream(config.phoneme_embed_dim, config.phoneme_conv, config.phoneme_lstm_hidden,
                        config.phoneme_lstm_layers)
    total += config.fused_dim * config.projection_dim + config.projection_dim
    total += config.projection_dim * config.n_classes + config.n_classes
    return total
