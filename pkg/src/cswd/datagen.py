"""Synthetic two-language corpus, manifest I/O and phoneme vocabulary.

Two invented languages with disjoint phoneme inventories (``A00..A19`` and
``B00..B19``). Every phoneme is rendered as a short chord of formant tones;
language A places its formants on a 300 Hz lattice and language B on the same
lattice shifted by 150 Hz, so the two are always at least 150 Hz apart.

Each utterance draws from three independent RNG streams keyed by
``(seed, index)``: the token sequence, the audio rendering and the phoneme
corruption. Changing the SNR therefore leaves phoneme files byte-identical
and changing the corruption rate leaves WAV files byte-identical.
"""
import csv
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, AudioBuffer, write_wav
from .errors import DuplicateId, EmptyCorpus, MissingFile, ParseError
from .model import PAD_ID, UNK_ID

LABELS = ("mono", "cs")
CORRUPTION_MODES = ("same", "any", "other")
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_STREAM_SEQUENCE = 0
_STREAM_AUDIO = 1
_STREAM_CORRUPT = 2


@dataclass
class SyntheticLanguage:
    name: str
    tokens: list
    formants: dict  # token -> list of (centre_hz, bandwidth_hz)
    mean_duration_ms: float = 90.0


def default_languages(n_phonemes=20, bandwidth_hz=90.0, duration_ms=90.0):
    """The fixed pair of synthetic languages used by ``generate_corpus``."""
    rng = np.random.default_rng(20211)
    lattice = 300.0 * np.arange(1, 12)  # 300..3300 Hz
    langs = []
    for name, offset in (("A", 0.0), ("B", 150.0)):
        tokens = [f"{name}{i:02d}" for i in range(n_phonemes)]
        formants = {}
        for tok in tokens:
            k = int(rng.integers(1, 4))
            centres = np.sort(rng.choice(lattice, size=k, replace=False)) + offset
            formants[tok] = [(float(c), bandwidth_hz) for c in centres]
        langs.append(SyntheticLanguage(name, tokens, formants, duration_ms))
    return tuple(langs)


@dataclass
class CorpusSpec:
    n_utterances: int = 200
    p_code_switched: float = 0.5
    min_phonemes: int = 8
    max_phonemes: int = 16
    snr_db: float = 30.0
    corruption_rate: float = 0.0
    corruption_mode: str = "same"
    eval_fraction: float = 0.2
    seed: int = 0
    # std-dev of per-occurrence formant frequency jitter
    formant_jitter_hz: float = 90.0
    # code-switched utterances embed segments of this many phonemes
    min_segment: int = 3
    max_embedded_segment: int = 4

    def __post_init__(self):
        if self.n_utterances < 1:
            raise ValueError("n_utterances must be >= 1")
        if not 0.0 < self.p_code_switched < 1.0:
            raise ValueError("p_code_switched must lie in (0, 1)")
        if not 0.0 <= self.corruption_rate < 0.5:
            raise ValueError("corruption_rate must lie in [0, 0.5)")
        if self.corruption_mode not in CORRUPTION_MODES:
            raise ValueError(f"corruption_mode must be one of {CORRUPTION_MODES}")
        if self.min_segment < 3:
            raise ValueError("segments need at least 3 phonemes")
        if self.max_embedded_segment < self.min_segment:
            raise ValueError("max_embedded_segment < min_segment")
        if self.min_phonemes < self.min_segment + self.max_embedded_segment or self.max_phonemes < self.min_phonemes:
            raise ValueError("phoneme length range too small for a two-segment utterance")
        if not 0.0 <= self.eval_fraction < 1.0:
            raise ValueError("eval_fraction must lie in [0, 1)")


@dataclass
class ManifestEntry:
    utt_id: str
    audio_path: str
    phoneme_path: str
    label: str

    @property
    def label_id(self):
        return LABELS.index(self.label)


@dataclass
class Utterance:
    """In-memory record of one generated utterance (ground truth included)."""

    utt_id: str
    label: str
    true_tokens: list
    segments: list  # list of (language name, start, stop)
    observed_tokens: list
    audio: AudioBuffer = field(repr=False, default=None)


def _rng(seed, index, stream):
    return np.random.default_rng([int(seed), int(index), stream])


def _split_lengths(total, n_seg, spec, rng):
    """Segment lengths alternating matrix/embedded; embedded ones are short."""
    n_emb = n_seg // 2
    n_mat = n_seg - n_emb
    emb = [int(rng.integers(spec.min_segment, spec.max_embedded_segment + 1)) for _ in range(n_emb)]
    extra = total - sum(emb) - n_mat * spec.min_segment
    cuts = np.sort(rng.integers(0, extra + 1, n_mat - 1))
    mat = [spec.min_segment + int(p) for p in np.diff(np.concatenate([[0], cuts, [extra]]))]
    return [mat[i // 2] if i % 2 == 0 else emb[i // 2] for i in range(n_seg)]


def sample_sequence(spec, langs, index):
    """Label, true token list and language segments for utterance ``index``."""
    rng = _rng(spec.seed, index, _STREAM_SEQUENCE)
    label = "cs" if rng.random() < spec.p_code_switched else "mono"
    length = int(rng.integers(spec.min_phonemes, spec.max_phonemes + 1))
    first = int(rng.integers(0, 2))
    if label == "mono":
        seg_langs, seg_lens = [first], [length]
    else:
        # matrix + embedded (+ matrix when long enough)
        three = length - spec.max_embedded_segment >= 2 * spec.min_segment
        n_seg = 3 if three and rng.random() < 0.5 else 2
        seg_lens = _split_lengths(length, n_seg, spec, rng)
        seg_langs = [first if i % 2 == 0 else 1 - first for i in range(n_seg)]
    tokens, segments, pos = [], [], 0
    for li, n in zip(seg_langs, seg_lens):
        inv = langs[li].tokens
        tokens.extend(inv[int(j)] for j in rng.integers(0, len(inv), n))
        segments.append((langs[li].name, pos, pos + n))
        pos += n
    return label, tokens, segments


def corrupt_tokens(tokens, spec, langs, index):
    """Simulated recogniser errors: each token replaced with probability ``corruption_rate``.

    ``same`` substitutes within the token's own language, ``other`` with a
    token of the other language, ``any`` uniformly from both inventories.
    """
    rng = _rng(spec.seed, index, _STREAM_CORRUPT)
    owner = {t: i for i, lang in enumerate(langs) for t in lang.tokens}
    both = langs[0].tokens + langs[1].tokens
    out = []
    for tok in tokens:
        hit = rng.random() < spec.corruption_rate
        pick = rng.random()
        if not hit:
            out.append(tok)
            continue
        li = owner[tok]
        if spec.corruption_mode == "same":
            pool = langs[li].tokens
        elif spec.corruption_mode == "other":
            pool = langs[1 - li].tokens
        else:
            pool = both
        out.append(pool[min(int(pick * len(pool)), len(pool) - 1)])
    return out


def synthesize_audio(tokens, spec, langs, index, level_rms=0.1):
    """Concatenate per-phoneme formant chords and add white noise at ``spec.snr_db``."""
    rng = _rng(spec.seed, index, _STREAM_AUDIO)
    table = {t: lang for lang in langs for t in lang.tokens}
    pieces = []
    for tok in tokens:
        lang = table[tok]
        dur = lang.mean_duration_ms * rng.uniform(0.7, 1.3)
        n = int(round(dur * SAMPLE_RATE / 1000.0))
        t = np.arange(n) / SAMPLE_RATE
        chord = np.zeros(n)
        for rank, (centre, bw) in enumerate(lang.formants[tok]):
            f = max(50.0, centre + rng.normal(0.0, bw))
            chord += (0.7**rank) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        ramp = min(80, n // 4)
        env = np.ones(n)
        env[:ramp] = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[n - ramp :] = env[:ramp][::-1]
        pieces.append(chord * env * rng.uniform(0.8, 1.2))
    sig = np.concatenate(pieces)
    sig *= level_rms / np.sqrt(np.mean(sig**2))
    noise_rms = level_rms / (10.0 ** (spec.snr_db / 20.0))
    sig = sig + rng.normal(0.0, noise_rms, sig.shape)
    return AudioBuffer(np.clip(sig, -1.0, 32767 / 32768), SAMPLE_RATE)


def make_utterance(spec, langs, index, with_audio=True):
    label, tokens, segments = sample_sequence(spec, langs, index)
    observed = corrupt_tokens(tokens, spec, langs, index)
    audio = synthesize_audio(tokens, spec, langs, index) if with_audio else None
    return Utterance(f"utt{index:05d}", label, tokens, segments, observed, audio)


def write_manifest(path, entries):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for e in entries:
            fh.write(f"{e.utt_id}\t{e.audio_path}\t{e.phoneme_path}\t{e.label}\n")


def generate_corpus(spec, out_dir, langs=None):
    """Write WAV + phoneme files and manifests under ``out_dir``.

    Produces ``manifest.tsv`` (all utterances), ``train.tsv`` and ``eval.tsv``
    (the last ``eval_fraction`` of utterances), ``truth.tsv`` (uncorrupted
    tokens and segments) and ``corpus.cfg``. Manifest paths are relative to
    the manifest's directory. Returns the list of ``Utterance`` records.
    """
    langs = langs or default_languages(bandwidth_hz=spec.formant_jitter_hz)
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    (out / "phn").mkdir(parents=True, exist_ok=True)
    utts, entries = [], []
    for i in range(spec.n_utterances):
        u = make_utterance(spec, langs, i)
        wav_rel = f"wav/{u.utt_id}.wav"
        phn_rel = f"phn/{u.utt_id}.phn"
        write_wav(out / wav_rel, u.audio)
        (out / phn_rel).write_text(" ".join(u.observed_tokens) + "\n", encoding="utf-8")
        entries.append(ManifestEntry(u.utt_id, wav_rel, phn_rel, u.label))
        u.audio = None
        utts.append(u)
    n_eval = int(round(spec.n_utterances * spec.eval_fraction))
    n_train = spec.n_utterances - n_eval
    write_manifest(out / "manifest.tsv", entries)
    write_manifest(out / "train.tsv", entries[:n_train])
    write_manifest(out / "eval.tsv", entries[n_train:])
    with open(out / "truth.tsv", "w", encoding="utf-8") as fh:
        for u in utts:
            segs = ",".join(f"{name}:{a}-{b}" for name, a, b in u.segments)
            fh.write(f"{u.utt_id}\t{u.label}\t{segs}\t{' '.join(u.true_tokens)}\n")
    with open(out / "corpus.cfg", "w", encoding="utf-8") as fh:
        for k, v in asdict(spec).items():
            fh.write(f"{k} = {v}\n")
    return utts


def load_manifest(path, check_files=True):
    """Parse a tab-separated manifest; relative paths resolve against its directory."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    base = path.parent
    entries, seen = [], set()
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 tab-separated fields, got {len(row)}", lineno)
            utt_id, audio, phn, label = (c.strip() for c in row)
            if label not in LABELS:
                raise ParseError(f"unknown label {label!r} (expected one of {LABELS})", lineno)
            if utt_id in seen:
                raise DuplicateId(f"line {lineno}: duplicate utt_id {utt_id!r}")
            seen.add(utt_id)
            audio = audio if os.path.isabs(audio) else str(base / audio)
            phn = phn if os.path.isabs(phn) else str(base / phn)
            if check_files:
                for p in (audio, phn):
                    if not os.path.exists(p):
                        raise MissingFile(f"line {lineno}: {p}")
            entries.append(ManifestEntry(utt_id, audio, phn, label))
    return entries


def read_phonemes(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read().split()


class Vocab:
    """Token <-> id map; id 0 is padding, id 1 is unknown."""

    def __init__(self, tokens=()):
        self.itos = [PAD_TOKEN, UNK_TOKEN]
        self.stoi = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
        for t in tokens:
            self.add(t)

    def add(self, token):
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)

    def __len__(self):
        return len(self.itos)

    def encode(self, tokens):
        return np.array([self.stoi.get(t, UNK_ID) for t in tokens], dtype=np.int64)

    def to_list(self):
        return list(self.itos)

    @classmethod
    def from_list(cls, itos):
        if itos[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with <pad>, <unk>")
        return cls(itos[2:])


def build_vocab(entries):
    """Ids by first appearance over the training entries' phoneme files."""
    if not entries:
        raise EmptyCorpus("cannot build a vocabulary from zero entries")
    vocab = Vocab()
    for e in entries:
        tokens = e if isinstance(e, (list, tuple)) else read_phonemes(e.phoneme_path)
        for t in tokens:
            vocab.add(t)
    return vocab
