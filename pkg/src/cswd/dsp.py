"""Audio I/O and 13-dimensional MFCC extraction (25 ms window, 10 ms hop)."""
import wave
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import AudioTooShort, BadSampleRate

SAMPLE_RATE = 16000
WINDOW = 400
HOP = 160
N_FFT = 512
N_MELS = 26
N_MFCC = 13
PREEMPH = 0.97
LOG_FLOOR = 1e-10


@dataclass
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("audio must be mono (1-D)")
        if self.sample_rate != SAMPLE_RATE:
            raise BadSampleRate(f"expected {SAMPLE_RATE} Hz, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio contains non-finite samples")

    def __len__(self):
        return len(self.samples)


def read_wav(path):
    """Load 16-bit PCM mono WAV, scaled to [-1, 1) by 1/32768."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    if rate != SAMPLE_RATE:
        raise BadSampleRate(f"{path}: expected {SAMPLE_RATE} Hz, got {rate}")
    return AudioBuffer(np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0, rate)


def write_wav(path, audio):
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(audio.sample_rate)
        w.writeframes(pcm.tobytes())


def num_frames(num_samples, window=WINDOW, hop=HOP):
    if num_samples < window:
        return 0
    return 1 + (num_samples - window) // hop


def frame_signal(audio, window_samples=WINDOW, hop_samples=HOP):
    """(n_frames, window) view of the signal; trailing partial window dropped."""
    if audio.sample_rate != SAMPLE_RATE:
        raise BadSampleRate(f"expected {SAMPLE_RATE} Hz, got {audio.sample_rate}")
    n = len(audio.samples)
    if n < window_samples:
        raise AudioTooShort(f"{n} samples < one {window_samples}-sample window")
    count = num_frames(n, window_samples, hop_samples)
    return np.lib.stride_tricks.sliding_window_view(audio.samples, window_samples)[::hop_samples][:count]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_centers(n_mels=N_MELS, fmin=0.0, fmax=SAMPLE_RATE / 2):
    """Filter edge/centre frequencies in Hz, ``n_mels + 2`` points."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))


def mel_filterbank(n_mels=N_MELS, n_fft=N_FFT, sample_rate=SAMPLE_RATE):
    """Triangular filters evaluated at the rfft bin frequencies, (n_mels, n_fft//2+1)."""
    pts = mel_centers(n_mels, 0.0, sample_rate / 2)
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = pts[:-2, None], pts[1:-1, None], pts[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


_FBANK = mel_filterbank()
_WINDOW = np.hamming(WINDOW)


def power_spectrum(frames):
    """Pre-emphasis within each frame, Hamming window, 512-point |FFT|^2."""
    emph = np.empty_like(frames)
    emph[:, 0] = frames[:, 0] * (1.0 - PREEMPH)
    emph[:, 1:] = frames[:, 1:] - PREEMPH * frames[:, :-1]
    spec = np.fft.rfft(emph * _WINDOW, n=N_FFT)
    return spec.real**2 + spec.imag**2


def log_mel_energies(audio):
    """(T, 26) log filterbank energies with floor 1e-10."""
    energies = power_spectrum(frame_signal(audio)) @ _FBANK.T
    return np.log(np.maximum(energies, LOG_FLOOR))


def mfcc_extract(audio):
    """(T, 13) MFCC matrix: orthonormal DCT-II of log mel energies, c0 kept."""
    return scipy.fft.dct(log_mel_energies(audio), type=2, norm="ortho", axis=-1)[:, :N_MFCC]


def write_feature_csv(path, feats):
    np.savetxt(path, feats, delimiter=",", fmt="%.8g")
