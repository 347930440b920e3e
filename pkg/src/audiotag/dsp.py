"""Waveform to log-mel front end.

Everything here is deterministic and non-trainable: linear resampling,
padding, periodic Hamming window, centred STFT power spectrum, triangular
mel filterbank and 10*log10 compression. The default configuration
(32 kHz, window 1024, hop 320, 64 mels from 50 Hz to 14 kHz) turns a
10 second clip into a 1001 x 64 matrix at 100 frames per second.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_SAMPLE_RATE = 32000
DEFAULT_AMIN = 1e-10


class DSPError(ValueError):
    pass


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 1:
            raise DSPError(f"waveform must be 1-D, got shape {samples.shape}")
        if int(self.sample_rate) <= 0:
            raise DSPError("sample_rate must be positive")
        if not np.all(np.isfinite(samples)):
            raise DSPError("waveform contains NaN or Inf")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    window_size: int = 1024
    hop_size: int = 320
    center: bool = True
    window_kind: str = "hamming"

    def __post_init__(self):
        if self.window_size <= 0 or self.hop_size <= 0:
            raise DSPError("window_size and hop_size must be positive")
        if self.hop_size > self.window_size:
            raise DSPError("hop_size must not exceed window_size")
        if self.window_kind != "hamming":
            raise DSPError(f"unsupported window {self.window_kind!r}")

    @property
    def n_bins(self) -> int:
        return self.window_size // 2 + 1


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray
    sample_rate: int
    window_size: int
    f_min: float
    f_max: float
    center_frequencies: np.ndarray = field(repr=False)

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class LogMelSpectrogram:
    values: np.ndarray
    frame_rate: float

    @property
    def shape(self):
        return self.values.shape


# --------------------------------------------------------------------------
# waveform utilities


def read_wav(path) -> Waveform:
    """Read a RIFF PCM file (int16 or float32), averaging stereo to mono."""
    from scipy.io import wavfile

    rate, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        data = data.astype(np.float64)
    else:
        raise DSPError(f"{path}: unsupported sample format {data.dtype}")
    if data.ndim == 2:
        data = data.mean(axis=1)
    return Waveform(data, rate)


def write_wav(path, w: Waveform, dtype="int16"):
    from scipy.io import wavfile

    if dtype == "int16":
        data = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    elif dtype == "float32":
        data = w.samples.astype(np.float32)
    else:
        raise DSPError(f"unsupported dtype {dtype!r}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), w.sample_rate, data)


def resample_linear(w: Waveform, target_rate: int) -> Waveform:
    """Linear interpolation resampler; the last sample is held past the end.

    Lossy above half the Nyquist frequency of the coarser rate; good enough
    for desk-scale experiments, not for listening.
    """
    if target_rate <= 0:
        raise DSPError("target_rate must be positive")
    if len(w) == 0:
        raise DSPError("empty waveform")
    if target_rate == w.sample_rate:
        return w
    n_out = int(round(len(w) * target_rate / w.sample_rate))
    positions = np.arange(n_out) * (w.sample_rate / target_rate)
    out = np.interp(positions, np.arange(len(w)), w.samples)
    return Waveform(out.astype(w.samples.dtype, copy=False), target_rate)


def pad_or_truncate(w: Waveform, target_len: int) -> Waveform:
    if target_len <= 0:
        raise DSPError("target_len must be positive")
    n = len(w)
    if n == target_len:
        return w
    if n > target_len:
        return Waveform(w.samples[:target_len].copy(), w.sample_rate)
    out = np.zeros(target_len, dtype=w.samples.dtype)
    out[:n] = w.samples
    return Waveform(out, w.sample_rate)


def to_mono(samples: np.ndarray) -> np.ndarray:
    samples = np.asarray(samples)
    return samples.mean(axis=1) if samples.ndim == 2 else samples


# --------------------------------------------------------------------------
# spectral analysis


def hamming_window(n: int, periodic: bool = True) -> np.ndarray:
    if n < 2:
        raise DSPError("window length must be at least 2")
    denom = n if periodic else n - 1
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / denom)


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x: np.ndarray) -> np.ndarray:
    """DFT along the last axis.

    Iterative radix-2 Cooley-Tukey, vectorised over leading axes. Lengths
    that are not powers of two fall back to a dense DFT matrix.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n & (n - 1):
        k = np.arange(n)
        return x @ np.exp(-2j * np.pi * np.outer(k, k) / n)
    lead = x.shape[:-1]
    x = x[..., _bit_reverse_indices(n)]
    m = 1
    while m < n:
        twiddle = np.exp(-1j * np.pi * np.arange(m) / m)
        x = x.reshape(*lead, n // (2 * m), 2, m)
        even = x[..., 0, :]
        odd = x[..., 1, :] * twiddle
        x = np.concatenate([even + odd, even - odd], axis=-1)
        m *= 2
    return x.reshape(*lead, n)


def frame_signal(samples: np.ndarray, cfg: StftConfig) -> np.ndarray:
    n = cfg.window_size
    if cfg.center:
        samples = np.pad(samples, (n // 2, n // 2), mode="reflect")
    if samples.shape[0] < n:
        raise DSPError(
            f"window of {n} samples is longer than the padded signal "
            f"({samples.shape[0]} samples)"
        )
    frames = np.lib.stride_tricks.sliding_window_view(samples, n)
    return frames[:: cfg.hop_size]


def stft_power(w: Waveform, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Power spectrogram, shape (T, window_size // 2 + 1)."""
    if len(w) < 1:
        raise DSPError("empty waveform")
    frames = frame_signal(w.samples.astype(np.float64), cfg)
    spec = fft(frames * hamming_window(cfg.window_size, periodic=True))
    spec = spec[:, : cfg.n_bins]
    return spec.real**2 + spec.imag**2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    window_size: int = 1024,
    n_mels: int = 64,
    f_min: float = 50.0,
    f_max: float = 14000.0,
) -> MelFilterbank:
    if not 0 <= f_min < f_max <= sample_rate / 2:
        raise DSPError(
            f"need 0 <= f_min < f_max <= sample_rate/2, got {f_min}, {f_max}"
        )
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    bins = np.arange(window_size // 2 + 1) * sample_rate / window_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lo) / (mid - lo)
    falling = (hi - bins[None, :]) / (hi - mid)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(weights.max(axis=1) <= 0)
    if empty.size:
        raise DSPError(
            f"filterbank underdetermined: {empty.size} of {n_mels} filters "
            "contain no FFT bin"
        )
    weights.setflags(write=False)
    centers = edges[1:-1].copy()
    centers.setflags(write=False)
    return MelFilterbank(weights, sample_rate, window_size, f_min, f_max, centers)


def power_to_db(power: np.ndarray, amin: float = DEFAULT_AMIN, top_db=None):
    out = 10.0 * np.log10(np.maximum(power, amin))
    if top_db is not None:
        out = np.maximum(out, out.max() - top_db)
    return out


def logmel_extract(
    w: Waveform,
    cfg: StftConfig = StftConfig(),
    fb: MelFilterbank | None = None,
    amin: float = DEFAULT_AMIN,
    top_db: float | None = None,
) -> LogMelSpectrogram:
    if fb is None:
        fb = build_mel_filterbank(w.sample_rate, cfg.window_size)
    if fb.window_size != cfg.window_size or fb.sample_rate != w.sample_rate:
        raise DSPError(
            "filterbank was built for a different window size or sample rate"
        )
    mel = stft_power(w, cfg) @ fb.weights.T
    return LogMelSpectrogram(power_to_db(mel, amin, top_db), w.sample_rate / cfg.hop_size)


class LogMelFrontEnd:
    """Reusable extractor bound to one DSP configuration."""

    def __init__(
        self,
        sample_rate=DEFAULT_SAMPLE_RATE,
        window_size=1024,
        hop_size=320,
        n_mels=64,
        f_min=50.0,
        f_max=14000.0,
        amin=DEFAULT_AMIN,
        top_db=None,
    ):
        self.sample_rate = sample_rate
        self.cfg = StftConfig(window_size, hop_size)
        self.fb = build_mel_filterbank(sample_rate, window_size, n_mels, f_min, f_max)
        self.amin = amin
        self.top_db = top_db

    def n_frames(self, n_samples: int) -> int:
        return 1 + n_samples // self.cfg.hop_size

    def __call__(self, samples) -> np.ndarray:
        w = samples if isinstance(samples, Waveform) else Waveform(samples, self.sample_rate)
        if w.sample_rate != self.sample_rate:
            w = resample_linear(w, self.sample_rate)
        return logmel_extract(w, self.cfg, self.fb, self.amin, self.top_db).values
