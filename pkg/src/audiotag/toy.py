"""Synthetic tone / band-noise clips for desk-scale experiments."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import ClipRecord, write_index
from .dsp import Waveform, write_wav

# (kind, low Hz, high Hz)
PRETRAIN_CLASSES = (
    ("tone", 300.0, 500.0),
    ("tone", 1500.0, 2500.0),
    ("noise", 3000.0, 5000.0),
    ("noise", 6000.0, 9000.0),
)
DOWNSTREAM_CLASSES = (
    ("tone", 700.0, 1000.0),
    ("tone", 3000.0, 4000.0),
    ("noise", 200.0, 1200.0),
    ("noise", 9000.0, 12000.0),
)


def band_noise(rng, n, sample_rate, lo, hi):
    spec = rng.normal(size=n // 2 + 1) + 1j * rng.normal(size=n // 2 + 1)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spec[(freqs < lo) | (freqs > hi)] = 0
    x = np.fft.irfft(spec, n)
    return x / (np.abs(x).max() + 1e-12)


def render(kind, lo, hi, rng, n, sample_rate):
    if kind == "tone":
        f = rng.uniform(lo, hi)
        t = np.arange(n) / sample_rate
        return np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    if kind == "noise":
        return band_noise(rng, n, sample_rate, lo, hi)
    raise ValueError(f"unknown sound kind {kind!r}")


def make_toy_dataset(n_clips=100, classes=PRETRAIN_CLASSES, seed=0, sample_rate=32000,
                     duration=1.0, background=0.02):
    """Return (waveforms (N, L) float32, targets (N, K) float32), single-label.

    Clips are assigned to classes round-robin, so counts differ by at most one.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    waves = np.zeros((n_clips, n), dtype=np.float32)
    targets = np.zeros((n_clips, len(classes)), dtype=np.float32)
    for i in range(n_clips):
        k = i % len(classes)
        kind, lo, hi = classes[k]
        x = rng.uniform(0.2, 0.6) * render(kind, lo, hi, rng, n, sample_rate)
        x += background * rng.normal(size=n)
        waves[i] = np.clip(x, -1, 1)
        targets[i, k] = 1.0
    order = rng.permutation(n_clips)
    return waves[order], targets[order]


def write_toy_dataset(out_dir, n_clips=100, classes=PRETRAIN_CLASSES, seed=0, sample_rate=32000, duration=1.0):
    """Write WAVs, ``index.csv`` and ``classes.txt`` under ``out_dir``."""
    out_dir = Path(out_dir)
    waves, targets = make_toy_dataset(n_clips, classes, seed, sample_rate, duration)
    records = []
    for i, (w, y) in enumerate(zip(waves, targets)):
        path = out_dir / "audio" / f"clip{i:04d}.wav"
        write_wav(path, Waveform(w.astype(np.float64), sample_rate))
        records.append(ClipRecord(f"clip{i:04d}", str(path), y))
    write_index(out_dir / "index.csv", records)
    with open(out_dir / "classes.txt", "w") as fh:
        for kind, lo, hi in classes:
            fh.write(f"{kind} {int(lo)}-{int(hi)} Hz\n")
    return out_dir / "index.csv"
