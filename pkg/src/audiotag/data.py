"""Dataset index plus the sampling and augmentation used during training."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class DataError(ValueError):
    pass


@dataclass
class ClipRecord:
    clip_id: str
    audio_ref: str
    target: np.ndarray

    @property
    def labels(self):
        return np.flatnonzero(self.target).tolist()


def parse_labels(field_text, n_classes, where=""):
    field_text = field_text.strip()
    target = np.zeros(n_classes, dtype=np.float32)
    if not field_text:
        return target
    for tok in field_text.split(";"):
        tok = tok.strip()
        if not tok:
            continue
        try:
            k = int(tok)
        except ValueError:
            raise DataError(f"{where}bad label {tok!r}") from None
        if not 0 <= k < n_classes:
            raise DataError(f"{where}label index {k} outside [0, {n_classes})")
        target[k] = 1.0
    return target


def load_index(path, n_classes) -> list[ClipRecord]:
    """Read a ``clip_id,path,labels`` CSV; relative paths resolve against the CSV's folder."""
    path = Path(path)
    records, seen = [], set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["clip_id", "path", "labels"]:
            raise DataError(f"{path}:1: expected header clip_id,path,labels")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            clip_id, audio, labels = (c.strip() for c in row)
            if not clip_id:
                raise DataError(f"{path}:{lineno}: empty clip_id")
            if clip_id in seen:
                raise DataError(f"{path}:{lineno}: duplicate clip_id {clip_id!r}")
            seen.add(clip_id)
            target = parse_labels(labels, n_classes, f"{path}:{lineno}: ")
            if not target.any():
                log.warning("%s:%d: clip %s has no labels", path, lineno, clip_id)
            audio_path = Path(audio)
            if not audio_path.is_absolute():
                audio_path = path.parent / audio_path
            records.append(ClipRecord(clip_id, str(audio_path), target))
    return records


def write_index(path, records, base=None):
    path = Path(path)
    base = Path(base) if base is not None else path.parent
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["clip_id", "path", "labels"])
        for r in records:
            audio = Path(r.audio_ref)
            try:
                audio = audio.relative_to(base)
            except ValueError:
                pass
            w.writerow([r.clip_id, str(audio), ";".join(str(k) for k in r.labels)])


def load_class_map(path) -> list[str]:
    with open(path) as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def targets_matrix(records) -> np.ndarray:
    return np.stack([r.target for r in records]) if records else np.zeros((0, 0), np.float32)


# --------------------------------------------------------------------------
# sampling


class BalancedSampler:
    """Round-robin over classes in a shuffled order, one clip per visit.

    Each class keeps its own shuffled clip list and cursor; exhausting a list
    reshuffles it. A new class order is drawn once every class has been
    visited, so no class repeats before all non-empty classes have had a turn.
    """

    def __init__(self, targets, seed=0):
        targets = np.asarray(targets)
        self.rng = np.random.default_rng(seed)
        self.class_lists = [np.flatnonzero(targets[:, k]) for k in range(targets.shape[1])]
        self.classes = [k for k, idx in enumerate(self.class_lists) if idx.size]
        if not self.classes:
            raise DataError("balanced sampling needs at least one non-empty class")
        for k in self.classes:
            self.rng.shuffle(self.class_lists[k])
        self.cursors = [0] * len(self.class_lists)
        self.order = []
        self.class_cursor = 0
        self._new_cycle()

    def _new_cycle(self):
        self.order = list(self.rng.permutation(self.classes))
        self.class_cursor = 0

    def next_index(self):
        if self.class_cursor == len(self.order):
            self._new_cycle()
        k = self.order[self.class_cursor]
        self.class_cursor += 1
        lst = self.class_lists[k]
        if self.cursors[k] == lst.size:
            self.rng.shuffle(lst)
            self.cursors[k] = 0
        idx = int(lst[self.cursors[k]])
        self.cursors[k] += 1
        return idx

    def next_batch(self, batch_size):
        return [self.next_index() for _ in range(batch_size)]


class UniformSampler:
    """Unbalanced baseline: clips drawn uniformly from shuffled epochs."""

    def __init__(self, n_items, seed=0):
        if n_items <= 0:
            raise DataError("empty dataset")
        self.rng = np.random.default_rng(seed)
        self.n = n_items
        self.perm = self.rng.permutation(n_items)
        self.pos = 0

    def next_batch(self, batch_size):
        out = []
        for _ in range(batch_size):
            if self.pos == self.n:
                self.perm = self.rng.permutation(self.n)
                self.pos = 0
            out.append(int(self.perm[self.pos]))
            self.pos += 1
        return out


def balanced_next_batch(state: BalancedSampler, records, batch_size):
    return state.next_batch(batch_size)


# --------------------------------------------------------------------------
# augmentation


@dataclass(frozen=True)
class MixupConfig:
    alpha: float = 1.0
    domain: str = "logmel"

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("mixup alpha must be positive")
        if self.domain not in ("logmel", "waveform"):
            raise ValueError(f"unknown mixup domain {self.domain!r}")


@dataclass(frozen=True)
class SpecAugmentConfig:
    freq_mask_param: int = 8
    n_freq_masks: int = 2
    time_mask_param: int = 64
    n_time_masks: int = 2


def mixup_lambdas(batch_size, alpha, rng):
    if batch_size % 2:
        raise ValueError(f"mixup needs an even batch, got {batch_size}")
    return rng.beta(alpha, alpha, size=batch_size // 2)


def mix_pairs(x, lam):
    """Mix consecutive pairs: out[i] = lam[i] * x[2i] + (1 - lam[i]) * x[2i+1]."""
    x = np.asarray(x)
    if x.shape[0] != 2 * len(lam):
        raise ValueError(f"mixup needs an even batch, got {x.shape[0]}")
    lam = np.asarray(lam, dtype=x.dtype).reshape((-1,) + (1,) * (x.ndim - 1))
    return lam * x[0::2] + (1 - lam) * x[1::2]


def mixup(batch_x, batch_y, cfg: MixupConfig, rng, lam=None):
    """Return mixed (x, y) with half the batch size and the lambdas used."""
    batch_x = np.asarray(batch_x)
    if lam is None:
        lam = mixup_lambdas(batch_x.shape[0], cfg.alpha, rng)
    return mix_pairs(batch_x, lam), mix_pairs(batch_y, lam), lam


def spec_augment_bands(shape, cfg: SpecAugmentConfig, rng):
    """Draw the masks for one T x F matrix.

    Returns ``(freq_bands, time_bands)``, each a list of ``(start, width)``.
    Widths are uniform on ``[0, param]``; starts are uniform over the valid range.
    """
    T, F = shape
    if cfg.freq_mask_param > F:
        raise ValueError(f"freq_mask_param {cfg.freq_mask_param} exceeds {F} bins")
    if cfg.time_mask_param > T:
        raise ValueError(f"time_mask_param {cfg.time_mask_param} exceeds {T} frames")

    def draw(param, size, n):
        bands = []
        for _ in range(n):
            w = int(rng.integers(0, param + 1))
            bands.append((int(rng.integers(0, size - w + 1)), w))
        return bands

    return draw(cfg.freq_mask_param, F, cfg.n_freq_masks), draw(cfg.time_mask_param, T, cfg.n_time_masks)


def spec_augment(logmel, cfg: SpecAugmentConfig, rng, fill=None, bands=None):
    """Frequency then time masking of one T x F matrix; masked cells take
    ``fill`` (default: the matrix minimum)."""
    logmel = np.asarray(logmel)
    freq, time = bands if bands is not None else spec_augment_bands(logmel.shape, cfg, rng)
    out = logmel.copy()
    value = logmel.min() if fill is None else fill
    for f0, f in freq:
        out[:, f0 : f0 + f] = value
    for t0, t in time:
        out[t0 : t0 + t, :] = value
    return out


def spec_augment_mask(shape, cfg: SpecAugmentConfig, rng):
    """Boolean mask of the cells one draw of :func:`spec_augment` would hit."""
    probe = spec_augment(np.zeros(shape), cfg, rng, fill=1.0)
    return probe == 1.0
