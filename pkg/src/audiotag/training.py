"""Training loop and model evaluation."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .architectures import Network
from .autodiff import Adam, Tape, ops
from .data import (
    BalancedSampler,
    MixupConfig,
    SpecAugmentConfig,
    UniformSampler,
    mix_pairs,
    mixup_lambdas,
    spec_augment,
)
from .dsp import LogMelFrontEnd, Waveform, pad_or_truncate, read_wav, resample_linear
from .metrics import MetricReport, evaluate_scores

log = logging.getLogger(__name__)


class NumericError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-3
    max_iterations: int = 1000
    seed: int = 0
    balanced: bool = True
    mixup: MixupConfig | None = None
    specaug: SpecAugmentConfig | None = None
    eval_every: int = 0
    target_map: float | None = None  # stop once training mAP reaches this

    def __post_init__(self):
        if self.batch_size < 1 or self.max_iterations < 0 or self.learning_rate < 0:
            raise ValueError("batch_size, max_iterations and learning_rate must be non-negative")
        if self.mixup is not None and self.batch_size < 2:
            raise ValueError("mixup needs batch_size >= 2")


class ClipDataset:
    """In-memory clips of equal length plus their multi-hot targets.

    Log-mel features are computed once, lazily, with the given front end.
    """

    def __init__(self, waveforms, targets, frontend: LogMelFrontEnd | None = None, ids=None):
        self.waveforms = np.asarray(waveforms, dtype=np.float32)
        self.targets = np.asarray(targets, dtype=np.float32)
        if self.waveforms.ndim != 2 or self.waveforms.shape[0] != self.targets.shape[0]:
            raise ValueError("waveforms must be (N, L) with one target row per clip")
        if len(self.waveforms) == 0:
            raise ValueError("empty dataset")
        self.frontend = frontend or LogMelFrontEnd()
        self.ids = list(ids) if ids is not None else [str(i) for i in range(len(self.waveforms))]
        self._logmel = None

    def __len__(self):
        return len(self.waveforms)

    @property
    def n_classes(self):
        return self.targets.shape[1]

    @property
    def logmel(self):
        if self._logmel is None:
            self._logmel = np.stack([self.frontend(w) for w in self.waveforms]).astype(np.float32)
        return self._logmel

    def subset(self, indices):
        sub = ClipDataset(self.waveforms[indices], self.targets[indices], self.frontend,
                          [self.ids[i] for i in indices])
        if self._logmel is not None:
            sub._logmel = self._logmel[indices]
        return sub

    @classmethod
    def from_records(cls, records, clip_seconds=None, frontend: LogMelFrontEnd | None = None):
        frontend = frontend or LogMelFrontEnd()
        waves = []
        for r in records:
            w = read_wav(r.audio_ref)
            if w.sample_rate != frontend.sample_rate:
                w = resample_linear(w, frontend.sample_rate)
            waves.append(w)
        length = (
            int(round(clip_seconds * frontend.sample_rate)) if clip_seconds else max(len(w) for w in waves)
        )
        data = np.stack([pad_or_truncate(w, length).samples for w in waves])
        targets = np.stack([r.target for r in records])
        return cls(data, targets, frontend, [r.clip_id for r in records])


def _model_inputs(model: Network, data: ClipDataset, idx):
    wave = data.waveforms[idx] if model.spec.uses_waveform else None
    mel = data.logmel[idx] if model.spec.uses_logmel else None
    return wave, mel


def predict(model: Network, data: ClipDataset, batch_size=32):
    """Eval-mode clipwise outputs and embeddings for every clip."""
    was_training = model.training
    model.eval()
    scores, embs = [], []
    try:
        for start in range(0, len(data), batch_size):
            idx = np.arange(start, min(start + batch_size, len(data)))
            out = model(*_model_inputs(model, data, idx))
            scores.append(out.clipwise.data)
            embs.append(out.embedding.data)
    finally:
        model.training = was_training
    return np.concatenate(scores), np.concatenate(embs)


def evaluate(model: Network, data: ClipDataset, batch_size=32) -> MetricReport:
    scores, _ = predict(model, data, batch_size)
    return evaluate_scores(scores, data.targets)


def loss_fn(model: Network, wave, mel, targets):
    if model.spec.output == "softmax":
        logits, _ = model.logits(wave, mel)
        return ops.softmax_cross_entropy(logits, targets)
    return ops.bce_loss(model(wave, mel).clipwise, targets)


@dataclass
class TrainResult:
    history: list = field(default_factory=list)
    iterations: int = 0
    reached_target_at: int | None = None
    optimizer: Adam | None = None
    seconds: float = 0.0


def train(model: Network, data: ClipDataset, cfg: TrainConfig, eval_data: ClipDataset | None = None,
          optimizer: Adam | None = None) -> TrainResult:
    """Sample, augment, forward, loss, backward, Adam step; ``cfg.max_iterations`` times.

    A zero learning rate runs forward/backward but applies no update.
    History rows are dicts with ``iteration``, ``loss`` and, at evaluation
    points, ``mAP``, ``mAUC`` and ``d_prime`` on the training set (and
    ``eval_mAP`` etc. when ``eval_data`` is given).
    """
    rng = np.random.default_rng(cfg.seed)
    model.rng = np.random.default_rng(cfg.seed + 1)
    if cfg.balanced:
        sampler = BalancedSampler(data.targets, seed=cfg.seed)
    else:
        sampler = UniformSampler(len(data), seed=cfg.seed)
    if optimizer is None and cfg.learning_rate > 0:
        optimizer = Adam(model.trainable(), lr=cfg.learning_rate)
    spec = model.spec
    result = TrainResult(optimizer=optimizer)
    t0 = time.perf_counter()
    draw = 2 * cfg.batch_size if cfg.mixup else cfg.batch_size

    for it in range(1, cfg.max_iterations + 1):
        idx = np.asarray(sampler.next_batch(draw))
        wave, mel = _model_inputs(model, data, idx)
        y = data.targets[idx]
        if cfg.mixup is not None:
            lam = mixup_lambdas(draw, cfg.mixup.alpha, rng)
            y = mix_pairs(y, lam)
            if cfg.mixup.domain == "waveform":
                wave = mix_pairs(data.waveforms[idx], lam)
                mel = np.stack([data.frontend(w) for w in wave]).astype(np.float32) if spec.uses_logmel else None
                wave = wave if spec.uses_waveform else None
            else:
                mel = mix_pairs(mel, lam) if mel is not None else None
                wave = mix_pairs(wave, lam) if wave is not None else None
        if cfg.specaug is not None and mel is not None:
            mel = np.stack([spec_augment(m, cfg.specaug, rng) for m in mel])

        model.train()
        with Tape() as tape:
            loss = loss_fn(model, wave, mel, y)
        loss_value = float(loss.data)
        if not math.isfinite(loss_value):
            culprit = tape.first_nonfinite() or "loss"
            raise NumericError(f"non-finite loss at iteration {it}; first bad tensor: {culprit}")
        if optimizer is not None:
            optimizer.zero_grad()
            tape.backward(loss)
            optimizer.step()
        else:
            tape.backward(loss)
        row = {"iteration": it, "loss": loss_value}

        if cfg.eval_every and it % cfg.eval_every == 0:
            rep = evaluate(model, data)
            row.update(mAP=rep.mAP, mAUC=rep.mAUC, d_prime=rep.d_prime)
            if eval_data is not None:
                erep = evaluate(model, eval_data)
                row.update(eval_mAP=erep.mAP, eval_mAUC=erep.mAUC, eval_d_prime=erep.d_prime)
            log.info("iter %d loss %.4f mAP %.3f", it, loss_value, rep.mAP)
            if cfg.target_map is not None and rep.mAP >= cfg.target_map and result.reached_target_at is None:
                result.reached_target_at = it
                result.history.append(row)
                result.iterations = it
                break
        result.history.append(row)
        result.iterations = it
    result.seconds = time.perf_counter() - t0
    return result


def write_history(path, history):
    cols = ["iteration", "loss", "mAP", "mAUC", "d_prime"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in history:
            w.writerow(["" if row.get(c) is None else row.get(c) for c in cols])
