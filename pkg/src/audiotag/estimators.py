"""scikit-learn style wrappers around the front end and the taggers.

``LogMelExtractor`` is a stateless transformer from raw clips to log-mel
matrices. ``AudioTagger`` trains one of the architectures on (clips, multi-hot
targets) and exposes ``predict_proba`` (clipwise probabilities), ``predict``
(thresholded tags), ``transform`` (embeddings) and ``score`` (mAP).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .architectures import Network, build_architecture
from .checkpoint import blob_from_network, load_checkpoint, network_from_checkpoint, save_checkpoint
from .data import MixupConfig, SpecAugmentConfig
from .dsp import LogMelFrontEnd
from .metrics import evaluate_scores
from .training import ClipDataset, TrainConfig, predict, train


def _check_clips(X):
    return check_array(X, dtype=np.float32, ensure_2d=True, ensure_all_finite=True)


class LogMelExtractor(TransformerMixin, BaseEstimator):
    """(n_clips, n_samples) waveforms -> (n_clips, T, n_mels) log-mel features."""

    def __init__(self, sample_rate=32000, window_size=1024, hop_size=320, n_mels=64,
                 f_min=50.0, f_max=14000.0, amin=1e-10, top_db=None):
        self.sample_rate = sample_rate
        self.window_size = window_size
        self.hop_size = hop_size
        self.n_mels = n_mels
        self.f_min = f_min
        self.f_max = f_max
        self.amin = amin
        self.top_db = top_db

    def fit(self, X, y=None):
        _check_clips(X)
        self.frontend_ = LogMelFrontEnd(self.sample_rate, self.window_size, self.hop_size,
                                        self.n_mels, self.f_min, self.f_max, self.amin, self.top_db)
        return self

    def transform(self, X):
        check_is_fitted(self, "frontend_")
        X = _check_clips(X)
        return np.stack([self.frontend_(x.astype(np.float64)) for x in X]).astype(np.float32)


class AudioTagger(ClassifierMixin, BaseEstimator):
    """Multi-label audio tagger trained from scratch on raw clips.

    ``y`` is an (n_clips, n_classes) 0/1 matrix. Hyperparameters mirror
    :class:`audiotag.training.TrainConfig`.
    """

    def __init__(self, arch="cnn14", width_scale=1.0, batch_size=32, learning_rate=1e-3,
                 max_iterations=1000, seed=0, balanced=True, mixup_alpha=None, mixup_domain="logmel",
                 specaugment=False, threshold=0.5, sample_rate=32000):
        self.arch = arch
        self.width_scale = width_scale
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.max_iterations = max_iterations
        self.seed = seed
        self.balanced = balanced
        self.mixup_alpha = mixup_alpha
        self.mixup_domain = mixup_domain
        self.specaugment = specaugment
        self.threshold = threshold
        self.sample_rate = sample_rate

    def _dataset(self, X, y=None):
        X = _check_clips(X)
        if y is None:
            y = np.zeros((len(X), self.n_classes_), dtype=np.float32)
        return ClipDataset(X, y, LogMelFrontEnd(self.sample_rate))

    def fit(self, X, y):
        y = check_array(y, dtype=np.float32, ensure_2d=True)
        if np.any((y != 0) & (y != 1)):
            raise ValueError("y must be a 0/1 multi-hot matrix")
        self.n_classes_ = y.shape[1]
        self.classes_ = np.arange(self.n_classes_)
        spec = build_architecture(self.arch, self.width_scale, self.n_classes_, sample_rate=self.sample_rate)
        self.network_ = Network(spec, seed=self.seed)
        cfg = TrainConfig(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            max_iterations=self.max_iterations,
            seed=self.seed,
            balanced=self.balanced,
            mixup=MixupConfig(self.mixup_alpha, self.mixup_domain) if self.mixup_alpha else None,
            specaug=SpecAugmentConfig() if self.specaugment else None,
        )
        self.history_ = train(self.network_, self._dataset(X, y), cfg).history
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        scores, _ = predict(self.network_, self._dataset(X))
        return scores

    def predict(self, X):
        return (self.predict_proba(X) >= self.threshold).astype(int)

    def transform(self, X):
        """Embeddings (input of the final classifier)."""
        check_is_fitted(self, "network_")
        _, emb = predict(self.network_, self._dataset(X))
        return emb

    def score(self, X, y, sample_weight=None):
        """Macro mean average precision."""
        return evaluate_scores(self.predict_proba(X), y).mAP

    def save(self, path):
        check_is_fitted(self, "network_")
        save_checkpoint(blob_from_network(self.network_, meta={"estimator": self.get_params()}), path)

    @classmethod
    def load(cls, path):
        blob = load_checkpoint(path)
        params = blob.meta.get("estimator", {})
        est = cls(**params)
        est.network_ = network_from_checkpoint(blob)
        est.n_classes_ = blob.arch.n_classes
        est.classes_ = np.arange(est.n_classes_)
        return est
