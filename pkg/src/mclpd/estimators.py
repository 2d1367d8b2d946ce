"""scikit-learn style wrappers around pre-training and fine-tuning.

Both estimators take ``X`` as a ``(n_epochs, n_channels, n_samples)`` array.
Subject IDs travel through ``groups`` so that internal splits stay
subject-disjoint; without them every epoch counts as its own subject.
"""
from __future__ import annotations

import copy
from typing import Optional

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted

from .config import RunConfig
from .pipeline import as_tensor, build_model, finetune, predict_logits, pretrain
from .signal import EpochSet


def _check_epochs(X) -> np.ndarray:
    X = check_array(X, allow_nd=True, dtype=np.float32, ensure_min_samples=1)
    if X.ndim != 3:
        raise ValueError(f"expected (n_epochs, n_channels, n_samples), got shape {X.shape}")
    return X


def _groups(groups, n: int) -> np.ndarray:
    if groups is None:
        return np.arange(n)
    groups = np.asarray(groups)
    if groups.shape != (n,):
        raise ValueError("groups must have one entry per epoch")
    return groups


class ContrastivePretrainer(TransformerMixin, BaseEstimator):
    """Learns the three-branch encoder without labels; ``transform`` returns ``h_tf``."""

    def __init__(self, config: Optional[RunConfig] = None, fs: float = 500.0, seed: int = 0):
        self.config = config
        self.fs = fs
        self.seed = seed

    def _config(self) -> RunConfig:
        cfg = copy.deepcopy(self.config) if self.config is not None else RunConfig()
        cfg.seed = self.seed
        return cfg

    def fit(self, X, y=None, groups=None):
        X = _check_epochs(X)
        es = EpochSet(X, self.fs, _groups(groups, len(X)))
        result = pretrain(es, self._config())
        self.model_ = result.model
        self.history_ = result.history
        self.n_channels_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = _check_epochs(X)
        if X.shape[1] != self.n_channels_:
            raise ValueError(f"expected {self.n_channels_} channels, got {X.shape[1]}")
        self.model_.eval()
        with torch.no_grad():
            return np.concatenate([self.model_.embed_tf(as_tensor(X[i:i + 64])).numpy()
                                   for i in range(0, len(X), 64)])


class MCLPDClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier fine-tuned from a pre-trained encoder.

    ``encoder`` may be a fitted :class:`ContrastivePretrainer`, a raw
    ``TFEncoder`` or ``None`` (random initialization).
    """

    def __init__(self, encoder=None, config: Optional[RunConfig] = None, fs: float = 500.0, seed: int = 0):
        self.encoder = encoder
        self.config = config
        self.fs = fs
        self.seed = seed

    def fit(self, X, y, groups=None):
        X = _check_epochs(X)
        y = np.asarray(y)
        if y.shape != (len(X),):
            raise ValueError("y must have one label per epoch")
        self.classes_ = unique_labels(y)
        if not set(self.classes_.tolist()) <= {0, 1}:
            raise ValueError("labels must be 0 (control) or 1 (PD)")
        cfg = copy.deepcopy(self.config) if self.config is not None else RunConfig()
        cfg.seed = self.seed
        if isinstance(self.encoder, ContrastivePretrainer):
            check_is_fitted(self.encoder, "model_")
            base = self.encoder.model_
        elif self.encoder is not None:
            base = self.encoder
        else:
            base = build_model(X.shape[1], cfg)
        es = EpochSet(X, self.fs, _groups(groups, len(X)), labels=y.astype(np.int64))
        result = finetune(base, es, cfg)
        self.model_ = result.model
        self.history_ = result.history
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        logits = torch.from_numpy(predict_logits(self.model_, _check_epochs(X)))
        return torch.softmax(logits.double(), dim=1).numpy()

    def predict(self, X):
        return self.predict_proba(X).argmax(1)
