"""Scikit-learn style wrappers around the trainer and the refinement module."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import network
from .grid import BevMap, BevSequence, MotionField
from .msrm import RefineConfig, RegenConfig, labels_to_field, refine
from .synthworld import SynthScene
from .training import SslConfig, predictor_config, train_ssl, train_teacher


def _as_scenes(X, y) -> list[SynthScene]:
    if y is None:
        return list(X)
    if len(X) != len(y):
        raise ValueError("X and y lengths differ")
    scenes = []
    for seq, gt in zip(X, y):
        if not isinstance(seq, BevSequence) or not isinstance(gt, MotionField):
            raise TypeError("expected BevSequence inputs and MotionField targets")
        scenes.append(SynthScene(seq, seq.current, gt, np.zeros(gt.validity.shape, bool), []))
    return scenes


class MotionRegressor(BaseEstimator):
    """Supervised per-cell motion regressor over BEV sequences.

    ``fit(X, y)`` takes BevSequence inputs and MotionField targets (or labeled
    scene objects in X alone); ``predict`` returns one MotionField per input.
    """

    def __init__(self, hidden=(16, 16), epochs=60, lr=1e-3, weak_flip=True, seed=0):
        self.hidden = hidden
        self.epochs = epochs
        self.lr = lr
        self.weak_flip = weak_flip
        self.seed = seed

    def _config(self) -> SslConfig:
        return SslConfig(hidden=tuple(self.hidden), teacher_epochs=self.epochs,
                         lr=self.lr, weak_flip=self.weak_flip, seed=self.seed)

    def fit(self, X, y=None):
        scenes = _as_scenes(X, y)
        cfg = self._config()
        self.net_config_ = predictor_config(scenes[0].seq, cfg)
        self.params_, self.history_ = train_teacher(scenes, cfg)
        return self

    def predict(self, X) -> list[MotionField]:
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before predict")
        return [network.predict(self.params_, seq if isinstance(seq, BevSequence) else seq.seq,
                                self.net_config_) for seq in X]


class SemiSupervisedMotionRegressor(MotionRegressor):
    """Mean-teacher SSL variant; unlabeled scenes are passed to ``fit``.

    Unlabeled scenes must carry the observation at the prediction horizon
    (the ``future`` frame) so pseudo labels can be reliability-scored.
    """

    def __init__(self, hidden=(16, 16), epochs=60, ssl_epochs=15, lr=1e-3,
                 weak_flip=True, alpha=0.999, mu=1.0, k=5, beta=10.0,
                 gamma=0.6, theta_c=3.0, theta_w=5.0,
                 use_temporal_sampling=True, use_bevmix=True, seed=0):
        super().__init__(hidden=hidden, epochs=epochs, lr=lr,
                         weak_flip=weak_flip, seed=seed)
        self.ssl_epochs = ssl_epochs
        self.alpha = alpha
        self.mu = mu
        self.k = k
        self.beta = beta
        self.gamma = gamma
        self.theta_c = theta_c
        self.theta_w = theta_w
        self.use_temporal_sampling = use_temporal_sampling
        self.use_bevmix = use_bevmix

    def _config(self) -> SslConfig:
        regen = RegenConfig(k=self.k, beta=self.beta, gamma=self.gamma,
                            theta_w=self.theta_w)
        return SslConfig(
            hidden=tuple(self.hidden), teacher_epochs=self.epochs,
            ssl_epochs=self.ssl_epochs, lr=self.lr, weak_flip=self.weak_flip,
            alpha=self.alpha,
            refine=RefineConfig(mu=self.mu, theta_c=self.theta_c, regen=regen),
            use_temporal_sampling=self.use_temporal_sampling,
            use_bevmix=self.use_bevmix, seed=self.seed)

    def fit(self, X, y=None, unlabeled=()):
        scenes = _as_scenes(X, y)
        cfg = self._config()
        self.net_config_ = predictor_config(scenes[0].seq, cfg)
        self.params_, self.history_ = train_ssl(scenes, list(unlabeled), cfg)
        return self


class PseudoLabelRefiner(BaseEstimator, TransformerMixin):
    """Stateless transformer: (pseudo field, current, future) -> refined field."""

    def __init__(self, mu=1.0, k=5, beta=10.0, gamma=0.6, theta_c=3.0,
                 theta_w=5.0, epsilon=0.03):
        self.mu = mu
        self.k = k
        self.beta = beta
        self.gamma = gamma
        self.theta_c = theta_c
        self.theta_w = theta_w
        self.epsilon = epsilon

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> list[MotionField]:
        cfg = RefineConfig(
            mu=self.mu, theta_c=self.theta_c, epsilon=self.epsilon,
            regen=RegenConfig(k=self.k, beta=self.beta, gamma=self.gamma,
                              theta_w=self.theta_w))
        out = []
        for pseudo, current, future in X:
            if not isinstance(current, BevMap) or not isinstance(future, BevMap):
                raise TypeError("expected (MotionField, BevMap, BevMap) triples")
            cells, refined = refine(pseudo, current, future, cfg)
            out.append(labels_to_field(cells, refined, pseudo.validity.shape))
        return out
