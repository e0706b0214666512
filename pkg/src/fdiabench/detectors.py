"""Non-residual detectors: isolation forest and a dense reconstruction autoencoder.

Both standardize attacked measurement vectors ``z + c`` with a scaler fitted on the
clean detector-calibration slice, and both calibrate a 95th-percentile threshold on
clean data only. Evasion is the fraction of attacked samples that score on the clean
side of that threshold.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.ensemble import IsolationForest
from sklearn.utils.validation import check_array, check_is_fitted

from . import autodiff as ad
from .estimation import nearest_rank
from .generators.base import batches
from .physics import FeatureScaler

EULER_GAMMA = 0.5772156649015329


def average_path_length(n) -> np.ndarray | float:
    """Expected unsuccessful-search path length c(n) of a binary search tree built on ``n`` points."""
    n_arr = np.asarray(n, dtype=float)
    out = np.zeros_like(n_arr)
    out[n_arr == 2] = 1.0
    big = n_arr > 2
    m = n_arr[big]
    out[big] = 2.0 * (np.log(m - 1.0) + EULER_GAMMA) - 2.0 * (m - 1.0) / m
    return float(out) if out.ndim == 0 else out


def anomaly_score(mean_path_length, subsample_size: int):
    """s = 2^(-E[h] / c(m_s)); equals 0.5 when the mean path is exactly c(m_s)."""
    return np.power(2.0, -np.asarray(mean_path_length, dtype=float) / average_path_length(subsample_size))


class _CalibratedDetector(BaseEstimator):
    """Shared plumbing: detector-local scaling and clean-percentile thresholding."""

    name = "detector"

    def _attacked(self, attacks, Z):
        attacks = np.atleast_2d(np.asarray(attacks, dtype=float))
        return np.broadcast_to(np.asarray(Z, dtype=float), attacks.shape) + attacks

    def evasion_rate(self, attacks, Z) -> float:
        check_is_fitted(self, "threshold_")
        return float(np.mean(self.score_samples(self._attacked(attacks, Z)) < self.threshold_))

    def predict(self, X):
        """1 for flagged (anomalous), 0 otherwise."""
        return (self.score_samples(X) >= self.threshold_).astype(int)


class IsolationForestDetector(_CalibratedDetector):
    """Isolation forest over standardized measurements; higher score is more anomalous.

    Tree construction and path lengths come from scikit-learn's ``IsolationForest``
    (its depth limit is ceil(log2 m_s)); the score is mapped back to the usual
    2^(-E[h]/c(m_s)) convention in (0, 1).
    """

    name = "iforest"

    def __init__(self, n_trees=100, subsample_size=256, percentile=95.0, seed=0):
        self.n_trees = n_trees
        self.subsample_size = subsample_size
        self.percentile = percentile
        self.seed = seed

    def fit(self, X_det, y=None):
        X_det = check_array(X_det)
        self.scaler_ = FeatureScaler().fit(X_det)
        self.forest_ = IsolationForest(
            n_estimators=self.n_trees,
            max_samples=min(self.subsample_size, len(X_det)),
            random_state=self.seed,
        ).fit(self.scaler_.transform(X_det))
        self.threshold_ = nearest_rank(self.score_samples(X_det), self.percentile)
        return self

    def score_samples(self, X):
        check_is_fitted(self, "forest_")
        return -self.forest_.score_samples(self.scaler_.transform(check_array(X)))


class AutoencoderDetector(_CalibratedDetector):
    """Dense autoencoder with a ceil(M/4) bottleneck; the score is per-sample reconstruction MSE.

    The final ``calibration_fraction`` of the (chronologically ordered) clean slice is
    held out of training and used only to set ``threshold_``.
    """

    name = "autoencoder"

    def __init__(self, hidden=32, epochs=60, batch_size=64, lr=1e-3, percentile=95.0, calibration_fraction=0.3, seed=0):
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.percentile = percentile
        self.calibration_fraction = calibration_fraction
        self.seed = seed

    def fit(self, X_det, y=None):
        X_det = check_array(X_det)
        M = X_det.shape[1]
        n_cal = int(math.floor(self.calibration_fraction * len(X_det)))
        X_train, X_cal = (X_det[:-n_cal], X_det[-n_cal:]) if n_cal else (X_det, X_det)
        self.scaler_ = FeatureScaler().fit(X_train)
        A = self.scaler_.transform(X_train)
        rng = np.random.default_rng(self.seed)
        self.bottleneck_ = math.ceil(M / 4)
        h = self.hidden
        self.net_ = ad.DenseNet([M, h, self.bottleneck_, h, M], ["tanh", "tanh", "tanh", "linear"], rng=rng)
        opt = ad.Adam(self.net_.parameters(), lr=self.lr, beta1=0.9)
        self.loss_history_ = []
        for _ in range(self.epochs):
            losses = []
            for idx in batches(len(A), self.batch_size, rng):
                diff = self.net_(A[idx]) - A[idx]
                loss = (diff * diff).mean()
                loss.backward()
                opt.step()
                losses.append(float(loss.data))
            self.loss_history_.append(float(np.mean(losses)))
        self.threshold_ = nearest_rank(self.score_samples(X_cal), self.percentile)
        return self

    def score_samples(self, X):
        check_is_fitted(self, "net_")
        A = self.scaler_.transform(check_array(X))
        return np.mean((self.net_.predict(A) - A) ** 2, axis=1)


def write_verdicts(path: str | Path, detector_name: str, scores, threshold: float, append: bool = False) -> None:
    """Detector verdict CSV with columns sample_id, detector, score, threshold, flagged."""
    path = Path(path)
    new = not (append and path.exists())
    with path.open("a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(["sample_id", "detector", "score", "threshold", "flagged"])
        for i, s in enumerate(np.asarray(scores, dtype=float)):
            w.writerow([i, detector_name, repr(float(s)), repr(float(threshold)), int(s >= threshold)])
