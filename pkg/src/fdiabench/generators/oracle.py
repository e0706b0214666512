"""Analytic oracle that draws attacks exactly in col(H) by sampling state offsets."""

from __future__ import annotations

import math

import numpy as np
from sklearn.utils.validation import check_is_fitted

from ..physics import FeatureScaler
from .base import GenerativeModel, KnowledgeCondition


class HDeltaOracle(GenerativeModel):
    """Fits a Gaussian over least-squares state offsets delta of physical attacks and samples ``c = H delta``.

    Output rows are normalized with ``scaler`` (identity by default), so inverting
    that scaler recovers vectors in col(H). With ``use_knowledge`` the attacker only
    writes the first floor(k M) measurements named by the conditioning ``k``; the
    rest stay at zero, which leaves the attack outside col(H) for k < 1.
    """

    family = "hdelta_oracle"
    trainable = False

    def __init__(self, H=None, scaler=None, use_knowledge=False):
        self.H = H
        self.scaler = scaler
        self.use_knowledge = use_knowledge

    def fit(self, X, cond=None):
        X = self._prepare(X, cond)
        H = np.asarray(self.H, dtype=float)
        if H.shape[0] != X.shape[1]:
            raise ValueError(f"H has {H.shape[0]} rows but attacks have {X.shape[1]} features")
        self.scaler_ = self.scaler if self.scaler is not None else FeatureScaler.identity(X.shape[1])
        C = self.scaler_.inverse_transform(X)
        delta, *_ = np.linalg.lstsq(H, C.T, rcond=None)
        self.delta_mean_ = delta.mean(axis=1)
        self.delta_cov_ = np.atleast_2d(np.cov(delta)) if delta.shape[1] > 1 else np.zeros((H.shape[1],) * 2)
        self._log(0, residual=float(np.linalg.norm(C.T - H @ delta)))
        return self

    def sample(self, n, cond=None, seed=None):
        check_is_fitted(self, "delta_mean_")
        rng = np.random.default_rng(seed)
        H = np.asarray(self.H, dtype=float)
        delta = rng.multivariate_normal(self.delta_mean_, self.delta_cov_, size=n, method="eigh")
        C = delta @ H.T
        if self.use_knowledge and isinstance(cond, KnowledgeCondition):
            C[:, int(math.floor(cond.k * H.shape[0] + 1e-12)) :] = 0.0
        return self.scaler_.transform(C)
