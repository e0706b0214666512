"""Gaussian-mixture baseline backed by scikit-learn's EM, with a per-iteration likelihood trace."""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.mixture import GaussianMixture
from sklearn.utils.validation import check_is_fitted

from .base import GenerativeModel


class GMMGenerator(GenerativeModel):
    """Full-covariance mixture. EM is stepped one iteration at a time so ``loss_history_`` holds the
    mean log-likelihood after every iteration."""

    family = "gmm"

    def __init__(self, n_components=4, max_iter=100, tol=1e-6, reg_covar=1e-6, seed=0):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.reg_covar = reg_covar
        self.seed = seed

    def fit(self, X, cond=None):
        X = self._prepare(X, cond)
        gm = GaussianMixture(
            self.n_components, covariance_type="full", max_iter=1, reg_covar=self.reg_covar,
            warm_start=True, random_state=self.seed,
        )
        prev = -np.inf
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            for it in range(self.max_iter):
                gm.fit(X)
                ll = gm.score(X)
                self._log(it, log_likelihood=ll)
                if ll - prev < self.tol:
                    break
                prev = ll
        self.mixture_ = gm
        return self

    def log_prob(self, X):
        check_is_fitted(self, "mixture_")
        return self.mixture_.score_samples(X)

    def sample(self, n, cond=None, seed=None):
        check_is_fitted(self, "mixture_")
        rng = np.random.default_rng(seed)
        gm = self.mixture_
        counts = rng.multinomial(n, gm.weights_)
        out = [rng.multivariate_normal(gm.means_[j], gm.covariances_[j], size=c) for j, c in enumerate(counts) if c]
        rows = np.vstack(out)
        return rows[rng.permutation(n)]
