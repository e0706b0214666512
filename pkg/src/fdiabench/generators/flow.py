"""RealNVP normalizing flow with affine couplings and alternating half-masks."""

from __future__ import annotations

import math

import numpy as np
from sklearn.utils.validation import check_array, check_is_fitted

from .. import autodiff as ad
from ..exceptions import TrainingError
from .base import GenerativeModel, batches

LOG_2PI = math.log(2.0 * math.pi)


def half_masks(dim: int, n_layers: int) -> list[np.ndarray]:
    first = np.zeros(dim)
    first[: (dim + 1) // 2] = 1.0
    return [first if i % 2 == 0 else 1.0 - first for i in range(n_layers)]


class RealNVPGenerator(GenerativeModel):
    """Maps data to a standard normal base through an elementwise affine layer and coupling layers.

    Each coupling keeps the masked half fixed and transforms the other half by
    ``x * exp(s) + t`` with ``s = tanh(.)``; log|det J| is the sum of ``s``.
    Generation runs the inverse map on base draws.
    """

    family = "realnvp"

    def __init__(self, n_couplings=6, hidden=64, epochs=200, batch_size=64, lr=5e-4, seed=0):
        self.n_couplings = n_couplings
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def _init(self, X, rng):
        D = X.shape[1]
        self.masks_ = half_masks(D, self.n_couplings)
        self.loc_ = ad.parameter(X.mean(axis=0))
        self.log_scale_ = ad.parameter(np.log(X.std(axis=0) + 1e-6))
        self.coupling_nets_ = []
        for _ in range(self.n_couplings):
            net = ad.DenseNet([D, self.hidden, self.hidden, 2 * D], ["tanh", "tanh", "linear"], rng=rng)
            net.weights[-1].data[:] = 0.0
            self.coupling_nets_.append(net)
        eye = np.eye(D)
        self._sel_s = np.hstack([eye, np.zeros((D, D))]).T
        self._sel_t = np.hstack([np.zeros((D, D)), eye]).T

    def _forward_tensor(self, x):
        """Data -> base. Returns ``(u, logdet)`` tensors; logdet has one entry per row."""
        h = (x - self.loc_) * ad.exp(-self.log_scale_)
        logdet = -self.log_scale_.sum()
        for mask, net in zip(self.masks_, self.coupling_nets_):
            inv = 1.0 - mask
            out = net(h * mask)
            s = ad.tanh(out @ self._sel_s) * inv
            t = (out @ self._sel_t) * inv
            h = h * mask + (h * ad.exp(s) + t) * inv
            logdet = logdet + s.sum(axis=1)
        return h, logdet

    def forward_map(self, X):
        """Numpy data -> base map with per-row log|det J|."""
        check_is_fitted(self, "coupling_nets_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        h = (X - self.loc_.data) * np.exp(-self.log_scale_.data)
        logdet = np.full(len(X), -self.log_scale_.data.sum())
        for mask, net in zip(self.masks_, self.coupling_nets_):
            inv = 1.0 - mask
            out = net.predict(h * mask)
            s = np.tanh(out @ self._sel_s) * inv
            t = (out @ self._sel_t) * inv
            h = h * mask + (h * np.exp(s) + t) * inv
            logdet += s.sum(axis=1)
        return h, logdet

    def inverse_map(self, U):
        check_is_fitted(self, "coupling_nets_")
        h = np.atleast_2d(np.asarray(U, dtype=float)).copy()
        for mask, net in zip(reversed(self.masks_), reversed(self.coupling_nets_)):
            inv = 1.0 - mask
            out = net.predict(h * mask)
            s = np.tanh(out @ self._sel_s) * inv
            t = (out @ self._sel_t) * inv
            h = h * mask + ((h - t) * np.exp(-s)) * inv
        return h * np.exp(self.log_scale_.data) + self.loc_.data

    def log_prob(self, X):
        U, logdet = self.forward_map(X)
        return -0.5 * np.sum(U * U, axis=1) - 0.5 * U.shape[1] * LOG_2PI + logdet

    def fit(self, X, cond=None):
        X = self._prepare(X, cond)
        rng = np.random.default_rng(self.seed)
        self._init(X, rng)
        params = [self.loc_, self.log_scale_] + [p for net in self.coupling_nets_ for p in net.parameters()]
        opt = ad.Adam(params, lr=self.lr)
        D = X.shape[1]
        for epoch in range(self.epochs):
            nll = []
            for idx in batches(len(X), self.batch_size, rng):
                u, logdet = self._forward_tensor(ad.Tensor(X[idx]))
                logp = (u * u).sum(axis=1) * -0.5 + logdet - 0.5 * D * LOG_2PI
                loss = -logp.mean()
                if not np.isfinite(loss.data):
                    raise TrainingError("non-finite flow likelihood (scale overflow)", epoch)
                loss.backward()
                try:
                    opt.step()
                except FloatingPointError as exc:
                    raise TrainingError(str(exc), epoch) from exc
                nll.append(float(loss.data))
            self._log(epoch, nll=np.mean(nll))
        return self

    def sample(self, n, cond=None, seed=None):
        check_is_fitted(self, "coupling_nets_")
        rng = np.random.default_rng(seed)
        return self.inverse_map(rng.standard_normal((n, self.n_features_in_)))

    def networks(self):
        return {f"coupling_{i}": net for i, net in enumerate(self.coupling_nets_)}


def flow_logprob(handle, x):
    """Exact log-likelihood of ``x`` under a fitted flow (scalar for one row, array for a batch)."""
    est = handle.estimator if hasattr(handle, "estimator") else handle
    x = np.asarray(x, dtype=float)
    lp = est.log_prob(check_array(np.atleast_2d(x)))
    return float(lp[0]) if x.ndim == 1 else lp
