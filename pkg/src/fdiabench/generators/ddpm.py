"""Denoising diffusion model with a linear noise schedule and ancestral sampling."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_is_fitted

from .. import autodiff as ad
from .base import GenerativeModel, batches, time_embedding

REFERENCE_STEPS = 1000


def linear_betas(T: int, beta_start: float = 1e-4, beta_end: float = 0.02, rescale: bool = True) -> np.ndarray:
    """Linear variance schedule over ``T`` steps.

    With ``rescale`` the endpoints are stretched by ``1000 / T`` (capped below 1) so the
    cumulative signal fraction at step ``T`` matches a 1000-step schedule and the forward
    marginal is close to N(0, I) even for short chains.
    """
    if rescale:
        factor = REFERENCE_STEPS / T
        beta_start, beta_end = beta_start * factor, min(beta_end * factor, 0.999)
    return np.linspace(beta_start, beta_end, T)


class DDPMGenerator(GenerativeModel):
    """Noise-prediction network over ``[a_t; step embedding; H_k]`` trained on MSE to the injected noise."""

    family = "ddpm"

    def __init__(self, T=50, hidden=128, epochs=200, batch_size=64, lr=5e-4, beta_start=1e-4, beta_end=0.02,
                 rescale_schedule=True, embed_dim=8, seed=0):
        self.T = T
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.rescale_schedule = rescale_schedule
        self.embed_dim = embed_dim
        self.seed = seed

    def _schedule(self):
        self.betas_ = linear_betas(self.T, self.beta_start, self.beta_end, self.rescale_schedule)
        self.alphas_ = 1.0 - self.betas_
        self.alpha_bar_ = np.cumprod(self.alphas_)

    def q_sample(self, a0, t, noise):
        """Forward marginal draw a_t = sqrt(abar_t) a0 + sqrt(1 - abar_t) eps for 1-based steps ``t``."""
        if not hasattr(self, "alpha_bar_"):
            self._schedule()
        ab = self.alpha_bar_[np.asarray(t) - 1][:, None]
        return np.sqrt(ab) * a0 + np.sqrt(1.0 - ab) * noise

    def _denoiser_input(self, a_t, t, cond_block):
        return np.hstack([a_t, time_embedding(t, self.T, self.embed_dim), cond_block])

    def fit(self, X, cond=None):
        X = self._prepare(X, cond)
        self._schedule()
        rng = np.random.default_rng(self.seed)
        M, c, h = X.shape[1], self.c_dim_, self.hidden
        self.denoiser_ = ad.DenseNet([M + self.embed_dim + c, h, h, M], ["relu", "relu", "linear"], rng=rng)
        opt = ad.Adam(self.denoiser_.parameters(), lr=self.lr)
        for epoch in range(self.epochs):
            losses = []
            for idx in batches(len(X), self.batch_size, rng):
                n = len(idx)
                t = rng.integers(1, self.T + 1, size=n)
                eps = rng.standard_normal((n, M))
                a_t = self.q_sample(X[idx], t, eps)
                pred = self.denoiser_(self._denoiser_input(a_t, t, self._cond_matrix(self.train_cond_, n)))
                diff = pred - eps
                loss = (diff * diff).mean()
                loss.backward()
                opt.step()
                losses.append(float(loss.data))
            self._log(epoch, denoise=np.mean(losses))
        return self

    def sample(self, n, cond=None, seed=None):
        check_is_fitted(self, "denoiser_")
        rng = np.random.default_rng(seed)
        cb = self._cond_matrix(cond, n)
        a = rng.standard_normal((n, self.n_features_in_))
        for t in range(self.T, 0, -1):
            eps = self.denoiser_.predict(self._denoiser_input(a, np.full(n, t), cb))
            beta, alpha, ab = self.betas_[t - 1], self.alphas_[t - 1], self.alpha_bar_[t - 1]
            a = (a - beta / np.sqrt(1.0 - ab) * eps) / np.sqrt(alpha)
            if t > 1:
                a = a + np.sqrt(beta) * rng.standard_normal(a.shape)
        return a

    def networks(self):
        return {"denoiser": self.denoiser_}
