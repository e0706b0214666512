"""Conditional Wasserstein GAN with a weight-clipped critic."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_is_fitted

from .. import autodiff as ad
from .base import GenerativeModel, batches


def clip_params(net: ad.DenseNet, clip_value: float) -> None:
    for p in net.parameters():
        np.clip(p.data, -clip_value, clip_value, out=p.data)


class WGANGenerator(GenerativeModel):
    """Generator sees ``[z; H_k]``, critic sees ``[a; H_k]``; critic weights clamped to +-clip_value."""

    family = "wgan"

    def __init__(self, latent_dim=16, hidden=64, epochs=200, batch_size=64, lr=2e-4, n_critic=5, clip_value=0.01, seed=0):
        self.latent_dim = latent_dim
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.n_critic = n_critic
        self.clip_value = clip_value
        self.seed = seed

    def fit(self, X, cond=None):
        X = self._prepare(X, cond)
        rng = np.random.default_rng(self.seed)
        M, c = X.shape[1], self.c_dim_
        h = self.hidden
        self.generator_ = ad.DenseNet([self.latent_dim + c, h, h, M], ["relu", "relu", "linear"], rng=rng)
        self.critic_ = ad.DenseNet([M + c, h, h, 1], ["relu", "relu", "linear"], rng=rng)
        clip_params(self.critic_, self.clip_value)
        g_opt = ad.Adam(self.generator_.parameters(), lr=self.lr)
        d_opt = ad.Adam(self.critic_.parameters(), lr=self.lr)
        step = 0
        for epoch in range(self.epochs):
            d_losses, g_losses = [], []
            for idx in batches(len(X), self.batch_size, rng):
                cb = self._cond_matrix(self.train_cond_, len(idx))
                fake = self.generator_.predict(np.hstack([rng.standard_normal((len(idx), self.latent_dim)), cb]))
                d_loss = self.critic_(np.hstack([fake, cb])).mean() - self.critic_(np.hstack([X[idx], cb])).mean()
                d_loss.backward()
                d_opt.step()
                clip_params(self.critic_, self.clip_value)
                d_losses.append(float(d_loss.data))
                step += 1
                if step % self.n_critic == 0:
                    zin = np.hstack([rng.standard_normal((len(idx), self.latent_dim)), cb])
                    g_loss = -self.critic_(ad.concat([self.generator_(zin), ad.Tensor(cb)], axis=1)).mean()
                    g_loss.backward()
                    g_opt.step()
                    g_losses.append(float(g_loss.data))
            self._log(epoch, critic=np.mean(d_losses), generator=np.mean(g_losses) if g_losses else 0.0)
        return self

    def sample(self, n, cond=None, seed=None):
        check_is_fitted(self, "generator_")
        rng = np.random.default_rng(seed)
        cb = self._cond_matrix(cond, n)
        return self.generator_.predict(np.hstack([rng.standard_normal((n, self.latent_dim)), cb]))

    def critic_score(self, A, cond=None):
        return self.critic_.predict(np.hstack([A, self._cond_matrix(cond, len(A))]))[:, 0]

    def networks(self):
        return {"generator": self.generator_, "critic": self.critic_}
