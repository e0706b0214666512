"""MMD-regularized autoencoders (WAE-MMD) and their TC and critic hybrids."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_is_fitted

from .. import autodiff as ad
from .base import GenerativeModel, batches, beta_schedule, rbf_mmd_tensor, tc_penalty
from .wgan import clip_params


class MMDVAEGenerator(GenerativeModel):
    """Deterministic encoder regularized by MMD(q(z), N(0, I)); generation decodes prior draws.

    ``tc_beta > 0`` adds the Gaussian total-correlation penalty on latent batches,
    annealed over ``warmup_epochs`` when ``warmup`` is set and applied at full
    weight from epoch 0 otherwise. ``critic_weight > 0`` attaches a weight-clipped
    Wasserstein critic on decoded prior samples.
    """

    family = "mmd_vae"

    def __init__(
        self,
        latent_dim=8,
        hidden=64,
        epochs=200,
        batch_size=64,
        lr=5e-4,
        mmd_weight=1.0,
        tc_beta=0.0,
        warmup=True,
        warmup_epochs=50,
        critic_weight=0.0,
        clip_value=0.01,
        activation="relu",
        seed=0,
    ):
        self.latent_dim = latent_dim
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.mmd_weight = mmd_weight
        self.tc_beta = tc_beta
        self.warmup = warmup
        self.warmup_epochs = warmup_epochs
        self.critic_weight = critic_weight
        self.clip_value = clip_value
        self.activation = activation
        self.seed = seed

    def effective_beta(self, epoch: int) -> float:
        if not self.warmup:
            return float(self.tc_beta)
        return beta_schedule(epoch, self.warmup_epochs, self.tc_beta)

    def fit(self, X, cond=None):
        X = self._prepare(X, cond)
        rng = np.random.default_rng(self.seed)
        M, c, L, h, act = X.shape[1], self.c_dim_, self.latent_dim, self.hidden, self.activation
        self.encoder_ = ad.DenseNet([M + c, h, h, L], [act, act, "linear"], rng=rng)
        self.decoder_ = ad.DenseNet([L + c, h, h, M], [act, act, "linear"], rng=rng)
        params = self.encoder_.parameters() + self.decoder_.parameters()
        opt = ad.Adam(params, lr=self.lr)
        use_critic = self.critic_weight > 0
        if use_critic:
            self.critic_ = ad.DenseNet([M + c, h, h, 1], ["relu", "relu", "linear"], rng=rng)
            clip_params(self.critic_, self.clip_value)
            d_opt = ad.Adam(self.critic_.parameters(), lr=self.lr)
        for epoch in range(self.epochs):
            beta = self.effective_beta(epoch)
            rec_l, mmd_l, tc_l, adv_l = [], [], [], []
            for idx in batches(len(X), self.batch_size, rng):
                n = len(idx)
                cb = ad.Tensor(self._cond_matrix(self.train_cond_, n))
                xb = X[idx]
                prior = rng.standard_normal((n, L))
                if use_critic:
                    fake = self.decoder_.predict(np.hstack([prior, cb.data]))
                    d_loss = self.critic_(np.hstack([fake, cb.data])).mean() - self.critic_(np.hstack([xb, cb.data])).mean()
                    d_loss.backward()
                    d_opt.step()
                    clip_params(self.critic_, self.clip_value)
                z = self.encoder_(ad.concat([ad.Tensor(xb), cb], axis=1))
                recon = self.decoder_(ad.concat([z, cb], axis=1))
                diff = recon - xb
                rec = (diff * diff).mean()
                mmd = rbf_mmd_tensor(z, prior, float(L))
                loss = rec + mmd * self.mmd_weight
                rec_l.append(float(rec.data))
                mmd_l.append(float(mmd.data))
                if self.tc_beta > 0:
                    tc = tc_penalty(z)
                    tc_l.append(float(tc.data))
                    if beta > 0:
                        loss = loss + tc * beta
                if use_critic:
                    gen = self.decoder_(ad.concat([ad.Tensor(rng.standard_normal((n, L))), cb], axis=1))
                    adv = -self.critic_(ad.concat([gen, cb], axis=1)).mean()
                    loss = loss + adv * self.critic_weight
                    adv_l.append(float(adv.data))
                loss.backward()
                opt.step()
            logged = {"reconstruction": np.mean(rec_l), "mmd": np.mean(mmd_l)}
            if tc_l:
                logged.update(tc=np.mean(tc_l), beta=beta)
            if adv_l:
                logged["adversarial"] = np.mean(adv_l)
            self._log(epoch, **logged)
        return self

    def encode(self, X, cond=None):
        check_is_fitted(self, "encoder_")
        return self.encoder_.predict(np.hstack([X, self._cond_matrix(cond, len(X))]))

    def decode(self, Z, cond=None):
        check_is_fitted(self, "decoder_")
        return self.decoder_.predict(np.hstack([Z, self._cond_matrix(cond, len(Z))]))

    def sample(self, n, cond=None, seed=None):
        rng = np.random.default_rng(seed)
        return self.decode(rng.standard_normal((n, self.latent_dim)), cond)

    def critic_score(self, A, cond=None):
        check_is_fitted(self, "critic_")
        return self.critic_.predict(np.hstack([A, self._cond_matrix(cond, len(A))]))[:, 0]

    def networks(self):
        nets = {"encoder": self.encoder_, "decoder": self.decoder_}
        if hasattr(self, "critic_"):
            nets["critic"] = self.critic_
        return nets


class TCMMDVAEGenerator(MMDVAEGenerator):
    family = "tc_mmd_vae"

    def __init__(
        self,
        latent_dim=8,
        hidden=64,
        epochs=200,
        batch_size=64,
        lr=5e-4,
        mmd_weight=1.0,
        tc_beta=10.0,
        warmup=True,
        warmup_epochs=50,
        critic_weight=0.0,
        clip_value=0.01,
        activation="relu",
        seed=0,
    ):
        super().__init__(
            latent_dim, hidden, epochs, batch_size, lr, mmd_weight, tc_beta, warmup, warmup_epochs,
            critic_weight, clip_value, activation, seed,
        )


class MMDVAEWGANGenerator(MMDVAEGenerator):
    family = "mmd_vae_wgan"

    def __init__(
        self,
        latent_dim=8,
        hidden=64,
        epochs=200,
        batch_size=64,
        lr=5e-4,
        mmd_weight=1.0,
        tc_beta=0.0,
        warmup=True,
        warmup_epochs=50,
        critic_weight=0.1,
        clip_value=0.01,
        activation="relu",
        seed=0,
    ):
        super().__init__(
            latent_dim, hidden, epochs, batch_size, lr, mmd_weight, tc_beta, warmup, warmup_epochs,
            critic_weight, clip_value, activation, seed,
        )
