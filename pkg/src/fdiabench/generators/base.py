"""Shared machinery for the generator pool: conditioning, schedules, losses, base estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .. import autodiff as ad
from ..exceptions import TrainingError

MITRE_LABELS = {0.0: "T0817", 0.5: "T0842", 1.0: "T0843"}


@dataclass(frozen=True)
class KnowledgeCondition:
    k: float
    vector: np.ndarray
    mitre_label: str


def knowledge_to_mitre(k: float) -> str:
    for level, label in MITRE_LABELS.items():
        if math.isclose(k, level, abs_tol=1e-12):
            return label
    return "interpolated"


def build_condition_vector(H: np.ndarray, k: float, c_dim: int | None = None) -> KnowledgeCondition:
    """Flatten the first floor(k M) rows of H row-major, then zero-pad or truncate to ``c_dim`` (default M)."""
    if not 0.0 <= k <= 1.0:
        raise ValueError("k must lie in [0, 1]")
    M = H.shape[0]
    c_dim = M if c_dim is None else c_dim
    rows = int(math.floor(k * M + 1e-12))
    flat = np.asarray(H[:rows], dtype=float).ravel()[:c_dim]
    vec = np.zeros(c_dim)
    vec[: len(flat)] = flat
    return KnowledgeCondition(float(k), vec, knowledge_to_mitre(k))


def beta_schedule(epoch: int, warmup: int = 50, beta_target: float = 1.0) -> float:
    """Linear anneal from 0 at epoch 0 to ``beta_target`` at ``warmup``, constant after."""
    if warmup <= 0:
        return float(beta_target)
    return float(beta_target) * min(1.0, max(0, epoch) / warmup)


def tc_penalty(latent):
    """Gaussian-fit total correlation 0.5 * (sum log diag(S) - log det S) of a latent batch.

    Accepts an array (returns float) or a Tensor (returns a differentiable Tensor).
    """
    if not isinstance(latent, ad.Tensor):
        Z = np.atleast_2d(np.asarray(latent, dtype=float))
        if Z.shape[1] < 2:
            return 0.0
        Zc = Z - Z.mean(axis=0)
        S = Zc.T @ Zc / len(Z) + 1e-10 * np.eye(Z.shape[1])
        _, ld = np.linalg.slogdet(S)
        return float(max(0.0, 0.5 * (np.sum(np.log(np.diag(S))) - ld)))
    d = latent.shape[1]
    if d < 2:
        return ad.Tensor(0.0)
    n = latent.shape[0]
    Zc = latent - latent.mean(axis=0, keepdims=True)
    S = (Zc.T @ Zc) * (1.0 / n) + 1e-6 * np.eye(d)
    diag = ad.log((Zc * Zc).sum(axis=0) * (1.0 / n) + 1e-6).sum()
    return (diag - ad.logdet(S)) * 0.5


def rbf_mmd_tensor(X, Y, sigma2: float):
    """Biased MMD^2 with kernel exp(-|x-y|^2 / (2 sigma2)); differentiable in X."""
    X, Y = ad.as_tensor(X), ad.as_tensor(Y)

    def kmean(A, B):
        a2 = (A * A).sum(axis=1, keepdims=True)
        b2 = (B * B).sum(axis=1, keepdims=True)
        d2 = a2 + b2.T - (A @ B.T) * 2.0
        return ad.exp(d2 * (-0.5 / sigma2)).mean()

    return kmean(X, X) + kmean(Y, Y) - kmean(X, Y) * 2.0


def batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def time_embedding(t: np.ndarray, T: int, dim: int = 8) -> np.ndarray:
    """Sinusoidal features of the normalized step index."""
    frac = (np.asarray(t, dtype=float) / T)[:, None]
    freqs = np.pi * 2.0 ** np.arange(dim // 2)
    return np.concatenate([np.sin(frac * freqs), np.cos(frac * freqs)], axis=1)


class GenerativeModel(BaseEstimator):
    """Base for pool members. ``fit(X, cond)`` on normalized data; ``sample(n, cond, seed)`` returns normalized rows."""

    family = "base"
    trainable = True

    def _cond_matrix(self, cond, n):
        """Broadcast a KnowledgeCondition / vector / None to an ``n x c_dim`` block."""
        c_dim = self.c_dim_
        if cond is None:
            vec = np.zeros(c_dim)
        elif isinstance(cond, KnowledgeCondition):
            vec = cond.vector
        else:
            vec = np.asarray(cond, dtype=float)
        if vec.ndim == 1:
            if len(vec) != c_dim:
                raise ValueError(f"conditioning vector has length {len(vec)}, expected {c_dim}")
            return np.broadcast_to(vec, (n, c_dim)).copy()
        return vec

    def _prepare(self, X, cond):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        self.c_dim_ = X.shape[1]
        self.train_cond_ = self._cond_matrix(cond, 1)[0]
        self.loss_history_ = []
        return X

    def _log(self, epoch: int, **losses):
        for name, val in losses.items():
            if not np.isfinite(val):
                raise TrainingError(f"{self.family} {name} loss diverged ({val})", epoch)
        self.loss_history_.append({"epoch": epoch, **{k: float(v) for k, v in losses.items()}})

    def sample(self, n, cond=None, seed=None):
        raise NotImplementedError

    def networks(self) -> dict:
        """Named DenseNets for checkpointing."""
        check_is_fitted(self, "loss_history_")
        return {}


@dataclass
class GeneratorHandle:
    family: str
    estimator: GenerativeModel
    pi_mode: str
    train_seed: int
    latent_dim: int | None = None

    @property
    def c_dim(self):
        return getattr(self.estimator, "c_dim_", None)

    def sample(self, n, cond=None, seed=None):
        return self.estimator.sample(n, cond, seed)
