"""Physics projection of generated attacks and subspace-leakage diagnostics."""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .estimation import COND_LIMIT, Projector, bdd_residual, build_projector
from .exceptions import ConditioningError, ContractError
from .grid import MeasurementModel

SIGMA_FLOOR = 1e-8


class PiMode(str, enum.Enum):
    OFF = "off"
    BROKEN_NORMALIZED = "broken_normalized"
    PHYSICAL = "physical"
    HARMONISED = "harmonised"


class FeatureScaler(TransformerMixin, BaseEstimator):
    """Per-feature standardization with population std floored at ``floor``.

    Must be fitted on the generation slice only.
    """

    def __init__(self, floor=SIGMA_FLOOR):
        self.floor = floor

    def fit(self, X, y=None):
        X = check_array(X)
        if len(X) < 2:
            raise ValueError("scaler needs at least two rows")
        self.mean_ = X.mean(axis=0)
        sd = X.std(axis=0)
        low = sd < self.floor
        if low.any():
            warnings.warn(f"{int(low.sum())} constant feature(s); std floored at {self.floor:g}", RuntimeWarning)
        self.scale_ = np.where(low, self.floor, sd)
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        return (np.asarray(X, dtype=float) - self.mean_) / self.scale_

    def inverse_transform(self, A):
        check_is_fitted(self, "scale_")
        return np.asarray(A, dtype=float) * self.scale_ + self.mean_

    @classmethod
    def identity(cls, n_features: int) -> "FeatureScaler":
        sc = cls()
        sc.mean_ = np.zeros(n_features)
        sc.scale_ = np.ones(n_features)
        return sc

    @classmethod
    def from_stats(cls, mean, scale) -> "FeatureScaler":
        sc = cls()
        sc.mean_ = np.asarray(mean, dtype=float)
        sc.scale_ = np.maximum(np.asarray(scale, dtype=float), sc.floor)
        return sc


def fit_scaler(X) -> FeatureScaler:
    return FeatureScaler().fit(X)


@dataclass(frozen=True)
class PhysicsConfig:
    v_lower: np.ndarray
    v_upper: np.ndarray
    p_loss: float = 0.0
    tolerance: float = 1e-6

    def __post_init__(self):
        if np.any(np.asarray(self.v_lower) > np.asarray(self.v_upper)):
            raise ValueError("v_lower must not exceed v_upper")

    @classmethod
    def from_corpus(cls, Z_attacked: np.ndarray, width: float = 3.0, p_loss: float = 0.0, tolerance: float = 1e-6):
        """Windows at mean +- ``width`` std of each (attacked) measurement feature."""
        mu, sd = Z_attacked.mean(axis=0), Z_attacked.std(axis=0)
        return cls(mu - width * sd, mu + width * sd, p_loss, tolerance)

    @classmethod
    def unbounded(cls, M: int, p_loss: float = 0.0, tolerance: float = 1e-6):
        return cls(np.full(M, -np.inf), np.full(M, np.inf), p_loss, tolerance)

    def normalized(self, scaler: FeatureScaler) -> "PhysicsConfig":
        """The same bounds expressed in the scaler's normalized coordinates."""
        return PhysicsConfig(scaler.transform(self.v_lower), scaler.transform(self.v_upper), self.p_loss, self.tolerance)


def power_balance_project(c_tilde: np.ndarray, p_loss: float = 0.0) -> np.ndarray:
    """c' = c~ - (1/M)(1^T c~ - P_loss) 1, row-wise for batches."""
    c = np.asarray(c_tilde, dtype=float)
    excess = c.sum(axis=-1, keepdims=True) - p_loss
    return c - excess / c.shape[-1]


def clip_to_window(c: np.ndarray, z: np.ndarray, cfg: PhysicsConfig) -> np.ndarray:
    return np.clip(c, cfg.v_lower - z, cfg.v_upper - z)


def physics_wrapper(c_tilde: np.ndarray, z: np.ndarray, cfg: PhysicsConfig) -> np.ndarray:
    # balance first, then clip; post-clip imbalance is measured, not re-projected
    return clip_to_window(power_balance_project(c_tilde, cfg.p_loss), z, cfg)


def physics_consistency(C: np.ndarray, Z: np.ndarray, cfg: PhysicsConfig) -> float:
    C = np.atleast_2d(C)
    Z = np.broadcast_to(Z, C.shape)
    balanced = np.abs(C.sum(axis=1) - cfg.p_loss) <= cfg.tolerance
    lo, hi = cfg.v_lower - Z, cfg.v_upper - Z
    inside = np.all((C >= lo) & (C <= hi), axis=1)
    return float(np.mean(balanced & inside))


def mean_leakage(projector: Projector, scaler: FeatureScaler) -> float:
    return float(np.linalg.norm(projector.complement @ scaler.mean_))


def leakage_decomposition(projector: Projector, scaler: FeatureScaler, a_normalized: np.ndarray):
    """Split the out-of-subspace part of an inverse-scaled in-subspace sample into mean and scale terms.

    Returns ``(term_mu, term_sigma, residual_norm)`` where the two terms sum to
    ``(I - P_H) @ scaler.inverse_transform(a_normalized)``.
    """
    a = np.asarray(a_normalized, dtype=float)
    if np.linalg.norm(projector.complement @ a) > 1e-8 * max(np.linalg.norm(a), 1e-300):
        raise ContractError("a_normalized must lie in col(H)")
    term_mu = projector.complement @ scaler.mean_
    term_sigma = projector.complement @ (scaler.scale_ * a)
    return term_mu, term_sigma, float(np.linalg.norm(term_mu + term_sigma))


def harmonise(model: MeasurementModel, a_p: np.ndarray) -> np.ndarray:
    """Single-pass least-squares reprojection onto col(H): H (H^T H)^-1 H^T a_p."""
    a_p = np.asarray(a_p, dtype=float)
    Q, Rq = qr(model.H, mode="economic")
    if np.abs(np.diag(Rq)).min() == 0 or np.linalg.cond(Rq) ** 2 > COND_LIMIT:
        raise ConditioningError("H is rank deficient or too ill-conditioned to harmonise against")
    delta = solve_triangular(Rq, Q.T @ a_p.T)
    return (model.H @ delta).T


def blended_project(projector: Projector, a: np.ndarray, t: float) -> np.ndarray:
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    a = np.asarray(a, dtype=float)
    return t * (a @ projector.P_H.T) + (1.0 - t) * a


class Harmoniser(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`harmonise`; stateless apart from the model."""

    def __init__(self, model=None):
        self.model = model

    def fit(self, X=None, y=None):
        self.projector_ = build_projector(self.model)
        return self

    def transform(self, X):
        return harmonise(self.model, check_array(X))


def leakage_report(model: MeasurementModel, projector: Projector, scaler: FeatureScaler, a_p: np.ndarray, tau: float) -> dict:
    """Mean leakage and residual inflation of a batch of physical-unit attacks relative to ``tau``."""
    expected = float(np.mean(bdd_residual(model, np.atleast_2d(a_p))))
    return {
        "mean_leakage": mean_leakage(projector, scaler),
        "expected_residual": expected,
        "tau": float(tau),
        "inflation_ratio": expected / float(tau),
    }


def dump_leakage_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
