"""WLS state estimation and residual-based bad data detection."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import qr, solve_triangular
from scipy.special import gammaincc
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import CalibrationError, ConditioningError, ProtocolError
from .grid import MeasurementModel

COND_LIMIT = 1e12


@dataclass(frozen=True)
class Projector:
    P_H: np.ndarray
    complement: np.ndarray

    def leak(self, a: np.ndarray) -> np.ndarray:
        """Component of ``a`` (rows, if 2-D) outside col(H)."""
        return np.asarray(a) @ self.complement.T


@dataclass(frozen=True)
class DetectorThreshold:
    tau: float
    method: str
    calibration_size: int = 0


def _weights(model: MeasurementModel) -> np.ndarray:
    R = np.asarray(model.R)
    d = np.diag(R)
    if np.any(d <= 0) or np.count_nonzero(R - np.diag(d)):
        raise ValueError("R must be diagonal with positive entries")
    return 1.0 / d


def _factor(model: MeasurementModel):
    """Thin QR of the whitened Jacobian; raises on ill-conditioning."""
    sw = np.sqrt(_weights(model))
    Q, Rq = qr(sw[:, None] * model.H, mode="economic")
    diag = np.abs(np.diag(Rq))
    if diag.min() == 0 or (diag.max() / diag.min()) ** 2 > COND_LIMIT:
        # the triangular diagonal ratio is a cheap lower bound on cond(R); confirm exactly
        cond = np.linalg.cond(Rq) ** 2 if diag.min() > 0 else np.inf
        if cond > COND_LIMIT:
            raise ConditioningError(f"normal matrix condition estimate {cond:.3g} exceeds {COND_LIMIT:g}")
    return sw, Q, Rq


def wls_estimate(model: MeasurementModel, z: np.ndarray) -> np.ndarray:
    """x_hat = (H^T R^-1 H)^-1 H^T R^-1 z, solved through QR. Accepts one vector or a batch of rows."""
    sw, Q, Rq = _factor(model)
    z = np.asarray(z, dtype=float)
    zw = (z * sw).T
    x = solve_triangular(Rq, Q.T @ zw)
    return x.T


def _whitened_residual(model: MeasurementModel, z: np.ndarray) -> np.ndarray:
    sw, Q, _ = _factor(model)
    zw = np.asarray(z, dtype=float) * sw
    return zw - (zw @ Q) @ Q.T


def bdd_residual(model: MeasurementModel, z: np.ndarray) -> np.ndarray | float:
    """Weighted residual J(z) = (z - H x_hat)^T R^-1 (z - H x_hat)."""
    r = _whitened_residual(model, z)
    J = np.einsum("...i,...i->...", r, r)
    return float(J) if np.ndim(J) == 0 else J


def residual_increment(model: MeasurementModel, z: np.ndarray, c: np.ndarray):
    """J(z + c) - J(z)."""
    z = np.asarray(z, dtype=float)
    return bdd_residual(model, z + c) - bdd_residual(model, z)


def chi2_sf(x: float, dof: int) -> float:
    if x <= 0:
        return 1.0
    return float(gammaincc(dof / 2.0, x / 2.0))


def chi2_threshold(dof: int, alpha: float = 0.05, tol: float = 1e-10) -> DetectorThreshold:
    """Upper-alpha chi-square quantile by bisection on the regularized incomplete gamma."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    lo, hi = 0.0, float(dof)
    while chi2_sf(hi, dof) > alpha:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if chi2_sf(mid, dof) > alpha:
            lo = mid
        else:
            hi = mid
    return DetectorThreshold(0.5 * (lo + hi), "chi-square-quantile")


def nearest_rank(values: np.ndarray, percentile: float) -> float:
    values = np.sort(np.asarray(values, dtype=float).ravel())
    if not 0.0 <= percentile <= 100.0:
        raise ValueError("percentile must lie in [0, 100]")
    rank = max(1, math.ceil(percentile / 100.0 * len(values) - 1e-12))
    return float(values[rank - 1])


def calibrate_threshold(model: MeasurementModel, Z_det: np.ndarray, percentile: float = 95.0) -> DetectorThreshold:
    """Nearest-rank percentile of clean residuals; Z_det must be the detection slice only."""
    Z_det = np.atleast_2d(np.asarray(Z_det, dtype=float))
    if len(Z_det) < 20:
        raise CalibrationError(f"calibration slice has {len(Z_det)} samples; at least 20 required")
    J = bdd_residual(model, Z_det)
    return DetectorThreshold(nearest_rank(J, percentile), "percentile", len(Z_det))


def build_projector(model: MeasurementModel) -> Projector:
    """Orthogonal projector onto col(H), built from a thin QR of H."""
    Q, Rq = qr(model.H, mode="economic")
    diag = np.abs(np.diag(Rq))
    if diag.min() == 0 or np.linalg.cond(Rq) ** 2 > COND_LIMIT:
        raise ConditioningError("H is rank deficient or too ill-conditioned for a projector")
    P = Q @ Q.T
    P = 0.5 * (P + P.T)
    return Projector(P, np.eye(model.M) - P)


def evasion_rate(
    model: MeasurementModel,
    Z_eval: np.ndarray,
    attacks: np.ndarray,
    threshold: DetectorThreshold | float,
    mode: str = "isolated",
) -> float:
    """Fraction of attacked samples with J <= tau.

    ``isolated`` scores H x_hat_i + c_i (the noise-free reconstruction of the clean
    sample plus the attack); ``superposed`` scores z_i + c_i.
    """
    Z_eval = np.atleast_2d(np.asarray(Z_eval, dtype=float))
    attacks = np.atleast_2d(np.asarray(attacks, dtype=float))
    if Z_eval.shape != attacks.shape:
        raise ProtocolError(f"attacks {attacks.shape} do not align with eval samples {Z_eval.shape}")
    tau = threshold.tau if isinstance(threshold, DetectorThreshold) else float(threshold)
    return float(np.mean(attacked_residuals(model, Z_eval, attacks, mode) <= tau))


def attacked_residuals(model: MeasurementModel, Z: np.ndarray, attacks: np.ndarray, mode: str = "isolated") -> np.ndarray:
    if mode == "isolated":
        base = wls_estimate(model, Z) @ model.H.T
    elif mode == "superposed":
        base = Z
    else:
        raise ValueError(f"unknown evasion mode {mode!r}")
    return bdd_residual(model, base + attacks)


class BadDataDetector(BaseEstimator):
    """Residual test with a threshold frozen at fit time.

    ``method='percentile'`` calibrates on clean detection-slice measurements;
    ``method='chi2'`` uses the chi-square quantile with M - (N-1) degrees of freedom.
    """

    def __init__(self, model=None, method="percentile", percentile=95.0, alpha=0.05, mode="isolated"):
        self.model = model
        self.method = method
        self.percentile = percentile
        self.alpha = alpha
        self.mode = mode

    def fit(self, Z_det, y=None):
        Z_det = check_array(Z_det)
        if self.method == "percentile":
            self.threshold_ = calibrate_threshold(self.model, Z_det, self.percentile)
        elif self.method == "chi2":
            self.threshold_ = chi2_threshold(self.model.M - self.model.n_states, self.alpha)
        else:
            raise ValueError(f"unknown threshold method {self.method!r}")
        self.tau_ = self.threshold_.tau
        return self

    def score_samples(self, Z):
        return bdd_residual(self.model, check_array(Z))

    def predict(self, Z):
        """1 for flagged (bad data), 0 for accepted."""
        check_is_fitted(self, "tau_")
        return (self.score_samples(Z) > self.tau_).astype(int)

    def evasion_rate(self, Z_eval, attacks):
        check_is_fitted(self, "tau_")
        return evasion_rate(self.model, Z_eval, attacks, self.threshold_, self.mode)


def write_residual_trace(path: str | Path, J_clean, J_attacked, tau: float) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_id", "J_clean", "J_attacked", "pass"])
        for i, (a, b) in enumerate(zip(J_clean, J_attacked)):
            w.writerow([i, repr(float(a)), repr(float(b)), int(b <= tau)])
