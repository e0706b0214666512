"""Post-processing of generator output into physical-unit attacks under each physics-informed mode."""

from __future__ import annotations

import numpy as np

from ..grid import MeasurementModel
from ..physics import FeatureScaler, PhysicsConfig, PiMode, harmonise, physics_wrapper


def apply_pi(
    samples_normalized: np.ndarray,
    z_batch: np.ndarray,
    cfg: PhysicsConfig,
    scaler: FeatureScaler,
    mode: PiMode | str,
    model: MeasurementModel | None = None,
) -> np.ndarray:
    """Turn normalized generator samples into physical attacks.

    ``broken_normalized`` runs the wrapper in feature space before inverting the
    scaler, which is the failure mode under study; ``physical`` inverts first;
    ``harmonised`` follows the physical pipeline with a least-squares reprojection
    onto col(H) and therefore needs ``model``.
    """
    mode = PiMode(mode)
    A = np.atleast_2d(np.asarray(samples_normalized, dtype=float))
    Z = np.broadcast_to(np.asarray(z_batch, dtype=float), A.shape)
    if mode is PiMode.OFF:
        return scaler.inverse_transform(A)
    if mode is PiMode.BROKEN_NORMALIZED:
        return scaler.inverse_transform(physics_wrapper(A, scaler.transform(Z), cfg.normalized(scaler)))
    C = physics_wrapper(scaler.inverse_transform(A), Z, cfg)
    if mode is PiMode.HARMONISED:
        if model is None:
            raise ValueError("harmonised mode needs the measurement model")
        C = harmonise(model, C)
    return C
