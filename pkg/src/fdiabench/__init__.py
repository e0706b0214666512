"""Benchmark harness for generative false-data-injection attacks on DC state estimation."""

from .estimation import BadDataDetector, bdd_residual, build_projector, calibrate_threshold, evasion_rate, wls_estimate
from .grid import GridCase, MeasurementModel, build_measurement_model, load_case, synthesize_corpus
from .physics import FeatureScaler, Harmoniser, PhysicsConfig, PiMode, harmonise, physics_wrapper

__version__ = "0.1.0"

__all__ = [
    "BadDataDetector",
    "FeatureScaler",
    "GridCase",
    "Harmoniser",
    "MeasurementModel",
    "PhysicsConfig",
    "PiMode",
    "bdd_residual",
    "build_measurement_model",
    "build_projector",
    "calibrate_threshold",
    "evasion_rate",
    "harmonise",
    "load_case",
    "physics_wrapper",
    "synthesize_corpus",
    "wls_estimate",
]
