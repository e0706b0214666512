"""Cross-level attribution: data-level mean shifts against model-level Integrated Gradients."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sklearn.metrics import cohen_kappa_score

from . import autodiff as ad

TOP_K = 5


@dataclass(frozen=True)
class AttributionProfile:
    data_level: np.ndarray
    model_level: np.ndarray
    top5_data: tuple
    top5_model: tuple
    kappa: float

    def to_dict(self) -> dict:
        return {
            "data_level": [float(v) for v in self.data_level],
            "model_level": [float(v) for v in self.model_level],
            "top5_data": list(self.top5_data),
            "top5_model": list(self.top5_model),
            "kappa": float(self.kappa),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "AttributionProfile":
        d = json.loads(text)
        return cls(np.array(d["data_level"]), np.array(d["model_level"]), tuple(d["top5_data"]),
                   tuple(d["top5_model"]), d["kappa"])


def data_attribution(X_gen, X_clean) -> np.ndarray:
    """Per-feature mean shift of generated rows in units of the clean standard deviation."""
    X_gen = np.atleast_2d(np.asarray(X_gen, dtype=float))
    X_clean = np.atleast_2d(np.asarray(X_clean, dtype=float))
    sd = X_clean.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (X_gen.mean(axis=0) - X_clean.mean(axis=0)) / sd


def integrated_gradients(net: ad.DenseNet, a, a_baseline, steps: int = 64) -> np.ndarray:
    """Midpoint Riemann sum of (a - a') * integral of dF/da along the straight path, for a scalar-output net."""
    a = np.asarray(a, dtype=float)
    base = np.asarray(a_baseline, dtype=float)
    alphas = (np.arange(steps) + 0.5) / steps
    path = base + alphas[:, None] * (a - base)
    tape = ad.forward(net, path)
    if tape.output.shape[-1] != 1:
        raise ValueError("integrated_gradients needs a scalar-output network")
    _, grad = ad.backward(tape, np.ones(tape.output.shape))
    return (a - base) * grad.mean(axis=0)


def top_k(scores, k: int = TOP_K) -> tuple:
    """Indices of the k largest scores; ties go to the lower index."""
    return tuple(int(i) for i in np.argsort(-np.asarray(scores, dtype=float), kind="stable")[:k])


def cohens_kappa_topk(set_a, set_b, M: int, k: int = TOP_K) -> float:
    """Chance-corrected agreement of two top-k sets viewed as binary flags over M features."""
    la, lb = np.zeros(M, dtype=int), np.zeros(M, dtype=int)
    la[list(set_a)] = 1
    lb[list(set_b)] = 1
    if len(set(set_a)) != k or len(set(set_b)) != k:
        raise ValueError(f"both sets must contain exactly {k} distinct indices")
    return float(cohen_kappa_score(la, lb))


def cross_level_profile(generated, clean, net: ad.DenseNet, baseline=None, steps: int = 64,
                        max_samples: int = 64) -> AttributionProfile:
    """Compare where generated attacks move the data against what the target network attends to.

    The model-level vector is mean |IG| over up to ``max_samples`` generated rows, with
    the clean mean as the default baseline.
    """
    generated = np.atleast_2d(np.asarray(generated, dtype=float))
    clean = np.atleast_2d(np.asarray(clean, dtype=float))
    M = generated.shape[1]
    baseline = clean.mean(axis=0) if baseline is None else np.asarray(baseline, dtype=float)
    data_level = data_attribution(generated, clean)
    rows = generated[:max_samples]
    model_level = np.mean([np.abs(integrated_gradients(net, r, baseline, steps)) for r in rows], axis=0)
    t_data, t_model = top_k(np.abs(data_level)), top_k(model_level)
    return AttributionProfile(data_level, model_level, t_data, t_model, cohens_kappa_topk(t_data, t_model, M))
