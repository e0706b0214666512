"""Distributional and operational metrics for generated attacks, and Pareto selection."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.stats import wasserstein_distance
from sklearn.base import BaseEstimator
from sklearn.metrics import balanced_accuracy_score
from sklearn.model_selection import train_test_split
from sklearn.utils.validation import check_array, check_is_fitted

from . import autodiff as ad
from .physics import FeatureScaler

BANDWIDTH_FLOOR = 1e-8


@dataclass
class EvalRecord:
    model: str
    seed: int
    k: float
    mmd: float | None = None
    w1: float | None = None
    eps_bdd: float | None = None
    eps_ae: float | None = None
    eps_if: float | None = None
    phi: float | None = None
    psi: float | None = None
    impact: float | None = None

    def __post_init__(self):
        for name in ("eps_bdd", "eps_ae", "eps_if", "phi"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a rate in [0, 1]")
        for name in ("mmd", "w1"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def failed(self) -> bool:
        return self.mmd is None


RECORD_COLUMNS = [f.name for f in fields(EvalRecord)]


def median_heuristic(X, Y=None) -> float:
    """Median pairwise Euclidean distance over the pooled rows, floored at 1e-8."""
    P = np.atleast_2d(np.asarray(X, dtype=float))
    if Y is not None:
        P = np.vstack([P, np.atleast_2d(np.asarray(Y, dtype=float))])
    if len(P) < 2:
        return BANDWIDTH_FLOOR
    return max(float(np.median(pdist(P))), BANDWIDTH_FLOOR)


def mmd_rbf(X, Y, sigma: float | None = None) -> float:
    """Biased (V-statistic) squared MMD under k(x, y) = exp(-|x - y|^2 / (2 sigma^2)), clamped at 0."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if sigma is None:
        sigma = median_heuristic(X, Y)
    g = -0.5 / sigma**2
    kxx = np.exp(g * cdist(X, X, "sqeuclidean")).mean()
    kyy = np.exp(g * cdist(Y, Y, "sqeuclidean")).mean()
    kxy = np.exp(g * cdist(X, Y, "sqeuclidean")).mean()
    return max(0.0, float(kxx + kyy - 2.0 * kxy))


def random_directions(dim: int, n_directions: int, seed=0) -> np.ndarray:
    U = np.random.default_rng(seed).standard_normal((n_directions, dim))
    return U / np.linalg.norm(U, axis=1, keepdims=True)


def sliced_w1(X, Y, n_directions: int = 128, seed=0) -> float:
    """Mean over random unit directions of the exact 1-D W1 between projected samples.

    The 1-D distance is the quantile coupling (sorted pairing when sizes match).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    U = random_directions(X.shape[1], n_directions, seed)
    px, py = X @ U.T, Y @ U.T
    return float(np.mean([wasserstein_distance(px[:, j], py[:, j]) for j in range(n_directions)]))


def attack_impact(C_gen, C_real) -> float:
    """Mean generated attack 2-norm over mean real attack 2-norm."""
    real = float(np.mean(np.linalg.norm(np.atleast_2d(C_real), axis=1)))
    if real == 0:
        raise ValueError("real attacks have zero mean norm")
    return float(np.mean(np.linalg.norm(np.atleast_2d(C_gen), axis=1))) / real


class DiscriminatorProbe(BaseEstimator):
    """Small real-vs-generated classifier; ``score_`` is held-out balanced accuracy (0.5 means indistinguishable).

    After fitting, ``logit_net_`` maps raw (unstandardized) inputs to the pre-sigmoid
    logit, with the standardization folded into its first layer, so it can be used
    directly as an attribution target.
    """

    def __init__(self, hidden=32, epochs=200, lr=1e-2, test_size=0.3, seed=0):
        self.hidden = hidden
        self.epochs = epochs
        self.lr = lr
        self.test_size = test_size
        self.seed = seed

    def fit(self, real, gen):
        real, gen = check_array(real), check_array(gen)
        X = np.vstack([real, gen])
        y = np.r_[np.zeros(len(real)), np.ones(len(gen))]
        Xtr, Xte, ytr, yte = train_test_split(X, y, test_size=self.test_size, random_state=self.seed, stratify=y)
        scaler = FeatureScaler().fit(Xtr)
        A = scaler.transform(Xtr)
        net = ad.DenseNet([X.shape[1], self.hidden, 1], ["tanh", "linear"], seed=self.seed)
        opt = ad.Adam(net.parameters(), lr=self.lr, beta1=0.9)
        yt = ytr[:, None]
        # class-balanced binary cross-entropy on logits: softplus(l) - y l
        w = np.where(yt == 1, 0.5 / yt.mean(), 0.5 / (1 - yt.mean()))
        for _ in range(self.epochs):
            logit = net(A)
            loss = ((ad.softplus(logit) - logit * yt) * w).mean()
            loss.backward()
            opt.step()
        W0, b0 = net.weights[0].data, net.biases[0].data
        net.weights[0].data = W0 / scaler.scale_[:, None]
        net.biases[0].data = b0 - (scaler.mean_ / scaler.scale_) @ W0
        self.logit_net_ = net
        self.score_ = float(balanced_accuracy_score(yte, self.predict(Xte)))
        return self

    def decision_function(self, X):
        check_is_fitted(self, "logit_net_")
        return self.logit_net_.predict(check_array(X))[:, 0]

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)


def discriminator_probe(real, gen, seed=0) -> float:
    return DiscriminatorProbe(seed=seed).fit(real, gen).score_


@dataclass(frozen=True)
class ParetoResult:
    non_dominated: tuple
    dominance_count: dict


DEFAULT_OBJECTIVES = (("mmd", "min"), ("eps_bdd", "max"), ("phi", "max"), ("impact", "max"))


def _oriented(records, objectives):
    signs = np.array([1.0 if d == "min" else -1.0 for _, d in objectives])
    return np.array([[getattr(r, n) if not isinstance(r, dict) else r[n] for n, _ in objectives] for r in records], float) * signs


def dominates(a: np.ndarray, b: np.ndarray) -> bool:
    """Strict dominance on minimization-oriented objective vectors."""
    return bool(np.all(a <= b) and np.any(a < b))


def pareto_front(records, objectives=DEFAULT_OBJECTIVES, key=lambda r: r.model) -> ParetoResult:
    """Non-dominated set under strict dominance. Records with missing metrics are skipped.

    ``dominance_count[id]`` is the number of records that dominate that record.
    """
    records = [r for r in records if all(_get(r, n) is not None for n, _ in objectives)]
    if not records:
        return ParetoResult((), {})
    V = _oriented(records, objectives)
    le = np.all(V[:, None, :] <= V[None, :, :], axis=2)
    lt = np.any(V[:, None, :] < V[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0)
    ids = [key(r) for r in records]
    return ParetoResult(
        tuple(sorted({ids[j] for j in range(len(records)) if counts[j] == 0}, key=str)),
        {ids[j]: int(counts[j]) for j in range(len(records))},
    )


def _get(r, name):
    return r[name] if isinstance(r, dict) else getattr(r, name)


def write_metrics_csv(records, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in asdict(r).values()])


def read_metrics_csv(path: str | Path) -> list[EvalRecord]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {k: (None if v == "" else float(v)) for k, v in row.items() if k not in ("model", "seed")}
            out.append(EvalRecord(model=row["model"], seed=int(row["seed"]), **vals))
    return out

