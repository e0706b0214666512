"""Acceptance criteria 1-14, each reported as one PASS/FAIL line in the terminal summary."""

import filecmp
import json
import math
import time

import numpy as np
import pytest

from fdiabench import autodiff as ad
from fdiabench import cli
from fdiabench.config import config_from_dict
from fdiabench.estimation import bdd_residual, build_projector, residual_increment
from fdiabench.generators import DDPMGenerator, RealNVPGenerator, TCMMDVAEGenerator
from fdiabench.harness import Runner, run_block_b, run_recovery_demo
from fdiabench.metrics import EvalRecord, mmd_rbf, pareto_front
from fdiabench.physics import FeatureScaler, harmonise, leakage_decomposition
from fdiabench.stats import eta_squared, friedman_test, kruskal_wallis, wilcoxon_signed_rank
from fdiabench.xai import cohens_kappa_topk, integrated_gradients

from test_metrics import _oracle_front
from test_stats import _enumeration_oracle


@pytest.mark.criterion(1, "stealth identity on 14- and 30-bus models")
def test_c01_stealth_identity(model14, model30, record_property):
    start = time.perf_counter()
    worst = 0.0
    for model in (model14, model30):
        rng = np.random.default_rng(1)
        z = rng.normal(size=model.M) * np.sqrt(np.diag(model.R))
        Jz = bdd_residual(model, z)
        deltas = rng.normal(size=(1000, model.H.shape[1])) * rng.uniform(0.01, 100, size=(1000, 1))
        dJ = residual_increment(model, z, deltas @ model.H.T)
        worst = max(worst, float(np.max(np.abs(dJ)) / (1 + Jz)))
    elapsed = time.perf_counter() - start
    record_property("detail", f"max |dJ|/(1+J) = {worst:.2e}, {elapsed:.2f}s")
    assert worst <= 1e-8 and elapsed < 5


@pytest.mark.criterion(2, "two-term leakage decomposition identity")
def test_c02_decomposition(model14, model30, record_property):
    start = time.perf_counter()
    worst = 0.0
    for model in (model14, model30):
        P = build_projector(model)
        rng = np.random.default_rng(2)
        for _ in range(1000):
            sc = FeatureScaler.from_stats(rng.normal(size=model.M) * 5, rng.uniform(0.05, 20, size=model.M))
            a = model.H @ rng.normal(size=model.H.shape[1])
            t_mu, t_sig, _ = leakage_decomposition(P, sc, a)
            lhs = P.complement @ sc.inverse_transform(a)
            worst = max(worst, np.linalg.norm(t_mu + t_sig - lhs) / max(np.linalg.norm(lhs), 1e-300))
    elapsed = time.perf_counter() - start
    record_property("detail", f"max relative error {worst:.2e}, {elapsed:.2f}s")
    assert worst <= 1e-10 and elapsed < 5


@pytest.mark.criterion(3, "broken-normalized collapse and harmoniser recovery on 30-bus")
def test_c03_failure_recovery(record_property):
    start = time.perf_counter()
    cfg = config_from_dict({"case": "ieee30", "roster": [{"family": "hdelta_oracle", "pi_mode": "physical"}],
                            "seeds": [42]})
    out = run_recovery_demo(cfg, Runner(cfg))
    row = out["rows"][0]
    elapsed = time.perf_counter() - start
    record_property("detail", f"broken {row['eps_bdd_broken_normalized']:.3f}, harmonised "
                              f"{row['eps_bdd_harmonised']:.3f}, inflation {row['inflation_ratio']:.1f}x tau, "
                              f"mean leakage {out['mean_leakage']:.3g}, {elapsed:.1f}s")
    assert row["eps_bdd_broken_normalized"] <= 0.10
    assert row["eps_bdd_harmonised"] == 1.0
    assert row["inflation_ratio"] > 1 and elapsed < 120


@pytest.mark.criterion(4, "harmoniser idempotence, fixed points and null-space annihilation")
def test_c04_harmoniser(toy_model, model14, model30, record_property):
    np.testing.assert_allclose(harmonise(toy_model, [1, 1, -1]), 0, atol=1e-12)
    np.testing.assert_allclose(harmonise(toy_model, [1, 1, 2]), [1, 1, 2], atol=1e-12)
    worst = 0.0
    for model in (model14, model30):
        P = build_projector(model)
        rng = np.random.default_rng(4)
        A = rng.normal(size=(50, model.M)) * 10
        h = harmonise(model, A)
        worst = max(worst, np.abs(harmonise(model, h) - h).max(), np.abs(h - A @ P.P_H.T).max())
        inside = rng.normal(size=(50, model.H.shape[1])) @ model.H.T
        worst = max(worst, np.abs(harmonise(model, inside) - inside).max() / np.abs(inside).max())
        null = A @ P.complement.T
        worst = max(worst, np.abs(harmonise(model, null)).max() / np.abs(null).max())
    record_property("detail", f"max deviation {worst:.2e}")
    assert worst <= 1e-10


@pytest.mark.criterion(5, "MMD oracle equivalence and closed forms")
def test_c05_mmd(record_property):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        X, Y = rng.normal(size=(50, 8)), rng.normal(size=(50, 8)) * 1.3 + 0.2
        sigma = rng.uniform(1, 5)
        k = lambda a, b: math.exp(-float(np.sum((a - b) ** 2)) / (2 * sigma**2))  # noqa: E731
        oracle = (sum(k(a, b) for a in X for b in X) + sum(k(a, b) for a in Y for b in Y)
                  - 2 * sum(k(a, b) for a in X for b in Y)) / 2500
        worst = max(worst, abs(mmd_rbf(X, Y, sigma) - max(oracle, 0.0)))
    X = rng.normal(size=(30, 8))
    two_point = abs(mmd_rbf([[0.0]], [[1.7]], sigma=1.7) - (2 - 2 * math.exp(-0.5)))
    record_property("detail", f"oracle gap {worst:.1e}, two-point gap {two_point:.1e}")
    assert worst <= 1e-12 and mmd_rbf(X, X) == 0.0 and two_point <= 1e-12


@pytest.mark.criterion(6, "autodiff gradient check on 20 random nets")
def test_c06_gradients(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    acts = ["relu", "tanh", "sigmoid", "linear"]
    worst = 0.0
    for i in range(20):
        depth = int(rng.integers(1, 5))
        sizes = [int(s) for s in rng.integers(2, 7, size=depth + 1)]
        layer_acts = [acts[(i + j) % 4] for j in range(depth)]
        net = ad.DenseNet(sizes, layer_acts, seed=i)
        worst = max(worst, ad.finite_diff_check(net, rng.normal(size=(3, sizes[0])), seed=i))
    elapsed = time.perf_counter() - start
    record_property("detail", f"max relative error {worst:.1e}, {elapsed:.2f}s")
    assert worst < 1e-4 and elapsed < 30


@pytest.mark.criterion(7, "RealNVP round trip and log-determinant")
def test_c07_realnvp(record_property):
    rng = np.random.default_rng(7)
    X = rng.normal(size=(200, 4)) * [1, 3, 0.5, 2]
    flow = RealNVPGenerator(n_couplings=4, hidden=16, epochs=10, seed=0).fit(X)
    x = rng.normal(size=(40, 4)) * 2
    u, logdet = flow.forward_map(x)
    round_trip = np.abs(flow.inverse_map(u) - x).max()
    eps, worst = 1e-6, 0.0
    for i in range(10):
        J = np.empty((4, 4))
        for j in range(4):
            e = np.zeros(4)
            e[j] = eps
            J[:, j] = (flow.forward_map((x[i] + e)[None])[0][0] - flow.forward_map((x[i] - e)[None])[0][0]) / (2 * eps)
        worst = max(worst, abs(logdet[i] - np.linalg.slogdet(J)[1]))
    record_property("detail", f"round trip {round_trip:.1e}, log-det gap {worst:.1e}")
    assert round_trip <= 1e-8 and worst <= 1e-4


@pytest.mark.criterion(8, "DDPM forward marginal at t = T")
def test_c08_ddpm_marginal(record_property):
    X = np.random.default_rng(8).multivariate_normal([2, -3], [[3, 1], [1, 2]], size=2000)
    g = DDPMGenerator(T=50)
    aT = g.q_sample(X, np.full(2000, 50), np.random.default_rng(9).standard_normal(X.shape))
    mean_err = np.abs(aT.mean(axis=0)).max()
    cov_err = np.linalg.norm(np.cov(aT.T) - np.eye(2))
    record_property("detail", f"|mean| {mean_err:.3f}, cov Frobenius {cov_err:.3f}")
    assert mean_err <= 0.1 and cov_err <= 0.15


@pytest.mark.criterion(9, "Pareto front equals exhaustive dominance enumeration")
def test_c09_pareto(record_property):
    rng = np.random.default_rng(9)
    for trial in range(20):
        vals = rng.uniform(size=(50, 4)) if trial % 2 else rng.integers(0, 3, size=(50, 4)) / 2.0
        recs = [EvalRecord(f"r{i:02d}", 0, 0.0, mmd=v[0], eps_bdd=v[1], phi=v[2], impact=v[3]) for i, v in enumerate(vals)]
        expected = tuple(f"r{i:02d}" for i in _oracle_front(vals * [1, -1, -1, -1]))
        assert pareto_front(recs).non_dominated == expected
    record_property("detail", "20/20 sets match")


@pytest.mark.criterion(10, "statistics battery oracles and anchors")
def test_c10_stats(record_property):
    from scipy.stats import rankdata

    rng = np.random.default_rng(10)
    for n in range(1, 11):
        for _ in range(5):
            a, b = np.round(rng.normal(size=n), 1), np.round(rng.normal(size=n), 1)
            if np.all(a == b):
                continue
            w, p = _enumeration_oracle(a - b)
            rep = wilcoxon_signed_rank(a, b)
            assert rep.statistic == pytest.approx(w) and rep.p_value == pytest.approx(p, abs=1e-12)
    M = rng.normal(size=(5, 10))
    R = np.array([rankdata(M[:, j]) for j in range(10)]).T
    fried = 12 / (10 * 5 * 6) * np.sum(R.sum(axis=1) ** 2) - 3 * 10 * 6
    assert abs(friedman_test(M).statistic - fried) <= 1e-10
    groups = [rng.normal(size=5) + i for i in range(5)]
    r = rankdata(np.concatenate(groups))
    H = 12 / (25 * 26) * sum(r[5 * i:5 * i + 5].sum() ** 2 / 5 for i in range(5)) - 3 * 26
    assert abs(kruskal_wallis(groups).statistic - H) <= 1e-10
    eta = eta_squared(16.7, 5, 25)
    assert eta == pytest.approx(0.635, abs=5e-4)
    same = cohens_kappa_topk((1, 2, 3, 4, 5), (5, 4, 3, 2, 1), 54)
    disjoint = cohens_kappa_topk((0, 1, 2, 3, 4), (10, 11, 12, 13, 14), 54)
    record_property("detail", f"eta2 {eta:.4f}, kappa identical {same:.3f}, disjoint {disjoint:.4f}")
    assert same == pytest.approx(1.0) and abs(disjoint + 0.102) <= 0.001


@pytest.mark.criterion(11, "integrated gradients completeness and linear closed form")
def test_c11_ig(record_property):
    rng = np.random.default_rng(11)
    worst = 0.0
    for seed in range(10):
        net = ad.DenseNet([6, 12, 12, 1], ["tanh", "sigmoid", "linear"], seed=seed)
        a, base = rng.normal(size=6), rng.normal(size=6)
        gap = net.predict(a[None])[0, 0] - net.predict(base[None])[0, 0]
        phi = integrated_gradients(net, a, base, steps=256)
        worst = max(worst, abs(phi.sum() - gap) / max(abs(gap), 1e-12))
    lin = ad.DenseNet([5, 1], ["linear"], seed=0)
    lin.biases[0].data = np.zeros(1)
    a = rng.normal(size=5)
    linear_gap = np.abs(integrated_gradients(lin, a, np.zeros(5)) - lin.weights[0].data[:, 0] * a).max()
    record_property("detail", f"completeness rel. error {worst:.1e}, linear gap {linear_gap:.1e}")
    assert worst <= 1e-3 and linear_gap <= 1e-12


def _correlation_run(warmup: bool, seed: int, target: np.ndarray) -> float:
    g = TCMMDVAEGenerator(latent_dim=2, hidden=32, tc_beta=10.0, epochs=150, warmup=warmup, warmup_epochs=50,
                          activation="relu", seed=seed).fit(target)
    return float(np.corrcoef(g.sample(4000, seed=seed + 100).T)[0, 1])


@pytest.mark.criterion(12, "beta warm-up recovers the correlated structure that static beta loses")
def test_c12_warmup_recovery(record_property):
    start = time.perf_counter()
    target = np.random.default_rng(12).multivariate_normal([0, 0], [[1, 0.8], [0.8, 1]], size=1000)
    static = [_correlation_run(False, s, target) for s in range(3)]
    warm = [_correlation_run(True, s, target) for s in range(3)]
    elapsed = time.perf_counter() - start
    record_property("detail", "static " + ", ".join(f"{c:.2f}" for c in static)
                    + "; warm-up " + ", ".join(f"{c:.2f}" for c in warm) + f"; {elapsed:.0f}s")
    assert all(abs(c) < 0.4 for c in static)
    assert all(c >= 0.55 for c in warm)
    assert elapsed < 600


@pytest.mark.criterion(13, "Kruskal-Wallis detects the knowledge effect on the oracle-degradation cell")
def test_c13_knowledge_effect(record_property):
    cfg = config_from_dict({"block_b_cells": ["hdelta_oracle/degraded"], "eval_passes": 1,
                            "roster": [{"family": "hdelta_oracle", "pi_mode": "off"}]})
    out = run_block_b(cfg, Runner(cfg))
    test = out["tests"][0]
    assert len(out["records"]) == 5 * 5
    record_property("detail", f"H {test['H']:.2f}, p {test['p_value']:.2g}, eta2 {test['eta_squared']:.3f}")
    assert test["p_value"] < 0.05


@pytest.mark.criterion(14, "bench is byte-for-byte deterministic")
def test_c14_determinism(tmp_path, record_property):
    cfg = {"corpus": {"n_samples": 400}, "seeds": [0, 1], "eval_passes": 2, "iforest_trees": 20, "ae_epochs": 5,
           "roster": [{"family": "wgan", "params": {"epochs": 5}}, {"family": "gmm"},
                      {"family": "hdelta_oracle", "pi_mode": "off"}]}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    for run in ("a", "b"):
        assert cli.main(["bench", "--config", str(path), "--out", str(tmp_path / run)]) == 0
    names = ["metrics.csv", "aggregate.csv", "pareto.json"]
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    record_property("detail", f"{len(match)}/{len(names)} reports identical")
    assert match == names
