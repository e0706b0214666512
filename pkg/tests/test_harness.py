import numpy as np
import pytest

from fdiabench.config import CellSpec, ExperimentConfig, config_from_dict, load_config
from fdiabench.exceptions import ConfigError, TrainingError
from fdiabench.harness import (
    Runner,
    aggregate,
    run_ablation,
    run_block_a,
    run_block_b,
    run_block_c,
    run_recovery_demo,
)

SMALL = dict(
    corpus={"n_samples": 500},
    roster=[
        {"family": "wgan", "params": {"epochs": 5}},
        {"family": "gmm", "params": {"n_components": 2}},
        {"family": "hdelta_oracle", "pi_mode": "off"},
    ],
    seeds=[0, 1],
    eval_passes=1,
    iforest_trees=20,
    ae_epochs=5,
    blend_grid=[0.0, 0.5, 1.0],
)


@pytest.fixture(scope="module")
def cfg():
    return config_from_dict(SMALL)


@pytest.fixture(scope="module")
def runner(cfg):
    return Runner(cfg)


@pytest.fixture(scope="module")
def block_a(cfg, runner):
    return run_block_a(cfg, runner)


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        config_from_dict({"seeds": []})
    with pytest.raises(ConfigError):
        config_from_dict({"k_grid": [0.0, 1.5]})
    with pytest.raises(ConfigError):
        config_from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        CellSpec("gan")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")
    assert ExperimentConfig().seeds == (42, 43, 44, 45, 46)
    assert ExperimentConfig().k_grid == (0.0, 0.25, 0.5, 0.75, 1.0)


def test_block_a_bookkeeping(block_a):
    recs = block_a["records"]
    assert len(recs) == 3 * 2
    assert [(r.model, r.seed) for r in recs] == sorted((r.model, r.seed) for r in recs)
    assert not block_a["failures"]
    agg = {r["model"]: r for r in block_a["aggregate"]}
    assert all(r["n_seeds"] == 2 for r in agg.values())


def test_oracle_on_front_evasion_face(block_a):
    oracle = [r for r in block_a["records"] if r.model == "hdelta_oracle/off"]
    assert all(r.eps_bdd == 1.0 for r in oracle)
    assert "hdelta_oracle/off" in block_a["pareto"].non_dominated
    assert max(r["eps_bdd_mean"] for r in block_a["aggregate"]) == 1.0


def test_eval_reads_after_thresholds(runner, block_a):
    events = runner.events
    first_read = events.index("eval_read")
    frozen = [i for i, e in enumerate(events) if e.startswith("threshold_frozen")]
    assert "threshold_frozen:bdd" in events and frozen
    assert max(frozen) < first_read
    assert events[0] == "split"


def test_metric_ranges(block_a):
    for r in block_a["records"]:
        assert r.mmd >= 0 and r.w1 >= 0 and 0 <= r.phi <= 1 and 0 <= r.psi <= 1


def test_aggregate_excludes_failures():
    from fdiabench.metrics import EvalRecord

    recs = [EvalRecord("a", 0, 0.0, mmd=1.0), EvalRecord("a", 1, 0.0, mmd=3.0), EvalRecord("a", 2, 0.0)]
    (row,) = aggregate(recs)
    assert row["n_seeds"] == 2 and row["n_failed"] == 1
    assert row["mmd_mean"] == 2.0 and row["mmd_sd"] == pytest.approx(np.sqrt(2))


def test_cell_failure_is_recorded(cfg, runner, monkeypatch):
    original = Runner.train

    def flaky(self, cell, seed, k):
        if cell.family == "wgan":
            raise TrainingError("diverged")
        return original(self, cell, seed, k)

    monkeypatch.setattr(Runner, "train", flaky)
    out = run_block_a(cfg, runner)
    failed = [r for r in out["records"] if r.failed]
    assert {r.model for r in failed} == {"wgan/physical"} and len(out["failures"]) == 2
    assert len(out["records"]) == 6


def test_block_b_rows_and_tests(cfg, runner):
    bcfg = cfg.replace(k_grid=(0.0, 1.0), block_b_cells=("gmm/physical", "hdelta_oracle/degraded"))
    out = run_block_b(bcfg, runner)
    assert len(out["records"]) == 2 * 2 * 2
    tests = {t["model"]: t for t in out["tests"]}
    assert 0 <= tests["hdelta_oracle/degraded"]["p_value"] <= 1
    assert "eta_squared" in tests["gmm/physical"]


def test_block_b_single_k_notice(cfg, runner):
    out = run_block_b(cfg.replace(k_grid=(0.5,), block_b_cells=("gmm/physical",)), runner)
    assert "skipped" in out["tests"][0]["notice"]


def test_block_c(cfg, runner):
    out = run_block_c(cfg.replace(seeds=(0,)), runner, front_cells=("hdelta_oracle/off",))
    assert len(out["profiles"]) == 1
    prof = out["profiles"][0]["profile"]
    assert -1 <= prof.kappa <= 1 and len(prof.top5_model) == 5
    assert [row["t"] for row in out["sweep"]] == [0.0, 0.5, 1.0]
    assert out["sweep"][-1]["leakage"] <= 1e-8


def test_recovery_demo(cfg, runner):
    out = run_recovery_demo(cfg, runner)
    assert {r["model"] for r in out["rows"]} == {c.name for c in cfg.roster}
    for row in out["rows"]:
        assert row["eps_bdd_harmonised"] == 1.0
        assert row["eps_bdd_broken_normalized"] <= row["eps_bdd_harmonised"]
    assert out["mean_leakage"] > 0


def test_ablations(cfg, runner, block_a):
    sel = run_ablation(cfg, "no_selection", runner)
    assert sel["front"] == () and all(r["delta_mmd"] == 0 for r in sel["rows"])
    cond = run_ablation(cfg, "no_conditioning", runner)
    assert all(r["delta_mmd"] == 0 for r in cond["rows"])
    assert len(cond["rows"]) == 6
    with pytest.raises(ValueError):
        run_ablation(cfg, "no_temporal", runner)


def test_no_physics_ablation_changes_pi(cfg, runner):
    out = run_ablation(cfg.replace(roster=(CellSpec("gmm"),)), "no_physics", runner)
    assert any(r["delta_mmd"] != 0 for r in out["rows"])
