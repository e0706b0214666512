"""Experiment runner: shared data preparation, per-cell evaluation and the experiment blocks.

Every run builds one synthetic corpus, splits it chronologically into generation,
detection and evaluation slices, freezes all detector thresholds on the detection
slice, and only then touches the evaluation slice. Per-cell failures are recorded as
rows with empty metrics instead of aborting the sweep.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .config import CellSpec, ExperimentConfig
from .detectors import AutoencoderDetector, IsolationForestDetector
from .estimation import attacked_residuals, build_projector, calibrate_threshold, evasion_rate
from .exceptions import FDIAError
from .generators import HDeltaOracle, apply_pi, build_condition_vector, make_generator
from .grid import build_measurement_model, chronological_split, load_case, synthesize_corpus
from .metrics import DiscriminatorProbe, EvalRecord, attack_impact, mmd_rbf, pareto_front, sliced_w1
from .physics import (
    FeatureScaler,
    PhysicsConfig,
    PiMode,
    blended_project,
    leakage_report,
    mean_leakage,
    physics_consistency,
)
from .stats import kruskal_wallis
from .xai import cross_level_profile

log = logging.getLogger(__name__)

PASS_SEED_STRIDE = 1000


@dataclass
class Prepared:
    """Everything that depends only on the config, never on a generator."""

    model: object
    projector: object
    gen: object
    det: object
    eval: object
    scaler: FeatureScaler
    physics: PhysicsConfig
    metric_scaler: FeatureScaler
    tau: float
    events: list = field(default_factory=list)


@dataclass
class CellOutcome:
    record: EvalRecord
    attacks: np.ndarray | None = None
    raw_samples: np.ndarray | None = None
    error: str | None = None


def prepare(cfg: ExperimentConfig) -> Prepared:
    case = load_case(cfg.case)
    model = build_measurement_model(case, cfg.corpus.noise_sigma)
    c = cfg.corpus
    corpus = synthesize_corpus(model, case, c.n_samples, c.noise_sigma, c.load_spread, c.bias_sigma,
                               c.attack_mean_scale, c.attack_sigma, rng_seed=c.seed)
    gen, det, ev = chronological_split(corpus, c.split)
    attacked_gen = gen.Z + gen.C_real
    events = ["split"]
    tau = calibrate_threshold(model, det.Z).tau
    events.append("threshold_frozen:bdd")
    return Prepared(
        model=model,
        projector=build_projector(model),
        gen=gen,
        det=det,
        eval=ev,
        scaler=FeatureScaler().fit(attacked_gen),
        physics=PhysicsConfig.from_corpus(attacked_gen),
        metric_scaler=FeatureScaler().fit(gen.C_real),
        tau=tau,
        events=events,
    )


class Runner:
    """Holds prepared data and per-seed detectors for one configuration."""

    def __init__(self, cfg: ExperimentConfig, prepared: Prepared | None = None):
        self.cfg = cfg
        self.data = prepared or prepare(cfg)
        self._detectors: dict = {}

    @property
    def events(self) -> list:
        return self.data.events

    def detectors(self, seed: int):
        if seed not in self._detectors:
            Zd = self.data.det.Z
            self._detectors[seed] = (
                IsolationForestDetector(n_trees=self.cfg.iforest_trees, seed=seed).fit(Zd),
                AutoencoderDetector(epochs=self.cfg.ae_epochs, seed=seed).fit(Zd),
            )
            self.data.events.append(f"threshold_frozen:detectors:{seed}")
        return self._detectors[seed]

    def train(self, cell: CellSpec, seed: int, k: float):
        d = self.data
        cond = build_condition_vector(d.model.H, k)
        if cell.family == "hdelta_oracle":
            est = HDeltaOracle(H=d.model.H, scaler=d.scaler, use_knowledge=cell.use_knowledge)
        else:
            params = dict(cell.params)
            defaults = make_generator(cell.family).get_params()
            if "epochs" in defaults:
                params["epochs"] = min(params.get("epochs", defaults["epochs"]), self.cfg.max_epochs)
            if "warmup_epochs" in defaults:
                params["warmup_epochs"] = min(params.get("warmup_epochs", defaults["warmup_epochs"]), params["epochs"])
            est = make_generator(cell.family, **params, seed=seed)
        est.fit(d.scaler.transform(d.gen.C_real), cond)
        return est, cond

    def generate(self, est, cond, pi_mode: str, sample_seed: int):
        d = self.data
        Z = d.eval.Z
        raw = est.sample(len(Z), cond, seed=sample_seed)
        return raw, apply_pi(raw, Z, d.physics, d.scaler, pi_mode, d.model)

    def score(self, attacks: np.ndarray, seed: int, sample_seed: int) -> dict:
        d = self.data
        iforest, ae = self.detectors(seed)
        d.events.append("eval_read")
        Z, C_real = d.eval.Z, d.eval.C_real
        ms = d.metric_scaler
        G, R = ms.transform(attacks), ms.transform(C_real)
        return {
            "mmd": mmd_rbf(G, R),
            "w1": sliced_w1(G, R, seed=sample_seed),
            "eps_bdd": evasion_rate(d.model, Z, attacks, d.tau, self.cfg.evasion_mode),
            "eps_ae": ae.evasion_rate(attacks, Z),
            "eps_if": iforest.evasion_rate(attacks, Z),
            "phi": physics_consistency(attacks, Z, d.physics),
            "psi": DiscriminatorProbe(seed=sample_seed).fit(R, G).score_,
            "impact": attack_impact(attacks, C_real),
        }

    def run_cell(self, cell: CellSpec, seed: int, k: float, keep_attacks: bool = False) -> CellOutcome:
        pi_mode = "off" if self.cfg.no_physics else cell.pi_mode
        k_used = 0.0 if self.cfg.no_conditioning else k
        try:
            est, cond = self.train(cell, seed, k_used)
            passes = []
            attacks = raw = None
            for p in range(self.cfg.eval_passes):
                sample_seed = seed * PASS_SEED_STRIDE + p
                raw, attacks = self.generate(est, cond, pi_mode, sample_seed)
                if not np.all(np.isfinite(attacks)):
                    raise FDIAError("generated attacks contain non-finite values")
                passes.append(self.score(attacks, seed, sample_seed))
            metrics = {key: float(np.mean([m[key] for m in passes])) for key in passes[0]}
            rec = EvalRecord(cell.name, seed, float(k), **metrics)
            return CellOutcome(rec, attacks if keep_attacks else None, raw if keep_attacks else None)
        except (FDIAError, FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("cell %s seed %s k %s failed: %s", cell.name, seed, k, exc)
            return CellOutcome(EvalRecord(cell.name, seed, float(k)), error=f"{type(exc).__name__}: {exc}")


def sort_key(rec: EvalRecord):
    return (rec.model, rec.k, rec.seed)


def _run_jobs(runner: Runner, jobs, n_jobs: int):
    # detectors are fitted up front so worker processes never calibrate on their own
    for seed in sorted({s for _, s, _ in jobs}):
        runner.detectors(seed)
    if n_jobs == 1:
        return [runner.run_cell(c, s, k) for c, s, k in jobs]
    return Parallel(n_jobs=n_jobs)(delayed(runner.run_cell)(c, s, k) for c, s, k in jobs)


def aggregate(records) -> list[dict]:
    """Mean and SD over seeds per (model, k); failed seeds are excluded and counted."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.model, r.k), []).append(r)
    rows = []
    for (model, k), recs in sorted(groups.items()):
        ok = [r for r in recs if not r.failed]
        row = {"model": model, "k": k, "n_seeds": len(ok), "n_failed": len(recs) - len(ok)}
        for name in ("mmd", "w1", "eps_bdd", "eps_ae", "eps_if", "phi", "psi", "impact"):
            vals = [getattr(r, name) for r in ok if getattr(r, name) is not None]
            row[f"{name}_mean"] = float(np.mean(vals)) if vals else None
            row[f"{name}_sd"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else (0.0 if vals else None)
        rows.append(row)
    return rows


def _front_from_aggregate(agg_rows):
    mean_records = [
        {"model": r["model"], "mmd": r["mmd_mean"], "eps_bdd": r["eps_bdd_mean"], "phi": r["phi_mean"], "impact": r["impact_mean"]}
        for r in agg_rows
    ]
    return pareto_front(mean_records, key=lambda r: r["model"])


def run_block_a(cfg: ExperimentConfig, runner: Runner | None = None) -> dict:
    runner = runner or Runner(cfg)
    jobs = [(cell, seed, cfg.default_k) for cell in cfg.roster for seed in cfg.seeds]
    outcomes = _run_jobs(runner, jobs, cfg.n_jobs)
    records = sorted((o.record for o in outcomes), key=sort_key)
    agg = aggregate(records)
    front = _front_from_aggregate(agg) if not cfg.no_selection else None
    return {
        "records": records,
        "aggregate": agg,
        "pareto": front,
        "failures": [(o.record.model, o.record.seed, o.error) for o in outcomes if o.error],
    }


def run_block_b(cfg: ExperimentConfig, runner: Runner | None = None) -> dict:
    runner = runner or Runner(cfg)
    cells = [cfg.cell(name) for name in cfg.block_b_cells]
    jobs = [(cell, seed, k) for cell in cells for k in cfg.k_grid for seed in cfg.seeds]
    outcomes = _run_jobs(runner, jobs, cfg.n_jobs)
    records = sorted((o.record for o in outcomes), key=sort_key)
    tests = []
    for cell in cells:
        if len(cfg.k_grid) < 2:
            tests.append({"model": cell.name, "notice": "k grid has one level; Kruskal-Wallis skipped"})
            continue
        groups = [[r.w1 for r in records if r.model == cell.name and r.k == k and not r.failed] for k in cfg.k_grid]
        if any(len(g) == 0 for g in groups):
            tests.append({"model": cell.name, "notice": "a k level has no successful seeds; test skipped"})
            continue
        rep = kruskal_wallis(groups)
        tests.append({"model": cell.name, "metric": "w1", "H": rep.statistic, "p_value": rep.p_value,
                      "eta_squared": rep.effect_size, "n": rep.n})
    return {
        "records": records,
        "tests": tests,
        "failures": [(o.record.model, o.record.seed, o.error) for o in outcomes if o.error],
    }


def run_block_c(cfg: ExperimentConfig, runner: Runner | None = None, front_cells=None) -> dict:
    """Attribution on Pareto-optimal cells, with the harmonised mode forced, plus the blended-projection sweep."""
    runner = runner or Runner(cfg)
    if front_cells is None:
        front_cells = run_block_a(cfg, runner)["pareto"].non_dominated
    d = runner.data
    profiles, sweep, failures = [], [], []
    for name in front_cells:
        cell = cfg.cell(name)
        for seed in cfg.seeds:
            try:
                est, cond = runner.train(cell, seed, cfg.default_k)
                sample_seed = seed * PASS_SEED_STRIDE
                _, physical = runner.generate(est, cond, "physical", sample_seed)
            except (FDIAError, FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
                failures.append((name, seed, f"{type(exc).__name__}: {exc}"))
                continue
            for t in cfg.blend_grid:
                C_t = blended_project(d.projector, physical, t)
                prof = _attribution(d, C_t, sample_seed)
                sweep.append({
                    "model": name, "seed": seed, "t": float(t),
                    "eps_bdd": evasion_rate(d.model, d.eval.Z, C_t, d.tau, cfg.evasion_mode),
                    "leakage": float(np.mean(np.linalg.norm(d.projector.leak(C_t), axis=1))),
                    "kappa": prof.kappa,
                })
                if t == 1.0:
                    profiles.append({"model": name, "seed": seed, "profile": prof})
    return {"profiles": profiles, "sweep": sweep, "failures": failures}


def _attribution(d: Prepared, attacks, seed):
    """Probe clean vs attacked evaluation measurements, then compare data- and model-level rankings."""
    Z = d.eval.Z
    attacked = Z + attacks
    probe = DiscriminatorProbe(seed=seed).fit(Z, attacked)
    return cross_level_profile(attacked, Z, probe.logit_net_, baseline=Z.mean(axis=0))


def run_recovery_demo(cfg: ExperimentConfig, runner: Runner | None = None) -> dict:
    """Broken-normalized versus harmonised BDD evasion for each PI-capable cell, with the leakage diagnostic."""
    runner = runner or Runner(cfg)
    d = runner.data
    seed = cfg.seeds[0]
    rows, failures = [], []
    leak = mean_leakage(d.projector, d.scaler)
    for cell in cfg.roster:
        try:
            est, cond = runner.train(cell, seed, cfg.default_k)
            raw = est.sample(len(d.eval.Z), cond, seed=seed * PASS_SEED_STRIDE)
        except (FDIAError, FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            failures.append((cell.name, seed, f"{type(exc).__name__}: {exc}"))
            continue
        row = {"model": cell.name, "seed": seed, "mean_leakage": leak, "tau": d.tau}
        for mode in (PiMode.BROKEN_NORMALIZED, PiMode.HARMONISED):
            C = apply_pi(raw, d.eval.Z, d.physics, d.scaler, mode, d.model)
            row[f"eps_bdd_{mode.value}"] = evasion_rate(d.model, d.eval.Z, C, d.tau, cfg.evasion_mode)
            if mode is PiMode.BROKEN_NORMALIZED:
                J = attacked_residuals(d.model, d.eval.Z, C, cfg.evasion_mode)
                row["inflation_ratio"] = float(np.mean(J) / d.tau)
                row["expected_residual"] = float(np.mean(J))
        rows.append(row)
    return {"rows": rows, "mean_leakage": leak, "failures": failures}


def leakage_summary(runner: Runner, attacks) -> dict:
    d = runner.data
    return leakage_report(d.model, d.projector, d.scaler, attacks, d.tau)


ABLATIONS = ("no_physics", "no_selection", "no_conditioning")


def run_ablation(cfg: ExperimentConfig, condition: str, runner: Runner | None = None) -> dict:
    """Delta-MMD of each (cell, seed) under one ablation relative to the full configuration."""
    if condition not in ABLATIONS:
        raise ValueError(f"unknown ablation {condition!r}; choose from {ABLATIONS}")
    runner = runner or Runner(cfg)
    full = run_block_a(cfg, runner)
    ablated_cfg = cfg.replace(**{condition: True})
    ablated_runner = Runner(ablated_cfg, runner.data)
    ablated_runner._detectors = runner._detectors
    ablated = full if condition == "no_selection" else run_block_a(ablated_cfg, ablated_runner)
    base = {(r.model, r.seed): r for r in full["records"]}
    rows = []
    for r in ablated["records"]:
        b = base[(r.model, r.seed)]
        delta = None if (r.failed or b.failed) else r.mmd - b.mmd
        rows.append({"condition": condition, "model": r.model, "seed": r.seed, "mmd_full": b.mmd,
                     "mmd_ablated": r.mmd, "delta_mmd": delta})
    front = () if condition == "no_selection" else ablated["pareto"].non_dominated
    return {"rows": rows, "front": front, "full_front": full["pareto"].non_dominated,
            "failures": full["failures"] + (ablated["failures"] if ablated is not full else [])}

