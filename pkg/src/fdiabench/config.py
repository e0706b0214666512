"""Experiment configuration: JSON in, validated dataclasses out."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .exceptions import ConfigError
from .generators import FAMILIES
from .physics import PiMode

DEFAULT_SEEDS = (42, 43, 44, 45, 46)
DEFAULT_K_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class CellSpec:
    """One pool member: a generator family, its hyperparameters and a physics-informed mode."""

    family: str
    pi_mode: str = "physical"
    params: dict = field(default_factory=dict)
    name: str = ""
    use_knowledge: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        try:
            PiMode(self.pi_mode)
        except ValueError:
            raise ConfigError(f"unknown pi_mode {self.pi_mode!r}") from None
        if not self.name:
            object.__setattr__(self, "name", f"{self.family}/{self.pi_mode}")

    def with_mode(self, pi_mode: str) -> "CellSpec":
        return CellSpec(self.family, pi_mode, dict(self.params), self.name, self.use_knowledge)


def default_roster() -> tuple:
    return (
        CellSpec("wgan"),
        CellSpec("mmd_vae"),
        CellSpec("tc_mmd_vae", name="tc_mmd_vae_warm/physical"),
        CellSpec("tc_mmd_vae", params={"warmup": False}, name="tc_mmd_vae_static/physical"),
        CellSpec("realnvp"),
        CellSpec("ddpm"),
        CellSpec("mmd_vae_wgan"),
        CellSpec("gmm"),
        CellSpec("hdelta_oracle", pi_mode="off"),
    )


@dataclass(frozen=True)
class CorpusConfig:
    n_samples: int = 2000
    noise_sigma: float = 0.01
    load_spread: float = 0.2
    bias_sigma: float | None = None
    attack_mean_scale: float = 0.05
    attack_sigma: float = 0.02
    split: tuple = (0.6, 0.2, 0.2)
    seed: int = 42


@dataclass(frozen=True)
class ExperimentConfig:
    case: str = "ieee14"
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    roster: tuple = field(default_factory=default_roster)
    k_grid: tuple = DEFAULT_K_GRID
    default_k: float = 0.0
    seeds: tuple = DEFAULT_SEEDS
    eval_passes: int = 5
    evasion_mode: str = "isolated"
    out_dir: str = "results"
    max_epochs: int = 200
    block_b_cells: tuple = ("wgan/physical", "tc_mmd_vae_warm/physical", "ddpm/physical", "hdelta_oracle/degraded")
    blend_grid: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    no_physics: bool = False
    no_selection: bool = False
    no_conditioning: bool = False
    iforest_trees: int = 100
    ae_epochs: int = 60
    n_jobs: int = 1

    def __post_init__(self):
        if len(self.seeds) < 1:
            raise ConfigError("at least one seed is required")
        if any(not 0.0 <= k <= 1.0 for k in (*self.k_grid, self.default_k)):
            raise ConfigError("k values must lie in [0, 1]")
        if self.evasion_mode not in ("isolated", "superposed"):
            raise ConfigError(f"evasion_mode must be isolated or superposed, got {self.evasion_mode!r}")
        if self.eval_passes < 1 or self.max_epochs < 1:
            raise ConfigError("eval_passes and max_epochs must be positive")
        names = [c.name for c in self.roster]
        if len(set(names)) != len(names):
            raise ConfigError("roster cell names must be unique")

    def cell(self, name: str) -> CellSpec:
        for c in self.roster:
            if c.name == name:
                return c
        if name == "hdelta_oracle/degraded":
            return CellSpec("hdelta_oracle", "off", name=name, use_knowledge=True)
        raise ConfigError(f"no roster cell named {name!r}")

    def replace(self, **changes) -> "ExperimentConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ExperimentConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roster"] = [asdict(c) for c in self.roster]
        return d


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw = dict(data)
    try:
        if "corpus" in kw:
            ck = {f.name for f in fields(CorpusConfig)}
            bad = set(kw["corpus"]) - ck
            if bad:
                raise ConfigError(f"unknown corpus keys: {sorted(bad)}")
            c = dict(kw["corpus"])
            if "split" in c:
                c["split"] = tuple(c["split"])
            kw["corpus"] = CorpusConfig(**c)
        if "roster" in kw:
            kw["roster"] = tuple(CellSpec(**c) for c in kw["roster"])
        for key in ("k_grid", "seeds", "block_b_cells", "blend_grid"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data)
