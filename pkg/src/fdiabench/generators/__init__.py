"""Generator pool: family registry, training entry point and manifest output."""

from __future__ import annotations

import json
from pathlib import Path

from .. import autodiff as ad
from .base import (
    GenerativeModel,
    GeneratorHandle,
    KnowledgeCondition,
    beta_schedule,
    build_condition_vector,
    knowledge_to_mitre,
    tc_penalty,
)
from .ddpm import DDPMGenerator, linear_betas
from .flow import RealNVPGenerator, flow_logprob
from .gmm import GMMGenerator
from .oracle import HDeltaOracle
from .pi import apply_pi
from .vae import MMDVAEGenerator, MMDVAEWGANGenerator, TCMMDVAEGenerator
from .wgan import WGANGenerator

FAMILIES = {
    "wgan": WGANGenerator,
    "mmd_vae": MMDVAEGenerator,
    "tc_mmd_vae": TCMMDVAEGenerator,
    "mmd_vae_wgan": MMDVAEWGANGenerator,
    "realnvp": RealNVPGenerator,
    "ddpm": DDPMGenerator,
    "gmm": GMMGenerator,
    "hdelta_oracle": HDeltaOracle,
}

EPOCH_BOUNDS = (1, 300)
LR_BOUNDS = (1e-4, 5e-4)


def make_generator(family: str, **params) -> GenerativeModel:
    try:
        cls = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown generator family {family!r}; known: {sorted(FAMILIES)}") from None
    est = cls()
    valid = est.get_params()
    unknown = set(params) - set(valid)
    if unknown:
        raise ValueError(f"{family} does not accept {sorted(unknown)}")
    if "epochs" in params and not EPOCH_BOUNDS[0] <= params["epochs"] <= EPOCH_BOUNDS[1]:
        raise ValueError(f"epochs must lie in {EPOCH_BOUNDS}")
    if "lr" in params and not LR_BOUNDS[0] <= params["lr"] <= LR_BOUNDS[1]:
        raise ValueError(f"lr must lie in {LR_BOUNDS}")
    if params.get("warmup_epochs", 0) > params.get("epochs", valid.get("epochs", 10**9)):
        raise ValueError("warmup_epochs cannot exceed epochs")
    return est.set_params(**params)


def train_generator(family, X_normalized, cond=None, seed=0, pi_mode="off", **params) -> GeneratorHandle:
    est = make_generator(family, **params)
    if "seed" in est.get_params():
        est.set_params(seed=seed)
    est.fit(X_normalized, cond)
    return GeneratorHandle(family, est, str(pi_mode), seed, getattr(est, "latent_dim", None))


def save_pool(handles, directory: str | Path) -> Path:
    """Write one checkpoint per network and a manifest listing every handle."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, h in enumerate(handles):
        nets = h.estimator.networks() or {}
        ckpt = None
        if nets:
            ckpt = f"{i:03d}_{h.family}_{h.pi_mode}_{h.train_seed}.json"
            ad.save_checkpoint(nets, directory / ckpt)
        params = {k: v for k, v in h.estimator.get_params().items() if isinstance(v, (int, float, str, bool))}
        entries.append({
            "family": h.family,
            "pi_mode": h.pi_mode,
            "seed": h.train_seed,
            "checkpoint": ckpt,
            "train_config": params,
        })
    manifest = directory / "pool_manifest.json"
    manifest.write_text(json.dumps({"generators": entries}, indent=2, sort_keys=True) + "\n")
    return manifest


__all__ = [
    "FAMILIES",
    "DDPMGenerator",
    "GMMGenerator",
    "GenerativeModel",
    "GeneratorHandle",
    "HDeltaOracle",
    "KnowledgeCondition",
    "MMDVAEGenerator",
    "MMDVAEWGANGenerator",
    "RealNVPGenerator",
    "TCMMDVAEGenerator",
    "WGANGenerator",
    "apply_pi",
    "beta_schedule",
    "build_condition_vector",
    "flow_logprob",
    "knowledge_to_mitre",
    "linear_betas",
    "make_generator",
    "save_pool",
    "tc_penalty",
    "train_generator",
]
