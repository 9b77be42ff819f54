"""Flat run configuration shared by every CLI command."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .evaluation import GridSpec, RefitConfig
from .models import Arch
from .training import TrainConfig


class ConfigError(ValueError):
    pass


DATASETS = ("mnist", "fashion", "har", "synth2d")
METRICS = ("refit_elbo", "psnr", "diversity")


@dataclass
class RunConfig:
    # dataset
    dataset: str = "mnist"
    data_dir: Optional[str] = None
    split: str = "train"
    n_samples: Optional[int] = None
    synth_n: int = 2000
    synth_seed: int = 0
    har_scaling: str = "per_feature"
    # corruption
    observed_ratio: float = 0.5
    window: Optional[list] = None
    sigma: float = 0.1
    noise_mode: str = "fixed"
    corruption_seed: int = 0
    # architecture
    z_dim: int = 20
    zp_dim: int = 5
    hidden: int = 400
    prior_hidden: int = 50
    n_layers: int = 2
    logvar_min: float = -10.0
    logvar_max: float = 10.0
    conditional: bool = False
    # training
    model: str = "tae"
    iterations: int = 500_000
    batch_size: int = 20
    learning_rate: float = 2e-4
    lam: float = 2.0
    C: float = 10.0
    gamma0: float = 0.01
    gammaF: float = 1.0
    warmup_start: int = 50_000
    warmup_end: int = 100_000
    k: int = 20
    seed: int = 0
    log_every: int = 100
    checkpoint_every: int = 0
    # evaluation
    metrics: list = field(default_factory=lambda: list(METRICS))
    n_eval: int = 1000
    refit_iterations: int = 50_000
    refit_lr: float = 1e-3
    refit_draws: int = 100
    n_draws: int = 16
    observations: list = field(default_factory=lambda: list(range(8)))
    classify: bool = False
    n_labelled: int = 1000
    class_draws: int = 400
    classifier_iterations: int = 5000
    # sweep
    sweep_C: list = field(default_factory=lambda: [5.0, 10.0, 20.0])
    sweep_lambda: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    # 2-D oracle
    grid_res: int = 200
    supersample: int = 4
    oracle_obs: int = 20
    oracle_draws: int = 1000
    ce_bins: int = 20
    # paths
    out_dir: Optional[str] = None
    data_path: Optional[str] = None
    checkpoint: Optional[str] = None

    def validate(self) -> "RunConfig":
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        unknown = [m for m in self.metrics if m not in METRICS]
        if unknown:
            raise ConfigError(f"unknown metric {unknown[0]!r}")
        if not 0.0 <= self.observed_ratio <= 1.0:
            raise ConfigError("observed_ratio must lie in [0, 1]")
        if self.window is not None and len(self.window) != 2:
            raise ConfigError("window must be [height, width]")
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if self.grid_res % self.ce_bins:
            raise ConfigError("grid_res must be a multiple of ce_bins")
        try:
            self.arch(2)
            self.train_config()
        except ValueError as err:
            raise ConfigError(str(err)) from err
        return self

    def arch(self, d: int) -> Arch:
        return Arch(d=d, z_dim=self.z_dim, zp_dim=self.zp_dim, hidden=self.hidden,
                    prior_hidden=self.prior_hidden, n_layers=self.n_layers,
                    logvar_min=self.logvar_min, logvar_max=self.logvar_max,
                    conditional=self.conditional, noise_head=self.noise_mode == "inferred")

    def train_config(self) -> TrainConfig:
        return TrainConfig(model=self.model, iterations=self.iterations, batch_size=self.batch_size,
                           learning_rate=self.learning_rate, lam=self.lam, C=self.C, gamma0=self.gamma0,
                           gammaF=self.gammaF, warmup_start=self.warmup_start, warmup_end=self.warmup_end,
                           z_dim=self.z_dim, zp_dim=self.zp_dim, seed=self.seed, miwae_k=self.k,
                           noise_mode=self.noise_mode, sigma=self.sigma, log_every=self.log_every,
                           checkpoint_every=self.checkpoint_every)

    def refit_config(self) -> RefitConfig:
        return RefitConfig(iterations=self.refit_iterations, learning_rate=self.refit_lr,
                           final_draws=self.refit_draws, seed=self.seed)

    def grid_spec(self) -> GridSpec:
        return GridSpec(res=(self.grid_res, self.grid_res), supersample=self.supersample)

    def output_dir(self) -> Path:
        if self.out_dir:
            return Path(self.out_dir)
        return Path(os.environ.get("TAE_OUTPUT_ROOT", "runs")) / self.dataset

    def run_dir(self) -> Path:
        """Per-model artifacts live below the dataset directory."""
        return self.output_dir() / f"{self.model}-seed{self.seed}"

    def corrupted_path(self) -> Path:
        return Path(self.data_path) if self.data_path else self.output_dir() / "corrupted.npz"

    def checkpoint_path(self) -> Path:
        return Path(self.checkpoint) if self.checkpoint else self.run_dir() / "model.npz"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


# desk-scale presets; anything not listed keeps the full-scale defaults
PRESETS = {
    "paper": {},
    "synth2d": {
        "dataset": "synth2d", "iterations": 20_000, "warmup_start": 2_000, "warmup_end": 5_000,
        "z_dim": 2, "zp_dim": 2, "hidden": 400, "logvar_min": -20.0, "logvar_max": 2.0,
        "learning_rate": 1e-3, "n_eval": 500, "refit_iterations": 5_000, "n_draws": 200,
    },
    "mnist-subset": {
        "dataset": "mnist", "n_samples": 10_000, "iterations": 100_000, "warmup_start": 10_000,
        "warmup_end": 50_000, "refit_iterations": 10_000,
    },
}


def field_names() -> list:
    return [f.name for f in fields(RunConfig)]


def build(preset: Optional[str] = None, file_values: Optional[dict] = None,
          overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then preset, then config-file values, then explicit overrides."""
    values = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    for source in (file_values or {}, overrides or {}):
        for key, val in source.items():
            if key not in field_names():
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = val
    try:
        cfg = RunConfig(**values)
    except TypeError as err:
        raise ConfigError(str(err)) from err
    return cfg.validate()


def load_file(path) -> tuple:
    """Returns (preset name or None, remaining key/values)."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from err
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    data = dict(data)
    return data.pop("preset", None), data
