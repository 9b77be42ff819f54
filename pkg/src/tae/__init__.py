"""Posterior recovery from corrupted data with tomographic auto-encoders, plus
the MVAE and MIWAE baselines they are compared against."""
from .corruption import CorruptedSample, NoiseSpec
from .distributions import DiagGaussian
from .models import Arch, MvaeModel, TaeModel, init_model, load_checkpoint, save_checkpoint
from .objectives import PenaltyConfig, miwae_elbo, mvae_elbo, tae_objective, tae_objective_beta
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Arch", "CorruptedSample", "DiagGaussian", "MvaeModel", "NoiseSpec", "PenaltyConfig",
    "TaeModel", "TrainConfig", "init_model", "load_checkpoint", "miwae_elbo", "mvae_elbo",
    "save_checkpoint", "tae_objective", "tae_objective_beta", "train",
]
