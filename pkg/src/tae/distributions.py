"""Diagonal Gaussian algebra.

Means and log-variances may be raw arrays or autodiff Vars. All functions
reduce over the last axis, so a batch of shape (n, d) yields shape (n,).
"""
from dataclasses import dataclass
from typing import Any

import numpy as np

from .compute import autodiff as ad

LOG_2PI = float(np.log(2.0 * np.pi))
LOG_2PIE = LOG_2PI + 1.0


@dataclass(frozen=True)
class DiagGaussian:
    mean: Any
    logvar: Any

    def __post_init__(self):
        if np.shape(ad.value(self.mean)) != np.shape(ad.value(self.logvar)):
            raise ValueError(
                f"mean shape {np.shape(ad.value(self.mean))} != logvar shape {np.shape(ad.value(self.logvar))}")

    @property
    def dim(self) -> int:
        return int(np.shape(ad.value(self.mean))[-1])

    @classmethod
    def standard(cls, shape) -> "DiagGaussian":
        return cls(np.zeros(shape), np.zeros(shape))

    def detach(self) -> "DiagGaussian":
        return DiagGaussian(ad.value(self.mean), ad.value(self.logvar))


def _check_dims(a, b, what):
    da, db = np.shape(ad.value(a))[-1], np.shape(ad.value(b))[-1]
    if da != db:
        raise ValueError(f"{what}: dimension mismatch ({da} vs {db})")


def log_density(g: DiagGaussian, x, mask=None):
    _check_dims(g.mean, x, "log_density")
    return ad.gauss_logpdf(x, g.mean, g.logvar, mask)


def entropy(g: DiagGaussian):
    d = g.dim
    return 0.5 * (d * LOG_2PIE + ad.sum(g.logvar, axis=-1))


def kl(g1: DiagGaussian, g2: DiagGaussian):
    """KL(g1 || g2) in closed form."""
    _check_dims(g1.mean, g2.mean, "kl")
    diff = ad.sub(g1.mean, g2.mean)
    ratio = ad.exp(ad.sub(g1.logvar, g2.logvar))
    maha = ad.mul(ad.mul(diff, diff), ad.exp(ad.neg(g2.logvar)))
    per_dim = ad.sub(ad.add(ratio, maha), ad.add(1.0, ad.sub(g1.logvar, g2.logvar)))
    return 0.5 * ad.sum(per_dim, axis=-1)


def kl_standard(g: DiagGaussian):
    """KL(g || N(0, I))."""
    per_dim = ad.sub(ad.add(ad.exp(g.logvar), ad.mul(g.mean, g.mean)), ad.add(1.0, g.logvar))
    return 0.5 * ad.sum(per_dim, axis=-1)


def rsample(g: DiagGaussian, rng: np.random.Generator, eps=None):
    """Reparametrised draw mean + exp(logvar / 2) * eps."""
    if eps is None:
        eps = rng.standard_normal(np.shape(ad.value(g.mean)))
    return ad.add(g.mean, ad.mul(ad.exp(ad.mul(g.logvar, 0.5)), eps))
