"""Corruption process: masks, additive Gaussian noise, observation likelihoods."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .compute import autodiff as ad
from .distributions import DiagGaussian


@dataclass(frozen=True)
class NoiseSpec:
    mode: str = "fixed"  # "fixed" or "inferred"
    sigma: float = 0.1

    def __post_init__(self):
        if self.mode not in ("fixed", "inferred"):
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if self.mode == "fixed" and not self.sigma > 0:
            raise ValueError("sigma must be positive in fixed mode")


@dataclass
class CorruptedSample:
    y: np.ndarray
    alpha: np.ndarray
    x: Optional[np.ndarray] = None  # ground truth, evaluation only

    def __post_init__(self):
        if self.y.shape != self.alpha.shape:
            raise ValueError("y and alpha must have the same shape")


def generate_mask_mar(d: int, observed_ratio: float, rng: np.random.Generator, n: Optional[int] = None):
    """Independent Bernoulli(observed_ratio) mask of length d (or shape (n, d))."""
    if not 0.0 <= observed_ratio <= 1.0:
        raise ValueError("observed_ratio must lie in [0, 1]")
    shape = (d,) if n is None else (n, d)
    return (rng.random(shape) < observed_ratio).astype(np.float64)


def generate_mask_window(height: int, width: int, win_h: int, win_w: int, rng: np.random.Generator):
    """Flattened height*width mask observing one uniformly placed win_h x win_w window."""
    if win_h > height or win_w > width or win_h < 1 or win_w < 1:
        raise ValueError(f"window {win_h}x{win_w} does not fit in a {height}x{width} image")
    top = int(rng.integers(0, height - win_h + 1))
    left = int(rng.integers(0, width - win_w + 1))
    mask = np.zeros((height, width))
    mask[top:top + win_h, left:left + win_w] = 1.0
    return mask.reshape(-1)


def corrupt(x, mask, noise: NoiseSpec, rng: np.random.Generator) -> CorruptedSample:
    """y = mask * (x + sigma * eps); noise is drawn for every entry, then masked."""
    if noise.mode != "fixed":
        raise ValueError("corrupt needs a fixed noise level")
    x = np.asarray(x, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    y = mask * (x + noise.sigma * rng.standard_normal(x.shape))
    return CorruptedSample(y=y, alpha=mask, x=x)


def obs_log_lik(y, x, mask, sigma):
    """Sum over observed entries of log N(y_i; x_i, sigma^2).

    ``sigma`` may be a scalar or a per-sample log-std column handled by the
    caller through :func:`obs_log_lik_logsigma`.
    """
    _dims(y, x)
    logvar = 2.0 * np.log(sigma)
    return ad.gauss_logpdf(y, x, logvar, mask)


def obs_log_lik_logsigma(y, x, mask, log_sigma):
    """As :func:`obs_log_lik` with a (possibly per-sample, shape (n, 1)) log sigma."""
    _dims(y, x)
    return ad.gauss_logpdf(y, x, ad.mul(log_sigma, 2.0), mask)


def marginal_obs_log_lik(y, decoder: DiagGaussian, mask, sigma):
    """log of the integral of p(x|z) p(y|x) dx: observed entries of
    N(y; mean, exp(logvar) + sigma^2)."""
    _dims(y, decoder.mean)
    total_logvar = ad.logaddexp_const(decoder.logvar, 2.0 * float(np.log(sigma)))
    return ad.gauss_logpdf(y, decoder.mean, total_logvar, mask)


def _dims(a, b):
    da, db = np.shape(ad.value(a)), np.shape(ad.value(b))
    if da[-1:] != db[-1:]:
        raise ValueError(f"dimension mismatch ({da} vs {db})")
