"""Training objectives: the MVAE and MIWAE bounds and the penalised TAE objective.

Every objective works on a minibatch ``y, alpha`` of shape (n, d), sums the
per-sample values, and draws one reparametrisation sample per expectation.
Pass ``params`` holding autodiff Vars to differentiate; by default the
model's own arrays are used and plain floats come back.
"""
from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, fields

import numpy as np

from .compute import autodiff as ad
from .compute.autodiff import NonFiniteError
from .corruption import marginal_obs_log_lik, obs_log_lik, obs_log_lik_logsigma
from .distributions import DiagGaussian, entropy, kl_standard, log_density, rsample


class NonFiniteTermError(FloatingPointError):
    def __init__(self, term: str, detail: str = ""):
        msg = f"objective term {term} is not finite"
        super().__init__(f"{msg} ({detail})" if detail else msg)
        self.term = term


@dataclass(frozen=True)
class PenaltyConfig:
    lam: float = 2.0
    C: float = 10.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("penalty strength must be non-negative")


@dataclass
class TaeTerms:
    """Per-sample values (shape (n,)) of the quantities in the TAE objective."""

    obs_lik: np.ndarray
    prior_rec: np.ndarray
    prior_kl: np.ndarray
    h_z: np.ndarray
    h_x: np.ndarray
    r_logq: np.ndarray
    q_logq: np.ndarray
    penalty: np.ndarray

    def means(self) -> dict:
        return {f.name: float(np.mean(getattr(self, f.name))) for f in fields(self)}


@contextmanager
def _term(name):
    try:
        yield
    except NonFiniteError as err:
        raise NonFiniteTermError(name, str(err)) from err


def _finite(name, v):
    if not np.all(np.isfinite(ad.value(v))):
        raise NonFiniteTermError(name)
    return v


def _batch(y, alpha):
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    if y.shape != alpha.shape:
        raise ValueError("y and alpha must have the same shape")
    return y, alpha


def _draws(rng, n, arch):
    # fixed draw order z, x, beta, z_p keeps streams aligned across variants
    return (rng.standard_normal((n, arch.z_dim)), rng.standard_normal((n, arch.d)),
            rng.standard_normal((n, 1)), rng.standard_normal((n, arch.zp_dim)))


# MVAE / MIWAE

def mvae_elbo_terms(model, y, alpha, sigma, rng, params=None, kl_mode="analytic"):
    """Returns (sum of per-sample ELBOs, {"E": per-sample log p(y|z), "K": per-sample KL})."""
    P = model.params if params is None else params
    y, alpha = _batch(y, alpha)
    with _term("Q"):
        qz = model.encode(P, y, alpha)
        z = rsample(qz, rng)
    with _term("E"):
        px, _ = model.decode(P, z)
        lik = _finite("E", marginal_obs_log_lik(y, px, alpha, sigma))
    with _term("K"):
        if kl_mode == "analytic":
            kl = kl_standard(qz)
        elif kl_mode == "mc":
            kl = ad.sub(log_density(qz, z), log_density(DiagGaussian.standard(qz.dim), z))
        else:
            raise ValueError(f"unknown kl_mode {kl_mode!r}")
        kl = _finite("K", kl)
    total = ad.sum(ad.sub(lik, kl))
    return total, {"E": np.asarray(ad.value(lik)), "K": np.asarray(ad.value(kl))}


def mvae_elbo(model, y, alpha, sigma, rng, params=None, kl_mode="analytic"):
    """Single-draw estimate of E_q log p(y|z) - KL(q(z|y, alpha) || N(0, I)),
    with p(y|z) integrated analytically over x."""
    return mvae_elbo_terms(model, y, alpha, sigma, rng, params, kl_mode)[0]


def miwae_elbo_terms(model, y, alpha, sigma, K: int, rng, params=None):
    if K < 1:
        raise ValueError("MIWAE needs at least one importance weight")
    P = model.params if params is None else params
    y, alpha = _batch(y, alpha)
    n, J = y.shape[0], model.arch.z_dim
    with _term("Q"):
        qz = model.encode(P, y, alpha)
        eps = rng.standard_normal((K, n, J)).reshape(K * n, J)
        mean = ad.concat([qz.mean] * K, axis=0)
        logvar = ad.concat([qz.logvar] * K, axis=0)
        qk = DiagGaussian(mean, logvar)
        z = rsample(qk, rng, eps)
        log_q = log_density(qk, z)
    with _term("E"):
        px, _ = model.decode(P, z)
        lik = marginal_obs_log_lik(np.tile(y, (K, 1)), px, np.tile(alpha, (K, 1)), sigma)
    log_prior = log_density(DiagGaussian.standard(J), z)
    log_w = ad.reshape(ad.sub(ad.add(lik, log_prior), log_q), (K, n))
    with _term("log_w"):
        bound = ad.sub(ad.logsumexp(log_w, axis=0), np.log(K))
    _finite("log_w", bound)
    return ad.sum(bound), {"E": np.asarray(ad.value(lik)).reshape(K, n).mean(axis=0),
                           "bound": np.asarray(ad.value(bound))}


def miwae_elbo(model, y, alpha, sigma, K: int, rng, params=None):
    """log (1/K) sum_k p(y|z_k) p(z_k) / q(z_k|y, alpha), summed over the batch."""
    return miwae_elbo_terms(model, y, alpha, sigma, K, rng, params)[0]


# TAE

def reduced_entropy(z_gauss: DiagGaussian, x_gauss: DiagGaussian):
    """H(q(z|y)) + H(q(x|z)) for one latent draw."""
    return ad.add(entropy(z_gauss), entropy(x_gauss))


def condition_value(z_gauss: DiagGaussian, z_draw, x_draw, lat_post):
    """log r(z|x) - log q(z|y) for one joint draw. ``lat_post`` maps x to a
    DiagGaussian over z."""
    r = lat_post(x_draw)
    return ad.sub(log_density(r, z_draw), log_density(z_gauss, z_draw))


def _tae(model, y, alpha, sigma, gamma, pen, rng, params, use_beta, detach_condition):
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("warm-up coefficient must lie in [0, 1]")
    P = model.params if params is None else params
    y, alpha = _batch(y, alpha)
    eps_z, eps_x, eps_b, eps_zp = _draws(rng, y.shape[0], model.arch)
    with _term("Hz"):
        qz = model.encode(P, y, alpha)
        z = rsample(qz, rng, eps_z)
        h_z = _finite("Hz", entropy(qz))
    with _term("Hx"):
        qx, trunk = model.decode(P, z, y, alpha)
        x = rsample(qx, rng, eps_x)
        h_x = _finite("Hx", entropy(qx))
    with _term("E"):
        if use_beta:
            qb = model.noise.head(P, trunk)
            log_sigma = rsample(qb, rng, eps_b)
            e = obs_log_lik_logsigma(y, x, alpha, log_sigma)
        else:
            e = obs_log_lik(y, x, alpha, sigma)
        e = _finite("E", e)
    with _term("P"):
        qzp = model.prior_enc(P, x)
        zp = rsample(qzp, rng, eps_zp)
        p = _finite("P", log_density(model.prior_dec(P, zp), x))
    with _term("K"):
        k = _finite("K", kl_standard(qzp))
    with _term("R"):
        x_in, z_in = (ad.stop_gradient(x), ad.stop_gradient(z)) if detach_condition else (x, z)
        r = _finite("R", log_density(model.latent_posterior(P, x_in, y, alpha), z_in))
    with _term("Q"):
        q = _finite("Q", log_density(qz, z))
    with _term("penalty"):
        penalty = ad.abs(ad.sub(ad.sub(r, q), pen.C))
        warm = ad.add(ad.sub(p, k), h_x)
        per_sample = ad.sub(ad.add(ad.add(e, ad.mul(warm, gamma)), h_z), ad.mul(penalty, pen.lam))
        total = ad.sum(per_sample)
    terms = TaeTerms(*(np.asarray(ad.value(v), dtype=np.float64)
                       for v in (e, p, k, h_z, h_x, r, q, penalty)))
    return total, terms


def tae_objective(model, y, alpha, sigma, gamma, pen: PenaltyConfig, rng, params=None,
                  detach_condition=False):
    """Batch sum of E + gamma (P - K + Hx) + Hz - lambda |R - Q - C| with a fixed
    noise level; returns (total, TaeTerms)."""
    return _tae(model, y, alpha, sigma, gamma, pen, rng, params, False, detach_condition)


def tae_objective_beta(model, y, alpha, gamma, pen: PenaltyConfig, rng, params=None,
                       detach_condition=False):
    """As :func:`tae_objective` but the noise level (log sigma) of every sample
    is drawn from the model's noise head."""
    if getattr(model, "noise", None) is None:
        raise ValueError("inferred-noise objective needs a model built with arch.noise_head=True")
    return _tae(model, y, alpha, None, gamma, pen, rng, params, True, detach_condition)
