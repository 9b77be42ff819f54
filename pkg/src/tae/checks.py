"""Numerical constructions that exercise the entropy decomposition and the
variational bound on the latent condition, using quadrature throughout."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .distributions import DiagGaussian, entropy, log_density


# entropy decomposition on a mixture with a discrete latent

@dataclass(frozen=True)
class MixtureLvm:
    """1-D LVM with latent k ~ Categorical(weights) and x|k ~ N(means[k], std^2)."""

    means: tuple
    weights: tuple
    std: float = 1.0

    @classmethod
    def evenly_spaced(cls, k: int, separation: float, std: float = 1.0):
        means = tuple((np.arange(k) - (k - 1) / 2) * separation * std)
        return cls(means, tuple(np.full(k, 1.0 / k)), std)

    def component(self, k) -> DiagGaussian:
        return DiagGaussian(np.array([self.means[k]]), np.array([2 * np.log(self.std)]))

    def log_pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        comps = np.stack([np.log(w) + log_density(self.component(k), x[..., None])
                          for k, w in enumerate(self.weights)])
        m = comps.max(axis=0)
        return m + np.log(np.exp(comps - m).sum(axis=0))


def mixture_reduced_entropy(lvm: MixtureLvm) -> float:
    """H(latent) + E_k H(x|k); the latent is discrete so its entropy is Shannon's."""
    w = np.asarray(lvm.weights)
    h_latent = float(-(w * np.log(w)).sum())
    h_cond = sum(wk * float(entropy(lvm.component(k))) for k, wk in enumerate(w))
    return h_latent + h_cond


def mixture_entropy_quadrature(lvm: MixtureLvm) -> float:
    """-integral p log p by adaptive quadrature, split at the component means."""
    lo = min(lvm.means) - 12 * lvm.std
    hi = max(lvm.means) + 12 * lvm.std

    def f(x):
        lp = float(lvm.log_pdf(np.array(x)))
        return -np.exp(lp) * lp

    val, _ = integrate.quad(f, lo, hi, points=sorted(set(lvm.means)), limit=500,
                            epsabs=1e-12, epsrel=1e-12)
    return float(val)


def entropy_gap(separation: float, k: int = 2, std: float = 1.0) -> float:
    """Reduced entropy minus quadrature entropy for ``k`` evenly spaced components."""
    lvm = MixtureLvm.evenly_spaced(k, separation, std)
    return mixture_reduced_entropy(lvm) - mixture_entropy_quadrature(lvm)


# variational bound on the latent condition

@dataclass(frozen=True)
class LinearGaussianToy:
    """q(z) = N(0, 1), q(x|z) = N(a z + b, s^2), both scalar."""

    a: float = 1.5
    b: float = 0.3
    s: float = 0.5

    def exact_posterior(self, x) -> DiagGaussian:
        x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
        v = 1.0 / (1.0 + self.a ** 2 / self.s ** 2)
        mean = v * self.a * (x - self.b) / self.s ** 2
        return DiagGaussian(mean, np.full_like(mean, np.log(v)))

    def mutual_information(self) -> float:
        return 0.5 * np.log1p(self.a ** 2 / self.s ** 2)


def condition_expectation(toy: LinearGaussianToy, r, n_x: int = 4001, n_z: int = 40) -> float:
    """E_{q(x,z)} log r(z|x) - log q(z), with ``r`` mapping an (n, 1) array of x to a
    DiagGaussian over z.

    x is integrated on a trapezoid grid over +-12 marginal std; for every x the
    inner expectation over q(z|x) uses Gauss-Hermite nodes, exact here because
    both log densities are quadratic in z.
    """
    sd_x = np.sqrt(toy.a ** 2 + toy.s ** 2)
    xs = toy.b + np.linspace(-12, 12, n_x) * sd_x
    w_x = np.exp(-0.5 * ((xs - toy.b) / sd_x) ** 2) / (np.sqrt(2 * np.pi) * sd_x)
    post = toy.exact_posterior(xs)
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_z)
    weights = weights / weights.sum()
    zs = post.mean + np.exp(0.5 * post.logvar) * nodes[None, :]  # (n_x, n_z)
    rg = r(xs.reshape(-1, 1))
    rep = DiagGaussian(np.repeat(np.asarray(rg.mean), n_z, axis=0),
                       np.repeat(np.asarray(rg.logvar), n_z, axis=0))
    log_r = np.asarray(log_density(rep, zs.reshape(-1, 1))).reshape(n_x, n_z)
    log_q = np.asarray(log_density(DiagGaussian.standard(1), zs.reshape(-1, 1))).reshape(n_x, n_z)
    inner = ((log_r - log_q) * weights[None, :]).sum(axis=1)
    return float(integrate.trapezoid(w_x * inner, xs))


def bound_slack(toy: LinearGaussianToy, r, **kw) -> float:
    """E log q(z|x)/q(z) - E log r(z|x)/q(z); non-negative for every density r."""
    return condition_expectation(toy, toy.exact_posterior, **kw) - condition_expectation(toy, r, **kw)
