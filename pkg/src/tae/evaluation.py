"""Measurement protocols: PSNR, refit ELBO, draw diversity, posterior-draw
classification and the brute-force 2-D posterior oracle."""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.special import logsumexp

from . import kernels
from .compute import autodiff as ad
from .compute.adam import AdamState, adam_step
from .compute.autodiff import NonFiniteError, forward_backward
from .compute.rng import seeded_rng
from .data_io import SCurve
from .distributions import log_density, rsample
from .models import Mlp
from .training import batch_indices


# PSNR and diversity

def psnr(x_true, x_est) -> float:
    """-10 log10(MSE) for unit-peak data; +inf when the vectors are identical."""
    x_true = np.asarray(x_true, dtype=np.float64)
    x_est = np.asarray(x_est, dtype=np.float64)
    if x_true.shape != x_est.shape:
        raise ValueError(f"shape mismatch {x_true.shape} vs {x_est.shape}")
    mse = float(np.mean((x_true - x_est) ** 2))
    if mse == 0.0:
        return float("inf")
    return -10.0 * np.log10(mse)


def diversity(draws) -> float:
    """Mean Euclidean distance over all unordered pairs of draws."""
    draws = np.ascontiguousarray(np.atleast_2d(np.asarray(draws, dtype=np.float64)))
    if draws.shape[0] < 2:
        raise ValueError("diversity needs at least two draws")
    return float(kernels.mean_pairwise_distance(draws))


# refit ELBO

class RefitDiverged(FloatingPointError):
    def __init__(self, iteration: int, detail: str):
        super().__init__(f"refit diverged at iteration {iteration}: {detail}")
        self.iteration = iteration


@dataclass(frozen=True)
class RefitConfig:
    iterations: int = 50_000
    learning_rate: float = 1e-3
    batch_size: int = 20
    final_draws: int = 100
    # None copies the posterior encoder's width and depth
    hidden: Optional[int] = None
    n_layers: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0 or self.batch_size < 1 or self.final_draws < 1:
            raise ValueError("invalid refit configuration")


def refit_network(posterior, cfg: RefitConfig) -> Mlp:
    arch = posterior.arch
    width = cfg.hidden or arch.hidden
    depth = cfg.n_layers or arch.n_layers
    return Mlp("refit", 3 * arch.d, (width,) * depth, arch.z_dim, arch.slope,
               arch.logvar_min, arch.logvar_max)


def _refit_integrand(posterior, net, S, x, y, alpha, rng):
    """log q(z|y,a) + log q(x|z) - log s(z|x,y,a) for one draw z ~ s, per row."""
    P = posterior.params
    s = net(S, ad.concat([x, y, alpha], axis=-1))
    z = rsample(s, rng)
    prior = posterior.encode(P, y, alpha)
    qx, _ = posterior.decode(P, z, y, alpha)
    return ad.sub(ad.add(log_density(prior, z), log_density(qx, x)), log_density(s, z))


def refit_elbo(posterior, x_clean, y, alpha, cfg: RefitConfig = RefitConfig(), rng=None,
               return_network: bool = False):
    """Mean over samples of the ELBO the frozen posterior assigns to the clean data.

    A fresh inference network s(z|x, y, alpha) is trained with Adam while the
    posterior's parameters stay fixed; the returned value is the Monte Carlo
    estimate (``cfg.final_draws`` draws per sample) of
    E_s[log q(z|y, alpha) + log q(x|z) - log s(z|x, y, alpha)], in nats.
    """
    rng = rng if rng is not None else seeded_rng(cfg.seed)
    x_clean, y, alpha = (np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in (x_clean, y, alpha))
    if not x_clean.shape == y.shape == alpha.shape:
        raise ValueError("x_clean, y and alpha must share one shape")
    n = x_clean.shape[0]
    net = refit_network(posterior, cfg)
    S = net.init(rng)
    state = AdamState.zeros_like(S, lr=cfg.learning_rate)
    batches = batch_indices(n, min(cfg.batch_size, n), rng)
    for k in range(cfg.iterations):
        idx = next(batches)
        try:
            val, grads = forward_backward(
                lambda p: ad.sum(_refit_integrand(posterior, net, p, x_clean[idx], y[idx], alpha[idx], rng)), S)
        except NonFiniteError as err:
            raise RefitDiverged(k, str(err)) from err
        adam_step(state, S, grads, maximize=True)

    per_sample = np.empty(n)
    chunk = max(1, 4096 // cfg.final_draws)
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        m = sl.stop - sl.start
        rep = lambda a: np.repeat(a[sl], cfg.final_draws, axis=0)  # noqa: E731
        vals = np.asarray(_refit_integrand(posterior, net, S, rep(x_clean), rep(y), rep(alpha), rng))
        per_sample[sl] = vals.reshape(m, cfg.final_draws).mean(axis=1)
    if not np.all(np.isfinite(per_sample)):
        raise RefitDiverged(cfg.iterations, "non-finite final estimate")
    score = float(per_sample.mean())
    return (score, net, S) if return_network else score


# classification

@dataclass
class ClassifierHead:
    """Single affine layer, leaky ReLU, softmax over ``n_classes``."""

    d: int
    n_classes: int = 10
    slope: float = 0.01
    params: Optional[dict] = None

    def __post_init__(self):
        if self.params is None:
            self.params = {"W": np.zeros((self.d, self.n_classes)), "b": np.zeros(self.n_classes)}

    def log_probs(self, params, x):
        h = ad.leaky_relu(ad.add(ad.matmul(x, params["W"]), params["b"]), self.slope)
        return ad.log_softmax(h)

    def probs(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.d:
            raise ValueError(f"classifier expects d={self.d}, got {x.shape[1]}")
        return np.exp(np.asarray(self.log_probs(self.params, x)))

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.probs(x), axis=1)


@dataclass(frozen=True)
class ClassifierConfig:
    iterations: int = 5000
    batch_size: int = 100
    learning_rate: float = 1e-3


def train_classifier(posterior, y, alpha, labels, cfg: ClassifierConfig, rng, n_classes: int = 10):
    """Fit a ClassifierHead on posterior draws of the labelled samples, with fresh
    draws at every step."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    head = ClassifierHead(y.shape[1], n_classes)
    state = AdamState.zeros_like(head.params, lr=cfg.learning_rate)
    batches = batch_indices(len(labels), min(cfg.batch_size, len(labels)), rng)
    for _ in range(cfg.iterations):
        idx = next(batches)
        draws = posterior.draw_rows(y[idx], alpha[idx], rng)
        onehot = np.eye(n_classes)[labels[idx]]
        _, grads = forward_backward(
            lambda p: ad.neg(ad.sum(ad.mul(head.log_probs(p, draws), onehot))), head.params)
        adam_step(state, head.params, grads)
    return head


def classify_posterior(head: ClassifierHead, posterior, y, alpha, n_draws: int, rng):
    """Class histogram of ``n_draws`` posterior draws and its argmax (lowest index
    on ties)."""
    draws = posterior.draw(y, alpha, n_draws, rng)
    hist = np.bincount(head.predict(draws), minlength=head.n_classes) if n_draws else np.zeros(head.n_classes, int)
    return hist, int(np.argmax(hist))


def classification_accuracy(posterior, y, alpha, labels, n_labelled: int = 1000, n_draws: int = 400,
                            cfg: ClassifierConfig = ClassifierConfig(), seed: int = 0):
    """Train on ``n_labelled`` random samples, classify the rest by histogram vote.

    Returns (accuracy, histograms of the unlabelled samples)."""
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if not 0 < n_labelled < n:
        raise ValueError("need at least one labelled and one unlabelled sample")
    rng = seeded_rng(seed)
    order = rng.permutation(n)
    lab, unl = order[:n_labelled], order[n_labelled:]
    head = train_classifier(posterior, y[lab], alpha[lab], labels[lab], cfg, rng)
    hists = np.empty((len(unl), head.n_classes), dtype=np.int64)
    correct = 0
    for row, i in enumerate(unl):
        hists[row], pred = classify_posterior(head, posterior, y[i], alpha[i], n_draws, rng)
        correct += pred == labels[i]
    return correct / len(unl), hists


# 2-D oracle

class OracleZeroMass(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    lo: tuple = (0.0, 0.0)
    hi: tuple = (1.0, 1.0)
    res: tuple = (200, 200)
    # sub-points per cell and axis; densities are averaged over them
    supersample: int = 4
    n_curve: int = 6000

    @property
    def cell(self) -> float:
        hx = (self.hi[0] - self.lo[0]) / self.res[0]
        hy = (self.hi[1] - self.lo[1]) / self.res[1]
        if not np.isclose(hx, hy, rtol=1e-12):
            raise ValueError("oracle grids need square cells")
        return hx


@dataclass
class OracleGrid:
    lo: tuple
    hi: tuple
    res: tuple
    mass: np.ndarray  # (nx, ny), sums to one

    @property
    def cell_area(self) -> float:
        return (self.hi[0] - self.lo[0]) / self.res[0] * (self.hi[1] - self.lo[1]) / self.res[1]

    @property
    def density(self) -> np.ndarray:
        return self.mass / self.cell_area

    def centers(self):
        xs = self.lo[0] + (np.arange(self.res[0]) + 0.5) * (self.hi[0] - self.lo[0]) / self.res[0]
        ys = self.lo[1] + (np.arange(self.res[1]) + 0.5) * (self.hi[1] - self.lo[1]) / self.res[1]
        return xs, ys

    def cell_of(self, points) -> np.ndarray:
        """(n, 2) integer cell indices; -1 for points outside the box."""
        points = np.atleast_2d(points)
        out = np.empty(points.shape, dtype=np.int64)
        for a in range(2):
            f = (points[:, a] - self.lo[a]) / (self.hi[a] - self.lo[a]) * self.res[a]
            idx = np.floor(f).astype(np.int64)
            idx[(f < 0) | (f >= self.res[a])] = -1
            out[:, a] = idx
        out[(out < 0).any(axis=1)] = -1
        return out

    def coarsen(self, bins: int) -> np.ndarray:
        nx, ny = self.res
        if nx % bins or ny % bins:
            raise ValueError(f"resolution {self.res} is not a multiple of {bins}")
        return self.mass.reshape(bins, nx // bins, bins, ny // bins).sum(axis=(1, 3))


@functools.lru_cache(maxsize=8)
def _manifold_subgrid(spec: SCurve, grid: GridSpec) -> np.ndarray:
    """Manifold density at the sub-points of ``grid``."""
    s = grid.supersample
    h = grid.cell / s
    t = -spec.t_max + (np.arange(grid.n_curve) + 0.5) * (2 * spec.t_max / grid.n_curve)
    c = spec.curve(t)
    w = np.full(grid.n_curve, 1.0 / grid.n_curve)
    dens = kernels.curve_density_grid(grid.lo[0] + h / 2, grid.lo[1] + h / 2, h,
                                      grid.res[0] * s, grid.res[1] * s,
                                      np.ascontiguousarray(c[:, 0]), np.ascontiguousarray(c[:, 1]), w,
                                      spec.thickness, spec.cutoff * spec.thickness)
    dens.setflags(write=False)
    return dens


def _subpoints(grid: GridSpec, axis: int) -> np.ndarray:
    h = grid.cell / grid.supersample
    return grid.lo[axis] + h / 2 + h * np.arange(grid.res[axis] * grid.supersample)


def manifold_grid(spec: SCurve = SCurve(), grid: GridSpec = GridSpec()) -> OracleGrid:
    """The manifold's own density discretised on ``grid``."""
    return oracle_posterior_2d(spec, np.zeros(2), np.zeros(2), 1.0, grid)


def oracle_posterior_2d(spec: SCurve, y, alpha, sigma: float, grid: GridSpec = GridSpec()) -> OracleGrid:
    """Exact posterior p(x|y) proportional to p_manifold(x) p(y|x, alpha, sigma),
    as cell masses on ``grid``. Raises OracleZeroMass when the product underflows
    to zero everywhere in the box."""
    y = np.asarray(y, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if y.shape != (2,) or alpha.shape != (2,):
        raise ValueError("the 2-D oracle needs y and alpha of shape (2,)")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    prior = _manifold_subgrid(spec, grid)
    gx, gy = _subpoints(grid, 0), _subpoints(grid, 1)
    norm = -0.5 * np.log(2 * np.pi * sigma ** 2)
    lx = alpha[0] * (norm - 0.5 * ((y[0] - gx) / sigma) ** 2)
    ly = alpha[1] * (norm - 0.5 * ((y[1] - gy) / sigma) ** 2)
    with np.errstate(divide="ignore"):
        logp = np.log(prior) + lx[:, None] + ly[None, :]
    if not np.isfinite(logp).any() or logp.max() < np.log(np.finfo(float).tiny):
        raise OracleZeroMass(f"observation y={y.tolist()} has no posterior mass inside the grid")
    s = grid.supersample
    nx, ny = grid.res
    cells = logsumexp(logp.reshape(nx, s, ny, s), axis=(1, 3))
    mass = np.exp(cells - logsumexp(cells))
    return OracleGrid(tuple(grid.lo), tuple(grid.hi), tuple(grid.res), mass / mass.sum())


def total_variation(a: OracleGrid, b: OracleGrid) -> float:
    """TV distance between two oracle grids, on the coarser of the two resolutions."""
    if a.res[0] > b.res[0]:
        a, b = b, a
    f = b.res[0] // a.res[0]
    if b.res != (a.res[0] * f, a.res[1] * f):
        raise ValueError("grid resolutions must be integer multiples")
    coarse = b.mass.reshape(a.res[0], f, a.res[1], f).sum(axis=(1, 3))
    return 0.5 * float(np.abs(coarse - a.mass).sum())


def count_modes(grid: OracleGrid, rel: float = 0.1) -> int:
    """Connected components (8-neighbourhood) of cells holding at least ``rel``
    times the largest cell mass."""
    _, n = ndimage.label(grid.mass >= rel * grid.mass.max(), structure=np.ones((3, 3)))
    return int(n)


def is_multimodal(grid: OracleGrid, rel: float = 0.1) -> bool:
    return count_modes(grid, rel) >= 2


def cross_entropy(grid: OracleGrid, draws, bins: int = 20, eps: float = 1e-3) -> float:
    """-sum_c oracle_c log q_c over a bins x bins partition of the box, with q the
    draw histogram mixed with a uniform floor of weight ``eps``. Draws outside the
    box count towards the total but land in no cell."""
    draws = np.atleast_2d(np.asarray(draws, dtype=np.float64))
    if draws.shape[0] == 0:
        raise ValueError("no draws")
    oracle = grid.coarsen(bins)
    hist, _, _ = np.histogram2d(draws[:, 0], draws[:, 1], bins=bins,
                                range=[[grid.lo[0], grid.hi[0]], [grid.lo[1], grid.hi[1]]])
    q = (1 - eps) * hist / draws.shape[0] + eps / bins ** 2
    return float(-(oracle * np.log(q)).sum())


# batched helpers for the command line

def posterior_means(posterior, y, alpha, n_latent: int, rng, chunk: int = 4096) -> np.ndarray:
    """Per-row Monte Carlo average of the decoder means over ``n_latent`` latent draws."""
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    alpha = np.atleast_2d(np.asarray(alpha, dtype=np.float64))
    out = np.empty_like(y)
    rows = max(1, chunk // n_latent)
    for start in range(0, len(y), rows):
        sl = slice(start, min(start + rows, len(y)))
        yr, ar = np.repeat(y[sl], n_latent, axis=0), np.repeat(alpha[sl], n_latent, axis=0)
        z = rsample(posterior.encode(posterior.params, yr, ar), rng)
        qx, _ = posterior.decode(posterior.params, z, yr, ar)
        out[sl] = np.asarray(qx.mean).reshape(-1, n_latent, y.shape[1]).mean(axis=1)
    return out


def mean_diversity(posterior, y, alpha, n_draws: int, rng) -> float:
    """Average over rows of the diversity of ``n_draws`` posterior draws."""
    return float(np.mean([diversity(posterior.draw(y[i], alpha[i], n_draws, rng)) for i in range(len(y))]))
