"""Acceptance suite. Every test records one pass/fail line per criterion part;
the lines are repeated in the terminal summary under "acceptance criteria".

Data-dependent parts (MNIST) read the IDX directory from TAE_MNIST_DIR. When
it is missing they are reported as FAIL and marked xfail, never skipped silently.
"""
import json
import os
import time
from decimal import Decimal, getcontext
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from tae.checks import LinearGaussianToy, bound_slack, condition_expectation, entropy_gap
from tae.cli import main as cli_main
from tae.compute import forward_backward
from tae.config import build
from tae.corruption import NoiseSpec
from tae.data_io import MissingSpec, SCurve, load_idx, materialize_corruption, synth_2d, write_idx
from tae.distributions import DiagGaussian, entropy, kl, log_density
from tae.evaluation import (ClassifierConfig, GridSpec, classification_accuracy, diversity, is_multimodal,
                            oracle_posterior_2d, refit_elbo)
from tae.models import Arch, Mlp, init_model
from tae.objectives import PenaltyConfig, miwae_elbo, miwae_elbo_terms, mvae_elbo, tae_objective, tae_objective_beta
from tae.training import train, warmup_gamma

from conftest import central_fd, perturbed, record, rel_error, tiny_arch

MNIST_DIR = os.environ.get("TAE_MNIST_DIR")
SEEDS = (0, 1, 2)


# 1. Gaussian algebra against grid quadrature

def _grid(m, s, half_width=14.0, n=40001):
    x = np.linspace(m - half_width * s, m + half_width * s, n)
    return x


def test_c1_gaussian_algebra():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {"kl": 0.0, "entropy": 0.0, "log_density": 0.0}
    for _ in range(100):
        m1, m2 = rng.uniform(-2, 2, 2)
        lv1, lv2 = rng.uniform(-3, 2, 2)
        a = DiagGaussian(np.array([m1]), np.array([lv1]))
        b = DiagGaussian(np.array([m2]), np.array([lv2]))
        s1, s2 = np.exp(0.5 * lv1), np.exp(0.5 * lv2)
        x = _grid(m1, max(s1, s2) if abs(m1 - m2) < 1 else s1 + abs(m1 - m2))
        # densities from unnormalised kernels, normalised by quadrature
        ka, kb = np.exp(-0.5 * ((x - m1) / s1) ** 2), np.exp(-0.5 * ((x - m2) / s2) ** 2)
        za, zb = np.trapezoid(ka, x), np.trapezoid(kb, x)
        la = -0.5 * ((x - m1) / s1) ** 2 - np.log(za)
        lb = -0.5 * ((x - m2) / s2) ** 2 - np.log(zb)
        pa = np.exp(la)
        h_quad = -np.trapezoid(pa * la, x)
        kl_quad = np.trapezoid(pa * (la - lb), x)
        probe = rng.uniform(m1 - 3 * s1, m1 + 3 * s1, 5)
        ld_quad = -0.5 * ((probe - m1) / s1) ** 2 - np.log(za)
        ld = np.array([float(log_density(a, np.array([p]))) for p in probe])
        worst["entropy"] = max(worst["entropy"], abs(float(entropy(a)) - h_quad))
        worst["kl"] = max(worst["kl"], abs(float(kl(a, b)) - kl_quad))
        worst["log_density"] = max(worst["log_density"], float(np.max(np.abs(ld - ld_quad))))
        assert float(kl(a, a)) == 0.0
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-6 and elapsed < 60
    record(1, ok, "max abs errors " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
           + f"; kl(g,g)=0 exactly; {elapsed:.1f}s")
    assert ok


# 2. reverse-mode gradients against central differences

Y = np.array([[0.3, 0.0, -0.2], [0.1, 0.5, 0.0]])
A = np.array([[1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
OBJECTIVES = {
    "mvae_elbo": ("mvae", {}, lambda m, P, rng: mvae_elbo(m, Y, A, 0.1, rng, params=P)),
    "miwae_elbo(K=5)": ("miwae", {}, lambda m, P, rng: miwae_elbo(m, Y, A, 0.1, 5, rng, params=P)),
    "tae_objective": ("tae", {}, lambda m, P, rng: tae_objective(m, Y, A, 0.1, 0.5, PenaltyConfig(), rng,
                                                                 params=P)[0]),
    "tae_objective_beta": ("tae", {"noise_head": True},
                           lambda m, P, rng: tae_objective_beta(m, Y, A, 0.5, PenaltyConfig(), rng, params=P)[0]),
}


def test_c2_gradients():
    t0 = time.perf_counter()
    worst = {}
    for name, (kind, kw, fn) in OBJECTIVES.items():
        errs = []
        for seed in range(20):
            m = perturbed(init_model(tiny_arch(**kw), seed, kind), 0.3, 100 + seed)
            _, g = forward_backward(lambda P: fn(m, P, np.random.default_rng(seed)), m.params)
            fd = central_fd(lambda P: float(fn(m, P, np.random.default_rng(seed))), m.params)
            errs.append(rel_error(g, fd))
        worst[name] = max(errs)
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 120
    record(2, ok, "max rel error over 20 seeds " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
           + f"; {elapsed:.1f}s")
    assert ok


# 3. entropy decomposition on separated mixtures

def test_c3_entropy_decomposition():
    t0 = time.perf_counter()
    gaps = {s: entropy_gap(s) for s in (10, 4, 2, 1)}
    monotone = gaps[10] < gaps[4] < gaps[2] < gaps[1]
    elapsed = time.perf_counter() - t0
    ok = abs(gaps[10]) < 1e-3 and monotone and elapsed < 60
    record(3, ok, "gap by separation " + ", ".join(f"{s}: {g:.2e}" for s, g in gaps.items())
           + f"; monotone {monotone}; {elapsed:.1f}s")
    assert ok


# 4. variational bound on the latent condition

def test_c4_condition_bound():
    toy = LinearGaussianToy()
    exact_gap = abs(condition_expectation(toy, toy.exact_posterior) - toy.mutual_information())
    rng = np.random.default_rng(7)
    slacks = []
    for i in range(50):
        net = Mlp("r", 1, (int(rng.integers(1, 9)),) * int(rng.integers(1, 3)), 1)
        params = {k: rng.normal(0, 1.5, s) for k, s in net.param_shapes().items()}
        slacks.append(bound_slack(toy, lambda x, p=params, n=net: n(p, x)))
    ok = min(slacks) >= -1e-6 and exact_gap < 1e-6
    record(4, ok, f"min slack over 50 random r {min(slacks):.3e}; exact-posterior gap {exact_gap:.1e}")
    assert ok


# 2-D paired runs shared by criteria 5, 6 and 10

_RUNS = {}


def _cfg2d(kind, seed):
    return build("synth2d", overrides={"model": kind, "seed": seed})


def _data2d():
    cfg = _cfg2d("tae", 0)
    ds = synth_2d(cfg.synth_n, cfg.synth_seed)
    return materialize_corruption(ds, MissingSpec(cfg.observed_ratio), NoiseSpec(sigma=cfg.sigma),
                                  cfg.corruption_seed)


def run2d(kind, seed):
    key = (kind, seed)
    if key not in _RUNS:
        cfg = _cfg2d(kind, seed)
        data = _data2d()
        t0 = time.perf_counter()
        model, log = train(cfg.train_config(), data, arch=cfg.arch(2))
        _RUNS[key] = (cfg, model, log, time.perf_counter() - t0)
    return _RUNS[key]


def test_c5_penalty_fixed_point():
    cfg, _, log, elapsed = run2d("tae", 0)
    running = log.running_condition(1000)
    ok = abs(running - cfg.C) < 1.0 and elapsed <= 15 * 60
    record(5, ok, f"1000-step running mean of R-Q {running:.3f} (target {cfg.C} +- 1); "
                  f"{cfg.iterations} iterations in {elapsed / 60:.1f} min")
    assert ok


def _multimodal_observations(data, sigma, limit=20, scan=200):
    grid = GridSpec(res=(100, 100))
    picked = []
    for i in range(min(scan, len(data))):
        if is_multimodal(oracle_posterior_2d(SCurve(), data.y[i], data.alpha[i], sigma, grid)):
            picked.append(i)
        if len(picked) == limit:
            break
    return picked


def test_c6_collapse_ordering_2d():
    data = _data2d()
    cfg0 = _cfg2d("tae", 0)
    ev = data.subset(np.arange(cfg0.n_eval))
    multi = _multimodal_observations(data, cfg0.sigma)
    assert len(multi) >= 5
    lines, ok = [], True
    for seed in SEEDS:
        scores, divs = {}, {}
        for kind in ("tae", "mvae"):
            cfg, model, _, _ = run2d(kind, seed)
            scores[kind] = refit_elbo(model, ev.x, ev.y, ev.alpha, cfg.refit_config(), np.random.default_rng(seed))
            rng = np.random.default_rng(1000 + seed)
            divs[kind] = float(np.mean([diversity(model.draw(data.y[i], data.alpha[i], cfg.n_draws, rng))
                                        for i in multi]))
        good = scores["tae"] > scores["mvae"] and divs["tae"] > divs["mvae"]
        ok &= good
        lines.append(f"seed {seed}: refit {scores['tae']:.3f} vs {scores['mvae']:.3f}, "
                     f"diversity {divs['tae']:.4f} vs {divs['mvae']:.4f}")
    record(6, ok, f"2-D (TAE vs MVAE, {len(multi)} multimodal obs) " + " | ".join(lines))
    assert ok


def _mnist(n=10_000):
    if not MNIST_DIR:
        return None
    root = Path(MNIST_DIR)
    img = next((p for p in (root / "train-images-idx3-ubyte", root / "train-images-idx3-ubyte.gz") if p.exists()), None)
    lab = next((p for p in (root / "train-labels-idx1-ubyte", root / "train-labels-idx1-ubyte.gz") if p.exists()), None)
    if img is None:
        return None
    return load_idx(img, lab).subset(np.arange(n))


def test_c6_collapse_ordering_mnist():
    ds = _mnist()
    if ds is None:
        record(6, False, "MNIST subset: IDX files unavailable (set TAE_MNIST_DIR); ordering not evaluated")
        pytest.xfail("MNIST IDX files are not available in this environment")
    data = materialize_corruption(ds, MissingSpec(0.5), NoiseSpec(sigma=0.1), 0)
    ev = data.subset(np.arange(1000))
    lines, ok, longest = [], True, 0.0
    t0 = time.perf_counter()
    for seed in SEEDS:
        scores = {}
        for kind in ("tae", "mvae"):
            t1 = time.perf_counter()
            cfg = build("mnist-subset", overrides={"model": kind, "seed": seed})
            model, _ = train(cfg.train_config(), data, arch=cfg.arch(data.d))
            scores[kind] = refit_elbo(model, ev.x, ev.y, ev.alpha, cfg.refit_config(), np.random.default_rng(seed))
            longest = max(longest, time.perf_counter() - t1)
        ok &= scores["tae"] > scores["mvae"]
        lines.append(f"seed {seed}: {scores['tae']:.1f} vs {scores['mvae']:.1f}")
    elapsed = time.perf_counter() - t0
    # the 2 h budget applies to one preset run (train + refit), not to the 6-run protocol
    ok &= longest <= 2 * 3600
    record(6, ok, "MNIST subset refit ELBO (TAE vs MVAE) " + " | ".join(lines)
           + f"; longest run {longest / 60:.0f} min, all six {elapsed / 60:.0f} min")
    assert ok


# 7. importance-weighted bound grows with K

def test_c7_miwae_monotone():
    model = perturbed(init_model(Arch(d=4, z_dim=2, hidden=6), 3, "miwae"), 0.4, 4)
    y, a = np.array([[0.4, 0.0, 0.7, 0.2]]), np.array([[1.0, 0.0, 1.0, 1.0]])
    reps = 10_000
    yy, aa = np.repeat(y, reps, 0), np.repeat(a, reps, 0)
    b1 = miwae_elbo_terms(model, yy, aa, 0.1, 1, np.random.default_rng(0))[1]["bound"]
    b20 = miwae_elbo_terms(model, yy, aa, 0.1, 20, np.random.default_rng(1))[1]["bound"]
    test = stats.ttest_ind(b20, b1, equal_var=False, alternative="greater")
    ok = b20.mean() >= b1.mean() and test.pvalue < 0.01
    record(7, ok, f"mean bound K=20 {b20.mean():.4f} vs K=1 {b1.mean():.4f}; one-sided Welch p={test.pvalue:.1e}")
    assert ok


# 8. classification protocol plumbing

class CleanImageStub:
    """Posterior whose every draw is the clean image behind the observation."""

    def __init__(self, x):
        self.x = x

    def draw(self, y, alpha, n, rng):
        return np.repeat(self.x[int(y[0])][None], n, axis=0)

    def draw_rows(self, y, alpha, rng):
        return self.x[y[:, 0].astype(int)]


def test_c8_classification_plumbing():
    ds = _mnist()
    if ds is None:
        record(8, False, "clean MNIST unavailable (set TAE_MNIST_DIR); accuracy not evaluated")
        pytest.xfail("MNIST IDX files are not available in this environment")
    # the stub reads the sample index from y, so y carries indices only
    idx = np.arange(len(ds), dtype=np.float64)[:, None].repeat(ds.d, axis=1)
    acc, hists = classification_accuracy(CleanImageStub(ds.x), idx, np.ones_like(idx), ds.labels,
                                         n_labelled=1000, n_draws=400, cfg=ClassifierConfig(), seed=0)
    sums = set(hists.sum(axis=1).tolist())
    ok = acc >= 0.85 and sums == {400} and len(hists) == 9000
    record(8, ok, f"accuracy {acc:.4f} on 9000 unlabelled; histogram totals {sorted(sums)}")
    assert ok


# 9. command-line reproducibility

TINY = {"synth_n": 80, "z_dim": 2, "zp_dim": 1, "hidden": 6, "prior_hidden": 4, "iterations": 40,
        "warmup_start": 10, "warmup_end": 30, "refit_iterations": 20, "refit_draws": 5, "n_eval": 10,
        "n_draws": 6, "observations": [0, 1, 2], "grid_res": 40, "supersample": 2, "oracle_obs": 4,
        "oracle_draws": 60, "sweep_C": [5.0, 10.0], "sweep_lambda": [2.0], "log_every": 10}


def _cli_pass(root, name, extra):
    out = root / name
    cfg_path = root / f"{name}.json"
    cfg_path.write_text(json.dumps({**TINY, **extra, "out_dir": str(out)}))
    codes = {cmd: cli_main([cmd, "--config", str(cfg_path)])
             for cmd in ("corrupt", "train", "recover", "evaluate", "sweep", "oracle2d")
             if extra.get("dataset", "synth2d") == "synth2d" or cmd != "oracle2d"}
    files = {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*"))
             if p.suffix in (".csv", ".pgm")}
    return codes, files


def test_c9_cli_reproducible(tmp_path):
    rng = np.random.default_rng(0)
    (tmp_path / "idx").mkdir()
    write_idx(tmp_path / "idx" / "train-images-idx3-ubyte", rng.integers(0, 256, (40, 6, 6)))
    variants = {"synth2d": {"preset": "synth2d"},
                "images": {"dataset": "mnist", "data_dir": str(tmp_path / "idx"), "metrics": ["psnr", "diversity"]}}
    details, ok = [], True
    for label, extra in variants.items():
        c1, f1 = _cli_pass(tmp_path, label + "_a", extra)
        c2, f2 = _cli_pass(tmp_path, label + "_b", extra)
        same = f1 == f2 and set(c1.values()) == {0} and set(c2.values()) == {0}
        n_pgm = sum(k.endswith(".pgm") for k in f1)
        ok &= same and len(f1) > 0
        details.append(f"{label}: {len(f1)} files ({n_pgm} PGM) identical={f1 == f2}, exit codes {sorted(set(c1.values()))}")
    ok &= any(k.endswith(".pgm") for k in f1)
    record(9, ok, "; ".join(details))
    assert ok


# 10. warm-up schedule trace

def _exact_gamma(k, cfg):
    getcontext().prec = 60
    if k <= cfg.warmup_start:
        return cfg.gamma0
    if k >= cfg.warmup_end:
        return cfg.gammaF
    g0, gF = Decimal(cfg.gamma0), Decimal(cfg.gammaF)
    return float(g0 + (gF - g0) * Decimal(k - cfg.warmup_start) / Decimal(cfg.warmup_end - cfg.warmup_start))


def test_c10_warmup_trace():
    cfg, _, log, _ = run2d("tae", 0)
    tcfg = cfg.train_config()
    its, gam = log.column("iter").astype(int).tolist(), log.column("gamma")
    mismatches = sum(g != _exact_gamma(k, tcfg) for k, g in zip(its, gam))
    nondecreasing = bool(np.all(np.diff(gam) >= 0))
    ok = (mismatches == 0 and gam[0] == 0.01 and gam[-1] == 1.0 and its[-1] == tcfg.iterations - 1
          and nondecreasing and warmup_gamma(0, tcfg) == 0.01)
    record(10, ok, f"{len(its)} logged steps, {mismatches} mismatches; endpoints {gam[0]} and {gam[-1]}")
    assert ok
