#!/usr/bin/env python
"""Time every hot kernel under the numba and numpy backends.

    python benchmarks/bench_kernels.py [--repeat 20]

Both backends are imported directly, so the TAE_USE_NUMBA flag is irrelevant here.
The last column shows which backend ``tae.kernels`` routes each kernel to.
"""
import argparse
import time

import numpy as np

from tae import kernels
from tae.kernels import _numpy

try:
    from tae.kernels import _numba
except ImportError:
    _numba = None


def cases(rng):
    n, d = 20, 784  # one MNIST minibatch
    x, mu, lv = rng.random((n, d)), rng.random((n, d)), rng.normal(-2, 1, (n, d))
    mask = (rng.random((n, d)) < 0.5).astype(float)
    g = rng.normal(size=n)
    h = rng.normal(size=(n, 400))
    draws = rng.random((400, 784))
    rows = rng.normal(size=(20, 2000))
    t = np.linspace(-1.5 * np.pi, 1.5 * np.pi, 6000)
    cx, cy = 0.5 + 0.2 * np.sign(t) * (np.cos(t) - 1), 0.5 + 0.3 * np.sin(t)
    p, pg = rng.normal(size=2_400_000), rng.normal(size=2_400_000)  # MNIST-scale parameter count
    m, v = np.zeros_like(p), np.zeros_like(p)
    scratch = (np.empty_like(p), np.empty_like(p))
    w = np.full(6000, 1 / 6000)
    return {
        "gauss_logpdf": lambda k: k.gauss_logpdf(x, mu, lv, mask),
        "gauss_logpdf_grad": lambda k: k.gauss_logpdf_grad(g, x, mu, lv, mask),
        "leaky_relu": lambda k: k.leaky_relu(h, 0.01),
        "leaky_relu_grad": lambda k: k.leaky_relu_grad(h, h, 0.01),
        "logsumexp_rows": lambda k: k.logsumexp_rows(rows),
        "mean_pairwise_distance": lambda k: k.mean_pairwise_distance(draws),
        "curve_density_grid": lambda k: k.curve_density_grid(0.000625, 0.000625, 0.00125, 800, 800,
                                                             cx, cy, w, 0.02, 0.06),
        "adam_update": lambda k: k.adam_update(p, pg, m, v, 1e-4, 0.9, 0.999, 1e-8, scratch),
    }


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = {"numpy": _numpy}
    if _numba is not None:
        backends["numba"] = _numba
    print(f"{'kernel':<24}" + "".join(f"{b + ' [ms]':>14}" for b in backends) + f"{'speedup':>10}{'used':>8}")
    for name, call in cases(np.random.default_rng(0)).items():
        t = {b: best_of(lambda k=k: call(k), args.repeat) for b, k in backends.items()}
        speed = f"{t['numpy'] / t['numba']:>9.1f}x" if "numba" in t else ""
        print(f"{name:<24}" + "".join(f"{1e3 * v:>14.3f}" for v in t.values()) + speed
              + f"{kernels.ROUTES[name]:>8}")


if __name__ == "__main__":
    main()
