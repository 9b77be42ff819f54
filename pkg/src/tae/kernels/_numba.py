"""Numba-compiled twins of the kernels in ``_numpy``."""
import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def gauss_logpdf(x, mean, logvar, mask):
    n, d = x.shape
    out = np.zeros(n)
    for b in range(n):
        acc = 0.0
        for i in range(d):
            if mask[b, i] != 0.0:
                r = x[b, i] - mean[b, i]
                acc += mask[b, i] * -0.5 * (LOG_2PI + logvar[b, i] + r * r * math.exp(-logvar[b, i]))
        out[b] = acc
    return out


@njit(cache=True)
def gauss_logpdf_grad(g, x, mean, logvar, mask):
    n, d = x.shape
    dx = np.zeros((n, d))
    dmean = np.zeros((n, d))
    dlogvar = np.zeros((n, d))
    for b in range(n):
        for i in range(d):
            gm = g[b] * mask[b, i]
            if gm != 0.0:
                inv = math.exp(-logvar[b, i])
                r = x[b, i] - mean[b, i]
                dx[b, i] = -gm * r * inv
                dmean[b, i] = gm * r * inv
                dlogvar[b, i] = gm * 0.5 * (r * r * inv - 1.0)
    return dx, dmean, dlogvar


@njit(cache=True)
def leaky_relu(x, slope):
    out = np.empty_like(x)
    flat_in = x.ravel()
    flat = out.ravel()
    for i in range(flat_in.size):
        v = flat_in[i]
        flat[i] = v if v > 0.0 else slope * v
    return out


@njit(cache=True)
def leaky_relu_grad(g, x, slope):
    out = np.empty_like(g)
    flat_g = g.ravel()
    flat_x = x.ravel()
    flat = out.ravel()
    for i in range(flat_x.size):
        flat[i] = flat_g[i] if flat_x[i] > 0.0 else slope * flat_g[i]
    return out


@njit(cache=True)
def logsumexp_rows(a):
    n, k = a.shape
    out = np.empty(n)
    for b in range(n):
        m = a[b, 0]
        for j in range(1, k):
            if a[b, j] > m:
                m = a[b, j]
        acc = 0.0
        for j in range(k):
            acc += math.exp(a[b, j] - m)
        out[b] = m + math.log(acc)
    return out


@njit(cache=True)
def mean_pairwise_distance(points):
    n = points.shape[0]
    sq = (points * points).sum(axis=1)
    gram = np.dot(points, points.T)
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            d2 = sq[i] + sq[j] - 2.0 * gram[i, j]
            total += math.sqrt(d2) if d2 > 0.0 else 0.0
    return total / (n * (n - 1) / 2)


@njit(cache=True)
def curve_density_grid(x0, y0, h, nx, ny, cx, cy, weights, sigma, radius):
    out = np.zeros((nx, ny))
    r2max = radius * radius
    inv2s2 = 0.5 / (sigma * sigma)
    norm = 1.0 / (2.0 * math.pi * sigma * sigma * (1.0 - math.exp(-r2max * inv2s2)))
    span = int(math.ceil(radius / h)) + 1
    for c in range(cx.shape[0]):
        ic = int(math.floor((cx[c] - x0) / h))
        jc = int(math.floor((cy[c] - y0) / h))
        i0 = max(ic - span, 0)
        i1 = min(ic + span + 1, nx)
        j0 = max(jc - span, 0)
        j1 = min(jc + span + 1, ny)
        for i in range(i0, i1):
            dx = x0 + h * i - cx[c]
            for j in range(j0, j1):
                dy = y0 + h * j - cy[c]
                d2 = dx * dx + dy * dy
                if d2 <= r2max:
                    out[i, j] += weights[c] * math.exp(-d2 * inv2s2)
    for i in range(nx):
        for j in range(ny):
            out[i, j] *= norm
    return out


@njit(cache=True)
def _adam_flat(p, g, m, v, step, b1, b2, eps_hat):
    c1 = 1.0 - b1
    c2 = 1.0 - b2
    for i in range(p.size):
        gi = g[i]
        mi = m[i] * b1 + c1 * gi
        vi = v[i] * b2 + c2 * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= step * mi / (math.sqrt(vi) + eps_hat)


def adam_update(p, g, m, v, step, b1, b2, eps_hat, scratch):
    # same operation order as the numpy version, so both backends agree bit for bit
    _adam_flat(p.reshape(-1), g.reshape(-1), m.reshape(-1), v.reshape(-1), step, b1, b2, eps_hat)
