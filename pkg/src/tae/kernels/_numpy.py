"""Pure-numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_numba``.
"""
import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def gauss_logpdf(x, mean, logvar, mask):
    r = x - mean
    terms = -0.5 * (LOG_2PI + logvar + r * r * np.exp(-logvar))
    return (terms * mask).sum(axis=1)


def gauss_logpdf_grad(g, x, mean, logvar, mask):
    inv = np.exp(-logvar)
    r = x - mean
    gm = g[:, None] * mask
    dx = -gm * r * inv
    dlogvar = gm * 0.5 * (r * r * inv - 1.0)
    return dx, -dx, dlogvar


def leaky_relu(x, slope):
    return np.where(x > 0.0, x, slope * x)


def leaky_relu_grad(g, x, slope):
    return np.where(x > 0.0, g, slope * g)


def logsumexp_rows(a):
    m = a.max(axis=1)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def mean_pairwise_distance(points):
    n = points.shape[0]
    sq = (points * points).sum(axis=1)
    total = 0.0
    # row blocks keep the n x n intermediate bounded
    for start in range(0, n, 256):
        block = points[start:start + 256]
        d2 = sq[start:start + 256, None] + sq[None, :] - 2.0 * block @ points.T
        d2 = np.maximum(d2, 0.0)
        rows = np.arange(start, start + block.shape[0])
        upper = np.arange(n)[None, :] > rows[:, None]
        total += np.sqrt(d2[upper]).sum()
    return total / (n * (n - 1) / 2)


def curve_density_grid(x0, y0, h, nx, ny, cx, cy, weights, sigma, radius):
    """Density on the regular grid (x0 + i h, y0 + j h) of a weighted set of
    isotropic Gaussian kernels centred at (cx, cy), each truncated at ``radius``
    and renormalised. Returns shape (nx, ny)."""
    out = np.zeros((nx, ny))
    r2max = radius * radius
    inv2s2 = 0.5 / (sigma * sigma)
    norm = 1.0 / (2.0 * np.pi * sigma * sigma * (1.0 - np.exp(-r2max * inv2s2)))
    span = int(np.ceil(radius / h)) + 1
    for c in range(cx.shape[0]):
        ic = int(np.floor((cx[c] - x0) / h))
        jc = int(np.floor((cy[c] - y0) / h))
        i0, i1 = max(ic - span, 0), min(ic + span + 1, nx)
        j0, j1 = max(jc - span, 0), min(jc + span + 1, ny)
        if i0 >= i1 or j0 >= j1:
            continue
        dx = x0 + h * np.arange(i0, i1) - cx[c]
        dy = y0 + h * np.arange(j0, j1) - cy[c]
        d2 = dx[:, None] ** 2 + dy[None, :] ** 2
        out[i0:i1, j0:j1] += np.where(d2 <= r2max, weights[c] * np.exp(-d2 * inv2s2), 0.0)
    return out * norm


def adam_update(p, g, m, v, step, b1, b2, eps_hat, scratch):
    """In-place Adam update of ``p``, ``m`` and ``v``.

    ``step`` and ``eps_hat`` already carry the bias corrections. ``scratch`` is
    a pair of arrays shaped like ``p``; reusing them avoids allocating fresh
    temporaries for large parameters on every step.
    """
    a, b = scratch
    np.multiply(g, 1.0 - b1, out=a)
    m *= b1
    m += a
    np.multiply(g, 1.0 - b2, out=a)
    a *= g
    v *= b2
    v += a
    np.sqrt(v, out=a)
    a += eps_hat
    np.multiply(m, step, out=b)
    b /= a
    p -= b
