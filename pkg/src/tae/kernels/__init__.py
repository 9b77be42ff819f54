"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``TAE_USE_NUMBA=0`` to force
the numpy implementations (numba is also skipped when it is not importable).
The exp-bound kernels (Gaussian log-density, its gradient, row logsumexp) stay
on numpy unless numba was built with SVML: numpy's vectorised exp beats a
scalar libm loop. ``ROUTES`` records the module serving each kernel.
Callers must pass C-contiguous float64 arrays; ``mask`` arguments are dense
0/1 float arrays with the same shape as ``x``.
"""
import os

from . import _numpy

BACKEND = "numpy"
_impl = _numpy
_exp_impl = _numpy

if os.environ.get("TAE_USE_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off"):
    try:
        import numba

        from . import _numba
    except ImportError:  # pragma: no cover - numba is optional
        pass
    else:
        _impl = _numba
        BACKEND = "numba"
        if numba.config.USING_SVML:  # pragma: no cover - depends on the numba build
            _exp_impl = _numba

gauss_logpdf = _exp_impl.gauss_logpdf
gauss_logpdf_grad = _exp_impl.gauss_logpdf_grad
leaky_relu = _impl.leaky_relu
leaky_relu_grad = _impl.leaky_relu_grad
logsumexp_rows = _exp_impl.logsumexp_rows
mean_pairwise_distance = _impl.mean_pairwise_distance
curve_density_grid = _impl.curve_density_grid
adam_update = _impl.adam_update

ROUTES = {name: globals()[name].__module__.rsplit(".", 1)[-1].lstrip("_") for name in (
    "gauss_logpdf", "gauss_logpdf_grad", "leaky_relu", "leaky_relu_grad", "logsumexp_rows",
    "mean_pairwise_distance", "curve_density_grid", "adam_update")}

__all__ = [
    "BACKEND",
    "ROUTES",
    "gauss_logpdf",
    "gauss_logpdf_grad",
    "leaky_relu",
    "leaky_relu_grad",
    "logsumexp_rows",
    "mean_pairwise_distance",
    "curve_density_grid",
    "adam_update",
]
