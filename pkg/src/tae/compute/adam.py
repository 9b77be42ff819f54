"""Adam with bias correction, operating on dicts of numpy arrays."""
import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..kernels import _numpy as _np_kernels


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    scratch: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def zeros_like(cls, params, **hyper):
        state = cls(**hyper)
        for k, p in params.items():
            state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        return state


def adam_step(state: AdamState, params: dict, grads: dict, maximize: bool = False) -> None:
    """One descent step on ``params`` (in place) along ``-grads``, or an ascent
    step along ``grads`` when ``maximize`` is set."""
    if set(grads) != set(params):
        raise ValueError(f"gradient keys {sorted(set(grads) ^ set(params))} do not match parameters")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    # bias corrections folded into two scalars: lr * mhat / (sqrt(vhat) + eps)
    # equals step * m / (sqrt(v) + eps_hat)
    step = state.lr * math.sqrt(corr2) / corr1
    eps_hat = state.eps * math.sqrt(corr2)
    if maximize:
        step = -step
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {k!r} has shape {g.shape}, parameter has {p.shape}")
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(p)
            state.v[k] = np.zeros_like(p)
        elif m.shape != p.shape:
            raise ValueError(f"Adam moment for {k!r} has shape {m.shape}, parameter has {p.shape}")
        v = state.v[k]
        buf = state.scratch.get(k)
        if buf is None or buf[0].shape != p.shape:
            buf = state.scratch[k] = (np.empty_like(p), np.empty_like(p))
        args = (p, g, m, v, step, b1, b2, eps_hat, buf)
        if all(a.flags.c_contiguous for a in (p, g, m, v)):
            kernels.adam_update(*args)
        else:
            _np_kernels.adam_update(*args)
