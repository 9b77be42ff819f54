import numpy as np
import pytest

from tae.models import Arch, init_model


def tiny_arch(**kw):
    base = dict(d=3, z_dim=2, zp_dim=1, hidden=2, prior_hidden=2)
    base.update(kw)
    return Arch(**base)


def perturbed(model, scale, seed):
    """Random parameter point, away from the zero biases of the initialiser."""
    rng = np.random.default_rng(seed)
    for k in model.params:
        model.params[k] = model.params[k] + scale * rng.standard_normal(model.params[k].shape)
    return model


def central_fd(f, params, h=1e-5):
    grads = {}
    for k, p in params.items():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = f(params)
            p[idx] = old - h
            down = f(params)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads[k] = g
    return grads


def rel_error(a: dict, b: dict) -> float:
    va = np.concatenate([a[k].ravel() for k in sorted(a)])
    vb = np.concatenate([b[k].ravel() for k in sorted(b)])
    return float(np.linalg.norm(va - vb) / max(np.linalg.norm(va), np.linalg.norm(vb), 1e-300))


@pytest.fixture
def tiny_tae():
    return perturbed(init_model(tiny_arch(), 0, "tae"), 0.3, 1)


@pytest.fixture
def tiny_mvae():
    return perturbed(init_model(tiny_arch(), 0, "mvae"), 0.3, 1)


# acceptance report: one line per criterion, printed after the run

ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    parts = ACCEPTANCE.setdefault(criterion, [])
    parts.append((bool(ok), detail))
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        ok = all(p[0] for p in parts)
        terminalreporter.write_line(f"criterion {c:>2}: {'PASS' if ok else 'FAIL'}  " + "; ".join(p[1] for p in parts))
