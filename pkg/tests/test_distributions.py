import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from tae.compute import autodiff as ad
from tae.compute import forward_backward
from tae.distributions import DiagGaussian, entropy, kl, kl_standard, log_density, rsample

HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


def g1(m, lv):
    return DiagGaussian(np.array([m]), np.array([lv]))


def test_log_density_closed_forms():
    assert np.isclose(log_density(DiagGaussian.standard(1), np.zeros(1)), -0.9189385, atol=1e-7)
    assert np.isclose(log_density(DiagGaussian.standard(2), np.ones(2)), -2.8378771, atol=1e-7)


def test_log_density_normalises():
    g = g1(0.4, np.log(0.3))
    val, _ = integrate.quad(lambda x: np.exp(float(log_density(g, np.array([x])))), -10, 10, epsabs=1e-13)
    assert abs(val - 1) < 1e-6


def test_entropy_closed_forms():
    assert np.isclose(entropy(DiagGaussian.standard(1)), 1.4189385, atol=1e-7)
    assert np.isclose(entropy(DiagGaussian.standard(20)), 28.37877, atol=1e-5)
    g = g1(0.0, np.log(4))
    assert np.isclose(entropy(g), 2.1120857, atol=1e-7)
    draws = rsample(g, np.random.default_rng(0), np.random.default_rng(1).standard_normal((10 ** 6, 1)))
    assert abs(-np.mean(log_density(g, draws)) - 2.1120857) < 0.01


def test_kl_examples():
    g = g1(0.3, -0.2)
    assert kl(g, g) == 0.0
    assert np.isclose(kl(g1(1, 0), g1(0, 0)), 0.5)
    assert np.isclose(kl_standard(g1(1, 0)), 0.5)


def test_kl_quadrature():
    a, b = g1(0.3, np.log(0.5)), g1(-0.4, np.log(1.7))

    def f(x):
        x = np.array([x])
        la, lb = float(log_density(a, x)), float(log_density(b, x))
        return np.exp(la) * (la - lb)
    val, _ = integrate.quad(f, -12, 12, epsabs=1e-13, limit=200)
    assert abs(val - float(kl(a, b))) < 1e-6


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_kl_non_negative(v):
    a, b = g1(v[0], v[1]), g1(v[2], v[3])
    assert kl(a, b) >= -1e-12
    assert kl(b, a) >= -1e-12
    if (v[0], v[1]) != (v[2], v[3]):
        assert kl(a, b) > 0 or np.isclose(v[0], v[2]) and np.isclose(v[1], v[3])


def test_rsample_properties():
    g = DiagGaussian(np.array([2.0]), np.array([-60.0]))
    assert abs(rsample(g, np.random.default_rng(0))[0] - 2.0) < 1e-10
    draws = rsample(DiagGaussian(np.full((10 ** 5, 1), 2.0), np.zeros((10 ** 5, 1))), np.random.default_rng(0))
    assert abs(draws.mean() - 2) < 0.02
    eps = np.array([0.7])
    _, g = forward_backward(lambda p: ad.sum(rsample(DiagGaussian(p["m"], p["lv"]), None, eps)),
                            {"m": np.array([0.1]), "lv": np.array([0.2])})
    assert g["m"][0] == 1.0
    assert np.isclose(g["lv"][0], 0.5 * np.exp(0.1) * 0.7)


def test_shape_checks():
    with pytest.raises(ValueError):
        DiagGaussian(np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        log_density(DiagGaussian.standard(2), np.zeros(3))
    with pytest.raises(ValueError):
        kl(DiagGaussian.standard(2), DiagGaussian.standard(3))


def test_batched_reduction():
    g = DiagGaussian(np.zeros((4, 3)), np.zeros((4, 3)))
    assert log_density(g, np.zeros((4, 3))).shape == (4,)
    assert np.shape(entropy(g)) == (4,)
