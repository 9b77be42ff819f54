import numpy as np
import pytest
from scipy import stats

from tae.data_io import SCurve
from tae.distributions import DiagGaussian, log_density
from tae.evaluation import (ClassifierConfig, ClassifierHead, GridSpec, OracleZeroMass, RefitConfig,
                            classification_accuracy, classify_posterior, count_modes, cross_entropy,
                            diversity, manifold_grid, oracle_posterior_2d, psnr, refit_elbo,
                            total_variation)
from tae.models import Arch, MvaeModel, init_model

SMALL = GridSpec(res=(100, 100), supersample=4)


def test_psnr_examples():
    x = np.linspace(0, 1, 50)
    assert psnr(x, x) == float("inf")
    assert np.isclose(psnr(np.zeros(4), np.full(4, 0.1)), 20.0)
    assert np.isclose(psnr(np.zeros(10), np.full(10, np.sqrt(0.001))), 30.0)
    with pytest.raises(ValueError):
        psnr(np.zeros(3), np.zeros(4))


def test_diversity_examples():
    assert diversity(np.ones((5, 3))) == 0.0
    assert np.isclose(diversity(np.array([[0.0, 0.0], [0.6, 0.8]])), 1.0)
    with pytest.raises(ValueError):
        diversity(np.ones((1, 3)))
    draws = np.random.default_rng(0).standard_normal((1000, 20))
    assert abs(diversity(draws) / np.sqrt(40) - 1) < 0.05


def fixed_posterior(d, mean, logvar, z_dim=2):
    """Posterior whose encoder is N(0, I) and whose decoder ignores z."""
    m = init_model(Arch(d=d, z_dim=z_dim, hidden=8, logvar_min=-20.0), 0, "mvae")
    for k in m.params:
        m.params[k][:] = 0.0
    m.params["dec.bm"][:] = mean
    m.params["dec.bv"][:] = logvar
    return m


def test_refit_matches_factorised_oracle():
    d = 3
    mean, logvar = np.array([0.2, 0.5, 0.7]), np.array([-3.0, -2.0, -2.5])
    post = fixed_posterior(d, mean, logvar)
    rng = np.random.default_rng(0)
    x = mean + np.exp(0.5 * logvar) * rng.standard_normal((40, d))
    y = x * 0.0
    a = np.zeros_like(x)
    score = refit_elbo(post, x, y, a, RefitConfig(iterations=3000, learning_rate=3e-3, final_draws=200),
                       np.random.default_rng(1))
    exact = float(np.mean(log_density(DiagGaussian(np.tile(mean, (40, 1)), np.tile(logvar, (40, 1))), x)))
    assert score <= exact + 0.05
    assert abs(score - exact) < 0.05


def test_refit_validation():
    post = fixed_posterior(2, 0.0, 0.0)
    with pytest.raises(ValueError):
        refit_elbo(post, np.zeros((3, 2)), np.zeros((2, 2)), np.zeros((3, 2)), RefitConfig(iterations=1))
    with pytest.raises(ValueError):
        RefitConfig(final_draws=0)


def test_collapsed_posterior_gives_one_hot():
    post = fixed_posterior(4, np.array([0.1, 0.9, 0.3, 0.2]), np.full(4, -60.0))
    post = MvaeModel(Arch(d=4, z_dim=2, hidden=8, logvar_min=-60.0), post.params)
    post.params["enc.bv"][:] = -60.0
    head = ClassifierHead(4, params={"W": np.random.default_rng(0).normal(size=(4, 10)), "b": np.zeros(10)})
    hist, label = classify_posterior(head, post, np.zeros(4), np.zeros(4), 400, np.random.default_rng(0))
    assert hist.sum() == 400 and hist.max() == 400 and hist[label] == 400


class UniformStub(ClassifierHead):
    """Head answering a uniformly random class per draw."""

    def predict(self, x):
        return self._rng.integers(0, self.n_classes, size=len(np.atleast_2d(x)))


def test_uniform_stub_histogram():
    head = UniformStub(3)
    head._rng = np.random.default_rng(0)
    post = fixed_posterior(3, 0.5, -1.0)
    total = np.zeros(10)
    for i in range(25):
        hist, _ = classify_posterior(head, post, np.zeros(3), np.zeros(3), 400, np.random.default_rng(i))
        assert hist.sum() == 400
        total += hist
    assert stats.chisquare(total).pvalue > 0.001


def test_uniform_head_ties_pick_lowest():
    head = ClassifierHead(3)
    np.testing.assert_allclose(head.probs(np.ones((2, 3))), 0.1)
    assert list(head.predict(np.ones((2, 3)))) == [0, 0]


class EchoPosterior:
    """Returns the observation itself as every posterior draw."""

    def draw(self, y, alpha, n, rng):
        return np.repeat(np.asarray(y)[None], n, axis=0)

    def draw_rows(self, y, alpha, rng):
        return np.asarray(y)


def test_classification_pipeline_on_separable_data():
    rng = np.random.default_rng(0)
    centers = rng.normal(0, 1, (10, 6))
    labels = rng.integers(0, 10, 600)
    x = centers[labels] + 0.1 * rng.standard_normal((600, 6))
    acc, hists = classification_accuracy(EchoPosterior(), x, np.ones_like(x), labels, n_labelled=200,
                                         n_draws=20, cfg=ClassifierConfig(iterations=800, batch_size=50,
                                                                         learning_rate=1e-2))
    assert acc > 0.9
    assert hists.shape == (400, 10) and np.all(hists.sum(axis=1) == 20)
    with pytest.raises(ValueError):
        classification_accuracy(EchoPosterior(), x, x, labels, n_labelled=600)


# oracle

def test_oracle_masses_normalised():
    g = oracle_posterior_2d(SCurve(), np.array([0.0, 0.5]), np.array([0.0, 1.0]), 0.1, SMALL)
    assert abs(g.mass.sum() - 1) < 1e-9 and np.all(g.mass >= 0)


def test_oracle_delta_limit():
    spec = SCurve()
    h = SMALL.cell
    p = spec.curve(0.3)
    y = (np.floor(p / h) + 0.5) * h  # centre of the cell holding the curve point
    g = oracle_posterior_2d(spec, y, np.ones(2), 1e-3, SMALL)
    i, j = g.cell_of(y)[0]
    assert g.mass[i, j] > 0.9


def test_oracle_all_missing_is_prior():
    g = oracle_posterior_2d(SCurve(), np.array([0.3, 0.8]), np.zeros(2), 0.1, SMALL)
    prior = manifold_grid(SCurve(), SMALL)
    assert total_variation(g, prior) < 1e-12
    far = np.stack(np.meshgrid(*prior.centers(), indexing="ij"), -1).reshape(-1, 2)
    dist = SCurve().distance_to_curve(far)
    assert prior.mass.reshape(-1)[dist > 0.1].sum() == 0.0


def test_oracle_modes_at_curve_intersections():
    g = oracle_posterior_2d(SCurve(), np.array([0.0, 0.5]), np.array([0.0, 1.0]), 0.1 / 4, GridSpec())
    assert count_modes(g) == 3
    xs, ys = g.centers()
    marg = g.mass.sum(axis=1)
    peaks = [xs[np.argmax(np.where(np.abs(xs - c) < 0.15, marg, 0))] for c in (0.1, 0.5, 0.9)]
    np.testing.assert_allclose(peaks, [0.1, 0.5, 0.9], atol=0.01)


def test_oracle_resolution_invariance():
    y, a = np.array([0.0, 0.5]), np.array([0.0, 1.0])
    coarse = oracle_posterior_2d(SCurve(), y, a, 0.1, GridSpec(res=(100, 100)))
    fine = oracle_posterior_2d(SCurve(), y, a, 0.1, GridSpec(res=(200, 200)))
    assert total_variation(coarse, fine) < 1e-3


def test_oracle_zero_mass():
    with pytest.raises(OracleZeroMass):
        oracle_posterior_2d(SCurve(), np.array([40.0, 40.0]), np.ones(2), 0.01, SMALL)
    with pytest.raises(ValueError):
        oracle_posterior_2d(SCurve(), np.zeros(3), np.zeros(3), 0.1, SMALL)


def test_cross_entropy_uniform_baseline():
    g = oracle_posterior_2d(SCurve(), np.array([0.0, 0.5]), np.array([0.0, 1.0]), 0.1, SMALL)
    uniform = np.random.default_rng(0).random((200000, 2))
    assert abs(cross_entropy(g, uniform) - np.log(400)) < 0.02
    own = SCurve().sample(200000, np.random.default_rng(1))
    assert cross_entropy(manifold_grid(SCurve(), SMALL), own) < np.log(400) - 1
