from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import numeric_grad
from scipy import special, stats

from creditale.errors import ConfigError, DataError, DivergenceError, SeparationError
from creditale.metrics import auc
from creditale.models import (
    FANNConfig,
    GBTConfig,
    LinearConfig,
    fit_binary_glm,
    fit_fann_arrays,
    fit_gbt_arrays,
    fit_linear,
    load_model,
    model_from_dict,
    save_model,
)
from creditale.models.fann import Params, init_params, loss_and_grad
from creditale.models.linear import Link

from conftest import make_dataset

# ---------------------------------------------------------------- linear links


@pytest.mark.parametrize("link,xi", [("logit", 0.0), ("probit", 0.0), ("gev", -0.25), ("gev", 0.0), ("gev", 0.25)])
def test_intercept_only_matches_link_inverse(link, xi):
    y = np.r_[np.ones(172), np.zeros(9828)]
    m = fit_binary_glm(np.empty((y.size, 0)), y, link, xi)
    assert m.intercept == pytest.approx(Link(link, xi).inverse(0.0172), abs=1e-6)
    assert m.predict_proba(np.empty((1, 0)))[0] == pytest.approx(0.0172, abs=1e-9)


def test_link_cdf_and_inverse_round_trip():
    for name, xi in [("logit", 0), ("probit", 0), ("gev", 0.2), ("gev", -0.2), ("gev", 0.0)]:
        lk = Link(name, xi)
        for p in (0.01, 0.3, 0.9):
            assert float(lk.cdf(np.array([lk.inverse(p)]))[0]) == pytest.approx(p, abs=1e-10)
    assert Link("logit").cdf(np.array([0.7]))[0] == pytest.approx(special.expit(0.7))
    assert Link("probit").cdf(np.array([0.7]))[0] == pytest.approx(stats.norm.cdf(0.7))


@pytest.mark.parametrize("name,xi", [("logit", 0.0), ("probit", 0.0), ("gev", 0.2), ("gev", -0.2), ("gev", 0.0)])
def test_link_pdf_slope_is_derivative(name, xi):
    lk = Link(name, xi)
    eta = np.linspace(-1.5, 1.5, 7)
    h = 1e-6
    num = (lk.pdf(eta + h) - lk.pdf(eta - h)) / (2 * h)
    np.testing.assert_allclose(lk.pdf_slope(eta), num, rtol=1e-5, atol=1e-8)
    num_pdf = (lk.cdf(eta + h) - lk.cdf(eta - h)) / (2 * h)
    np.testing.assert_allclose(lk.pdf(eta), num_pdf, rtol=1e-5, atol=1e-8)


def _simulate(link, beta, n, seed, xi=0.0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, len(beta) - 1))
    eta = beta[0] + X @ beta[1:]
    y = (rng.random(n) < Link(link, xi).cdf(eta)).astype(int)
    return X, y


@pytest.mark.parametrize("link", ["logit", "probit"])
def test_simulated_beta_recovery(link):
    beta = np.array([0.5, -1.2, 0.8])
    X, y = _simulate(link, beta, 50_000, 4)
    m = fit_binary_glm(X, y, link)
    assert np.max(np.abs(m.coefficients - beta)) < 0.05
    assert m.converged and np.all(m.std_errors > 0)


def test_gev_recovery_and_xi_selection():
    beta = np.array([-1.0, 0.6, -0.4])
    X, y = _simulate("gev", beta, 50_000, 5, xi=-0.2)
    m = fit_binary_glm(X, y, "gev", -0.2)
    assert np.max(np.abs(m.coefficients - beta)) < 0.05
    d = make_dataset(X, y)
    auto = fit_linear(d, "gev", LinearConfig(seed=1))
    assert auto.xi in LinearConfig().xi_grid
    assert len(auto.meta["xi_trace"]) == len(LinearConfig().xi_grid)


def test_raw_scale_coefficients_are_invariant_to_units():
    X, y = _simulate("logit", np.array([0.2, 1.0]), 5000, 6)
    a = fit_binary_glm(X, y)
    b = fit_binary_glm(1000.0 * X + 7.0, y)
    np.testing.assert_allclose(a.predict_proba(X), b.predict_proba(1000.0 * X + 7.0), atol=1e-9)
    assert b.coefficients[1] == pytest.approx(a.coefficients[1] / 1000.0, rel=1e-6)


def test_separation_handling():
    X = np.r_[np.linspace(-2, -0.1, 30), np.linspace(0.1, 2, 30)][:, None]
    y = (X[:, 0] > 0).astype(int)
    with pytest.raises(SeparationError):
        fit_binary_glm(X, y, "logit", config=LinearConfig(ridge=False))
    m = fit_binary_glm(X, y, "logit")
    assert m.meta["ridge_penalty"] > 0 and auc(m.predict_proba(X), y) == 1.0


def test_linear_errors():
    with pytest.raises(DataError):
        fit_binary_glm(np.ones((4, 1)), np.array([0, 1, 0, 1]))
    with pytest.raises(DataError):
        fit_binary_glm(np.zeros((4, 0)), np.zeros(4))
    with pytest.raises(ConfigError):
        fit_linear(make_dataset(np.arange(6.0)[:, None]), "cauchit")


def test_probit_and_logit_rank_alike():
    X, y = _simulate("logit", np.array([-0.5, 1.0, -0.7, 0.3]), 5000, 7)
    a = fit_binary_glm(X, y, "logit").predict_proba(X)
    b = fit_binary_glm(X, y, "probit").predict_proba(X)
    assert stats.spearmanr(a, b).statistic > 0.99


# ---------------------------------------------------------------------- GBT


def test_gbt_learns_xor():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(400, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    m = fit_gbt_arrays(X, y, GBTConfig(n_trees=50, max_depth=2, learning_rate=0.3, min_child_weight=0.0))
    assert np.all((m.predict_proba(X) >= 0.5) == y)


@given(seed=st.integers(0, 10_000), depth=st.integers(0, 4), lr=st.sampled_from([0.1, 0.5, 1.0]))
@settings(max_examples=15, deadline=None)
def test_gbt_loss_monotone(seed, depth, lr):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(150, 3))
    y = (rng.random(150) < special.expit(X[:, 0] - X[:, 1] ** 2)).astype(int)
    if y.min() == y.max():
        return
    m = fit_gbt_arrays(X, y, GBTConfig(n_trees=15, max_depth=depth, learning_rate=lr))
    assert np.all(np.diff(m.train_loss) <= 1e-12)
    assert all(t.depth <= depth for t in m.trees)


def test_gbt_depth_zero_is_a_constant():
    X = np.arange(20.0)[:, None]
    y = (X[:, 0] > 9).astype(int)
    m = fit_gbt_arrays(X, y, GBTConfig(n_trees=5, max_depth=0))
    assert np.ptp(m.predict_proba(X)) == 0.0


def test_gbt_min_child_weight_blocks_splits():
    X = np.arange(20.0)[:, None]
    y = (X[:, 0] > 9).astype(int)
    m = fit_gbt_arrays(X, y, GBTConfig(n_trees=3, min_child_weight=1e6))
    assert all(t.n_leaves == 1 for t in m.trees)


def test_gbt_config_validation():
    for bad in ({"max_depth": -1}, {"learning_rate": 0.0}, {"l2": -1.0}, {"n_trees": -1}):
        with pytest.raises(ConfigError):
            GBTConfig(**bad)


# --------------------------------------------------------------------- FANN


def test_fann_gradient_matches_finite_differences(rng):
    p, M = 4, 5
    Z = rng.normal(size=(30, p))
    y = (rng.random(30) < 0.4).astype(float)
    params = init_params(p, M, rng)
    _, grad = loss_and_grad(params, Z, y)

    def loss_at(v):
        return loss_and_grad(Params.unflat(v, M, p), Z, y)[0]

    num = numeric_grad(loss_at, params.flat())
    rel = np.linalg.norm(grad.flat() - num) / np.linalg.norm(num)
    assert rel < 1e-4


def test_fann_fits_separable_data():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(400, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    m = fit_fann_arrays(X, y, FANNConfig(hidden_size=8, learning_rate=0.5, epochs=100, batch_size=32, seed=3))
    assert auc(m.predict_proba(X), y) >= 0.99
    assert m.loss_trace[-1] < m.loss_trace[0]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_fann_divergence_is_reported():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 2))
    y = (X[:, 0] > 0).astype(int)
    with pytest.raises(DivergenceError) as info:
        fit_fann_arrays(X, y, FANNConfig(learning_rate=1e308, epochs=3))
    assert info.value.epoch == 1


def test_fann_seeded():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(100, 3))
    y = (X[:, 0] > 0).astype(int)
    cfg = FANNConfig(epochs=5, seed=11)
    a = fit_fann_arrays(X, y, cfg).predict_proba(X)
    b = fit_fann_arrays(X, y, cfg).predict_proba(X)
    np.testing.assert_array_equal(a, b)


# ------------------------------------------------------------ shared interface


def _all_models():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(300, 3))
    y = (rng.random(300) < special.expit(X[:, 0] - 0.5 * X[:, 2])).astype(int)
    d = make_dataset(X, y, ("a", "b", "c"))
    return d, [
        fit_linear(d, "logit"),
        fit_linear(d, "probit"),
        fit_linear(d, "gev", LinearConfig(xi=0.1)),
        fit_gbt_arrays(X, y, GBTConfig(n_trees=10), d.feature_names),
        fit_fann_arrays(X, y, FANNConfig(epochs=5), d.feature_names),
    ]


def test_serialization_round_trip(tmp_path):
    d, models = _all_models()
    for m in models:
        back = load_model(save_model(m, tmp_path / f"{m.family}.json"))
        assert back.family == m.family and back.feature_names == ("a", "b", "c")
        np.testing.assert_array_equal(back.predict_proba(d.features), m.predict_proba(d.features))
    with pytest.raises(ConfigError):
        model_from_dict({"family": "svm"})


@given(rows=st.lists(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3), min_size=1, max_size=20))
@settings(max_examples=40, deadline=None)
def test_predictions_are_probabilities(rows):
    for m in MODELS:
        p = m.predict_proba(np.array(rows))
        assert p.shape == (len(rows),) and np.all((p >= 0) & (p <= 1))


MODELS = _all_models()[1]


def test_predict_validates_input():
    m = MODELS[0]
    with pytest.raises(DataError):
        m.predict_proba(np.ones((2, 4)))
    with pytest.raises(DataError):
        m.predict_proba(np.array([[np.nan, 0, 0]]))
