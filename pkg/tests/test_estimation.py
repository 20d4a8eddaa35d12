import math

import numpy as np
import pytest

from universal_cl import (
    GaussianModel,
    OptimizerSettings,
    Plugin,
    conditional_weights,
    fit_mcle,
    full_likelihood_weights,
    log_cl,
    pairwise_weights,
    plugin_estimator,
)
from universal_cl.errors import ConvergenceError, SpaceError
from universal_cl.models import DiscreteTableModel, ParamSpace


def numerical_gradient(f, x, h=1e-5):
    g = np.zeros_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestGaussianMean:
    def test_full_weights_sample_mean(self, gauss):
        x = gauss.sample([0.7, -0.4], 60, seed=2)
        fit = fit_mcle(gauss, full_likelihood_weights(2), x)
        np.testing.assert_allclose(fit.theta_hat, x.mean(axis=0), atol=1e-6)
        assert fit.converged

    def test_pairwise_diagonal_sample_mean(self):
        model = GaussianModel(3, np.diag([1.0, 2.0, 0.5]))
        x = model.sample([1.0, 0.0, -1.0], 40, seed=8)
        w = pairwise_weights(3)
        fit = fit_mcle(model, w, x)
        np.testing.assert_allclose(fit.theta_hat, x.mean(axis=0), atol=1e-6)
        # independent check: analytic gradient of the pairwise log-CL vanishes at the sample mean
        var = np.diag(model.covariance)
        grad = (x - x.mean(axis=0)).sum(axis=0) / var * 2 / w.gamma
        assert np.allclose(grad, 0, atol=1e-9)

    def test_pin(self, gauss):
        x = gauss.sample([0.7, -0.4], 60, seed=2)
        fit = fit_mcle(gauss, pairwise_weights(2), x, gauss.space.with_pins({0: 0.0}))
        assert fit.theta_hat[0] == 0.0
        # conditional MLE of mu2 given mu1 = 0 under known covariance
        cov = gauss.covariance
        xbar = x.mean(axis=0)
        expect = xbar[1] - cov[0, 1] / cov[0, 0] * xbar[0]
        assert fit.theta_hat[1] == pytest.approx(expect, abs=1e-6)

    def test_all_pinned(self, gauss):
        x = gauss.sample([0, 0], 10, seed=2)
        fit = fit_mcle(gauss, pairwise_weights(2), x, gauss.space.with_pins({0: 0.1, 1: 0.2}))
        assert fit.theta_hat.tolist() == [0.1, 0.2] and fit.iterations == 0

    def test_box_bound(self, gauss):
        x = gauss.sample([1.0, 1.0], 80, seed=2)
        space = gauss.space.with_bounds(upper=(0.0, math.inf))
        fit = fit_mcle(gauss, pairwise_weights(2), x, space)
        assert fit.theta_hat[0] == 0.0
        assert space.contains(fit.theta_hat)

    def test_determinism(self, gauss):
        x = gauss.sample([0.2, 0.1], 30, seed=9)
        s = OptimizerSettings(restarts=4, seed=3)
        a = fit_mcle(gauss, pairwise_weights(2), x, settings=s)
        b = fit_mcle(gauss, pairwise_weights(2), x, settings=s)
        assert a.theta_hat.tobytes() == b.theta_hat.tobytes() and a.objective == b.objective

    def test_constrained_never_exceeds_unconstrained(self, gauss):
        for seed in range(5):
            x = gauss.sample([0.5, 0.5], 30, seed=seed)
            free = fit_mcle(gauss, pairwise_weights(2), x)
            pinned = fit_mcle(gauss, pairwise_weights(2), x, gauss.space.with_pins({1: 0.0}))
            assert pinned.objective <= free.objective + 1e-9

    def test_dominates_null_points(self, gauss):
        x = gauss.sample([0.0, 0.3], 30, seed=1)
        null = gauss.space.with_pins({0: 0.0})
        fit = fit_mcle(gauss, pairwise_weights(2), x, null)
        for mu2 in np.linspace(-1, 1, 21):
            assert fit.objective >= log_cl(gauss, pairwise_weights(2), x, [0.0, mu2]) - 1e-12


def test_stationarity_discrete(bern):
    x = bern.sample([0.3, 0.6, 2.0], 200, seed=4)
    w = conditional_weights(2)
    fit = fit_mcle(bern, w, x)
    assert bern.space.contains(fit.theta_hat)
    lo, hi = np.array(bern.space.lower), np.array(bern.space.upper)
    interior = (fit.theta_hat > lo + 1e-3) & (fit.theta_hat < hi - 1e-3)
    grad = numerical_gradient(lambda t: log_cl(bern, w, x, t), fit.theta_hat)
    assert np.linalg.norm(grad[interior]) <= 1e-3 * (1 + abs(fit.objective))


def test_objective_not_below_start(bern):
    x = bern.sample([0.3, 0.6, 2.0], 3, seed=1)
    start = np.array([0.5, 0.5, 1.0])
    fit = fit_mcle(bern, conditional_weights(2), x, start=start)
    assert fit.objective >= log_cl(bern, conditional_weights(2), x, start)


def test_space_mismatch(gauss):
    with pytest.raises(SpaceError):
        fit_mcle(gauss, pairwise_weights(2), np.zeros((3, 2)), ParamSpace.unbounded(3))


def _dead_table(theta):
    return np.array([[1.0, 0.0], [0.0, 0.0]])


def test_all_restarts_fail():
    m = DiscreteTableModel(_dead_table, (2, 2), ParamSpace((0.0,), (1.0,)), (0.5,))
    with pytest.raises(ConvergenceError) as info:
        fit_mcle(m, full_likelihood_weights(2), np.array([[1.0, 1.0]]), settings=OptimizerSettings(restarts=2))
    assert info.value.best is not None


class TestPlugins:
    def test_fixed(self, gauss):
        v = plugin_estimator(gauss, pairwise_weights(2), np.zeros((2, 2)), strategy="fixed", value=[1.0, 2.0])
        assert v.tolist() == [1.0, 2.0]

    def test_mcle_delegates(self, gauss):
        x = gauss.sample([0.1, 0.1], 20, seed=5)
        s = OptimizerSettings(restarts=2)
        a = plugin_estimator(gauss, pairwise_weights(2), x, s, "mcle")
        b = fit_mcle(gauss, pairwise_weights(2), x, gauss.space, s).theta_hat
        assert a.tobytes() == b.tobytes()

    def test_moments(self, gauss):
        x = gauss.sample([0.1, 0.1], 20, seed=5)
        np.testing.assert_allclose(Plugin("moments").estimate(gauss, pairwise_weights(2), x), np.mean(x, axis=0), atol=0)

    def test_moments_unavailable(self, bern):
        with pytest.raises(ValueError):
            plugin_estimator(bern, pairwise_weights(2), np.zeros((2, 2)), strategy="moments")

    def test_bad_strategy(self):
        with pytest.raises(ValueError):
            Plugin("bogus")
        with pytest.raises(ValueError):
            Plugin("fixed")
