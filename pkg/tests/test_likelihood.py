import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from universal_cl import (
    full_likelihood_weights,
    log_cl,
    log_cl_density,
    log_clrs,
    log_swapped_clrs,
    make_weights,
    pairwise_weights,
    split_dataset,
)
from universal_cl.errors import EvaluationError, SplitError
from universal_cl.likelihood import SplitSample


def test_mixed_scheme_hand_value(std_gauss):
    w = make_weights(2, {(1,): 1, (2,): 1}, {((1,), (2,)): 2})
    # independent: rho = 0 so every component is a standard normal log-density at 0
    phi0 = stats.norm.logpdf(0.0)
    expect = (phi0 + phi0 + 2 * phi0) / 4
    assert log_cl_density(std_gauss, w, [0, 0], [0, 0]) == pytest.approx(expect, abs=1e-12)
    assert expect == pytest.approx(-0.9189385332, abs=1e-10)


def test_mixed_scheme_correlated(gauss):
    w = make_weights(2, {(1,): 1, (1, 2): 3}, {((2,), (1,)): 2})
    x, mu = np.array([0.4, -1.1]), np.array([0.1, 0.3])
    cov = gauss.covariance
    m1 = stats.norm.logpdf(x[0], mu[0], 1.0)
    joint = stats.multivariate_normal(mu, cov).logpdf(x)
    cond = joint - m1
    assert log_cl_density(gauss, w, x, mu) == pytest.approx((m1 + 3 * joint + 2 * cond) / 6, abs=1e-12)


def test_full_weights_reduce_to_joint(gauss):
    x = gauss.sample([0, 0], 30, seed=1)
    np.testing.assert_array_equal(
        log_cl_density(gauss, full_likelihood_weights(2), x, [0.2, 0.1]), gauss.log_full(x, [0.2, 0.1])
    )


@given(scale=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_weight_scaling_invariance(scale, seed):
    from universal_cl import binary_loglinear

    model = binary_loglinear(3)
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 2, 3)
    b = rng.uniform(0, 2, 2)
    alpha = {(1,): a[0], (2, 3): a[1], (1, 2, 3): a[2]}
    beta = {((1,), (3,)): b[0], ((2, 3), (1,)): b[1]}
    w = make_weights(3, alpha, beta)
    ws = make_weights(3, {k: v * scale for k, v in alpha.items()}, {k: v * scale for k, v in beta.items()})
    theta = rng.uniform(-1, 1, 6)
    x = model.outcomes()
    np.testing.assert_allclose(log_cl_density(model, ws, x, theta), log_cl_density(model, w, x, theta), atol=1e-12, rtol=0)


def test_zero_density_gives_minus_inf():
    from universal_cl.models import DiscreteTableModel, ParamSpace

    def table(theta):
        p = float(theta[0])
        return np.array([[1 - p, 0.0], [p, 0.0]])

    m = DiscreteTableModel(table, (2, 2), ParamSpace((0.0,), (1.0,)), (0.5,))
    w = make_weights(2, {(1, 2): 1})
    assert log_cl(m, w, np.array([[0, 0], [0, 1]]), [0.5]) == -math.inf


class TestLogCL:
    def test_single_observation(self, gauss):
        w = pairwise_weights(2)
        x = np.array([[0.5, -0.5]])
        assert log_cl(gauss, w, x, [0, 0]) == pytest.approx(log_cl_density(gauss, w, x[0], [0, 0]))

    def test_additivity(self, gauss):
        w = make_weights(2, {(1,): 1}, {((2,), (1,)): 1})
        a = gauss.sample([0, 0], 7, seed=1)
        b = gauss.sample([0, 0], 5, seed=2)
        th = [0.3, -0.2]
        assert log_cl(gauss, w, np.vstack([a, b]), th) == pytest.approx(log_cl(gauss, w, a, th) + log_cl(gauss, w, b, th), abs=1e-10)

    def test_repeated_point(self, gauss):
        w = pairwise_weights(2)
        x = np.tile([0.2, 0.9], (5, 1))
        assert log_cl(gauss, w, x, [0, 0]) == pytest.approx(5 * log_cl_density(gauss, w, x[0], [0, 0]), abs=1e-12)

    def test_empty(self, gauss):
        with pytest.raises(Exception):
            log_cl(gauss, pairwise_weights(2), np.empty((0, 2)), [0, 0])


class TestSplit:
    def test_halves(self):
        data = np.arange(8.0).reshape(4, 2)
        s = split_dataset(data)
        np.testing.assert_array_equal(s.fold0, data[:2])
        np.testing.assert_array_equal(s.fold1, data[2:])

    def test_two(self):
        s = split_dataset(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert s.n == 1

    def test_odd(self):
        with pytest.raises(SplitError):
            split_dataset(np.zeros((5, 2)))

    def test_shuffle_is_seeded(self):
        data = np.arange(20.0).reshape(10, 2)
        a, b = split_dataset(data, shuffle_seed=3), split_dataset(data, shuffle_seed=3)
        np.testing.assert_array_equal(a.fold0, b.fold0)
        assert not np.array_equal(a.fold0, data[:5])

    def test_bad_fold_index(self):
        with pytest.raises(SplitError):
            split_dataset(np.zeros((2, 2))).fold(2)


class TestRatioStatistics:
    def test_identical_estimator_gives_zero(self, gauss):
        s = split_dataset(gauss.sample([0, 0], 20, seed=0))
        assert log_clrs(gauss, pairwise_weights(2), s, 0, [0.3, 0.1], [0.3, 0.1]) == 0.0

    def test_indeterminate(self):
        from universal_cl.models import DiscreteTableModel, ParamSpace

        def table(theta):
            p = float(theta[0])
            return np.array([[1 - p, 0.0], [p, 0.0]])

        m = DiscreteTableModel(table, (2, 2), ParamSpace((0.0,), (1.0,)), (0.5,))
        s = SplitSample(np.array([[0.0, 1.0]]), np.array([[0.0, 0.0]]))
        with pytest.raises(EvaluationError):
            log_clrs(m, make_weights(2, {(1, 2): 1}), s, 0, [0.5], [0.4])

    def test_full_weights_match_plain_likelihood_ratio(self, gauss):
        s = split_dataset(gauss.sample([0.1, 0.2], 40, seed=4))
        theta, tilde = np.array([0.0, 0.0]), np.array([0.3, 0.1])
        mvn = lambda m: stats.multivariate_normal(m, gauss.covariance)
        expect = mvn(tilde).logpdf(s.fold0).sum() - mvn(theta).logpdf(s.fold0).sum()
        got = log_clrs(gauss, full_likelihood_weights(2), s, 0, theta, tilde)
        assert got == pytest.approx(expect, abs=1e-10)

    @pytest.mark.parametrize(
        "u0,u1,expect",
        [(0.0, 0.0, 0.0), (math.log(2), -math.inf, 0.0), (math.log(3), 0.0, math.log(2))],
    )
    def test_swapped_examples(self, u0, u1, expect):
        assert log_swapped_clrs(u0, u1) == pytest.approx(expect, abs=1e-15)

    def test_swapped_no_overflow(self):
        assert log_swapped_clrs(1000.0, 1000.0) == pytest.approx(1000.0)

    @given(st.floats(-700, 700), st.floats(-700, 700))
    def test_swapped_bounds(self, a, b):
        v = log_swapped_clrs(a, b)
        hi = max(a, b)
        assert hi - math.log(2) - 1e-9 <= v <= hi + 1e-9
