"""Acceptance checks, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line (shown even when pytest
captures output) and then asserts the same condition.
"""
import math
import time

import numpy as np
import pytest
from scipy import stats

from universal_cl import (
    GaussianModel,
    OptimizerSettings,
    Plugin,
    bivariate_bernoulli,
    binary_loglinear,
    conditional_weights,
    confset_membership,
    enumerate_divisions,
    enumerate_subsets,
    full_likelihood_weights,
    log_cl_density,
    make_weights,
    pairwise_weights,
    split_clrt,
    split_dataset,
    swapped_clrt,
)
from universal_cl.harness import (
    ExperimentConfig,
    estimate_confseq_validity,
    estimate_coverage,
    estimate_expectation_bound,
    estimate_random_stop_pvalue,
    estimate_sequential_type1,
    estimate_type1,
    exact_expectation_discrete,
    exact_supermartingale_check,
    simulate_trajectories,
)
from universal_cl.sequential import run_sequential

pytestmark = pytest.mark.slow

FAST = OptimizerSettings(restarts=1)
COV = np.array([[1.0, 0.5], [0.5, 1.0]])
BERN_STAR = (0.3, 0.6, 2.0)


@pytest.fixture
def verdict(capsys):
    def emit(number, title, passed, detail, started):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title}: {detail} ({time.perf_counter() - started:.1f}s)"
        with capsys.disabled():
            print("\n" + line)
        return passed

    return emit


def _gauss():
    return GaussianModel(2, COV)


def _summary(reports):
    return "; ".join(f"{r.experiment.split('/', 1)[-1]} {r.quantity}={r.estimate:.4f}" for r in reports)


def test_criterion_01_counts(verdict):
    t0 = time.perf_counter()
    rows = []
    for d in range(1, 9):
        subsets = len(enumerate_subsets(d))
        divisions = len(enumerate_divisions(d)) if d >= 2 else 0
        rows.append(subsets == 2**d - 1 and divisions == 3**d - 2 ** (d + 1) + 1)
    elapsed = time.perf_counter() - t0
    ok = all(rows) and elapsed < 1.0
    verdict(1, "subset/division counts d<=8", ok, f"{sum(rows)}/8 dimensions match", t0)
    assert ok


def test_criterion_02_exact_expectation(verdict):
    t0 = time.perf_counter()
    model = bivariate_bernoulli()
    plugin = Plugin(settings=OptimizerSettings(restarts=2))
    values = {}
    for name, w in (("full", full_likelihood_weights(2)), ("pairwise", pairwise_weights(2)), ("conditional", conditional_weights(2))):
        for n in (1, 2):
            values[(name, n)] = exact_expectation_discrete(model, w, BERN_STAR, n, plugin)
    ok = all(v <= 1 + 1e-12 for v in values.values())
    detail = ", ".join(f"{k[0]} n={k[1]}: {v:.6f}" for k, v in values.items())
    verdict(2, "exact E[U] <= 1", ok, detail, t0)
    assert ok


def test_criterion_03_expectation_mc(verdict):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        _gauss(), (0.2, -0.1), pairwise_weights(2), n=20, replicates=5000, seed=3, guarantee="expectation",
        plugin=Plugin(settings=FAST), settings=FAST,
    )
    (rep,) = estimate_expectation_bound(cfg)
    ok = rep.passed
    verdict(3, "Monte Carlo E[U] <= 1 + 3 SE", ok, f"mean={rep.estimate:.4f} SE={rep.standard_error:.4f} R={rep.replicates}", t0)
    assert ok


@pytest.mark.parametrize(
    "design",
    ["gaussian", "discrete"],
)
def test_criterion_04_coverage(verdict, design):
    t0 = time.perf_counter()
    if design == "gaussian":
        cfg = ExperimentConfig(_gauss(), (0.3, -0.2), pairwise_weights(2), n=50, levels=(0.05, 0.1), replicates=2000, seed=4,
                               plugin=Plugin(settings=FAST), settings=FAST)
    else:
        cfg = ExperimentConfig(bivariate_bernoulli(), BERN_STAR, conditional_weights(2), n=50, levels=(0.05, 0.1), replicates=2000,
                               seed=4, plugin=Plugin(settings=FAST), settings=FAST)
    reports = estimate_coverage(cfg)
    ok = len(reports) == 4 and all(r.passed for r in reports)
    verdict(4, f"coverage of C and swapped C ({design})", ok, _summary(reports), t0)
    assert ok


@pytest.mark.parametrize("design", ["gaussian", "discrete"])
def test_criterion_05_type1(verdict, design):
    t0 = time.perf_counter()
    if design == "gaussian":
        model = _gauss()
        cfg = ExperimentConfig(model, (0.0, 0.5), pairwise_weights(2), n=50, levels=(0.05, 0.1), replicates=2000, seed=5,
                               guarantee="type1", null_space=model.space.with_pins({0: 0.0}), plugin=Plugin(settings=FAST), settings=FAST)
    else:
        model = bivariate_bernoulli()
        cfg = ExperimentConfig(model, BERN_STAR, conditional_weights(2), n=50, levels=(0.05, 0.1), replicates=2000, seed=5,
                               guarantee="type1", null_space=model.space.with_pins({0: BERN_STAR[0]}), plugin=Plugin(settings=FAST),
                               settings=FAST)
    reports = estimate_type1(cfg)
    ok = len(reports) == 4 and all(r.quantity == "type1" and r.passed for r in reports)
    verdict(5, f"split/swapped test Type I error ({design})", ok, _summary(reports), t0)
    assert ok


@pytest.fixture(scope="module")
def null_trajectories():
    model = _gauss()
    cfg = ExperimentConfig(
        model, (0.0, 0.0), pairwise_weights(2), n=500, levels=(0.05,), replicates=2000, seed=6, guarantee="sequential_type1",
        null_space=model.space.with_pins({0: 0.0, 1: 0.0}), plugin=Plugin("moments"), theta_init=(0.0, 0.0),
    )
    return cfg, simulate_trajectories(cfg)


def test_criterion_06_sequential_type1(verdict, null_trajectories):
    t0 = time.perf_counter()
    cfg, traj = null_trajectories
    (rep,) = estimate_sequential_type1(cfg, trajectories=traj)
    ok = rep.passed and rep.replicates == 2000 and all(len(p) == 500 for p in traj.log_m)
    verdict(6, "running test ever rejects <= alpha + 3 SE", ok,
            f"rate={rep.estimate:.4f} SE={rep.standard_error:.4f} simulation {traj.wall_time:.1f}s", t0)
    assert ok


def test_criterion_07_supermartingale(verdict):
    t0 = time.perf_counter()
    model = bivariate_bernoulli()
    plugin = Plugin(settings=OptimizerSettings(restarts=2))
    steps = []
    for w in (conditional_weights(2), pairwise_weights(2)):
        steps += exact_supermartingale_check(model, w, BERN_STAR, (0.5, 0.5, 1.0), max_history=2, plugin=plugin)
    worst = max(s.r_next_expected / s.r_previous for s in steps)
    ok = all(s.holds for s in steps) and len(steps) == 2 * 21
    verdict(7, "E[R_n | history] <= R_{n-1}", ok, f"{len(steps)} histories, max ratio {worst:.6f}", t0)
    assert ok


def test_criterion_08_random_stop(verdict, null_trajectories):
    t0 = time.perf_counter()
    cfg, traj = null_trajectories
    reports = estimate_random_stop_pvalue(cfg, trajectories=traj, rules=("uniform", "argmin"))
    ok = len(reports) == 4 and all(r.passed for r in reports)
    verdict(8, "P_N and running-min P_N at random N", ok, _summary(reports), t0)
    assert ok


def test_criterion_09_confidence_sequences(verdict):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(_gauss(), (0.3, -0.2), pairwise_weights(2), n=200, levels=(0.05,), replicates=2000, seed=9,
                           guarantee="confseq", plugin=Plugin("moments"), theta_init=(0.0, 0.0))
    reports = estimate_confseq_validity(cfg)
    ok = len(reports) == 2 and all(r.passed for r in reports)
    verdict(9, "theta* in D_n and running intersection for all n <= 200", ok, _summary(reports), t0)
    assert ok


# -- criterion 10: plain-likelihood oracle for a Gaussian mean with known covariance ------

def _plain_loglik(x, mu):
    return float(stats.multivariate_normal(mu, COV).logpdf(x).sum())


def _plain_null_max(x):
    # maximizer of the Gaussian likelihood with mu1 pinned at 0
    xbar = x.mean(axis=0)
    return np.array([0.0, xbar[1] - COV[0, 1] / COV[0, 0] * xbar[0]])


def test_criterion_10_reduction(verdict):
    t0 = time.perf_counter()
    model = _gauss()
    w = full_likelihood_weights(2)
    null = model.space.with_pins({0: 0.0})
    rng = np.random.default_rng(10)
    worst = {k: 0.0 for k in ("U", "Ubar", "V", "Vbar", "M", "R")}
    for _ in range(100):
        star = rng.uniform(-1, 1, 2)
        theta = rng.uniform(-1, 1, 2)
        data = model.sample(star, 20, rng)
        split = split_dataset(data)
        f0, f1 = split.fold0, split.fold1
        plugins = (f0.mean(axis=0), f1.mean(axis=0))

        u0 = _plain_loglik(f0, plugins[1]) - _plain_loglik(f0, theta)
        u1 = _plain_loglik(f1, plugins[0]) - _plain_loglik(f1, theta)
        v0 = _plain_loglik(f0, plugins[1]) - _plain_loglik(f0, _plain_null_max(f0))
        v1 = _plain_loglik(f1, plugins[0]) - _plain_loglik(f1, _plain_null_max(f1))
        oracle = {"U": u0, "Ubar": np.logaddexp(u0, u1) - math.log(2), "V": v0, "Vbar": np.logaddexp(v0, v1) - math.log(2)}

        got = {
            "U": confset_membership(model, w, split, theta, 0.05, "split", plugins)[1],
            "Ubar": confset_membership(model, w, split, theta, 0.05, "swapped", plugins)[1],
            "V": split_clrt(model, w, split, null, 0.05, plugins, FAST).statistic,
            "Vbar": swapped_clrt(model, w, split, null, 0.05, plugins, FAST).statistic,
        }

        seq = data[:10]
        state = run_sequential(model, w, seq, (0.0, 0.0), null, Plugin("moments"), FAST)
        prequential = [np.zeros(2)] + [seq[:i].mean(axis=0) for i in range(1, len(seq))]
        numerator = np.cumsum([_plain_loglik(seq[i : i + 1], prequential[i]) for i in range(len(seq))])
        oracle_m = [numerator[i] - _plain_loglik(seq[: i + 1], _plain_null_max(seq[: i + 1])) for i in range(len(seq))]
        oracle_r = [numerator[i] - _plain_loglik(seq[: i + 1], theta) for i in range(len(seq))]
        got_m = [r.logM for r in state.records]
        got_r = state.log_r_path(theta)

        for key in oracle:
            worst[key] = max(worst[key], abs(got[key] - oracle[key]))
        worst["M"] = max(worst["M"], float(np.max(np.abs(np.subtract(got_m, oracle_m)))))
        worst["R"] = max(worst["R"], float(np.max(np.abs(got_r - oracle_r))))
    ok = all(v <= 1e-10 for v in worst.values())
    verdict(10, "full weights reduce to the plain likelihood (log scale, 100 datasets)", ok,
            ", ".join(f"{k} {v:.1e}" for k, v in worst.items()), t0)
    assert ok


# -- criterion 11: structural invariants ------------------------------------------------

def _scaling_invariance():
    model = binary_loglinear(3)
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        alpha = {(1,): rng.uniform(0.1, 2), (2, 3): rng.uniform(0.1, 2), (1, 2, 3): rng.uniform(0.1, 2)}
        beta = {((1,), (3,)): rng.uniform(0.1, 2), ((2, 3), (1,)): rng.uniform(0.1, 2)}
        c = 10 ** rng.uniform(-3, 3)
        w = make_weights(3, alpha, beta)
        wc = make_weights(3, {k: c * v for k, v in alpha.items()}, {k: c * v for k, v in beta.items()})
        theta = rng.uniform(-1, 1, model.n_params)
        x = model.outcomes()
        worst = max(worst, float(np.max(np.abs(log_cl_density(model, wc, x, theta) - log_cl_density(model, w, x, theta)))))
    return worst <= 1e-12, f"scaling {worst:.1e}"


def _chain_rule():
    worst = 0.0
    gauss3 = GaussianModel(3, [[2.0, 0.6, 0.3], [0.6, 1.0, -0.4], [0.3, -0.4, 1.5]])
    ising = binary_loglinear(3)
    for model, theta, x in (
        (gauss3, np.array([0.1, -0.3, 0.2]), gauss3.sample([0, 0, 0], 5, seed=1)),
        (ising, np.linspace(-0.5, 0.5, 6), ising.outcomes()),
    ):
        for div in enumerate_divisions(3):
            lhs = model.log_conditional(div, x, theta) + model.log_marginal(div.right, x, theta)
            rhs = model.log_marginal(div.union, x, theta)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst <= 1e-10, f"chain rule {worst:.1e}"


def _sequential_paths():
    model = _gauss()
    w = pairwise_weights(2)
    null = model.space.with_pins({0: 0.0})
    star = np.array([0.0, 0.4])
    grid = [np.array([a, b]) for a in np.linspace(-1, 1, 5) for b in np.linspace(-1, 1, 5)]
    pmin_ok = dtilde_ok = m_le_r = True
    for seed in range(5):
        state = run_sequential(model, w, model.sample(star, 60, seed=seed), (0.0, 0.0), null, Plugin("moments"), FAST)
        p_min = np.array([r.P_min for r in state.records])
        pmin_ok &= bool(np.all(np.diff(p_min) <= 0))
        log_m = np.array([r.logM for r in state.records])
        m_le_r &= bool(np.all(log_m <= state.log_r_path(star) + 1e-9))
        for theta in grid:
            path = state.log_r_path(theta)
            running = np.logical_and.accumulate(path <= -math.log(0.1))
            dtilde_ok &= bool(np.all(np.diff(running.astype(int)) <= 0))
    return pmin_ok and dtilde_ok and m_le_r, f"P_min monotone {pmin_ok}, D-tilde monotone {dtilde_ok}, M<=R(theta*) {m_le_r}"


def _determinism():
    model = _gauss()
    cfg = ExperimentConfig(model, (0.0, 0.0), pairwise_weights(2), n=15, replicates=100, seed=12, plugin=Plugin(settings=FAST),
                           settings=FAST)
    runs = [estimate_coverage(cfg, n_jobs=j) for j in (1, 2, 1)]
    batch_same = all([r.estimate for r in run] == [r.estimate for r in runs[0]] for run in runs)
    seq_cfg = ExperimentConfig(model, (0.0, 0.0), pairwise_weights(2), n=30, replicates=100, seed=12, guarantee="random_stop",
                               null_space=model.space.with_pins({0: 0.0, 1: 0.0}), plugin=Plugin("moments"), theta_init=(0.0, 0.0))
    paths = [simulate_trajectories(seq_cfg, n_jobs=j) for j in (1, 2)]
    seq_same = all(np.array_equal(a, b) for a, b in zip(paths[0].log_m, paths[1].log_m)) and paths[0].stop_index == paths[1].stop_index
    return batch_same and seq_same, f"worker-count determinism batch {batch_same}, sequential {seq_same}"


def test_criterion_11_invariants(verdict):
    t0 = time.perf_counter()
    checks = [_scaling_invariance(), _chain_rule(), _sequential_paths(), _determinism()]
    ok = all(c[0] for c in checks)
    verdict(11, "structural invariants", ok, "; ".join(c[1] for c in checks), t0)
    assert ok
