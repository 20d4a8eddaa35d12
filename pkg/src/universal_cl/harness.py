"""Monte Carlo and exact-enumeration checks of the validity guarantees.

Every Monte Carlo experiment draws replicate ``r`` from the stream
``SeedSequence(seed, spawn_key=(r,))``, so results do not depend on the
worker count and growing the replicate count leaves earlier replicates
unchanged.

A report passes when the estimate is on the guaranteed side of the bound up
to three Monte Carlo standard errors.  For proportions the standard error is
taken at the bound (``sqrt(b (1 - b) / R)``); for means it is the sample
standard deviation over ``sqrt(R)``.
"""
from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from joblib import Parallel, delayed

from .batch import _fold_test, level_threshold
from .combinatorics import WeightScheme
from .errors import ConfigError, GridError
from .estimation import OptimizerSettings, Plugin, fit_mcle
from .likelihood import log_cl, log_mean_exp2, log_ratio, split_dataset
from .models import CompositeModel, DiscreteTableModel, ParamSpace
from .sequential import SequentialState, p_from_log_m, run_sequential

GUARANTEES = ("expectation", "coverage", "type1", "sequential_type1", "confseq", "random_stop")
MIN_REPLICATES = 100
FLAG_LIMIT = 0.01
MAX_ENUMERATION = 10**5


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo experiment.

    ``n`` is the fold size for batch experiments and the horizon for
    sequential ones.  ``levels`` are significance levels evaluated on the same
    replicates.  ``mode`` is ``"split"``, ``"swapped"`` or ``"both"``.
    """

    model: CompositeModel
    theta_star: tuple
    weights: WeightScheme
    n: int = 50
    levels: tuple = (0.05,)
    replicates: int = 2000
    seed: int = 0
    guarantee: str = "coverage"
    null_space: ParamSpace | None = None
    plugin: Plugin = field(default_factory=Plugin)
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)
    mode: str = "both"
    theta_init: tuple | None = None
    fold: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "theta_star", tuple(float(v) for v in self.theta_star))
        levels = self.levels if isinstance(self.levels, (tuple, list)) else (self.levels,)
        levels = tuple(float(a) for a in levels)
        for a in levels:
            level_threshold(a)
        object.__setattr__(self, "levels", levels)
        if self.guarantee not in GUARANTEES:
            raise ConfigError(f"unknown guarantee {self.guarantee!r}; choose from {GUARANTEES}")
        if self.mode not in ("split", "swapped", "both"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.fold not in (0, 1):
            raise ConfigError("fold must be 0 or 1")
        if self.theta_init is not None:
            object.__setattr__(self, "theta_init", tuple(float(v) for v in self.theta_init))

    @property
    def modes(self) -> tuple[str, ...]:
        return ("split", "swapped") if self.mode == "both" else (self.mode,)

    @property
    def label(self) -> str:
        return self.name or f"{self.guarantee}-{self.model.describe()['kind']}-n{self.n}"

    def describe(self) -> dict:
        return {
            "name": self.label,
            "model": self.model.describe(),
            "theta_star": list(self.theta_star),
            "weights": self.weights.to_dict(),
            "n": self.n,
            "levels": list(self.levels),
            "replicates": self.replicates,
            "seed": self.seed,
            "guarantee": self.guarantee,
            "null_space": None if self.null_space is None else self.null_space.to_dict(),
            "plugin": self.plugin.to_dict(),
            "mode": self.mode,
            "theta_init": None if self.theta_init is None else list(self.theta_init),
        }


@dataclass
class GuaranteeReport:
    experiment: str
    quantity: str
    estimate: float
    standard_error: float
    bound: float | None
    direction: str
    passed: bool
    replicates: int
    flagged: int = 0
    wall_time: float = 0.0
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), default=_json_default)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        if self.direction == "none":
            rule = "(no criterion)"
        else:
            rule = f"{self.direction} {self.bound:.4g} {'+' if self.direction == '<=' else '-'} 3*{self.standard_error:.3g}"
        return f"[{verdict}] {self.experiment}: {self.quantity} = {self.estimate:.4f} {rule} (R={self.replicates}, flagged={self.flagged})"


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def format_reports(reports) -> str:
    return "\n".join(r.line() for r in reports)


def replicate_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))


def run_replicates(fn: Callable, config, replicates: int, seed: int, n_jobs: int = 1) -> list:
    """``[fn(config, rng_r) for r in range(replicates)]`` with per-replicate streams, in order."""
    if n_jobs == 1:
        return [fn(config, replicate_rng(seed, r)) for r in range(replicates)]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(config, replicate_rng(seed, r)) for r in range(replicates))


def _proportion_report(name, quantity, hits, bound, direction, flagged, total, wall, details=None):
    count = len(hits)
    estimate = float(np.mean(hits)) if count else math.nan
    se = math.sqrt(bound * (1 - bound) / count) if count else math.nan
    if flagged >= FLAG_LIMIT * total:
        passed = False
        details = {**(details or {}), "diagnostic": f"{flagged} of {total} replicates had unconverged fits"}
    elif direction == "<=":
        passed = estimate <= bound + 3 * se
    else:
        passed = estimate >= bound - 3 * se
    return GuaranteeReport(name, quantity, estimate, se, bound, direction, bool(passed), count, flagged, wall, details or {})


def _usable(results):
    flagged = sum(1 for r in results if r["flagged"])
    return [r for r in results if not r["flagged"]], flagged


def _require_mc(config):
    if config.replicates < MIN_REPLICATES:
        raise ConfigError(f"Monte Carlo experiments need at least {MIN_REPLICATES} replicates")


def _fit_plugin(config, data, start=None):
    plugin = config.plugin
    if plugin.kind == "mcle":
        fit = fit_mcle(config.model, config.weights, data, config.model.space, plugin.settings, start=start)
        return fit.theta_hat, fit.converged
    return plugin.estimate(config.model, config.weights, data, start=start), True


# -- Expectation of the split ratio at the truth ----------------------------------------

def _rep_expectation(config, rng):
    data = config.model.sample(config.theta_star, 2 * config.n, rng)
    split = split_dataset(data)
    k = config.fold
    plug, ok = _fit_plugin(config, split.fold(1 - k))
    fold = split.fold(k)
    log_u = log_ratio(log_cl(config.model, config.weights, fold, plug), log_cl(config.model, config.weights, fold, config.theta_star))
    return {"log_u": log_u, "flagged": not ok}


def estimate_expectation_bound(config: ExperimentConfig, n_jobs: int = 1, exact: bool = False) -> list[GuaranteeReport]:
    """Mean of the split ratio at the true parameter; passes if ``<= 1 + 3 SE``.

    With ``exact=True`` (discrete models only) the expectation is enumerated
    instead of simulated and the standard error is zero.
    """
    t0 = time.perf_counter()
    if exact:
        value = exact_expectation_discrete(config.model, config.weights, config.theta_star, config.n, config.plugin, config.fold)
        return [
            GuaranteeReport(config.label, "E[U] (exact)", value, 0.0, 1.0, "<=", bool(value <= 1 + 1e-12), 1, 0, time.perf_counter() - t0)
        ]
    _require_mc(config)
    results = run_replicates(_rep_expectation, config, config.replicates, config.seed, n_jobs)
    usable, flagged = _usable(results)
    u = np.exp([r["log_u"] for r in usable])
    mean = float(u.mean())
    se = float(u.std(ddof=1) / math.sqrt(len(u))) if len(u) > 1 else 0.0
    passed = flagged < FLAG_LIMIT * len(results) and mean <= 1 + 3 * se
    return [
        GuaranteeReport(
            config.label, "E[U]", mean, se, 1.0, "<=", bool(passed), len(u), flagged, time.perf_counter() - t0,
            {"max_u": float(u.max())},
        )
    ]


# -- Coverage of the split and swapped confidence sets ---------------------------------

def _rep_batch(config, rng):
    data = config.model.sample(config.theta_star, 2 * config.n, rng)
    split = split_dataset(data)
    p0, ok0 = _fit_plugin(config, split.fold0)
    p1, ok1 = _fit_plugin(config, split.fold1)
    return split, (p0, p1), not (ok0 and ok1)


def _rep_coverage(config, rng):
    split, plugins, flagged = _rep_batch(config, rng)
    m, w, star = config.model, config.weights, config.theta_star
    log_u0 = log_ratio(log_cl(m, w, split.fold0, plugins[1]), log_cl(m, w, split.fold0, star))
    log_u1 = log_ratio(log_cl(m, w, split.fold1, plugins[0]), log_cl(m, w, split.fold1, star))
    return {"split": log_u0, "swapped": log_mean_exp2(log_u0, log_u1), "flagged": flagged}


def estimate_coverage(config: ExperimentConfig, n_jobs: int = 1) -> list[GuaranteeReport]:
    """Coverage of the true parameter, one report per (mode, level)."""
    _require_mc(config)
    t0 = time.perf_counter()
    results = run_replicates(_rep_coverage, config, config.replicates, config.seed, n_jobs)
    usable, flagged = _usable(results)
    wall = time.perf_counter() - t0
    reports = []
    for mode in config.modes:
        stats = np.array([r[mode] for r in usable])
        for a in config.levels:
            hits = stats <= level_threshold(a)
            reports.append(
                _proportion_report(f"{config.label}/{mode}/alpha={a}", "coverage", hits, 1 - a, ">=", flagged, len(results), wall)
            )
    return reports


# -- Type I error of the split and swapped tests ---------------------------------------

def _rep_type1(config, rng):
    split, plugins, flagged = _rep_batch(config, rng)
    m, w = config.model, config.weights
    v0, fit0 = _fold_test(m, w, split, 0, config.null_space, plugins, config.settings)
    out = {"split": v0, "flagged": flagged or not fit0.converged}
    if "swapped" in config.modes:
        v1, fit1 = _fold_test(m, w, split, 1, config.null_space, plugins, config.settings)
        out["swapped"] = log_mean_exp2(v0, v1)
        out["flagged"] = out["flagged"] or not fit1.converged
    return out


def estimate_type1(config: ExperimentConfig, n_jobs: int = 1) -> list[GuaranteeReport]:
    """Rejection rate of the split/swapped tests.

    When the true parameter lies outside the null space the rate is reported
    as power with no pass criterion.
    """
    _require_mc(config)
    if config.null_space is None:
        raise ConfigError("a Type I experiment needs a null space")
    under_null = config.null_space.contains(config.theta_star, atol=1e-12)
    t0 = time.perf_counter()
    results = run_replicates(_rep_type1, config, config.replicates, config.seed, n_jobs)
    usable, flagged = _usable(results)
    wall = time.perf_counter() - t0
    reports = []
    for mode in config.modes:
        stats = np.array([r[mode] for r in usable])
        for a in config.levels:
            hits = stats > level_threshold(a)
            name = f"{config.label}/{mode}/alpha={a}"
            if under_null:
                reports.append(_proportion_report(name, "type1", hits, a, "<=", flagged, len(results), wall))
            else:
                reports.append(
                    GuaranteeReport(name, "power", float(np.mean(hits)), math.sqrt(a * (1 - a) / len(hits)), None, "none", True, len(hits), flagged, wall)
                )
    return reports


# -- Sequential experiments -------------------------------------------------------------

@dataclass
class Trajectories:
    """Per-trajectory paths from one sequential simulation."""

    config: ExperimentConfig
    log_m: list
    log_r_star: list
    stop_index: list
    flagged: list
    wall_time: float


def _rep_sequential(config, rng):
    data = config.model.sample(config.theta_star, config.n, rng)
    theta_init = config.theta_init if config.theta_init is not None else config.model.default_theta()
    state = run_sequential(
        config.model, config.weights, data, theta_init, config.null_space, config.plugin, config.settings, config.levels[0]
    )
    log_m = None if config.null_space is None else np.array([rec.logM for rec in state.records])
    # uniform random index drawn here so it belongs to the replicate's stream
    return {
        "log_m": log_m,
        "log_r": state.log_r_path(config.theta_star),
        "uniform_index": int(rng.integers(config.n)),
        "flagged": state.unconverged_fits > 0,
    }


def simulate_trajectories(config: ExperimentConfig, n_jobs: int = 1) -> Trajectories:
    _require_mc(config)
    t0 = time.perf_counter()
    results = run_replicates(_rep_sequential, config, config.replicates, config.seed, n_jobs)
    return Trajectories(
        config,
        [r["log_m"] for r in results],
        [r["log_r"] for r in results],
        [r["uniform_index"] for r in results],
        [r["flagged"] for r in results],
        time.perf_counter() - t0,
    )


def _usable_paths(traj: Trajectories, attr: str):
    paths = getattr(traj, attr)
    keep = [i for i, f in enumerate(traj.flagged) if not f]
    return keep, [paths[i] for i in keep], len(paths) - len(keep)


def estimate_sequential_type1(config: ExperimentConfig, n_jobs: int = 1, trajectories: Trajectories | None = None) -> list[GuaranteeReport]:
    """Fraction of null trajectories whose running statistic ever exceeds ``1/alpha``."""
    if config.null_space is None:
        raise ConfigError("a sequential Type I experiment needs a null space")
    traj = trajectories or simulate_trajectories(config, n_jobs)
    _, paths, flagged = _usable_paths(traj, "log_m")
    reports = []
    for a in config.levels:
        thr = level_threshold(a)
        hits = np.array([bool(np.any(p > thr)) for p in paths])
        stops = [int(np.argmax(p > thr)) + 1 for p in paths if np.any(p > thr)]
        details = {"median_stop": float(np.median(stops)) if stops else None}
        reports.append(
            _proportion_report(f"{config.label}/alpha={a}", "ever_reject", hits, a, "<=", flagged, len(traj.flagged), traj.wall_time, details)
        )
    return reports


STOP_RULES = ("uniform", "argmin", "first_local_min", "first")


def _stop_index(rule: str, p: np.ndarray, uniform_index: int) -> int:
    if rule == "uniform":
        return uniform_index
    if rule == "argmin":
        return int(np.argmin(p))
    if rule == "first":
        return 0
    # first time the p-value does not decrease at the next step
    rises = np.nonzero(p[:-1] <= p[1:])[0]
    return int(rises[0]) if rises.size else len(p) - 1


def estimate_random_stop_pvalue(
    config: ExperimentConfig, n_jobs: int = 1, trajectories: Trajectories | None = None, rules=STOP_RULES
) -> list[GuaranteeReport]:
    """``Pr(P_N <= alpha)`` and ``Pr(running-min P_N <= alpha)`` for data-dependent indices ``N``."""
    if config.null_space is None:
        raise ConfigError("p-value experiments need a null space")
    traj = trajectories or simulate_trajectories(config, n_jobs)
    keep, paths, flagged = _usable_paths(traj, "log_m")
    reports = []
    for rule in rules:
        if rule not in STOP_RULES:
            raise ConfigError(f"unknown stopping rule {rule!r}")
        p_vals, p_mins = [], []
        for i, log_m in zip(keep, paths):
            p = np.array([p_from_log_m(v) for v in log_m])
            running = np.minimum.accumulate(p)
            idx = _stop_index(rule, p, traj.stop_index[i])
            p_vals.append(p[idx])
            p_mins.append(running[idx])
        p_vals, p_mins = np.array(p_vals), np.array(p_mins)
        for a in config.levels:
            for quantity, values in (("P_N", p_vals), ("Pmin_N", p_mins)):
                reports.append(
                    _proportion_report(
                        f"{config.label}/{rule}/alpha={a}", quantity, values <= a, a, "<=", flagged, len(traj.flagged), traj.wall_time
                    )
                )
    return reports


def estimate_confseq_validity(config: ExperimentConfig, n_jobs: int = 1, trajectories: Trajectories | None = None) -> list[GuaranteeReport]:
    """Fraction of trajectories whose confidence sequence contains the truth at every step.

    Reports the plain sequence and the running intersection; details carry the
    final-step coverage of each.
    """
    traj = trajectories or simulate_trajectories(config, n_jobs)
    _, paths, flagged = _usable_paths(traj, "log_r_star")
    reports = []
    for a in config.levels:
        thr = level_threshold(a)
        member = [p <= thr for p in paths]
        running = [np.logical_and.accumulate(m) for m in member]
        d_all = np.array([bool(m.all()) for m in member])
        dt_all = np.array([bool(r.all()) for r in running])
        d_final = float(np.mean([m[-1] for m in member]))
        dt_final = float(np.mean([r[-1] for r in running]))
        for quantity, hits, final in (("D_all_n", d_all, d_final), ("Dtilde_all_n", dt_all, dt_final)):
            reports.append(
                _proportion_report(
                    f"{config.label}/alpha={a}", quantity, hits, 1 - a, ">=", flagged, len(traj.flagged), traj.wall_time,
                    {"final_step_coverage": final},
                )
            )
    return reports


ESTIMATORS = {
    "expectation": estimate_expectation_bound,
    "coverage": estimate_coverage,
    "type1": estimate_type1,
    "sequential_type1": estimate_sequential_type1,
    "confseq": estimate_confseq_validity,
    "random_stop": estimate_random_stop_pvalue,
}


def run_experiment(config: ExperimentConfig, n_jobs: int = 1) -> list[GuaranteeReport]:
    return ESTIMATORS[config.guarantee](config, n_jobs=n_jobs)


# -- Exact enumeration on finite-support models ------------------------------------------

def raw_log_cl_density(model, weights: WeightScheme, x, theta) -> float:
    """Composite log-density of a single observation straight from the weight dictionaries.

    Deliberately separate from ``likelihood.log_cl_density`` so the two paths
    can be compared.
    """
    total = 0.0
    for subset, w in weights.alpha.items():
        total += w * float(model.log_marginal(subset, x, theta))
    for division, w in weights.beta.items():
        total += w * float(model.log_conditional(division, x, theta))
    return total / weights.gamma


def raw_log_cl(model, weights, dataset, theta) -> float:
    return math.fsum(raw_log_cl_density(model, weights, x, theta) for x in np.asarray(dataset, dtype=float))


def _check_discrete(model):
    if not isinstance(model, DiscreteTableModel):
        raise ConfigError("exact enumeration needs a DiscreteTableModel")


def exact_expectation_discrete(
    model: DiscreteTableModel, weights: WeightScheme, theta_star, n: int, plugin: Plugin | None = None, fold: int = 0
) -> float:
    """``E[U^fold(theta*)]`` by summing over every pair of fold realizations.

    The plug-in is fitted once per distinct realization of the other fold.
    """
    _check_discrete(model)
    plugin = plugin or Plugin()
    outcomes = model.outcomes()
    probs = model.pmf(theta_star)
    m = len(outcomes)
    if m ** (2 * n) > MAX_ENUMERATION:
        raise GridError(f"{m ** (2 * n)} outcome pairs exceed the enumeration limit {MAX_ENUMERATION}")
    star_terms = [raw_log_cl_density(model, weights, x, theta_star) for x in outcomes]
    total = []
    for other in itertools.product(range(m), repeat=n):
        p_other = math.prod(probs[i] for i in other)
        if p_other == 0:
            continue
        theta_tilde = plugin.estimate(model, weights, outcomes[list(other)])
        tilde_terms = [raw_log_cl_density(model, weights, x, theta_tilde) for x in outcomes]
        for this in itertools.product(range(m), repeat=n):
            p_this = math.prod(probs[i] for i in this)
            if p_this == 0:
                continue
            log_u = sum(tilde_terms[i] for i in this) - sum(star_terms[i] for i in this)
            total.append(p_other * p_this * math.exp(log_u))
    return math.fsum(total)


@dataclass(frozen=True)
class SupermartingaleStep:
    history: tuple
    r_previous: float
    r_next_expected: float

    @property
    def holds(self) -> bool:
        return self.r_next_expected <= self.r_previous * (1 + 1e-12) + 1e-15


def exact_supermartingale_check(
    model: DiscreteTableModel, weights: WeightScheme, theta_star, theta_init, max_history: int = 2, plugin: Plugin | None = None
) -> list[SupermartingaleStep]:
    """``E[R_{m+1}(theta*) | history]`` versus ``R_m(theta*)`` for every history of length ``m <= max_history``."""
    _check_discrete(model)
    outcomes = model.outcomes()
    probs = model.pmf(theta_star)
    if len(outcomes) ** max_history > MAX_ENUMERATION:
        raise GridError("too many histories to enumerate")
    star_terms = np.array([raw_log_cl_density(model, weights, x, theta_star) for x in outcomes])
    steps = []
    stack = [((), SequentialState(model, weights, theta_init, plugin=plugin))]
    while stack:
        hist, state = stack.pop()
        log_r = state.log_r(theta_star)
        tilde_terms = np.array([raw_log_cl_density(model, weights, x, state.theta_tilde) for x in outcomes])
        expected = math.fsum(probs[i] * math.exp(log_r + tilde_terms[i] - star_terms[i]) for i in range(len(outcomes)))
        steps.append(SupermartingaleStep(hist, math.exp(log_r), expected))
        if len(hist) < max_history:
            for i in reversed(range(len(outcomes))):
                stack.append((hist + (i,), state.copy().update(outcomes[i])))
    steps.sort(key=lambda s: (len(s.history), s.history))
    return steps


def exact_expected_statistics(
    model: DiscreteTableModel,
    weights: WeightScheme,
    theta_star,
    theta_init,
    horizon: int,
    null_space: ParamSpace | None = None,
    plugin: Plugin | None = None,
    settings: OptimizerSettings | None = None,
) -> dict:
    """Exact ``E[M_n]`` (if a null space is given) and ``E[R_n(theta*)]`` for ``n = 1..horizon``."""
    _check_discrete(model)
    outcomes = model.outcomes()
    probs = model.pmf(theta_star)
    if len(outcomes) ** horizon > MAX_ENUMERATION:
        raise GridError("too many histories to enumerate")
    e_m = np.zeros(horizon)
    e_r = np.zeros(horizon)
    root = SequentialState(model, weights, theta_init, null_space, plugin, settings)
    # depth-first over histories; each prefix state is extended rather than replayed
    stack = [(root, 1.0)]
    while stack:
        state, p = stack.pop()
        for i, x in enumerate(outcomes):
            if probs[i] == 0:
                continue
            child = state.copy().update(x)
            q = p * probs[i]
            e_r[child.n - 1] += q * math.exp(child.log_r(theta_star))
            if null_space is not None:
                e_m[child.n - 1] += q * math.exp(child.log_m)
            if child.n < horizon:
                stack.append((child, q))
    return {"E_R": e_r, "E_M": e_m if null_space is not None else None}
