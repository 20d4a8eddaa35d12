"""Universal confidence sets and split/swapped composite likelihood ratio tests."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .combinatorics import WeightScheme
from .errors import GridError
from .estimation import FitResult, OptimizerSettings, Plugin, fit_mcle
from .likelihood import SplitSample, log_cl, log_mean_exp2, log_ratio
from .models import CompositeModel, ParamSpace

MAX_GRID_POINTS = 10**7
MODES = ("split", "swapped")


def level_threshold(significance_level: float) -> float:
    """``log(1 / significance_level)``."""
    if not 0 < significance_level < 1:
        raise ValueError(f"significance_level must lie in (0, 1), got {significance_level}")
    return -math.log(significance_level)


def _check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def fit_plugins(model, weights, split: SplitSample, plugin: Plugin | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Plug-in estimates ``(theta_tilde^0, theta_tilde^1)``, each from its own fold."""
    plugin = plugin or Plugin()
    return (
        plugin.estimate(model, weights, split.fold0),
        plugin.estimate(model, weights, split.fold1),
    )


def _fold_numerators(model, weights, split, plugins):
    # fold k is scored at the plug-in fitted on the other fold
    return (
        log_cl(model, weights, split.fold0, plugins[1]),
        log_cl(model, weights, split.fold1, plugins[0]),
    )


def _statistic(model, weights, split, theta, mode, plugins, numerators=None) -> float:
    numerators = numerators or _fold_numerators(model, weights, split, plugins)
    log_u0 = log_ratio(numerators[0], log_cl(model, weights, split.fold0, theta))
    if mode == "split":
        return log_u0
    log_u1 = log_ratio(numerators[1], log_cl(model, weights, split.fold1, theta))
    return log_mean_exp2(log_u0, log_u1)


def confset_membership(
    model: CompositeModel,
    weights: WeightScheme,
    split: SplitSample,
    theta,
    significance_level: float,
    mode: str = "split",
    plugins=None,
) -> tuple[bool, float]:
    """Whether ``theta`` belongs to the split (or swapped) universal confidence set.

    Returns ``(member, log_statistic)``; membership is ``log_statistic <=
    log(1/significance_level)``.  ``plugins[k]`` must be fitted on fold ``k``.
    """
    threshold = level_threshold(significance_level)
    _check_mode(mode)
    plugins = plugins if plugins is not None else fit_plugins(model, weights, split)
    stat = _statistic(model, weights, split, theta, mode, plugins)
    return bool(stat <= threshold), stat


@dataclass(frozen=True)
class GridSpec:
    """Cartesian grid: one ``(min, max, count)`` triple per parameter.

    A single-point axis is written ``(v, v, 1)``.
    """

    axes: tuple

    def __post_init__(self):
        axes = tuple((float(lo), float(hi), int(c)) for lo, hi, c in self.axes)
        if not axes:
            raise GridError("grid needs at least one axis")
        total = 1
        for lo, hi, c in axes:
            if c == 1:
                if lo != hi:
                    raise GridError(f"a single-point axis needs min == max, got ({lo}, {hi})")
            elif c < 2 or not lo < hi:
                raise GridError(f"invalid grid axis ({lo}, {hi}, {c})")
            total *= c
        if total > MAX_GRID_POINTS:
            raise GridError(f"grid has {total} points, more than the {MAX_GRID_POINTS} limit")
        object.__setattr__(self, "axes", axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(c for _, _, c in self.axes)

    def axis_values(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, c) for lo, hi, c in self.axes]

    def points(self) -> np.ndarray:
        """Grid points, shape ``(prod(shape), q)``, last axis varying fastest."""
        mesh = np.meshgrid(*self.axis_values(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class ConfidenceSetGrid:
    grid: GridSpec
    points: np.ndarray
    log_statistic: np.ndarray
    member: np.ndarray
    significance_level: float
    mode: str
    plugins: tuple

    @property
    def threshold(self) -> float:
        return level_threshold(self.significance_level)

    def members(self) -> np.ndarray:
        return self.points[self.member]

    def at_level(self, significance_level: float) -> "ConfidenceSetGrid":
        """The same statistics thresholded at another level (no re-evaluation)."""
        member = self.log_statistic <= level_threshold(significance_level)
        return ConfidenceSetGrid(self.grid, self.points, self.log_statistic, member, significance_level, self.mode, self.plugins)

    def to_csv(self, path, names=None) -> None:
        """One row per grid point: coordinates, log statistic, membership (0/1)."""
        q = self.points.shape[1]
        names = list(names) if names else [f"theta{j}" for j in range(q)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([*names, "log_statistic", "member"])
            for pt, stat, mem in zip(self.points, self.log_statistic, self.member):
                writer.writerow([*(repr(float(v)) for v in pt), repr(float(stat)), int(mem)])


def confset_grid(
    model: CompositeModel,
    weights: WeightScheme,
    split: SplitSample,
    grid: GridSpec,
    significance_level: float,
    mode: str = "split",
    plugins=None,
    plugin: Plugin | None = None,
) -> ConfidenceSetGrid:
    """Evaluate set membership at every grid point.

    Plug-ins are fitted once (or taken from ``plugins``) and reused for all
    points.
    """
    threshold = level_threshold(significance_level)
    _check_mode(mode)
    if len(grid.axes) != model.n_params:
        raise GridError(f"grid has {len(grid.axes)} axes, model has {model.n_params} parameters")
    if plugins is None:
        plugins = fit_plugins(model, weights, split, plugin)
    numerators = _fold_numerators(model, weights, split, plugins)
    points = grid.points()
    stats = np.array([_statistic(model, weights, split, p, mode, plugins, numerators) for p in points])
    return ConfidenceSetGrid(grid, points, stats, stats <= threshold, significance_level, mode, tuple(plugins))


def reject_by_emptiness(confset: ConfidenceSetGrid, null_space: ParamSpace, atol: float = 1e-12) -> bool:
    """Reject when no grid member lies in the null space.

    Grid-approximate: emptiness on a grid does not prove the continuous set
    misses the null space.  Raises ``GridError`` if no grid point lies in the
    null space at all.
    """
    in_null = np.array([null_space.contains(p, atol=atol) for p in confset.points])
    if not in_null.any():
        raise GridError("no grid point lies in the null space; the emptiness check is meaningless")
    return not bool(np.any(confset.member & in_null))


@dataclass(frozen=True)
class TestDecision:
    statistic: float
    threshold: float
    reject: bool
    theta_hat: tuple
    plugins: tuple
    mode: str
    fold_statistics: tuple
    converged: bool

    __test__ = False  # not a pytest class


def _null_fit(model, weights, data, null_space, settings, start) -> FitResult:
    return fit_mcle(model, weights, data, null_space, settings, start=start)


def _fold_test(model, weights, split, k, null_space, plugins, settings) -> tuple[float, FitResult]:
    fold = split.fold(k)
    # the same-fold plug-in is a good start for the constrained fit
    fit = _null_fit(model, weights, fold, null_space, settings, null_space.clip(plugins[k]))
    numerator = log_cl(model, weights, fold, plugins[1 - k])
    return log_ratio(numerator, fit.objective), fit


def split_clrt(
    model: CompositeModel,
    weights: WeightScheme,
    split: SplitSample,
    null_space: ParamSpace,
    significance_level: float,
    plugins=None,
    settings: OptimizerSettings | None = None,
) -> TestDecision:
    """Split test: reject when ``V^0 > 1/significance_level``."""
    threshold = level_threshold(significance_level)
    plugins = plugins if plugins is not None else fit_plugins(model, weights, split)
    stat, fit = _fold_test(model, weights, split, 0, null_space, plugins, settings)
    return TestDecision(
        stat, threshold, bool(stat > threshold), (fit.theta_hat,), tuple(plugins), "split", (stat,), fit.converged
    )


def swapped_clrt(
    model: CompositeModel,
    weights: WeightScheme,
    split: SplitSample,
    null_space: ParamSpace,
    significance_level: float,
    plugins=None,
    settings: OptimizerSettings | None = None,
) -> TestDecision:
    """Swapped test: reject when ``(V^0 + V^1) / 2 > 1/significance_level``."""
    threshold = level_threshold(significance_level)
    plugins = plugins if plugins is not None else fit_plugins(model, weights, split)
    v0, fit0 = _fold_test(model, weights, split, 0, null_space, plugins, settings)
    v1, fit1 = _fold_test(model, weights, split, 1, null_space, plugins, settings)
    stat = log_mean_exp2(v0, v1)
    return TestDecision(
        stat,
        threshold,
        bool(stat > threshold),
        (fit0.theta_hat, fit1.theta_hat),
        tuple(plugins),
        "swapped",
        (v0, v1),
        fit0.converged and fit1.converged,
    )
