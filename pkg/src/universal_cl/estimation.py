"""Maximum composite likelihood estimation and plug-in estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .combinatorics import WeightScheme
from .errors import ConditioningError, ConvergenceError, EvaluationError, ParameterError, SpaceError
from .likelihood import log_cl
from .models import CompositeModel, ParamSpace

_INFEASIBLE = 1e300


@dataclass(frozen=True)
class OptimizerSettings:
    """Nelder-Mead settings.

    ``restarts`` is the total number of optimizer runs: the first starts at
    the supplied point, the rest at seeded jitters of it.
    """

    max_iterations: int = 2000
    tolerance: float = 1e-10
    xtol: float = 1e-8
    initial_scale: float = 0.5
    restarts: int = 5
    seed: int = 0
    penalty: float = 1e6

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance > 0 or not self.xtol > 0:
            raise ValueError("tolerances must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.initial_scale > 0:
            raise ValueError("initial_scale must be positive")


@dataclass(frozen=True)
class FitResult:
    theta_hat: np.ndarray
    objective: float
    converged: bool
    iterations: int
    restart: int = 0


def _steps(space: ParamSpace, free: np.ndarray, scale: float) -> np.ndarray:
    lo = np.asarray(space.lower)[free]
    hi = np.asarray(space.upper)[free]
    width = hi - lo
    return np.where(np.isfinite(width), np.minimum(scale, 0.25 * width), scale)


def fit_mcle(
    model: CompositeModel,
    weights: WeightScheme,
    dataset,
    space: ParamSpace | None = None,
    settings: OptimizerSettings | None = None,
    start=None,
) -> FitResult:
    """Maximize the composite likelihood of ``dataset`` over ``space``.

    Pinned coordinates are held fixed and the rest optimized by Nelder-Mead;
    box bounds are enforced by clipping plus a quadratic penalty on the
    distance to the box.  The best restart wins, ties going to the earliest.
    A run that stops on the iteration cap is returned with
    ``converged=False``.
    """
    space = model.space if space is None else space
    settings = settings or OptimizerSettings()
    if space.n_params != model.n_params:
        raise SpaceError(f"space has {space.n_params} parameters, model has {model.n_params}")
    data = np.asarray(dataset, dtype=float)
    base = space.clip(model.default_theta() if start is None else start)
    free = space.free_index
    if free.size == 0:
        return FitResult(base, log_cl(model, weights, data, base), True, 0)

    lo = np.asarray(space.lower)[free]
    hi = np.asarray(space.upper)[free]

    def value(theta):
        try:
            v = log_cl(model, weights, data, theta)
        except (ParameterError, ConditioningError, EvaluationError):
            return -math.inf
        return v if not math.isnan(v) else -math.inf

    def negobj(z):
        zc = np.clip(z, lo, hi)
        theta = base.copy()
        theta[free] = zc
        v = value(theta)
        if not math.isfinite(v):
            return _INFEASIBLE
        return -v + settings.penalty * float(np.sum((z - zc) ** 2))

    rng = np.random.default_rng(settings.seed)
    steps = _steps(space, free, settings.initial_scale)
    best = None
    total_iter = 0
    for r in range(settings.restarts):
        z0 = base[free].copy()
        if r > 0:
            z0 = np.clip(z0 + steps * rng.standard_normal(free.size), lo, hi)
        simplex = [z0]
        for j in range(free.size):
            vertex = z0.copy()
            vertex[j] += steps[j] if z0[j] + steps[j] <= hi[j] else -steps[j]
            simplex.append(vertex)
        res = minimize(
            negobj,
            z0,
            method="Nelder-Mead",
            options={
                "maxiter": settings.max_iterations,
                "xatol": settings.xtol,
                "fatol": settings.tolerance,
                "initial_simplex": np.array(simplex),
            },
        )
        total_iter += int(res.nit)
        theta = base.copy()
        theta[free] = np.clip(res.x, lo, hi)
        obj = value(theta)
        start_theta = base.copy()
        start_theta[free] = z0
        start_obj = value(start_theta)
        if start_obj > obj:
            # NM never moves the best vertex downhill, but clipping can; keep the start
            theta, obj = start_theta, start_obj
        if not math.isfinite(obj):
            continue
        if best is None or obj > best[1]:
            best = (theta, obj, bool(res.success), r)
    if best is None:
        raise ConvergenceError("every restart ended at a zero composite likelihood", best=base)
    theta, obj, ok, r = best
    return FitResult(theta, obj, ok, total_iter, r)


PLUGIN_KINDS = ("mcle", "moments", "fixed")


@dataclass(frozen=True)
class Plugin:
    """How the plug-in (numerator) estimator is computed from one fold or history.

    ``kind`` is ``"mcle"`` (unconstrained MCLE over the model space),
    ``"moments"`` (the model's ``moments_estimate``) or ``"fixed"`` (always
    ``value``).  ``refit_every`` only affects sequential use.
    """

    kind: str = "mcle"
    value: tuple | None = None
    refit_every: int = 1
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)

    def __post_init__(self):
        if self.kind not in PLUGIN_KINDS:
            raise ValueError(f"unknown plug-in strategy {self.kind!r}; choose from {PLUGIN_KINDS}")
        if self.kind == "fixed" and self.value is None:
            raise ValueError("the fixed strategy needs a value")
        if self.value is not None:
            object.__setattr__(self, "value", tuple(float(v) for v in self.value))
        if self.refit_every < 1:
            raise ValueError("refit_every must be >= 1")

    def estimate(self, model, weights, dataset, start=None) -> np.ndarray:
        return plugin_estimator(model, weights, dataset, self.settings, self.kind, self.value, start=start)

    def to_dict(self) -> dict:
        return {"strategy": self.kind, "value": None if self.value is None else list(self.value), "refit_every": self.refit_every}


def plugin_estimator(
    model: CompositeModel,
    weights: WeightScheme,
    dataset,
    settings: OptimizerSettings | None = None,
    strategy: str = "mcle",
    value=None,
    start=None,
) -> np.ndarray:
    """Plug-in estimate for the numerator of a ratio statistic."""
    if strategy == "fixed":
        if value is None:
            raise ValueError("the fixed strategy needs a value")
        return model.check_theta(np.array(value, dtype=float))
    if strategy == "moments":
        if not hasattr(model, "moments_estimate"):
            raise ValueError(f"{type(model).__name__} has no moments estimator")
        return model.moments_estimate(dataset)
    if strategy == "mcle":
        return fit_mcle(model, weights, dataset, model.space, settings, start=start).theta_hat
    raise ValueError(f"unknown plug-in strategy {strategy!r}")
