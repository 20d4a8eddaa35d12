"""Always-valid sequential inference: running CLRT, p-value processes, confidence sequences.

The running statistic after ``n`` observations is

    log M_n = sum_i log p_cl(x_i; theta_tilde_{i-1}) - log L_cl(theta_hat0_n; x_1..x_n)

where ``theta_tilde_{i-1}`` depends only on the first ``i-1`` observations
and ``theta_hat0_n`` maximizes the composite likelihood over the null space.
Replacing the denominator by an arbitrary ``theta`` gives ``log R_n(theta)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .combinatorics import WeightScheme
from .errors import DimensionError, ParameterError
from .estimation import OptimizerSettings, Plugin, fit_mcle
from .likelihood import log_cl, log_cl_density, log_ratio
from .models import CompositeModel, ParamSpace


def _threshold(significance_level: float) -> float:
    if not 0 < significance_level < 1:
        raise ValueError(f"significance_level must lie in (0, 1), got {significance_level}")
    return -math.log(significance_level)


def p_from_log_m(log_m: float) -> float:
    """``min(1, 1/M)`` computed from ``log M``."""
    return 1.0 if log_m <= 0 else math.exp(-log_m)


@dataclass(frozen=True)
class StepRecord:
    n: int
    logM: float
    P: float
    P_min: float
    rejected: bool


@dataclass
class SeqReport:
    significance_level: float
    records: list = field(default_factory=list)
    stop_step: int | None = None

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r)) + "\n" for r in self.records)


class SequentialState:
    """Single-writer state of one sequential run.

    ``null_space=None`` disables the test statistic and keeps only what the
    confidence sequences need.  The plug-in is refitted on the whole history
    every ``plugin.refit_every`` steps, warm-started at its previous value.
    """

    def __init__(
        self,
        model: CompositeModel,
        weights: WeightScheme,
        theta_init,
        null_space: ParamSpace | None = None,
        plugin: Plugin | None = None,
        settings: OptimizerSettings | None = None,
        significance_level: float = 0.05,
    ):
        self.model = model
        self.weights = weights
        self.null_space = null_space
        self.plugin = plugin or Plugin()
        self.settings = settings or OptimizerSettings()
        self.threshold = _threshold(significance_level)
        self.significance_level = significance_level
        theta_init = model.check_theta(theta_init)
        if not model.space.contains(theta_init):
            raise ParameterError(f"theta_init {theta_init} lies outside the parameter space")
        self.theta_tilde = theta_init.copy()
        self.n = 0
        self._buf = np.empty((16, model.dimension))
        self.numerator_terms: list[float] = []
        self.estimator_path: list[np.ndarray] = []
        self.log_numerator = 0.0
        self.theta_hat0 = None if null_space is None else null_space.clip(theta_init)
        self._denominator = 0.0
        self.log_m = 0.0 if null_space is not None else None
        self.p_min = 1.0
        self.stop_step = None
        self.records: list[StepRecord] = []
        self.unconverged_fits = 0

    @property
    def history(self) -> np.ndarray:
        return self._buf[: self.n]

    def _append(self, x: np.ndarray) -> None:
        if self.n == len(self._buf):
            grown = np.empty((2 * len(self._buf), self._buf.shape[1]))
            grown[: self.n] = self._buf[: self.n]
            self._buf = grown
        self._buf[self.n] = x
        self.n += 1

    def copy(self) -> "SequentialState":
        """Independent copy sharing the model, weights and settings."""
        new = object.__new__(SequentialState)
        new.__dict__.update(self.__dict__)
        new._buf = self._buf.copy()
        new.numerator_terms = list(self.numerator_terms)
        new.estimator_path = list(self.estimator_path)
        new.records = list(self.records)
        return new

    def update(self, x) -> "SequentialState":
        x = np.asarray(x, dtype=float)
        if x.shape != (self.model.dimension,):
            raise DimensionError(f"observation must have {self.model.dimension} coordinates, got shape {x.shape}")
        # numerator uses the estimator built from the previous observations only
        used = self.theta_tilde.copy()
        term = float(log_cl_density(self.model, self.weights, x, used))
        self.numerator_terms.append(term)
        self.estimator_path.append(used)
        self.log_numerator += term
        self._append(x)
        if self.null_space is not None:
            self._update_null_fit(x)
            self.log_m = log_ratio(self.log_numerator, self._denominator)
            p = p_from_log_m(self.log_m)
            self.p_min = min(self.p_min, p)
            rejected = self.log_m > self.threshold
            if rejected and self.stop_step is None:
                self.stop_step = self.n
            self.records.append(StepRecord(self.n, self.log_m, p, self.p_min, rejected))
        self._update_plugin()
        return self

    def _update_null_fit(self, x: np.ndarray) -> None:
        prev = self.theta_hat0
        prev_value = self._denominator + float(log_cl_density(self.model, self.weights, x, prev))
        if self.null_space.is_point:
            self._denominator = prev_value
            return
        fit = fit_mcle(self.model, self.weights, self.history, self.null_space, self.settings, start=prev)
        if not fit.converged:
            self.unconverged_fits += 1
        # keep whichever of the new fit and the previous maximizer scores higher
        if fit.objective >= prev_value:
            self.theta_hat0, self._denominator = fit.theta_hat, fit.objective
        else:
            self._denominator = prev_value

    def _update_plugin(self) -> None:
        if self.plugin.kind == "fixed" or self.n % self.plugin.refit_every:
            return
        self.theta_tilde = self.plugin.estimate(self.model, self.weights, self.history, start=self.theta_tilde)

    def decision(self, significance_level: float) -> tuple[str, int | None]:
        """``("reject", nu)`` if ``M_m > 1/significance_level`` for some ``m <= n``."""
        threshold = _threshold(significance_level)
        if self.null_space is None:
            raise ValueError("no null space was given, so there is no test to decide")
        for rec in self.records:
            if rec.logM > threshold:
                return "reject", rec.n
        return "continue", None

    def p_values(self) -> tuple[float, float]:
        """``(P_n, running minimum of P)``; both are 1 before any data."""
        if self.null_space is None:
            raise ValueError("no null space was given, so there are no p-values")
        return p_from_log_m(self.log_m), self.p_min

    def log_r(self, theta) -> float:
        """``log R_n(theta)``; 0 before any data."""
        if self.n == 0:
            return 0.0
        return log_ratio(self.log_numerator, log_cl(self.model, self.weights, self.history, theta))

    def log_r_path(self, theta) -> np.ndarray:
        """``log R_m(theta)`` for ``m = 1..n``, from the cached numerator terms."""
        if self.n == 0:
            return np.empty(0)
        with np.errstate(invalid="ignore"):
            denom = np.cumsum(log_cl_density(self.model, self.weights, self.history, theta))
            return np.cumsum(self.numerator_terms) - denom

    def confseq_membership(self, theta, significance_level: float) -> tuple[bool, bool]:
        """``(theta in D_n, theta in the running intersection of D_1..D_n)``."""
        threshold = _threshold(significance_level)
        if self.n == 0:
            return True, True
        path = self.log_r_path(theta)
        return bool(path[-1] <= threshold), bool(np.all(path <= threshold))

    def report(self) -> SeqReport:
        return SeqReport(self.significance_level, list(self.records), self.stop_step)


def seq_init(model, weights, theta_init, null_space=None, plugin=None, settings=None, significance_level=0.05):
    return SequentialState(model, weights, theta_init, null_space, plugin, settings, significance_level)


def seq_update(state: SequentialState, x) -> SequentialState:
    return state.update(x)


def seq_decision(state: SequentialState, significance_level: float):
    return state.decision(significance_level)


def p_values(state: SequentialState) -> tuple[float, float]:
    return state.p_values()


def confseq_membership(state: SequentialState, theta, significance_level: float) -> tuple[bool, bool]:
    return state.confseq_membership(theta, significance_level)


def run_sequential(model, weights, data, theta_init, null_space=None, plugin=None, settings=None, significance_level=0.05):
    """Feed every row of ``data`` through a fresh state."""
    state = SequentialState(model, weights, theta_init, null_space, plugin, settings, significance_level)
    for x in np.asarray(data, dtype=float):
        state.update(x)
    return state
