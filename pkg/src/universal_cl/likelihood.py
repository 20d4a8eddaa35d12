"""Composite densities, composite likelihoods and split/swapped ratio statistics.

Everything is in log space.  ``log_cl_density`` is the weighted geometric
mean of the component densities; ``log_cl`` sums it over a dataset.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .combinatorics import WeightScheme
from .errors import DimensionError, EvaluationError, SplitError
from .models import CompositeModel


def log_cl_density(model: CompositeModel, weights: WeightScheme, x, theta):
    """Log composite density of one observation (float) or of each row of a dataset (array).

    Zero-weight components are never evaluated.  A positively weighted
    component with zero density makes the result ``-inf``.
    """
    if weights.dimension != model.dimension:
        raise DimensionError(f"weights are for d={weights.dimension}, model has d={model.dimension}")
    total = 0.0
    with np.errstate(invalid="ignore"):
        for subset, expo in weights.marginal_terms():
            total = total + expo * model.log_marginal(subset, x, theta)
        for division, expo in weights.conditional_terms():
            total = total + expo * model.log_conditional(division, x, theta)
    return total


def log_cl(model: CompositeModel, weights: WeightScheme, dataset, theta) -> float:
    """Log composite likelihood of a dataset of shape ``(n, d)``."""
    data = np.asarray(dataset, dtype=float)
    if data.ndim != 2 or len(data) == 0:
        raise DimensionError("log_cl needs a non-empty (n, d) dataset")
    values = log_cl_density(model, weights, data, theta)
    if np.any(np.isneginf(values)):
        return -math.inf
    return float(np.sum(values))


@dataclass(frozen=True)
class SplitSample:
    """First and second halves of a dataset of even length."""

    fold0: np.ndarray
    fold1: np.ndarray

    def __post_init__(self):
        if self.fold0.shape != self.fold1.shape:
            raise SplitError(f"folds differ in shape: {self.fold0.shape} vs {self.fold1.shape}")

    @property
    def n(self) -> int:
        return len(self.fold0)

    def fold(self, k: int) -> np.ndarray:
        if k not in (0, 1):
            raise SplitError(f"fold index must be 0 or 1, got {k!r}")
        return self.fold0 if k == 0 else self.fold1


def split_dataset(dataset, shuffle_seed=None) -> SplitSample:
    """Split ``2n`` observations into the first ``n`` and the last ``n``.

    With ``shuffle_seed`` the rows are permuted first (seeded); otherwise the
    given row order decides the split.
    """
    data = np.asarray(dataset, dtype=float)
    if data.ndim != 2:
        raise SplitError(f"expected an (n, d) dataset, got shape {data.shape}")
    m = len(data)
    if m < 2 or m % 2:
        raise SplitError(f"splitting needs an even number of observations >= 2, got {m}")
    if shuffle_seed is not None:
        data = data[np.random.default_rng(shuffle_seed).permutation(m)]
    half = m // 2
    return SplitSample(data[:half].copy(), data[half:].copy())


def log_ratio(numerator: float, denominator: float) -> float:
    """``numerator - denominator`` for log-likelihoods, rejecting ``-inf - -inf``."""
    if math.isinf(numerator) and math.isinf(denominator) and numerator < 0 and denominator < 0:
        raise EvaluationError("both likelihoods are zero; the ratio is indeterminate")
    if math.isnan(numerator) or math.isnan(denominator):
        raise EvaluationError("log-likelihood evaluated to NaN")
    return numerator - denominator


def log_clrs(model, weights, split: SplitSample, k: int, theta, theta_tilde_other) -> float:
    """Log split composite likelihood ratio on fold ``k``.

    ``theta_tilde_other`` must have been computed from fold ``1 - k`` only.
    """
    fold = split.fold(k)
    return log_ratio(log_cl(model, weights, fold, theta_tilde_other), log_cl(model, weights, fold, theta))


def log_mean_exp2(log_a: float, log_b: float) -> float:
    """``log((exp(a) + exp(b)) / 2)`` without overflow."""
    return float(np.logaddexp(log_a, log_b) - math.log(2.0))


def log_swapped_clrs(log_u0: float, log_u1: float) -> float:
    """Log of the average of the two fold statistics."""
    return log_mean_exp2(log_u0, log_u1)
