"""Parametric families exposing marginal, conditional and joint log-densities.

Observations are numpy arrays: a single observation has shape ``(d,)`` and a
dataset has shape ``(n, d)``.  Every log-density method accepts either and
returns a float or an ``(n,)`` array respectively.

Parameter vectors are 0-based numpy arrays of length ``n_params``; observation
coordinates inside subsets and divisions are 1-based.
"""
from __future__ import annotations

import itertools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.linalg import solve_triangular

from .combinatorics import Division, Subset
from .errors import ConditioningError, DimensionError, ParameterError, SpaceError

LOG_2PI = math.log(2 * math.pi)


def as_rng(seed) -> np.random.Generator:
    """Generator from an int, a SeedSequence, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class ParamSpace:
    """Box ``lower <= theta <= upper`` with optional equality pins.

    ``pins`` maps 0-based parameter index to a fixed value; pinned
    coordinates are excluded from optimization.
    """

    lower: tuple
    upper: tuple
    pins: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise SpaceError("lower and upper bounds differ in length")
        for j, (a, b) in enumerate(zip(lo, hi)):
            if math.isnan(a) or math.isnan(b) or a > b:
                raise SpaceError(f"infeasible bounds for parameter {j}: [{a}, {b}]")
        pins = {int(k): float(v) for k, v in dict(self.pins).items()}
        for j, v in pins.items():
            if not 0 <= j < len(lo):
                raise SpaceError(f"pin index {j} out of range for {len(lo)} parameters")
            if not lo[j] <= v <= hi[j]:
                raise SpaceError(f"pin {j}={v} lies outside bounds [{lo[j]}, {hi[j]}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "pins", pins)

    @classmethod
    def unbounded(cls, q: int) -> "ParamSpace":
        return cls((-math.inf,) * q, (math.inf,) * q)

    @property
    def n_params(self) -> int:
        return len(self.lower)

    @property
    def free_index(self) -> np.ndarray:
        return np.array([j for j in range(self.n_params) if j not in self.pins], dtype=int)

    @property
    def is_point(self) -> bool:
        return len(self.pins) == self.n_params

    def with_pins(self, pins: Mapping[int, float]) -> "ParamSpace":
        return ParamSpace(self.lower, self.upper, {**self.pins, **pins})

    def with_bounds(self, lower=None, upper=None) -> "ParamSpace":
        return ParamSpace(
            self.lower if lower is None else lower,
            self.upper if upper is None else upper,
            self.pins,
        )

    def clip(self, theta) -> np.ndarray:
        theta = np.clip(np.asarray(theta, dtype=float), self.lower, self.upper)
        for j, v in self.pins.items():
            theta[j] = v
        return theta

    def contains(self, theta, atol: float = 0.0) -> bool:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            return False
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        if np.any(theta < lo - atol) or np.any(theta > hi + atol):
            return False
        return all(abs(theta[j] - v) <= atol for j, v in self.pins.items())

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper), "pins": dict(self.pins)}


def _as_data(x, d: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != d:
        raise DimensionError(f"expected observations with {d} coordinates, got shape {np.shape(x)}")
    return arr, single


def _out(values: np.ndarray, single: bool):
    return float(values[0]) if single else values


class CompositeModel(ABC):
    """Interface consumed by the likelihood, estimation and inference code.

    Subclasses provide three log-densities and a sampler; nothing else in the
    package looks inside a model.
    """

    dimension: int
    n_params: int

    @property
    @abstractmethod
    def space(self) -> ParamSpace:
        """Natural parameter space used when no other space is given."""

    @abstractmethod
    def default_theta(self) -> np.ndarray:
        """A point of the parameter space used as the default optimizer start."""

    @abstractmethod
    def log_marginal(self, subset: Subset, x, theta):
        """``log p(x_S; theta)``."""

    @abstractmethod
    def log_conditional(self, division: Division, x, theta):
        """``log p(x_left | x_right; theta)``."""

    @abstractmethod
    def log_full(self, x, theta):
        """``log p(x; theta)``."""

    @abstractmethod
    def sample(self, theta, count: int, seed=None) -> np.ndarray:
        """``count`` IID draws, shape ``(count, d)``."""

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ParameterError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ParameterError(f"non-finite parameter vector {theta}")
        return theta

    def describe(self) -> dict:
        return {"kind": type(self).__name__, "dimension": self.dimension, "n_params": self.n_params}


def _cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ParameterError("covariance matrix is not positive definite") from None
    if not np.all(np.isfinite(chol)) or np.any(np.diag(chol) <= 0):
        raise ParameterError("covariance matrix is not positive definite")
    return chol


@dataclass(frozen=True)
class _Factor:
    """Whitening matrix ``inv(L)`` and normalizing constant of a Gaussian."""

    whiten: np.ndarray
    log_norm: float

    @classmethod
    def from_cov(cls, cov: np.ndarray) -> "_Factor":
        chol = _cholesky(cov)
        k = chol.shape[0]
        whiten = solve_triangular(chol, np.eye(k), lower=True)
        return cls(whiten, -float(np.log(np.diag(chol)).sum()) - 0.5 * k * LOG_2PI)

    def logpdf(self, resid: np.ndarray) -> np.ndarray:
        z = resid @ self.whiten.T
        return self.log_norm - 0.5 * np.einsum("ij,ij->i", z, z)


class GaussianModel(CompositeModel):
    """Multivariate normal with the mean as parameter.

    With ``covariance`` given, the covariance is known and ``theta = mu``.
    With ``covariance=None`` (``d = 2`` only) the parameter vector is
    ``(mu1, mu2, var1, var2, rho)``.
    """

    def __init__(self, dimension: int = 2, covariance=None):
        if not isinstance(dimension, int) or not 1 <= dimension <= 8:
            raise DimensionError(f"GaussianModel supports 1 <= d <= 8, got {dimension!r}")
        self.dimension = dimension
        if covariance is None:
            if dimension != 2:
                raise DimensionError("the variance/correlation parameterization is only available for d=2")
            self.covariance = None
            self.n_params = 5
            eps = 1e-6
            self._space = ParamSpace(
                (-math.inf, -math.inf, eps, eps, -1 + eps), (math.inf, math.inf, math.inf, math.inf, 1 - eps)
            )
        else:
            cov = np.array(covariance, dtype=float)
            if cov.shape != (dimension, dimension) or not np.allclose(cov, cov.T):
                raise ParameterError("covariance must be a symmetric d x d matrix")
            _cholesky(cov)
            cov.setflags(write=False)
            self.covariance = cov
            self.n_params = dimension
            self._space = ParamSpace.unbounded(dimension)
        self._cache: dict = {}

    @property
    def space(self) -> ParamSpace:
        return self._space

    @property
    def known_covariance(self) -> bool:
        return self.covariance is not None

    def default_theta(self) -> np.ndarray:
        if self.known_covariance:
            return np.zeros(self.dimension)
        return np.array([0.0, 0.0, 1.0, 1.0, 0.0])

    def describe(self) -> dict:
        out = super().describe()
        out["kind"] = "gaussian"
        out["covariance"] = None if self.covariance is None else self.covariance.tolist()
        return out

    def mean_cov(self, theta) -> tuple[np.ndarray, np.ndarray]:
        theta = self.check_theta(theta)
        if self.known_covariance:
            return theta, self.covariance
        mu = theta[:2]
        v1, v2, rho = theta[2:]
        if v1 <= 0 or v2 <= 0 or not -1 < rho < 1:
            raise ParameterError(f"invalid variances/correlation {theta[2:]}")
        c = rho * math.sqrt(v1 * v2)
        return mu, np.array([[v1, c], [c, v2]])

    # Factor caches only apply to a known covariance; keys are position tuples.
    def _marginal_factor(self, pos, cov):
        key = ("m", pos)
        if self.known_covariance and key in self._cache:
            return self._cache[key]
        factor = _Factor.from_cov(cov[np.ix_(pos, pos)])
        if self.known_covariance:
            self._cache[key] = factor
        return factor

    def _conditional_factor(self, left, right, cov):
        key = ("c", left, right)
        if self.known_covariance and key in self._cache:
            return self._cache[key]
        s_ll = cov[np.ix_(left, left)]
        s_lr = cov[np.ix_(left, right)]
        s_rr = cov[np.ix_(right, right)]
        chol_rr = _cholesky(s_rr)
        # regression coefficients Sigma_LR Sigma_RR^{-1} via the Cholesky factor
        tmp = solve_triangular(chol_rr, s_lr.T, lower=True)
        coef = solve_triangular(chol_rr.T, tmp, lower=False).T
        schur = s_ll - coef @ s_lr.T
        out = (coef.T.copy(), _Factor.from_cov(0.5 * (schur + schur.T)))
        if self.known_covariance:
            self._cache[key] = out
        return out

    def log_marginal(self, subset, x, theta):
        subset = subset.check(self.dimension)
        data, single = _as_data(x, self.dimension)
        mu, cov = self.mean_cov(theta)
        pos = subset.positions
        factor = self._marginal_factor(pos, cov)
        return _out(factor.logpdf(data[:, pos] - mu[list(pos)]), single)

    def log_conditional(self, division, x, theta):
        division = division.check(self.dimension)
        data, single = _as_data(x, self.dimension)
        mu, cov = self.mean_cov(theta)
        left, right = division.left.positions, division.right.positions
        coef_t, factor = self._conditional_factor(left, right, cov)
        cond_mean = mu[list(left)] + (data[:, right] - mu[list(right)]) @ coef_t
        return _out(factor.logpdf(data[:, left] - cond_mean), single)

    def log_full(self, x, theta):
        data, single = _as_data(x, self.dimension)
        mu, cov = self.mean_cov(theta)
        pos = tuple(range(self.dimension))
        return _out(self._marginal_factor(pos, cov).logpdf(data - mu), single)

    def sample(self, theta, count: int, seed=None) -> np.ndarray:
        if count < 1:
            raise ValueError("count must be at least 1")
        mu, cov = self.mean_cov(theta)
        chol = _cholesky(cov)
        z = as_rng(seed).standard_normal((count, self.dimension))
        return mu + z @ chol.T

    def moments_estimate(self, data) -> np.ndarray:
        """Method-of-moments estimate (sample mean, and variances/correlation if estimated)."""
        data, _ = _as_data(data, self.dimension)
        mean = data.mean(axis=0)
        if self.known_covariance:
            return mean
        lo, hi = np.asarray(self._space.lower), np.asarray(self._space.upper)
        if len(data) < 2:
            return np.clip(np.array([*mean, 1.0, 1.0, 0.0]), lo, hi)
        v = data.var(axis=0)
        sd = np.sqrt(v)
        rho = 0.0 if np.any(sd == 0) else float(np.mean((data[:, 0] - mean[0]) * (data[:, 1] - mean[1])) / (sd[0] * sd[1]))
        return np.clip(np.array([*mean, v[0], v[1], rho]), lo, hi)


class DiscreteTableModel(CompositeModel):
    """Finite-support model whose joint PMF is a parameterized table.

    ``table_fn(theta)`` returns an array of shape ``support`` (one axis per
    coordinate) summing to one.  Observations are integer codes
    ``0..support[j]-1``.  All marginals and conditionals are exact sums over
    the table.  ``table_fn`` should be a module-level callable so the model
    pickles for parallel replicates.
    """

    def __init__(
        self,
        table_fn: Callable[[np.ndarray], np.ndarray],
        support: tuple[int, ...],
        space: ParamSpace,
        start,
        name: str = "discrete",
    ):
        support = tuple(int(s) for s in support)
        if not 1 <= len(support) <= 3 or any(not 2 <= s <= 4 for s in support):
            raise DimensionError(f"discrete models need d <= 3 and support sizes in 2..4, got {support}")
        self.table_fn = table_fn
        self.support = support
        self.dimension = len(support)
        self._space = space
        self.n_params = space.n_params
        self._start = np.asarray(start, dtype=float)
        self.name = name
        self._last: tuple = (None, None)

    @property
    def space(self) -> ParamSpace:
        return self._space

    def default_theta(self) -> np.ndarray:
        return self._start.copy()

    def describe(self) -> dict:
        out = super().describe()
        out["kind"] = self.name
        out["support"] = list(self.support)
        return out

    def table(self, theta) -> np.ndarray:
        theta = self.check_theta(theta)
        key = theta.tobytes()
        if self._last[0] == key:
            return self._last[1]
        tab = np.asarray(self.table_fn(theta), dtype=float)
        if tab.shape != self.support:
            raise ParameterError(f"table has shape {tab.shape}, expected {self.support}")
        if np.any(tab < 0) or not np.all(np.isfinite(tab)) or abs(tab.sum() - 1.0) > 1e-12:
            raise ParameterError(f"parameter {theta} does not give a normalized PMF")
        tab.setflags(write=False)
        self._last = (key, tab)
        return tab

    def outcomes(self) -> np.ndarray:
        """Every support point, shape ``(prod(support), d)``, in C order."""
        return np.array(list(itertools.product(*(range(s) for s in self.support))), dtype=float)

    def pmf(self, theta) -> np.ndarray:
        """Probabilities aligned with :meth:`outcomes`."""
        return self.table(theta).ravel()

    def _codes(self, x):
        data, single = _as_data(x, self.dimension)
        codes = data.astype(int)
        if np.any(codes != data) or np.any(codes < 0) or np.any(codes >= np.array(self.support)):
            raise ParameterError("observations must be integer codes within the support")
        return codes, single

    def _marginal_table(self, tab, positions):
        drop = tuple(a for a in range(self.dimension) if a not in positions)
        return tab.sum(axis=drop) if drop else tab

    def log_marginal(self, subset, x, theta):
        subset = subset.check(self.dimension)
        codes, single = self._codes(x)
        pos = subset.positions
        marg = self._marginal_table(self.table(theta), pos)
        with np.errstate(divide="ignore"):
            return _out(np.log(marg[tuple(codes[:, p] for p in pos)]), single)

    def log_conditional(self, division, x, theta):
        division = division.check(self.dimension)
        codes, single = self._codes(x)
        tab = self.table(theta)
        joint_pos = division.union.positions
        right_pos = division.right.positions
        joint = self._marginal_table(tab, joint_pos)[tuple(codes[:, p] for p in joint_pos)]
        cond = self._marginal_table(tab, right_pos)[tuple(codes[:, p] for p in right_pos)]
        if np.any(cond <= 0):
            raise ConditioningError(f"conditioning event for {division} has probability zero")
        with np.errstate(divide="ignore"):
            return _out(np.log(joint) - np.log(cond), single)

    def log_full(self, x, theta):
        codes, single = self._codes(x)
        tab = self.table(theta)
        with np.errstate(divide="ignore"):
            return _out(np.log(tab[tuple(codes.T)]), single)

    def sample(self, theta, count: int, seed=None) -> np.ndarray:
        if count < 1:
            raise ValueError("count must be at least 1")
        p = self.pmf(theta)
        idx = as_rng(seed).choice(p.size, size=count, p=p)
        return np.stack(np.unravel_index(idx, self.support), axis=1).astype(float)


def bernoulli_pair_table(theta) -> np.ndarray:
    """2x2 table with success probabilities ``p1, p2`` and odds ratio ``psi``.

    Cell ``[a, b]`` is ``P(X1 = a, X2 = b)``.
    """
    p1, p2, psi = (float(t) for t in theta)
    if not (0 < p1 < 1 and 0 < p2 < 1 and psi > 0):
        raise ParameterError(f"bivariate Bernoulli needs 0<p1,p2<1 and psi>0, got {theta}")
    if abs(psi - 1.0) < 1e-12:
        p11 = p1 * p2
    else:
        s = 1 + (p1 + p2) * (psi - 1)
        p11 = (s - math.sqrt(s * s - 4 * psi * (psi - 1) * p1 * p2)) / (2 * (psi - 1))
    p10 = p1 - p11
    p01 = p2 - p11
    p00 = 1 - p1 - p2 + p11
    tab = np.array([[p00, p01], [p10, p11]])
    tab /= tab.sum()
    return tab


def bivariate_bernoulli(p_bounds=(0.02, 0.98), psi_bounds=(0.05, 20.0)) -> DiscreteTableModel:
    """Two binary coordinates, ``theta = (p1, p2, odds_ratio)``."""
    space = ParamSpace((p_bounds[0], p_bounds[0], psi_bounds[0]), (p_bounds[1], p_bounds[1], psi_bounds[1]))
    return DiscreteTableModel(bernoulli_pair_table, (2, 2), space, (0.5, 0.5, 1.0), name="bivariate_bernoulli")


class BinaryLoglinearTable:
    """``p(x) proportional to exp(sum h_j x_j + sum_{j<k} J_jk x_j x_k)`` on ``{0,1}^d``.

    Parameters are the ``d`` main effects followed by the pairwise
    interactions in lexicographic pair order.
    """

    def __init__(self, d: int):
        self.d = d
        cells = np.array(list(itertools.product((0, 1), repeat=d)), dtype=float)
        pairs = list(itertools.combinations(range(d), 2))
        self.features = np.hstack([cells, np.stack([cells[:, a] * cells[:, b] for a, b in pairs], axis=1)])

    def __call__(self, theta) -> np.ndarray:
        eta = self.features @ np.asarray(theta, dtype=float)
        w = np.exp(eta - eta.max())
        return (w / w.sum()).reshape((2,) * self.d)


def binary_loglinear(d: int = 3, bound: float = 4.0) -> DiscreteTableModel:
    """Binary log-linear (Ising-type) model on ``d <= 3`` coordinates."""
    if d not in (2, 3):
        raise DimensionError("binary_loglinear supports d in {2, 3}")
    q = d + d * (d - 1) // 2
    space = ParamSpace((-bound,) * q, (bound,) * q)
    return DiscreteTableModel(BinaryLoglinearTable(d), (2,) * d, space, np.zeros(q), name="binary_loglinear")
