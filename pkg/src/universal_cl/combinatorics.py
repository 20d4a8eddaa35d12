"""Coordinate subsets, divisions and composite-likelihood weight schemes.

Coordinates are 1-based throughout the public API (``Subset((1, 2))`` is the
first two coordinates).  Models convert to 0-based positions internally.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping

from .errors import DimensionError, GammaZeroError, InvalidKeyError, WeightError

MAX_SUBSET_DIM = 12
MAX_DIVISION_DIM = 8


@dataclass(frozen=True, order=False)
class Subset:
    """A non-empty set of coordinates, stored as a sorted tuple."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise InvalidKeyError("subset must be non-empty")
        if len(set(idx)) != len(idx):
            raise InvalidKeyError(f"subset has repeated indices: {idx}")
        if min(idx) < 1:
            raise InvalidKeyError(f"subset indices are 1-based, got {idx}")
        object.__setattr__(self, "indices", tuple(sorted(idx)))

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    @property
    def positions(self) -> tuple[int, ...]:
        """0-based positions, for array indexing."""
        return tuple(i - 1 for i in self.indices)

    def sort_key(self):
        return (len(self.indices), self.indices)

    def check(self, d: int) -> "Subset":
        if self.indices[-1] > d:
            raise InvalidKeyError(f"subset {list(self.indices)} not valid for d={d}")
        return self

    def __repr__(self):
        return "{" + ",".join(map(str, self.indices)) + "}"


@dataclass(frozen=True)
class Division:
    """Ordered pair of disjoint non-empty subsets: ``left`` conditioned on ``right``.

    The union of the two sides may be a proper subset of the coordinates.
    """

    left: Subset
    right: Subset

    def __post_init__(self):
        left = self.left if isinstance(self.left, Subset) else Subset(tuple(self.left))
        right = self.right if isinstance(self.right, Subset) else Subset(tuple(self.right))
        if set(left.indices) & set(right.indices):
            raise InvalidKeyError(f"division sides overlap: {left} | {right}")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    def sort_key(self):
        return (self.left.sort_key(), self.right.sort_key())

    def check(self, d: int) -> "Division":
        self.left.check(d)
        self.right.check(d)
        return self

    @property
    def union(self) -> Subset:
        return Subset(self.left.indices + self.right.indices)

    def __repr__(self):
        return f"({self.left}|{self.right})"


def enumerate_subsets(d: int) -> list[Subset]:
    """All non-empty subsets of ``{1..d}``, ordered by size then lexicographically."""
    if not isinstance(d, (int,)) or isinstance(d, bool) or not 1 <= d <= MAX_SUBSET_DIM:
        raise DimensionError(f"enumerate_subsets needs 1 <= d <= {MAX_SUBSET_DIM}, got {d!r}")
    out = []
    for size in range(1, d + 1):
        out.extend(Subset(c) for c in itertools.combinations(range(1, d + 1), size))
    return out


def enumerate_divisions(d: int) -> list[Division]:
    """All ordered pairs of disjoint non-empty subsets of ``{1..d}``.

    There are ``3**d - 2**(d+1) + 1`` of them.  Ordered by the left side, then
    the right side, each in subset order.
    """
    if not isinstance(d, int) or isinstance(d, bool) or not 2 <= d <= MAX_DIVISION_DIM:
        raise DimensionError(f"enumerate_divisions needs 2 <= d <= {MAX_DIVISION_DIM}, got {d!r}")
    subsets = enumerate_subsets(d)
    return [
        Division(left, right)
        for left in subsets
        for right in subsets
        if not set(left.indices) & set(right.indices)
    ]


def _as_subset(key) -> Subset:
    if isinstance(key, Subset):
        return key
    if isinstance(key, int):
        return Subset((key,))
    try:
        return Subset(tuple(key))
    except TypeError as exc:
        raise InvalidKeyError(f"cannot interpret {key!r} as a subset") from exc


def _as_division(key) -> Division:
    if isinstance(key, Division):
        return key
    if isinstance(key, Mapping):
        return Division(_as_subset(key["left"]), _as_subset(key["right"]))
    try:
        left, right = key
    except (TypeError, ValueError) as exc:
        raise InvalidKeyError(f"cannot interpret {key!r} as a division") from exc
    return Division(_as_subset(left), _as_subset(right))


def _items(entries):
    if entries is None:
        return []
    if isinstance(entries, Mapping):
        return list(entries.items())
    return list(entries)


def _check_weight(w, key) -> float:
    try:
        w = float(w)
    except (TypeError, ValueError) as exc:
        raise WeightError(f"weight for {key!r} is not a number: {w!r}") from exc
    if not math.isfinite(w):
        raise WeightError(f"weight for {key!r} is not finite: {w}")
    if w < 0:
        raise WeightError(f"weight for {key!r} is negative: {w}")
    return w


@dataclass(frozen=True)
class WeightScheme:
    """Non-negative weights on marginal (``alpha``) and conditional (``beta``) components.

    Only strictly positive weights are stored.  ``gamma`` is the sum of all
    weights; each component enters the composite density with exponent
    ``weight / gamma``.
    """

    dimension: int
    alpha: dict = field(default_factory=dict)
    beta: dict = field(default_factory=dict)
    gamma: float = 0.0

    def marginal_terms(self) -> Iterator[tuple[Subset, float]]:
        """(subset, exponent) pairs in deterministic order."""
        for s in sorted(self.alpha, key=Subset.sort_key):
            yield s, self.alpha[s] / self.gamma

    def conditional_terms(self) -> Iterator[tuple[Division, float]]:
        for t in sorted(self.beta, key=Division.sort_key):
            yield t, self.beta[t] / self.gamma

    def scaled(self, factor: float) -> "WeightScheme":
        if not factor > 0:
            raise WeightError(f"scale factor must be positive, got {factor}")
        return make_weights(
            self.dimension,
            {s: w * factor for s, w in self.alpha.items()},
            {t: w * factor for t, w in self.beta.items()},
        )

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "alpha": [
                {"subset": list(s.indices), "weight": self.alpha[s]}
                for s in sorted(self.alpha, key=Subset.sort_key)
            ],
            "beta": [
                {"left": list(t.left.indices), "right": list(t.right.indices), "weight": self.beta[t]}
                for t in sorted(self.beta, key=Division.sort_key)
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "WeightScheme":
        d = int(data["dimension"])
        alpha = [(e["subset"], e["weight"]) for e in data.get("alpha") or []]
        beta = [((e["left"], e["right"]), e["weight"]) for e in data.get("beta") or []]
        return make_weights(d, alpha, beta)


def make_weights(d: int, alpha_entries=None, beta_entries=None) -> WeightScheme:
    """Build a validated weight scheme.

    ``alpha_entries`` maps subsets (``Subset`` or any iterable of 1-based
    indices) to weights; ``beta_entries`` maps divisions (``Division`` or a
    ``(left, right)`` pair) to weights.  Either may be a mapping or a list of
    ``(key, weight)`` pairs.  Repeated keys accumulate.
    """
    if not isinstance(d, int) or d < 1:
        raise DimensionError(f"dimension must be a positive integer, got {d!r}")
    alpha: dict[Subset, float] = {}
    beta: dict[Division, float] = {}
    for key, w in _items(alpha_entries):
        s = _as_subset(key).check(d)
        w = _check_weight(w, s)
        if w > 0:
            alpha[s] = alpha.get(s, 0.0) + w
    for key, w in _items(beta_entries):
        t = _as_division(key).check(d)
        w = _check_weight(w, t)
        if w > 0:
            beta[t] = beta.get(t, 0.0) + w
    gamma = math.fsum(alpha.values()) + math.fsum(beta.values())
    if not gamma > 0:
        raise GammaZeroError("weights sum to zero; at least one weight must be positive")
    return WeightScheme(d, alpha, beta, gamma)


def pairwise_weights(d: int) -> WeightScheme:
    """Unit weight on every bivariate marginal."""
    if not isinstance(d, int) or d < 2:
        raise DimensionError(f"pairwise weights need d >= 2, got {d!r}")
    return make_weights(d, {Subset(c): 1.0 for c in itertools.combinations(range(1, d + 1), 2)})


def full_likelihood_weights(d: int) -> WeightScheme:
    """Unit weight on the full joint density; recovers the ordinary likelihood."""
    if not isinstance(d, int) or d < 1:
        raise DimensionError(f"dimension must be a positive integer, got {d!r}")
    return make_weights(d, {Subset(tuple(range(1, d + 1))): 1.0})


def marginal_weights(d: int) -> WeightScheme:
    """Independence likelihood: unit weight on each univariate marginal."""
    if not isinstance(d, int) or d < 1:
        raise DimensionError(f"dimension must be a positive integer, got {d!r}")
    return make_weights(d, {Subset((j,)): 1.0 for j in range(1, d + 1)})


def conditional_weights(d: int) -> WeightScheme:
    """Full-conditional (pseudo-) likelihood: each coordinate given all others."""
    if not isinstance(d, int) or d < 2:
        raise DimensionError(f"conditional weights need d >= 2, got {d!r}")
    everything = set(range(1, d + 1))
    return make_weights(
        d,
        beta_entries={Division(Subset((j,)), Subset(tuple(everything - {j}))): 1.0 for j in sorted(everything)},
    )


PRESETS = {
    "full": full_likelihood_weights,
    "pairwise": pairwise_weights,
    "marginal": marginal_weights,
    "conditional": conditional_weights,
}


def preset_weights(name: str, d: int) -> WeightScheme:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise WeightError(f"unknown weight preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(d)


def subset_count(d: int) -> int:
    return 2**d - 1


def division_count(d: int) -> int:
    return 3**d - 2 ** (d + 1) + 1
