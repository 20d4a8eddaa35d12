"""YAML run configuration and CSV dataset I/O.

Parameter indices in ``null_space.pins`` are 0-based; subset and division
coordinates in explicit weight schemes are 1-based.
"""
from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .batch import GridSpec
from .combinatorics import PRESETS, WeightScheme, preset_weights
from .errors import ConfigError, UniversalCLError
from .estimation import OptimizerSettings, Plugin
from .models import CompositeModel, GaussianModel, ParamSpace, binary_loglinear, bivariate_bernoulli

PROCEDURES = ("confset", "test", "sequential", "simulate-guarantee")
MODEL_KINDS = ("gaussian", "bivariate_bernoulli", "binary_loglinear")


class DataError(ConfigError):
    pass


def load_dataset(path) -> np.ndarray:
    """Read a CSV file with one observation per row.

    A first row that does not parse as numbers is treated as a header.  Row
    order is preserved.
    """
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values = [float(c) for c in row]
            except ValueError:
                if not rows and lineno == 1:
                    continue
                raise DataError(f"{path}: row {lineno}: non-numeric cell in {row}") from None
            if rows and len(values) != len(rows[0]):
                raise DataError(f"{path}: row {lineno}: expected {len(rows[0])} columns, got {len(values)}")
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}: row {lineno}: non-finite value")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no observations")
    return np.array(rows, dtype=float)


def save_dataset(path, data, header=None) -> None:
    data = np.asarray(data, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(header)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])


def build_model(spec) -> CompositeModel:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("model needs a 'kind'")
    kind = spec["kind"]
    if kind == "gaussian":
        d = int(spec.get("dimension", 2))
        return GaussianModel(d, spec.get("covariance"))
    if kind == "bivariate_bernoulli":
        return bivariate_bernoulli()
    if kind == "binary_loglinear":
        return binary_loglinear(int(spec.get("dimension", 3)))
    raise ConfigError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")


def build_weights(spec, d: int) -> WeightScheme:
    if isinstance(spec, str):
        if spec not in PRESETS:
            raise ConfigError(f"unknown weight preset {spec!r}; choose from {sorted(PRESETS)}")
        return preset_weights(spec, d)
    if isinstance(spec, dict):
        return WeightScheme.from_dict({"dimension": d, **spec})
    raise ConfigError("weights must be a preset name or a mapping with 'alpha'/'beta' lists")


def build_space(spec, model: CompositeModel) -> ParamSpace:
    base = model.space
    if spec is None:
        return base
    lower = list(base.lower)
    upper = list(base.upper)
    for key, target in (("lower", lower), ("upper", upper)):
        for j, v in enumerate(spec.get(key) or []):
            if v is not None:
                target[j] = float(v)
    return ParamSpace(lower, upper, {int(k): float(v) for k, v in (spec.get("pins") or {}).items()})


def build_settings(spec) -> OptimizerSettings:
    spec = dict(spec or {})
    allowed = set(OptimizerSettings.__dataclass_fields__)
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigError(f"unknown optimizer settings {sorted(unknown)}")
    return OptimizerSettings(**spec)


def build_plugin(spec, settings: OptimizerSettings) -> Plugin:
    spec = dict(spec or {})
    return Plugin(spec.get("strategy", "mcle"), spec.get("value"), int(spec.get("refit_every", 1)), settings)


def build_grid(spec) -> GridSpec | None:
    if spec is None:
        return None
    return GridSpec(tuple(tuple(axis) for axis in spec))


def _set_path(tree: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted!r} descends into a non-mapping")
    node[keys[-1]] = value


def apply_overrides(tree: dict, overrides) -> dict:
    """Apply ``key.path=value`` strings; values are parsed as YAML."""
    tree = copy.deepcopy(tree)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        _set_path(tree, key.strip(), yaml.safe_load(raw))
    return tree


def _line_of(root, path) -> int | None:
    node = root
    for key in path:
        if node is None:
            return None
        if isinstance(node, yaml.MappingNode):
            match = [v for k, v in node.value if k.value == str(key)]
            if not match:
                return node.start_mark.line + 1
            node = match[0]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
    return node.start_mark.line + 1 if node is not None else None


@dataclass
class RunConfig:
    """Resolved configuration for one CLI run; ``raw`` is echoed into artifacts."""

    raw: dict
    model: CompositeModel
    weights: WeightScheme
    settings: OptimizerSettings
    plugin: Plugin
    significance_level: float = 0.05
    mode: str = "split"
    grid: GridSpec | None = None
    null_space: ParamSpace | None = None
    theta_init: tuple | None = None
    horizon: int | None = None
    seed: int = 0
    threads: int = 1
    output_dir: Path = field(default_factory=lambda: Path("results"))
    source: str = ""

    def dataset(self, size: int | None = None) -> np.ndarray:
        """Observations from the configured file or simulation."""
        data_spec = self.raw.get("data") or {}
        kind = data_spec.get("source", "simulate")
        if kind == "file":
            if "path" not in data_spec:
                raise ConfigError("data.source=file needs data.path")
            path = Path(data_spec["path"])
            if not path.is_absolute() and self.source:
                path = Path(self.source).parent / path
            if not path.exists():
                raise ConfigError(f"data file {path} does not exist")
            data = load_dataset(path)
            if data.shape[1] != self.model.dimension:
                raise DataError(f"{path}: {data.shape[1]} columns but the model has d={self.model.dimension}")
            return data
        if kind == "simulate":
            if "theta_star" not in data_spec:
                raise ConfigError("data.source=simulate needs data.theta_star")
            count = size or int(data_spec.get("size", 100))
            return self.model.sample(data_spec["theta_star"], count, int(data_spec.get("seed", self.seed)))
        raise ConfigError(f"unknown data source {kind!r}")


def resolve(tree: dict, source: str = "", root_node=None) -> RunConfig:
    """Turn a parsed config tree into a :class:`RunConfig`."""
    section = "model"
    try:
        model = build_model(tree.get("model"))
        section = "weights"
        weights = build_weights(tree.get("weights", "pairwise"), model.dimension)
        section = "optimizer"
        settings = build_settings(tree.get("optimizer"))
        section = "plugin"
        plugin = build_plugin(tree.get("plugin"), settings)
        section = "significance_level"
        level = float(tree.get("significance_level", 0.05))
        if not 0 < level < 1:
            raise ConfigError(f"significance_level must lie in (0, 1), got {level}")
        section = "mode"
        mode = tree.get("mode", "split")
        if mode not in ("split", "swapped", "both"):
            raise ConfigError(f"mode must be split, swapped or both, got {mode!r}")
        section = "grid"
        grid = build_grid(tree.get("grid"))
        section = "null_space"
        null_space = build_space(tree["null_space"], model) if tree.get("null_space") is not None else None
        section = "theta_init"
        theta_init = tuple(float(v) for v in tree["theta_init"]) if tree.get("theta_init") is not None else None
        section = "horizon"
        horizon = int(tree["horizon"]) if tree.get("horizon") is not None else None
    except (UniversalCLError, ValueError, TypeError, KeyError) as exc:
        line = _line_of(root_node, [section]) if root_node is not None else None
        where = f"{source}:{line}: " if line else (f"{source}: " if source else "")
        raise ConfigError(f"{where}invalid '{section}': {exc}") from exc
    return RunConfig(
        raw=tree,
        model=model,
        weights=weights,
        settings=settings,
        plugin=plugin,
        significance_level=level,
        mode=mode,
        grid=grid,
        null_space=null_space,
        theta_init=theta_init,
        horizon=horizon,
        seed=int(tree.get("seed", 0)),
        threads=int(tree.get("threads", 1)),
        output_dir=Path(tree.get("output_dir", "results")),
        source=source,
    )


def load_config(path, overrides=None) -> RunConfig:
    text = Path(path).read_text()
    try:
        root = yaml.compose(text)
        tree = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark else str(path)
        raise ConfigError(f"{where}: cannot parse config: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    tree = apply_overrides(tree, overrides)
    return resolve(tree, str(path), root)
