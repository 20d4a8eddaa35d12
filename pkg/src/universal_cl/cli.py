"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 a guarantee check
failed, 3 numerical or convergence failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import batch, harness
from .combinatorics import division_count, enumerate_divisions, enumerate_subsets, subset_count
from .config import DataError, RunConfig, apply_overrides, load_config, resolve
from .errors import (
    ConditioningError,
    ConfigError,
    ConvergenceError,
    DimensionError,
    EvaluationError,
    GridError,
    ParameterError,
    SpaceError,
    UniversalCLError,
)
from .likelihood import split_dataset
from .sequential import SequentialState

EXIT_OK, EXIT_USAGE, EXIT_GUARANTEE, EXIT_NUMERIC = 0, 1, 2, 3

_GAUSS = {"kind": "gaussian", "dimension": 2, "covariance": [[1.0, 0.5], [0.5, 1.0]]}
_FAST = {"restarts": 1}

# Configurations used by ``simulate-guarantee`` when no config file is given.
DEFAULT_EXPERIMENTS = {
    "expectation": {
        "model": _GAUSS, "weights": "pairwise", "optimizer": _FAST,
        "experiment": {"theta_star": [0.0, 0.0], "n": 20, "replicates": 5000, "levels": [0.05]},
    },
    "coverage": {
        "model": _GAUSS, "weights": "pairwise", "optimizer": _FAST,
        "experiment": {"theta_star": [0.0, 0.0], "n": 50, "replicates": 2000, "levels": [0.1], "mode": "both"},
    },
    "type1": {
        "model": _GAUSS, "weights": "pairwise", "optimizer": _FAST, "null_space": {"pins": {0: 0.0}},
        "experiment": {"theta_star": [0.0, 0.5], "n": 50, "replicates": 2000, "levels": [0.05], "mode": "both"},
    },
    "sequential_type1": {
        "model": _GAUSS, "weights": "pairwise", "plugin": {"strategy": "moments"}, "theta_init": [0.0, 0.0],
        "null_space": {"pins": {0: 0.0, 1: 0.0}},
        "experiment": {"theta_star": [0.0, 0.0], "n": 500, "replicates": 2000, "levels": [0.05]},
    },
    "confseq": {
        "model": _GAUSS, "weights": "pairwise", "plugin": {"strategy": "moments"}, "theta_init": [0.0, 0.0],
        "experiment": {"theta_star": [0.3, -0.2], "n": 200, "replicates": 2000, "levels": [0.05]},
    },
    "random_stop": {
        "model": _GAUSS, "weights": "pairwise", "plugin": {"strategy": "moments"}, "theta_init": [0.0, 0.0],
        "null_space": {"pins": {0: 0.0, 1: 0.0}},
        "experiment": {"theta_star": [0.0, 0.0], "n": 200, "replicates": 2000, "levels": [0.05]},
    },
}


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=harness._json_default) + "\n")


def _echo(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "config": cfg.raw, "seed": cfg.seed, "weights": cfg.weights.to_dict()}


def cmd_enumerate(args) -> int:
    d = args.d
    try:
        subsets = enumerate_subsets(d)
    except DimensionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"|S_{d}| = {len(subsets)}  (2^{d} - 1 = {subset_count(d)})")
    divisions = enumerate_divisions(d) if d >= 2 else []
    print(f"|T_{d}| = {len(divisions)}  (3^{d} - 2^{d + 1} + 1 = {division_count(d)})")
    if args.list:
        print("subsets:", " ".join(map(repr, subsets)))
        print("divisions:", " ".join(map(repr, divisions)))
    return EXIT_OK


def cmd_confset(args) -> int:
    cfg = load_config(args.config, args.set)
    out = Path(args.out) if args.out else cfg.output_dir
    data = cfg.dataset()
    shuffle = (cfg.raw.get("data") or {}).get("shuffle_seed")
    split = split_dataset(data, shuffle_seed=shuffle)
    plugins = batch.fit_plugins(cfg.model, cfg.weights, split, cfg.plugin)
    modes = ("split", "swapped") if cfg.mode == "both" else (cfg.mode,)
    summary = {**_echo(cfg, "confset"), "plugins": [p.tolist() for p in plugins], "sets": {}}
    print(f"plug-in estimates: fold0 -> {np.round(plugins[0], 6).tolist()}, fold1 -> {np.round(plugins[1], 6).tolist()}")
    for theta in (cfg.raw.get("theta") or []):
        for mode in modes:
            member, stat = batch.confset_membership(cfg.model, cfg.weights, split, theta, cfg.significance_level, mode, plugins)
            print(f"{mode}: theta={theta} log statistic={stat:.6g} member={member}")
            summary["sets"].setdefault(mode, {}).setdefault("queries", []).append({"theta": theta, "log_statistic": stat, "member": member})
    if cfg.grid is not None:
        for mode in modes:
            result = batch.confset_grid(cfg.model, cfg.weights, split, cfg.grid, cfg.significance_level, mode, plugins)
            path = out / f"confset_{mode}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            result.to_csv(path)
            entry = summary["sets"].setdefault(mode, {})
            entry.update({"grid_csv": str(path), "members": int(result.member.sum()), "points": len(result.points)})
            print(f"{mode}: {int(result.member.sum())} of {len(result.points)} grid points in the set -> {path}")
            if cfg.null_space is not None:
                try:
                    reject = batch.reject_by_emptiness(result, cfg.null_space)
                except GridError as exc:
                    print(f"{mode}: emptiness test skipped: {exc}")
                else:
                    entry["reject_by_emptiness"] = reject
                    print(f"{mode}: reject H0 by emptiness = {reject} (grid-approximate: emptiness on the grid does not prove emptiness of the set)")
    _write_json(out / "confset.json", summary)
    return EXIT_OK


def cmd_test(args) -> int:
    cfg = load_config(args.config, args.set)
    if cfg.null_space is None:
        raise ConfigError(f"{args.config}: the test procedure needs a null_space")
    out = Path(args.out) if args.out else cfg.output_dir
    data = cfg.dataset()
    split = split_dataset(data, shuffle_seed=(cfg.raw.get("data") or {}).get("shuffle_seed"))
    plugins = batch.fit_plugins(cfg.model, cfg.weights, split, cfg.plugin)
    modes = ("split", "swapped") if cfg.mode == "both" else (cfg.mode,)
    summary = {**_echo(cfg, "test"), "decisions": {}}
    for mode in modes:
        fn = batch.split_clrt if mode == "split" else batch.swapped_clrt
        dec = fn(cfg.model, cfg.weights, split, cfg.null_space, cfg.significance_level, plugins, cfg.settings)
        v = float(np.exp(dec.statistic)) if dec.statistic < 700 else float("inf")
        print(f"{mode}: V = {v:.6g} (log V = {dec.statistic:.6g}), threshold 1/alpha = {1 / cfg.significance_level:.6g}, reject = {dec.reject}")
        summary["decisions"][mode] = {
            "log_statistic": dec.statistic, "statistic": v, "reject": dec.reject,
            "theta_hat": [t.tolist() for t in dec.theta_hat], "plugins": [p.tolist() for p in dec.plugins],
            "converged": dec.converged,
        }
    _write_json(out / "test.json", summary)
    return EXIT_OK


def _stream_rows(handle, d: int):
    header_allowed = True
    for lineno, line in enumerate(handle, start=1):
        line = line.strip()
        if not line:
            continue
        cells = line.split(",")
        try:
            row = [float(c) for c in cells]
        except ValueError:
            if header_allowed:
                header_allowed = False
                continue
            raise DataError(f"line {lineno}: non-numeric cell in {line!r}") from None
        header_allowed = False
        if len(row) != d:
            raise DataError(f"line {lineno}: expected {d} values, got {len(row)}")
        yield row


def cmd_sequential(args) -> int:
    cfg = load_config(args.config, args.set)
    out = Path(args.out) if args.out else cfg.output_dir
    theta_init = cfg.theta_init if cfg.theta_init is not None else cfg.model.default_theta()
    state = SequentialState(cfg.model, cfg.weights, theta_init, cfg.null_space, cfg.plugin, cfg.settings, cfg.significance_level)
    if args.input:
        handle = sys.stdin if args.input == "-" else open(args.input)
        rows = _stream_rows(handle, cfg.model.dimension)
    else:
        rows = cfg.dataset(size=cfg.horizon or 100)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "sequential.jsonl"
    with open(report_path, "w") as fh:
        for x in rows:
            state.update(x)
            if state.records:
                line = json.dumps(state.records[-1].__dict__)
            else:
                line = json.dumps({"n": state.n, "log_numerator": state.log_numerator})
            fh.write(line + "\n")
            print(line)
            if cfg.horizon and state.n >= cfg.horizon:
                break
    summary = {**_echo(cfg, "sequential"), "steps": state.n, "report": str(report_path)}
    if cfg.null_space is not None:
        verdict, nu = state.decision(cfg.significance_level)
        p, p_min = state.p_values()
        summary.update({"decision": verdict, "stop_step": nu, "P": p, "P_min": p_min, "logM": state.log_m})
        print(f"# decision={verdict} stop_step={nu} P={p:.6g} P_min={p_min:.6g}", file=sys.stderr)
    _write_json(out / "sequential.json", summary)
    return EXIT_OK


def _experiment_config(cfg: RunConfig, guarantee: str, args) -> harness.ExperimentConfig:
    spec = dict(cfg.raw.get("experiment") or {})
    if args.replicates:
        spec["replicates"] = args.replicates
    if "theta_star" not in spec:
        raise ConfigError("experiment.theta_star is required")
    return harness.ExperimentConfig(
        model=cfg.model,
        theta_star=spec["theta_star"],
        weights=cfg.weights,
        n=int(spec.get("n", cfg.horizon or 50)),
        levels=tuple(spec.get("levels", [cfg.significance_level])),
        replicates=int(spec.get("replicates", 2000)),
        seed=int(spec.get("seed", cfg.seed)),
        guarantee=guarantee,
        null_space=cfg.null_space,
        plugin=cfg.plugin,
        settings=cfg.settings,
        mode=spec.get("mode", "both"),
        theta_init=cfg.theta_init,
        fold=int(spec.get("fold", 0)),
        name=spec.get("name", ""),
    )


def cmd_simulate(args) -> int:
    guarantee = args.guarantee.replace("-", "_")
    if guarantee not in harness.GUARANTEES:
        raise ConfigError(f"unknown guarantee {args.guarantee!r}; choose from {', '.join(harness.GUARANTEES)}")
    if args.config:
        cfg = load_config(args.config, args.set)
    else:
        cfg = resolve(apply_overrides(DEFAULT_EXPERIMENTS[guarantee], args.set), "<default>")
    threads = args.threads or cfg.threads
    exp = _experiment_config(cfg, guarantee, args)
    out = Path(args.out) if args.out else cfg.output_dir
    t0 = time.perf_counter()
    if guarantee == "expectation":
        reports = harness.estimate_expectation_bound(exp, n_jobs=threads, exact=bool((cfg.raw.get("experiment") or {}).get("exact")))
    else:
        reports = harness.run_experiment(exp, n_jobs=threads)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"guarantee_{guarantee}.jsonl", "w") as fh:
        header = {"config": cfg.raw, "experiment": exp.describe(), "seed": exp.seed}
        fh.write(json.dumps(header, default=harness._json_default) + "\n")
        for r in reports:
            fh.write(r.to_json() + "\n")
    print(harness.format_reports(reports))
    print(f"# {len(reports)} checks in {time.perf_counter() - t0:.1f}s; reports -> {out / f'guarantee_{guarantee}.jsonl'}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_GUARANTEE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="universal-cl", description="Universal inference with composite likelihoods.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="count (and optionally list) coordinate subsets and divisions")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--list", action="store_true")
    p.set_defaults(func=cmd_enumerate)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config entry (YAML value)")
        p.add_argument("--out", help="output directory (default: output_dir from the config)")

    p = sub.add_parser("confset", help="universal confidence set on a grid and/or at given points")
    common(p)
    p.set_defaults(func=cmd_confset)

    p = sub.add_parser("test", help="split/swapped composite likelihood ratio test")
    common(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("sequential", help="running test and p-values over a stream of observations")
    common(p)
    p.add_argument("--input", help="CSV file of observations, or - for standard input")
    p.set_defaults(func=cmd_sequential)

    p = sub.add_parser("simulate-guarantee", help="Monte Carlo / exact check of a validity guarantee")
    p.add_argument("guarantee", help=", ".join(harness.GUARANTEES))
    p.add_argument("--config")
    common(p, config_required=False)
    p.add_argument("--replicates", type=int)
    p.add_argument("--threads", type=int, help="worker processes; results do not depend on it")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConvergenceError, EvaluationError, ParameterError, ConditioningError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, SpaceError, GridError, UniversalCLError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
