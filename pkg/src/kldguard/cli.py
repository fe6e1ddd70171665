"""Experiment runner: sweep a scenario parameter and tabulate the results.

A JSON spec file names the base scenario, the sweep axis, the engines to run,
and the output destination.  Unknown keys are rejected.  One output row per
grid point, ordered by sweep value, with every KLD in nats.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
import time

import numpy as np

from .config import (
    DEFAULT_OUTCOME_CAP,
    ConfigError,
    MaliciousPmfPair,
    SystemConfig,
    uniform_pair,
    validate_config,
)
from .model import build_coefficients
from .pgd import PgdSettings, pgd_multistart
from .simulate import empirical_kld
from .solver import SolverSettings, solve_relaxed

ENGINES = ("guarantee", "pgd", "mc")
SWEEP_AXES = ("compromise_prob", "dsa_success_prob", "prefix_attack_pair")

_CONFIG_KEYS = {f.name for f in dataclasses.fields(SystemConfig)}
_SPEC_KEYS = {"config", "sweep", "engines", "output", "seed", "epsilon",
              "pgd_starts", "mc_trials", "outcome_cap"}


class SpecError(ValueError):
    """Raised for malformed experiment specs."""


@dataclasses.dataclass
class ExperimentSpec:
    base: SystemConfig
    sweep_axis: str
    sweep_values: list
    engines: tuple = ("guarantee", "pgd")
    out_path: str = "results.csv"
    out_format: str = "csv"      # "csv" or "json-lines"
    seed: int = 0
    epsilon: float = 1e-9
    pgd_starts: int = 20
    mc_trials: int = 1_000_000
    outcome_cap: int = DEFAULT_OUTCOME_CAP

    def grid_configs(self) -> list:
        configs = []
        for value in self.sweep_values:
            kw = dataclasses.asdict(self.base)
            if self.sweep_axis == "prefix_attack_pair":
                kw["honest_prefix"], kw["attack_start"] = int(value[0]), int(value[1])
            else:
                kw[self.sweep_axis] = float(value)
            configs.append(validate_config(SystemConfig(**kw)))
        return configs


def _require_keys(mapping: dict, allowed: set, where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise SpecError(f"unknown keys in {where}: {sorted(unknown)}")


def parse_spec(data: dict) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise SpecError("spec must be a JSON object")
    _require_keys(data, _SPEC_KEYS, "spec")
    for key in ("config", "sweep"):
        if key not in data:
            raise SpecError(f"spec is missing required key {key!r}")

    cfg_data = data["config"]
    _require_keys(cfg_data, _CONFIG_KEYS, "config")
    missing = _CONFIG_KEYS - set(cfg_data)
    if missing:
        raise SpecError(f"config is missing keys: {sorted(missing)}")
    base = SystemConfig(**cfg_data)

    sweep = data["sweep"]
    _require_keys(sweep, {"axis", "values"}, "sweep")
    axis = sweep.get("axis")
    if axis not in SWEEP_AXES:
        raise SpecError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    values = sweep.get("values")
    if not isinstance(values, list) or not values:
        raise SpecError("sweep values must be a non-empty list")

    engines = tuple(data.get("engines", ["guarantee", "pgd"]))
    if not engines:
        raise SpecError("engine selection is empty")
    for e in engines:
        if e not in ENGINES:
            raise SpecError(f"unknown engine {e!r}; choose from {ENGINES}")

    output = data.get("output", {})
    _require_keys(output, {"path", "format"}, "output")
    out_format = output.get("format", "csv")
    if out_format not in ("csv", "json-lines"):
        raise SpecError("output format must be 'csv' or 'json-lines'")

    return ExperimentSpec(
        base=base,
        sweep_axis=axis,
        sweep_values=values,
        engines=engines,
        out_path=output.get("path", "results.csv"),
        out_format=out_format,
        seed=int(data.get("seed", 0)),
        epsilon=float(data.get("epsilon", 1e-9)),
        pgd_starts=int(data.get("pgd_starts", 20)),
        mc_trials=int(data.get("mc_trials", 1_000_000)),
        outcome_cap=int(data.get("outcome_cap", DEFAULT_OUTCOME_CAP)),
    )


def load_spec(path: str) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec(json.load(fh))


def serialize_spec(spec: ExperimentSpec) -> dict:
    cfg = dataclasses.asdict(spec.base)
    cfg["honest_pmf_h1"] = list(map(float, cfg["honest_pmf_h1"]))
    cfg["honest_pmf_h0"] = list(map(float, cfg["honest_pmf_h0"]))
    return {
        "config": cfg,
        "sweep": {"axis": spec.sweep_axis, "values": spec.sweep_values},
        "engines": list(spec.engines),
        "output": {"path": spec.out_path, "format": spec.out_format},
        "seed": spec.seed,
        "epsilon": spec.epsilon,
        "pgd_starts": spec.pgd_starts,
        "mc_trials": spec.mc_trials,
        "outcome_cap": spec.outcome_cap,
    }


def _format_sweep_value(axis: str, value) -> str:
    if axis == "prefix_attack_pair":
        return f"{int(value[0])}/{int(value[1])}"
    return _sig12(float(value))


def _sig12(x: float) -> str:
    return f"{x:.12g}"


def run_experiment(spec: ExperimentSpec, keep_going: bool = False) -> list:
    """Execute the sweep; returns a list of row dicts ordered by sweep value."""
    rows = []
    failures = []
    try:
        configs = spec.grid_configs()
    except ConfigError as exc:
        raise SpecError(f"invalid grid point: {exc}") from exc

    for point_index, (value, cfg) in enumerate(zip(spec.sweep_values, configs)):
        try:
            rows.append(_run_point(spec, value, cfg))
        except Exception as exc:  # noqa: BLE001 - per-point diagnostics
            if not keep_going:
                raise
            failures.append((point_index, str(exc)))
    for idx, msg in failures:
        print(f"grid point {idx} failed: {msg}", file=sys.stderr)
    if failures and not rows:
        raise RuntimeError("every grid point failed")
    return rows


def _run_point(spec: ExperimentSpec, value, cfg: SystemConfig) -> dict:
    t0 = time.perf_counter()
    tables = build_coefficients(cfg, outcome_cap=spec.outcome_cap)
    row = {
        "sweep_axis": spec.sweep_axis,
        "sweep_value": _format_sweep_value(spec.sweep_axis, value),
        "unit": "nats",
    }
    guarantee = None
    pgd_min = None
    if "guarantee" in spec.engines:
        result = solve_relaxed(tables, SolverSettings(epsilon=spec.epsilon))
        guarantee = result.value
        row["guarantee_nats"] = _sig12(result.value)
        row["cd_iterations"] = str(result.iterations)
        row["cd_converged"] = str(result.converged).lower()
    if "pgd" in spec.engines:
        result = pgd_multistart(tables, PgdSettings(num_starts=spec.pgd_starts,
                                                    seed=spec.seed))
        pgd_min = result.value
        row["pgd_min_nats"] = _sig12(result.value)
    if guarantee is not None and pgd_min is not None:
        row["gap_nats"] = _sig12(pgd_min - guarantee)
    if "mc" in spec.engines:
        est = empirical_kld(cfg, tables, uniform_pair(cfg.alphabet_size),
                            spec.mc_trials, spec.seed)
        row["mc_kld_nats"] = _sig12(est.estimate)
        row["mc_se_nats"] = _sig12(est.std_error)
    row["wall_time_s"] = _sig12(time.perf_counter() - t0)
    return row


def emit_results(rows: list, path: str, out_format: str) -> None:
    """Write the result table; header row always present, 12 significant digits."""
    if not rows:
        raise ValueError("nothing to write: empty result table")
    if out_format == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
        payload = buf.getvalue()
    elif out_format == "json-lines":
        header = json.dumps({"columns": list(rows[0].keys())})
        lines = [header] + [json.dumps(r) for r in rows]
        payload = "\n".join(lines) + "\n"
    else:
        raise ValueError(f"unknown output format {out_format!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(payload)


def read_results(path: str) -> list:
    """Round-trip reader for either output format."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        lines = [json.loads(line) for line in text.splitlines() if line.strip()]
        return lines[1:]
    reader = csv.DictReader(io.StringIO(text))
    return list(reader)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kldguard",
        description="Worst-case detection-performance guarantees for a "
                    "ledger-secured sensor network under joint attacks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment sweep from a JSON spec")
    run.add_argument("spec", help="path to the experiment spec file")
    run.add_argument("--engines", help="comma-separated subset of guarantee,pgd,mc")
    run.add_argument("--out", help="output path (overrides spec)")
    run.add_argument("--format", choices=["csv", "json-lines"], dest="out_format")
    run.add_argument("--seed", type=int)
    run.add_argument("--epsilon", type=float)
    run.add_argument("--starts", type=int, help="PGD multistart count")
    run.add_argument("--cap", type=int, help="outcome-space size cap override")
    run.add_argument("--keep-going", action="store_true",
                     help="continue past failing grid points")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args.spec)
    except (OSError, json.JSONDecodeError, SpecError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.engines:
        engines = tuple(e.strip() for e in args.engines.split(",") if e.strip())
        if not engines or any(e not in ENGINES for e in engines):
            print(f"error: bad engine selection {args.engines!r}", file=sys.stderr)
            return 2
        spec.engines = engines
    if args.out:
        spec.out_path = args.out
    if args.out_format:
        spec.out_format = args.out_format
    if args.seed is not None:
        spec.seed = args.seed
    if args.epsilon is not None:
        spec.epsilon = args.epsilon
    if args.starts is not None:
        spec.pgd_starts = args.starts
    if args.cap is not None:
        spec.outcome_cap = args.cap

    try:
        rows = run_experiment(spec, keep_going=args.keep_going)
        emit_results(rows, spec.out_path, spec.out_format)
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(rows)} rows to {spec.out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
