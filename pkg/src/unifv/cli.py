"""Experiment driver.

Subcommands:
  run <config> [--out DIR]   execute a recovery experiment and emit CSV tables
  check [--seed S]           run the numerical property suites
  table <history.csv>...     summarize stored histories

Config files are flat ``key=value`` lines with ``#`` comments.  A preset
name alone yields the full built-in configuration; any other key overrides
one field of it.  Exit codes: 0 success, 1 config error, 2 solver error,
3 property-suite failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from . import checks
from .ader import StepControls
from .core import Grid
from .models import ExperimentPreset, make_preset
from .optimize import OptimConfig, OptimHistory
from .optimize import run as optimize_run
from .reference import ref_run

PRESET_NAMES = ("burgers_step", "burgers_sine", "swe_bottom")
SCHEMES = ("unified", "reference", "both")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Validated experiment configuration."""

    preset: str
    scheme: str = "both"
    cells: int | None = None
    x_min: float | None = None
    x_max: float | None = None
    t_final: float | None = None
    cfl: float | None = None
    lambda_ip: float | None = None
    max_iters: int | None = None
    stop_tol: float = 0.0
    epsilon: float | None = None
    seed: int = 0
    out_dir: str = "."

    def build_preset(self) -> ExperimentPreset:
        base = make_preset(self.preset)
        grid = Grid(self.x_min if self.x_min is not None else base.grid.x_min,
                    self.x_max if self.x_max is not None else base.grid.x_max,
                    self.cells if self.cells is not None else base.grid.cells)
        overrides = {"grid": grid}
        if self.t_final is not None:
            overrides["t_final"] = self.t_final
        if self.cfl is not None:
            overrides["c_cfl"] = self.cfl
        if self.lambda_ip is not None:
            overrides["lambda_ip"] = self.lambda_ip
        if self.max_iters is not None:
            overrides["iterations"] = self.max_iters
        if self.epsilon is not None:
            overrides["epsilon"] = self.epsilon
        return replace(base, **overrides)


def _parse_value(key: str, raw: str, lineno: int):
    def fail(msg):
        raise ConfigError(f"line {lineno}: {msg}")

    try:
        if key == "preset":
            if raw not in PRESET_NAMES:
                fail(f"unknown preset {raw!r} (choose from {', '.join(PRESET_NAMES)})")
            return raw
        if key == "scheme":
            if raw not in SCHEMES:
                fail(f"unknown scheme {raw!r} (choose from {', '.join(SCHEMES)})")
            return raw
        if key in ("cells", "max_iters", "seed"):
            value = int(raw)
        elif key == "out_dir":
            return raw
        else:
            value = float(raw)
    except ValueError:
        fail(f"cannot parse value {raw!r} for key {key!r}")

    if key == "cells" and value < 3:
        fail("cells must be at least 3")
    if key == "max_iters" and value < 1:
        fail("max_iters must be at least 1")
    if key == "cfl" and not 0.0 < value <= 1.0:
        fail("cfl must lie in (0, 1]")
    if key == "t_final" and value <= 0.0:
        fail("t_final must be positive")
    if key == "stop_tol" and value < 0.0:
        fail("stop_tol must be non-negative")
    if key == "epsilon" and value <= 0.0:
        fail("epsilon must be positive")
    return value


def parse_config(text: str) -> RunConfig:
    """Parse the line-oriented key=value format with per-line diagnostics."""
    keys = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key=value, got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in RunConfig.__dataclass_fields__:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        keys[key] = _parse_value(key, raw, lineno)
    if "preset" not in keys:
        raise ConfigError("config must name a preset")
    cfg = RunConfig(**keys)
    if cfg.epsilon is not None and cfg.preset != "swe_bottom":
        raise ConfigError("epsilon only applies to the swe_bottom preset")
    if (cfg.x_min is not None or cfg.x_max is not None):
        lo = cfg.x_min if cfg.x_min is not None else make_preset(cfg.preset).grid.x_min
        hi = cfg.x_max if cfg.x_max is not None else make_preset(cfg.preset).grid.x_max
        if not hi > lo:
            raise ConfigError("x_max must exceed x_min")
    return cfg


def _fmt(x) -> str:
    return repr(float(x))


def _write_history(path, runs: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scheme", "iter", "J", "error"])
        for scheme, history in runs.items():
            for rec in history.records:
                writer.writerow([scheme, rec.k, _fmt(rec.cost), _fmt(rec.error)])


def _write_profile(path, config: RunConfig, preset: ExperimentPreset,
                   runs: dict, reference_profile) -> None:
    model = preset.unified_model()
    grid = preset.grid
    x = grid.centers
    columns = [("x", x)]
    unified = runs.get("unified")
    if unified is not None and unified.final_field is not None:
        names = _component_names(preset)
        final = unified.final_field.interior
        for j, name in enumerate(names):
            columns.append((f"{name}_T", final[:, j]))
        columns.append(("recovered_unified", _recovered_profile(preset, model, unified)))
    if "reference" in runs:
        columns.append(("recovered_reference",
                        _recovered_profile(preset, model, runs["reference"])))
    columns.append(("target", _target_profile(preset, model, reference_profile)))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([name for name, _ in columns])
        for i in range(x.size):
            writer.writerow([_fmt(col[i]) for _, col in columns])


def _component_names(preset: ExperimentPreset):
    if preset.name.startswith("burgers"):
        return ["q", "p"]
    return ["h", "q", "b", "h_adj", "q_adj"]


def _recovered_profile(preset: ExperimentPreset, model, history: OptimHistory):
    """The quantity each experiment recovers: initial state or free surface."""
    if preset.name.startswith("burgers"):
        return history.final_estimate
    traj = history.final_trajectory
    final = traj.state_at(traj.n_levels - 1)
    return model.free_surface(final[:, 0], final[:, 2])


def _target_profile(preset: ExperimentPreset, model, reference_profile):
    if preset.name.startswith("burgers"):
        return reference_profile
    from .models import swe_target
    return swe_target(preset.grid.centers, preset.t_final)


def run_experiment(config: RunConfig, out_dir: str | None = None) -> int:
    """Execute the configured schemes and write history/profile/manifest files."""
    import os

    preset = config.build_preset()
    out = out_dir or config.out_dir
    os.makedirs(out, exist_ok=True)
    optim = OptimConfig(lambda_ip=preset.lambda_ip, max_iters=preset.iterations,
                        stop_tol=config.stop_tol, error_metric=preset.error_metric)
    meas, reference = preset.make_measurement()
    runs: dict = {}
    started = time.perf_counter()
    status = 0
    try:
        if config.scheme in ("unified", "both"):
            runs["unified"] = optimize_run(
                preset.unified_model(), meas, preset.grid, preset.t_final,
                StepControls(c_cfl=preset.c_cfl), optim,
                preset.initial_guess(), reference=reference)
        if config.scheme in ("reference", "both"):
            runs["reference"] = ref_run(preset, optim, meas=meas, reference=reference)
    except Exception as exc:  # noqa: BLE001 - flush partial output, report status
        print(f"solver error: {exc}", file=sys.stderr)
        status = 2
    wall = time.perf_counter() - started

    _write_history(os.path.join(out, "history.csv"), runs)
    if status == 0 and runs:
        _write_profile(os.path.join(out, "profile_final.csv"), config, preset,
                       runs, reference)
    _write_manifest(os.path.join(out, "run_manifest.txt"), config, preset, runs, wall)
    return status


def _write_manifest(path, config: RunConfig, preset: ExperimentPreset,
                    runs: dict, wall: float) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# resolved configuration\n")
        fh.write(f"preset={preset.name}\nscheme={config.scheme}\n")
        fh.write(f"cells={preset.grid.cells}\nx_min={preset.grid.x_min}\n")
        fh.write(f"x_max={preset.grid.x_max}\nt_final={preset.t_final}\n")
        fh.write(f"cfl={preset.c_cfl}\nlambda_ip={preset.lambda_ip}\n")
        fh.write(f"max_iters={preset.iterations}\nstop_tol={config.stop_tol}\n")
        if preset.epsilon is not None:
            fh.write(f"epsilon={preset.epsilon}\n")
        for scheme, history in runs.items():
            dts = ",".join(_fmt(r.dt) for r in history.records)
            fh.write(f"dt_per_iteration[{scheme}]={dts}\n")
        fh.write(f"wall_clock_seconds={wall:.3f}\n")


def _cmd_run(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            config = parse_config(fh.read())
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return run_experiment(config, out_dir=args.out)


def _cmd_check(args) -> int:
    results = checks.run_all(seed=args.seed)
    for res in results:
        print(res.line())
    return 0 if all(r.passed for r in results) else 3


def _cmd_table(args) -> int:
    rows = []
    for path in args.histories:
        try:
            with open(path, encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                final = {}
                for row in reader:
                    final[row["scheme"]] = row
        except OSError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 1
        for scheme, row in final.items():
            rows.append((path, scheme, row["iter"], row["J"], row["error"]))
    width = max((len(r[0]) for r in rows), default=10)
    print(f"{'history':<{width}}  {'scheme':<10} {'iters':>5} {'J':>13} {'error':>13}")
    for path, scheme, iters, cost, err in rows:
        print(f"{path:<{width}}  {scheme:<10} {iters:>5} "
              f"{float(cost):>13.6e} {float(err):>13.6e}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="unifv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a recovery experiment")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.set_defaults(fn=_cmd_run)

    p_check = sub.add_parser("check", help="run the numerical property suites")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.set_defaults(fn=_cmd_check)

    p_table = sub.add_parser("table", help="summarize stored histories")
    p_table.add_argument("histories", nargs="+")
    p_table.set_defaults(fn=_cmd_table)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
