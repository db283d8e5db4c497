"""Command-line entry point: ``epdice run | sweep | figures``.

Exit status: 0 when every solve converged, 2 when something did not
converge (or a sweep cell failed), 1 on invalid input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import shlex
import sys
import time
from pathlib import Path

import numpy as np

from . import figures as figs
from .analysis import LAST_REPORT_YEAR, SCENARIOS, ScenarioResult, run_scenario, run_sweep
from .calibration import ParameterError, load_params
from .fixed_point import FixedPointOptions
from .optimizer import OptimizeOptions

log = logging.getLogger("epdice")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 1, 2

TRAJECTORY_COLUMNS = ("scenario", "year", "mu", "s", "T_at", "M_industrial", "C_total",
                      "E_stock", "f_t", "relative_price", "RPE", "SCC")


class UsageError(ValueError):
    pass


# --- formatting -----------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    value = float(value)
    if not math.isfinite(value):
        return "inf" if value == math.inf else ""
    return format(value, ".10g")


def _write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def trajectory_rows(res: ScenarioResult):
    tr = res.trajectory
    n = int(np.sum(tr.years <= LAST_REPORT_YEAR))
    for t in range(n):
        yield [res.name, int(tr.years[t]), _fmt(tr.mu[t]), _fmt(tr.s[t]), _fmt(tr.t_at[t]),
               _fmt(tr.industrial_emissions[t]), _fmt(tr.consumption[t]),
               _fmt(tr.nonmarket[t]), _fmt(tr.weights[t]), _fmt(res.relative_price[t]),
               _fmt(res.rpe.total[t]) if res.name != "dice" else "", _fmt(res.scc[t])]


def write_trajectory(res: ScenarioResult, path: Path) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        w.writerows(trajectory_rows(res))
    return path


def write_manifest(out_dir: Path, stem: str, argv, params, outputs, started, flags) -> Path:
    manifest = {
        "command": " ".join(shlex.quote(a) for a in argv),
        "params_hash": params.digest(),
        "calibration_version": params.calibration_version,
        "outputs": [str(p) for p in outputs],
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
        "convergence": flags,
    }
    return _write_json(out_dir / f"{stem}_manifest.json", manifest)


# --- grid specs -----------------------------------------------------------

def _parse_values(text: str) -> list[float]:
    values: list[float] = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            raise UsageError(f"empty value in {text!r}")
        if ":" in item:
            parts = item.split(":")
            if len(parts) != 3:
                raise UsageError(f"range {item!r} must be start:step:stop")
            start, step, stop = (float(p) for p in parts)
            if step <= 0 or stop < start:
                raise UsageError(f"range {item!r} is empty")
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            values += [round(start + i * step, 12) for i in range(count)]
        else:
            values.append(float(item))
    return values


def parse_grid(spec: str) -> list[tuple[str, list[float]]]:
    """``"theta=0.29,0.5,inf beta_mu=-0.01:0.01:0.04"`` -> ordered axes."""
    axes = []
    for token in spec.split():
        name, sep, rest = token.partition("=")
        if not sep or not name:
            raise UsageError(f"grid axis {token!r} must look like name=v1,v2 or name=a:step:b")
        try:
            axes.append((name, _parse_values(rest)))
        except ValueError as exc:
            raise UsageError(f"bad values for {name}: {exc}") from None
    if not axes:
        raise UsageError("empty grid spec")
    names = [n for n, _ in axes]
    if len(set(names)) != len(names):
        raise UsageError("grid axes repeat a parameter")
    return axes


# --- commands -------------------------------------------------------------

def _options(args) -> FixedPointOptions:
    opt = OptimizeOptions(max_iters=args.max_iters, tol=args.tol, fd_step=args.fd_step)
    return FixedPointOptions(tol=args.fp_tol, max_iters=args.fp_max_iters,
                             damping=args.fp_damping, optimizer=opt)


def cmd_run(args, argv) -> int:
    started = time.perf_counter()
    name = args.scenario.lower()
    if name not in SCENARIOS:
        raise UsageError(f"unknown scenario {args.scenario!r}; valid names: {', '.join(SCENARIOS)}")
    params = load_params(args.params)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    res = run_scenario(name, params, _options(args))
    paths = [write_trajectory(res, out / f"{name}_trajectory.csv"),
             _write_json(out / f"{name}_summary.json", _clean(res.summary()))]
    flags = {name: bool(res.converged)}
    paths.append(write_manifest(out, name, argv, params, paths, started, flags))
    if not res.converged:
        print(f"{name}: solver did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _coord_label(value: float) -> str:
    return "inf" if value == math.inf else format(value, "g")


def cmd_sweep(args, argv) -> int:
    started = time.perf_counter()
    axes = parse_grid(args.grid)
    params = load_params(args.params)
    for name, values in axes:       # fail fast on unknown names or invalid values
        for v in values:
            params.replace(**{name: v})
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    grid = run_sweep(axes, params, _options(args), jobs=args.jobs)
    names = [n for n, _ in axes]
    metrics = ("converged", "iterations", "scc_2020", "scc_2050", "scc_2100", "t_2100",
               "peak_t", "net_zero_year", "e_ind_2050", "nonmarket_loss_2100",
               "damage_value_2100")
    paths = []

    cells_path = out / "sweep_cells.csv"
    with cells_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, *metrics, "error"])
        for coord in grid.coordinates():
            cell = grid.cells.get(coord, {})
            row = [_coord_label(c) for c in coord]
            for m in metrics:
                v = cell.get(m)
                row.append(str(v) if isinstance(v, (bool, int)) else _fmt(v))
            w.writerow(row + [grid.errors.get(coord, "")])
    paths.append(cells_path)

    if len(axes) == 2:
        (rname, rvals), (cname, cvals) = axes
        matrix = grid.matrix(args.metric)
        mpath = out / f"sweep_{args.metric}.csv"
        with mpath.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"{rname}\\{cname}", *(_coord_label(c) for c in cvals)])
            for r, row in zip(rvals, matrix):
                w.writerow([_coord_label(r), *(_fmt(v) for v in row)])
        paths.append(mpath)

    summary = {
        "axes": {n: [_coord_label(v) for v in vals] for n, vals in axes},
        "cells": [{**{n: _coord_label(c) for n, c in zip(names, coord)},
                   **grid.cells.get(coord, {}), "error": grid.errors.get(coord)}
                  for coord in grid.coordinates()],
    }
    paths.append(_write_json(out / "sweep_summary.json", _clean(summary)))
    failed = grid.failed()
    flags = {"all_converged": not failed,
             "failed_cells": [[_coord_label(c) for c in coord] for coord in failed]}
    paths.append(write_manifest(out, "sweep", argv, params, paths, started, flags))
    if failed:
        print("failed cells (" + ", ".join(names) + "):", file=sys.stderr)
        for coord in failed:
            reason = grid.errors.get(coord, "not converged")
            print("  " + ", ".join(_coord_label(c) for c in coord) + f": {reason}",
                  file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_figures(args, argv) -> int:
    started = time.perf_counter()
    wanted = figs.FIGURE_SETS if args.scenario_set == "all" else (args.scenario_set,)
    params = load_params(args.params)
    opts = _options(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    needed = set()
    if "fig2" in wanted:
        needed |= {"dice", "rpe", "rpe-ep"}
    if "fig3" in wanted:
        needed |= {"bau", "rpe", "rpe-ep"}
    results = {n: run_scenario(n, params, opts) for n in SCENARIOS if n in needed}
    flags = {n: bool(r.converged) for n, r in results.items()}

    paths: list[Path] = []
    for fig in wanted:
        if fig == "fig2":
            panels = figs.figure2_series(results)
        elif fig == "fig3":
            panels = figs.figure3_series(results)
        else:
            sums = figs.sensitivity_summaries(params, opts)
            flags.update({f"rpe-ep beta_mu={b:g}": bool(s["converged"])
                          for b, s in sums.items()})
            panels = figs.figure4_series(sums)
        paths += figs.write_panels(panels, fig, out)
        if not args.no_render:
            paths.append(figs.render(panels, fig, out))
    paths.append(write_manifest(out, "figures", argv, params, paths, started, flags))
    if not all(flags.values()):
        print("some runs did not converge: "
              + ", ".join(k for k, v in flags.items() if not v), file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", help="config file overriding the bundled calibration")
    common.add_argument("--out-dir", default="out", help="output directory (default: out)")
    common.add_argument("--max-iters", type=int, default=3000)
    common.add_argument("--tol", type=float, default=1e-6)
    common.add_argument("--fd-step", type=float, default=1e-6)
    common.add_argument("--fp-tol", type=float, default=1e-4)
    common.add_argument("--fp-max-iters", type=int, default=50)
    common.add_argument("--fp-damping", type=float, default=0.0)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="epdice",
                                description="DICE with endogenous preferences for non-market goods")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="solve one scenario")
    run.add_argument("scenario", help=f"one of {', '.join(SCENARIOS)}")

    sweep = sub.add_parser("sweep", parents=[common], help="grid of fixed-point solves")
    sweep.add_argument("--grid", required=True,
                       help='e.g. "theta=0.29,0.5,1,1.3,2,inf beta_mu=-0.01:0.01:0.04"')
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.add_argument("--metric", default="scc_2100", help="cell value for the matrix CSV")

    fig = sub.add_parser("figures", parents=[common], help="plot-ready series and PNGs")
    fig.add_argument("--scenario-set", default="all", choices=(*figs.FIGURE_SETS, "all"))
    fig.add_argument("--no-render", action="store_true", help="write CSVs only")
    return p


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "figures": cmd_figures}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args, ["epdice", *argv])
    except (UsageError, ParameterError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
