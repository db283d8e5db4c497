"""Plot-ready series for the baseline and sensitivity figures, plus PNG rendering.

Every panel is a tidy long-format table with columns
``panel, scenario, x, value`` so any plotting tool can redraw it.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .analysis import LAST_REPORT_YEAR, ScenarioResult, run_scenario
from .calibration import ModelParams
from .fixed_point import FixedPointOptions

FIGURE_SETS = ("fig2", "fig3", "fig4")
SENSITIVITY_BETAS = (-0.01, 0.0, 0.01, 0.02, 0.03, 0.04)

STYLE = {
    "dice": dict(color="tab:blue", linestyle="--", label="DICE"),
    "rpe": dict(color="tab:green", linestyle="-", label="RPE"),
    "rpe-ep": dict(color="tab:red", linestyle=":", label="RPE-EP"),
    "bau": dict(color="0.3", linestyle="-.", label="BAU"),
}

PANELS = {
    "fig2": [("a", "Atmospheric temperature (C)"),
             ("b", "Industrial emissions (GtCO2/yr)"),
             ("c", "Social cost of carbon ($/tCO2)"),
             ("d", "Relative price effect (1/yr)")],
    "fig3": [("a", "Remaining non-market stock (share)"),
             ("b", "Non-market damage value (trillion $)")],
    "fig4": [("a", "SCC 2020 ($/tCO2)"),
             ("b", "SCC 2100 ($/tCO2)"),
             ("c", "Temperature 2100 (C)"),
             ("d", "Peak temperature (C)")],
}


def _window(res: ScenarioResult):
    tr = res.trajectory
    return tr.years <= LAST_REPORT_YEAR


def _rows(panel, scenario, xs, values):
    return [(panel, scenario, int(x) if float(x).is_integer() else float(x), float(v))
            for x, v in zip(xs, values)]


def figure2_series(results: dict[str, ScenarioResult]) -> dict[str, list]:
    panels = {p: [] for p, _ in PANELS["fig2"]}
    for name in ("dice", "rpe", "rpe-ep"):
        res = results[name]
        tr, win = res.trajectory, _window(res)
        years = tr.years[win]
        panels["a"] += _rows("a", name, years, tr.t_at[win])
        panels["b"] += _rows("b", name, years, tr.industrial_emissions[win])
        panels["c"] += _rows("c", name, res.scc_years, res.scc)
        if name != "dice":   # single-good run has no relative price
            panels["d"] += _rows("d", name, years, res.rpe.total[: win.sum()])
    return panels


def figure3_series(results: dict[str, ScenarioResult]) -> dict[str, list]:
    panels = {p: [] for p, _ in PANELS["fig3"]}
    for name in ("bau", "rpe", "rpe-ep"):
        res = results[name]
        tr, win = res.trajectory, _window(res)
        years = tr.years[win]
        e0 = res.params.damages.e0
        panels["a"] += _rows("a", name, years, tr.nonmarket[win] / e0)
        panels["b"] += _rows("b", name, years, res.damage_value[win])
    return panels


def figure4_series(summaries: dict[float, dict]) -> dict[str, list]:
    betas = sorted(summaries)
    metric = {"a": "scc_2020", "b": "scc_2100", "c": "t_2100", "d": "peak_t"}
    return {p: _rows(p, "rpe-ep", betas, [summaries[b][m] for b in betas])
            for p, m in metric.items()}


def sensitivity_summaries(params: ModelParams, opts: FixedPointOptions | None = None,
                          betas=SENSITIVITY_BETAS) -> dict[float, dict]:
    return {b: run_scenario("rpe-ep", params.replace(beta_mu=b), opts).summary()
            for b in betas}


def write_panels(panels: dict[str, list], figure: str, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for panel, rows in panels.items():
        path = out_dir / f"{figure}_{panel}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["panel", "scenario", "x", "value"])
            for p, s, x, v in rows:
                w.writerow([p, s, x, format(v, ".10g")])
        paths.append(path)
    return paths


def render(panels: dict[str, list], figure: str, out_dir: Path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    spec = PANELS[figure]
    ncols = 2
    nrows = int(np.ceil(len(spec) / ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(10, 3.6 * nrows), squeeze=False)
    for ax, (panel, ylabel) in zip(axes.flat, spec):
        rows = panels[panel]
        for scenario in dict.fromkeys(r[1] for r in rows):
            xs = [r[2] for r in rows if r[1] == scenario]
            ys = [r[3] for r in rows if r[1] == scenario]
            style = STYLE.get(scenario, {})
            marker = "o" if figure == "fig4" else None
            ax.plot(xs, ys, marker=marker, **style)
        ax.set_title(f"({panel})", loc="left", fontsize=10)
        ax.set_ylabel(ylabel, fontsize=9)
        ax.set_xlabel("preference response" if figure == "fig4" else "year", fontsize=9)
        ax.grid(alpha=0.3)
        ax.legend(frameon=False, fontsize=8)
    for ax in list(axes.flat)[len(spec):]:
        ax.set_visible(False)
    fig.tight_layout()
    path = out_dir / f"{figure}.png"
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
