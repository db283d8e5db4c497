"""Headline quantities from optimised runs: SCC, non-market damage values, sweeps."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calibration import ModelParams
from .fixed_point import FixedPointOptions, FixedPointReport, solve_endogenous
from .optimizer import (ControlPath, OptimizationReport, Trajectory, initial_controls,
                        optimize, simulate, welfare, welfare_and_gradient)
from .welfare import (RPESeries, WeightPath, constant_weights, relative_price,
                      rpe_series, weight_path)

log = logging.getLogger(__name__)

SCENARIOS = ("dice", "bau", "rpe", "rpe-ep")
REPORT_YEARS = (2020, 2050, 2100)
LAST_REPORT_YEAR = 2100


class NumericalError(ArithmeticError):
    pass


def scc(controls: ControlPath, weights, params: ModelParams, year: int, *,
        method: str = "fd", emission_pulse: float = 1e-3,
        consumption_pulse: float = 1e-3, damage_coef: float | None = None) -> float:
    """Social cost of carbon in model $/tCO2 for the period starting in ``year``.

    The finite-difference route perturbs that period's industrial emissions
    by ``emission_pulse`` GtCO2/yr and its consumption by
    ``consumption_pulse`` trillion $/yr (both central differences), holding
    controls and weights fixed. ``method="adjoint"`` reads the same ratio off
    the reverse sweep.
    """
    if not (emission_pulse > 0.0 and consumption_pulse > 0.0):
        raise ValueError("pulse sizes must be positive")
    years = params.paths.years
    hits = np.flatnonzero(years == year)
    if len(hits) == 0:
        raise KeyError(f"year {year} is not on the model grid")
    t = int(hits[0])
    if method == "adjoint":
        _, g = welfare_and_gradient(controls, weights, params, damage_coef=damage_coef)
        d_m, d_c = g.emissions[t], g.consumption[t]
    else:
        n = params.horizon

        def slope(kind, size):
            pulse = np.zeros(n)
            pulse[t] = size
            kw = {kind: pulse, "damage_coef": damage_coef}
            up = welfare(controls, weights, params, **kw)
            pulse[t] = -size
            dn = welfare(controls, weights, params, **kw)
            return (up - dn) / (2.0 * size)

        d_m = slope("emission_pulse", emission_pulse)
        d_c = slope("consumption_pulse", consumption_pulse)
    value = -1000.0 * d_m / d_c
    if not math.isfinite(value):
        raise NumericalError(f"SCC in {year} is not finite (dW/dM={d_m}, dW/dC={d_c})")
    return value


def scc_series(controls, weights, params, years=None, **kw) -> np.ndarray:
    years = params.paths.years if years is None else years
    return np.array([scc(controls, weights, params, int(y), **kw) for y in years])


def nonmarket_damage_value(trajectory: Trajectory, params: ModelParams,
                           year: int | None = None):
    """Lost non-market stock priced at the marginal rate of substitution (trillion $)."""
    price = relative_price(trajectory.consumption, trajectory.nonmarket,
                           trajectory.weights, params.preferences.theta)
    value = (params.damages.e0 - trajectory.nonmarket) * price
    if year is None:
        return value
    return float(value[trajectory.index(year)])


def net_zero_year(trajectory: Trajectory, threshold: float = 1e-9) -> int | None:
    """First year with unabated industrial emissions at or below ``threshold``; None if never."""
    hits = np.flatnonzero(trajectory.industrial_emissions <= threshold)
    return int(trajectory.years[hits[0]]) if len(hits) else None


@dataclass
class ScenarioResult:
    name: str
    params: ModelParams
    trajectory: Trajectory
    controls: ControlPath
    weights: WeightPath
    scc: np.ndarray                  # $/tCO2 for each reporting year
    scc_years: np.ndarray
    relative_price: np.ndarray
    rpe: RPESeries
    damage_value: np.ndarray
    net_zero_year: int | None
    converged: bool
    iterations: int = 1
    fixed_point: FixedPointReport | None = None
    optimization: OptimizationReport | None = None
    damage_coef: float | None = None

    def scc_at(self, year: int) -> float:
        return float(self.scc[np.flatnonzero(self.scc_years == year)[0]])

    def summary(self) -> dict:
        tr = self.trajectory
        window = tr.years <= LAST_REPORT_YEAR
        out = {
            "scenario": self.name,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "welfare": float(tr.welfare),
        }
        for y in REPORT_YEARS:
            out[f"scc_{y}"] = self.scc_at(y)
        out.update({
            "t_2100": tr.at("t_at", 2100),
            "peak_t": float(np.max(tr.t_at)),
            "peak_t_2100": float(np.max(tr.t_at[window])),
            "net_zero_year": self.net_zero_year,
            "e_ind_2050": tr.at("industrial_emissions", 2050),
            "nonmarket_loss_2050": 1.0 - tr.at("nonmarket", 2050) / self.params.damages.e0,
            "nonmarket_loss_2100": 1.0 - tr.at("nonmarket", 2100) / self.params.damages.e0,
            "damage_value_2050": float(self.damage_value[tr.index(2050)]),
            "damage_value_2100": float(self.damage_value[tr.index(2100)]),
            "consumption_2050": tr.at("consumption", 2050),
            "consumption_2100": tr.at("consumption", 2100),
        })
        return out


def _finish(name, params, controls, weights, *, converged, iterations=1,
            fixed_point=None, optimization=None, damage_coef=None) -> ScenarioResult:
    tr = simulate(controls, weights, params, damage_coef=damage_coef)
    years = tr.years[tr.years <= LAST_REPORT_YEAR]
    sccs = scc_series(controls, weights, params, years, damage_coef=damage_coef)
    theta = params.preferences.theta
    price = relative_price(tr.consumption, tr.nonmarket, tr.weights, theta)
    with np.errstate(divide="ignore", invalid="ignore"):   # undefined for a single good
        rpe = rpe_series(tr.consumption, tr.nonmarket, tr.weights, theta,
                         params.economy.period_years)
    return ScenarioResult(name, params, tr, controls, weights, sccs, years, price, rpe,
                          nonmarket_damage_value(tr, params), net_zero_year(tr),
                          converged, iterations, fixed_point, optimization, damage_coef)


def run_scenario(name: str, params: ModelParams,
                 opts: FixedPointOptions | None = None) -> ScenarioResult:
    """Run one of ``dice``, ``bau``, ``rpe``, ``rpe-ep``.

    * dice: single good (zero non-market weight), aggregate damage ``psi_dice``.
    * bau: abatement pinned at its 2015 value, savings optimised.
    * rpe: fixed preferences (``beta_mu = 0``).
    * rpe-ep: the full fixed point with abatement-dependent weights.
    """
    key = name.lower()
    if key not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    opts = opts or FixedPointOptions()
    n = params.horizon

    if key == "dice":
        weights = constant_weights(0.0, n)
        coef = params.damages.psi_dice
        rep = optimize(initial_controls(params), weights, params, opts.optimizer,
                       damage_coef=coef)
        return _finish(key, params, rep.controls, weights, converged=rep.converged,
                       optimization=rep, damage_coef=coef)
    if key == "bau":
        mu0 = params.economy.mu0
        pref = params.preferences
        weights = weight_path(pref.alpha, pref.beta_mu, np.full(n, mu0))
        rep = optimize(initial_controls(params), weights, params, opts.optimizer,
                       mu_fixed=mu0)
        return _finish(key, params, rep.controls, weights, converged=rep.converged,
                       optimization=rep)

    run_params = params.replace(beta_mu=0.0) if key == "rpe" else params
    fp = solve_endogenous(run_params, opts)
    return _finish(key, run_params, fp.controls, fp.weights,
                   converged=fp.converged and fp.last.converged,
                   iterations=fp.iterations, fixed_point=fp, optimization=fp.last)


# --- sweeps ---------------------------------------------------------------

@dataclass
class SweepGrid:
    axes: list[tuple[str, list[float]]]
    cells: dict[tuple, dict] = field(default_factory=dict)
    errors: dict[tuple, str] = field(default_factory=dict)

    def coordinates(self):
        return list(itertools.product(*(values for _, values in self.axes)))

    def failed(self) -> list[tuple]:
        return [c for c in self.coordinates()
                if c in self.errors or not self.cells.get(c, {}).get("converged", False)]

    def matrix(self, metric: str = "scc_2100") -> np.ndarray:
        """Metric laid out over the first two axes (rows x columns)."""
        if len(self.axes) != 2:
            raise ValueError("matrix view needs exactly two axes")
        rows, cols = self.axes[0][1], self.axes[1][1]
        out = np.full((len(rows), len(cols)), np.nan)
        for i, r in enumerate(rows):
            for j, c in enumerate(cols):
                cell = self.cells.get((r, c))
                if cell is not None and cell.get(metric) is not None:
                    out[i, j] = cell[metric]
        return out


def _run_cell(args):
    names, coord, params, opts = args
    try:
        res = run_scenario("rpe-ep", params.replace(**dict(zip(names, coord))), opts)
        return coord, res.summary(), None
    except Exception as exc:  # per-cell failures are recorded, the sweep goes on
        return coord, None, f"{type(exc).__name__}: {exc}"


def run_sweep(axes, params: ModelParams, opts: FixedPointOptions | None = None,
              jobs: int = 1) -> SweepGrid:
    """Evaluate the endogenous-preference fixed point on every grid cell.

    ``axes`` is a sequence of ``(parameter, values)``; results do not depend
    on ``jobs``.
    """
    axes = [(name, [float(v) for v in values]) for name, values in axes]
    if not axes or any(len(v) == 0 for _, v in axes):
        raise ValueError("sweep axes must be non-empty")
    grid = SweepGrid(axes)
    names = [name for name, _ in axes]
    tasks = [(names, coord, params, opts) for coord in grid.coordinates()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    for coord, summary, error in results:
        if error is None:
            grid.cells[coord] = summary
        else:
            log.warning("sweep cell %s failed: %s", coord, error)
            grid.errors[coord] = error
    return grid
