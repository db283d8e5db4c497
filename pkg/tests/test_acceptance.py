"""Acceptance criteria 1-9.

Each test prints one PASS/FAIL line for its criterion, followed by the
individual checks; the lines are repeated in the pytest terminal summary.
Run alone with ``pytest tests/test_acceptance.py -v`` (about four minutes).
"""

import itertools
import json
import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, TABLE_GRID
from epdice import climate
from epdice.analysis import run_scenario
from epdice.cli import main
from epdice.climate import ClimateState
from epdice.fixed_point import solve_endogenous
from epdice.optimizer import (ControlPath, fd_gradient, initial_controls, optimize, welfare,
                              welfare_and_gradient)
from epdice.welfare import constant_weights, instantaneous_utility, weight_path

PRINTED_TABLE = np.array([
    [22302, 24759, 27262, 29804, 32382, 34999],
    [1806, 1981, 2156, 2331, 2508, 2687],
    [328, 345, 363, 381, 400, 420],
    [272, 281, 290, 300, 310, 320],
    [238, 242, 246, 251, 255, 260],
    [216, 217, 218, 219, 221, 222],
], dtype=float)


class Criterion:
    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.checks: list[tuple[bool, str]] = []

    def check(self, label: str, ok: bool, detail: str = ""):
        self.checks.append((bool(ok), f"{label}: {detail}" if detail else label))

    def near(self, label, value, target, *, rel=None, abs=None):
        tol = abs if abs is not None else rel * target
        ok = value is not None and math.fabs(value - target) <= tol
        spec = f"±{abs:g}" if abs is not None else f"±{100 * rel:g}%"
        self.check(label, ok, f"{value:.4g} vs {target:g} {spec}")

    def within(self, label, value, lo, hi):
        self.check(label, lo <= value <= hi, f"{value:.4g} in [{lo:g}, {hi:g}]")

    def report(self):
        passed = sum(ok for ok, _ in self.checks)
        status = "PASS" if passed == len(self.checks) else "FAIL"
        lines = [f"{status} criterion {self.number}: {self.title} "
                 f"({passed}/{len(self.checks)} checks)"]
        lines += [f"    {'ok  ' if ok else 'FAIL'} {text}" for ok, text in self.checks]
        ACCEPTANCE_LINES.extend(lines)
        print("\n".join(lines))
        failed = [text for ok, text in self.checks if not ok]
        assert not failed, "; ".join(failed)


def test_criterion_1_scc_levels(scenario):
    c = Criterion(1, "SCC levels")
    ep, rpe = scenario("rpe-ep"), scenario("rpe")
    c.near("RPE-EP SCC 2020", ep.scc_at(2020), 139, rel=0.10)
    c.within("RPE SCC 2020", rpe.scc_at(2020), 124 * 0.9, 125 * 1.1)
    c.near("RPE-EP SCC 2050", ep.scc_at(2050), 445, rel=0.10)
    c.near("RPE SCC 2100", rpe.scc_at(2100), 1981, rel=0.10)
    c.near("RPE-EP SCC 2100", ep.scc_at(2100), 2331, rel=0.10)
    c.report()


def test_criterion_2_temperature(scenario):
    c = Criterion(2, "temperature in 2100")
    c.near("RPE-EP", scenario("rpe-ep").trajectory.at("t_at", 2100), 2.50, abs=0.1)
    c.near("RPE", scenario("rpe").trajectory.at("t_at", 2100), 2.56, abs=0.1)
    c.near("DICE", scenario("dice").trajectory.at("t_at", 2100), 3.30, abs=0.15)
    c.report()


def test_criterion_3_emissions(scenario):
    c = Criterion(3, "emissions")
    for name in ("rpe", "rpe-ep"):
        year = scenario(name).net_zero_year
        c.check(f"{name} net zero year", year is not None and abs(year - 2055) <= 5,
                f"{year} vs 2055 ±1 period")
    c.near("RPE-EP 2050 emissions", scenario("rpe-ep").trajectory.at(
        "industrial_emissions", 2050), 1.29, rel=0.20)
    c.near("RPE 2050 emissions", scenario("rpe").trajectory.at(
        "industrial_emissions", 2050), 5.86, rel=0.20)
    c.report()


def test_criterion_4_nonmarket_volumes(scenario):
    c = Criterion(4, "non-market stock loss in 2100")
    for name, target in (("rpe-ep", 9.12), ("rpe", 9.51), ("bau", 20.80)):
        loss = 100 * scenario(name).summary()["nonmarket_loss_2100"]
        c.near(f"{name} loss (%)", loss, target, abs=1.0)
    c.report()


def test_criterion_5_valuations(scenario):
    c = Criterion(5, "valuations")
    ep, rpe, bau = (scenario(n).summary() for n in ("rpe-ep", "rpe", "bau"))
    c.near("RPE-EP value 2050", ep["damage_value_2050"], 4.6, rel=0.10)
    c.near("RPE-EP value 2100", ep["damage_value_2100"], 65.9, rel=0.10)
    c.near("RPE value 2050", rpe["damage_value_2050"], 3.9, rel=0.10)
    c.near("RPE value 2100", rpe["damage_value_2100"], 56.5, rel=0.10)
    c.near("BAU value 2100", bau["damage_value_2100"], 155.0, rel=0.10)
    c.near("RPE-EP consumption 2050", ep["consumption_2050"], 221.2, rel=0.10)
    c.near("RPE-EP consumption 2100", ep["consumption_2100"], 571.7, rel=0.10)
    for y in (2050, 2100):
        under = 100 * (1 - rpe[f"damage_value_{y}"] / ep[f"damage_value_{y}"])
        c.near(f"underestimate with fixed preferences {y} (%)", under, 15, abs=3)
    c.report()


def test_criterion_6_sensitivity_table(table_sweep):
    c = Criterion(6, "SCC 2100 sensitivity matrix")
    m = table_sweep.matrix("scc_2100")
    thetas, betas = TABLE_GRID[0][1], TABLE_GRID[1][1]
    c.check("all cells converged", not table_sweep.failed(), str(table_sweep.failed()))
    for (i, th), (j, b) in itertools.product(enumerate(thetas), enumerate(betas)):
        c.near(f"theta={th:g} beta_mu={b:g}", m[i, j], PRINTED_TABLE[i, j], rel=0.10)
    c.check("increasing in beta_mu along every row", bool(np.all(np.diff(m, axis=1) > 0)))
    c.check("decreasing in theta down every column", bool(np.all(np.diff(m, axis=0) < 0)))
    c.report()


def test_criterion_7_fixed_point(scenario, params):
    c = Criterion(7, "fixed point")
    fp = scenario("rpe-ep").fixed_point
    c.check("baseline converges in at most 6 iterations", fp.converged and fp.iterations <= 6,
            f"{fp.iterations} iterations, converged={fp.converged}")
    fixed = scenario("rpe").fixed_point
    c.check("no response converges in exactly 1", fixed.converged and fixed.iterations == 1,
            f"{fixed.iterations} iterations")
    pref = params.preferences
    gap = np.max(np.abs(fp.weights.weights - (pref.alpha + pref.beta_mu * fp.weights.mu)))
    c.check("weights equal alpha + beta_mu * mu", gap <= 1e-15, f"max gap {gap:.1e}")
    c.report()


def test_criterion_8_properties(params):
    c = Criterion(8, "property suites")
    cp = params.climate

    s = ClimateState(1234.5, 321.0, 2000.25, 0.0, 0.0)
    total = s.l_at + s.l_up + s.l_lo
    for _ in range(100):
        s = climate.step_carbon(s, 0.0, 0.0, cp)
    drift = abs(s.l_at + s.l_up + s.l_lo - total)
    c.check("carbon conserved over 100 steps", drift <= 1e-9, f"drift {drift:.1e}")

    s = ClimateState(cp.mateq, cp.mueq, cp.mleq, 0.0, 0.0)
    for _ in range(2000):
        s = climate.step_temperature(s, cp.kappa, cp)
    c.near("equilibrium warming for doubled CO2", s.t_at, 3.1, abs=0.01)

    tr = run_scenario("rpe", params).trajectory
    gap = np.max(np.abs(tr.consumption + tr.investment - tr.net_output) / tr.net_output)
    c.check("C + I = Y", gap <= 2.3e-16, f"max relative gap {gap:.1e}")

    toy = params.replace(horizon=3, terminal_savings_periods=0)
    w = constant_weights(0.1, 3)
    opt = optimize(initial_controls(toy), w, toy)
    grid_mu = np.linspace(0.0, 1.0, 11)
    grid_s = np.linspace(toy.economy.savings_min, toy.economy.savings_max, 11)
    best = max(welfare(ControlPath([toy.economy.mu0, m, 0.0], [a, b, d]), w, toy)
               for m, a, b, d in itertools.product(grid_mu, grid_s, grid_s, grid_s))
    c.check("optimizer beats exhaustive grid on 3 periods", opt.welfare >= best - 1e-6,
            f"{opt.welfare:.9g} vs {best:.9g}")

    ctrl = initial_controls(params)
    wp = weight_path(0.1, 0.02, ctrl.mu)
    _, g = welfare_and_gradient(ctrl, wp, params)
    fd = fd_gradient(ctrl, wp, params)
    ga, gf = np.concatenate([g.mu, g.s]), np.concatenate([fd.mu, fd.s])
    rel = np.max(np.abs(ga - gf)) / np.max(np.abs(gf))
    c.check("adjoint vs finite-difference gradient", rel <= 1e-4, f"relative error {rel:.1e}")

    zero = run_scenario("rpe-ep", params.replace(psi1=0.0, psi2=0.0))
    c.check("no damages: SCC = 0", bool(np.all(zero.scc == 0.0)),
            f"max |SCC| {np.max(np.abs(zero.scc)):.1e}")
    c.check("no damages: abatement at lower bound", bool(np.all(zero.controls.mu[1:] == 0.0)),
            f"max mu {np.max(zero.controls.mu[1:]):.1e}")

    jump = max(abs(instantaneous_utility(2.0, 1.0, 0.1, 1.0 + e, 1.45)
                   - instantaneous_utility(2.0, 1.0, 0.1, 1.0, 1.45)) for e in (1e-7, -1e-7))
    c.check("utility continuous at theta = 1", jump <= 1e-6, f"jump {jump:.1e}")
    c.report()


def test_criterion_9_determinism(tmp_path):
    c = Criterion(9, "determinism")
    runs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        c.check(f"run {i} exits 0", main(["run", "rpe-ep", "--out-dir", str(out)]) == 0)
        runs.append(out)
    for name in ("rpe-ep_trajectory.csv", "rpe-ep_summary.json"):
        same = (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes()
        c.check(f"repeated run: {name} byte-identical", same)

    grid = "theta=0.29,inf beta_mu=-0.01,0.04"
    sweeps = []
    for jobs in (1, 4):
        out = tmp_path / f"sweep{jobs}"
        code = main(["sweep", "--grid", grid, "--jobs", str(jobs), "--out-dir", str(out)])
        c.check(f"sweep --jobs {jobs} exits 0", code == 0)
        sweeps.append(out)
    for name in ("sweep_cells.csv", "sweep_scc_2100.csv", "sweep_summary.json"):
        same = (sweeps[0] / name).read_bytes() == (sweeps[1] / name).read_bytes()
        c.check(f"--jobs 1 vs 4: {name} byte-identical", same)
    h = {json.loads((d / "sweep_manifest.json").read_text())["params_hash"] for d in sweeps}
    c.check("manifest params hash stable", len(h) == 1)
    c.report()


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
