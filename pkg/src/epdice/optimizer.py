"""Forward simulation of the coupled model and welfare maximisation over controls.

The controls are the abatement rate and the savings rate in every period.
Welfare gradients come from a hand-written reverse sweep through the state
recursion; :func:`fd_gradient` is the finite-difference check on it.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .calibration import ModelParams
from .climate import LN2, temperature_matrix
from .welfare import WeightPath, utility_and_marginals

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    def __init__(self, period: int, message: str):
        super().__init__(f"period {period}: {message}")
        self.period = period


@dataclass(frozen=True)
class ControlPath:
    mu: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mu", np.array(self.mu, dtype=float))
        object.__setattr__(self, "s", np.array(self.s, dtype=float))
        if self.mu.shape != self.s.shape:
            raise ValueError("mu and s must have the same length")


@dataclass(frozen=True)
class Trajectory:
    years: np.ndarray
    mu: np.ndarray
    s: np.ndarray
    weights: np.ndarray
    population: np.ndarray
    capital: np.ndarray
    gross_output: np.ndarray
    net_output: np.ndarray
    damage_frac: np.ndarray
    abatement_frac: np.ndarray
    investment: np.ndarray
    consumption: np.ndarray
    consumption_pc: np.ndarray
    nonmarket: np.ndarray
    nonmarket_pc: np.ndarray
    industrial_emissions: np.ndarray
    l_at: np.ndarray
    l_up: np.ndarray
    l_lo: np.ndarray
    forcing: np.ndarray
    t_at: np.ndarray
    t_lo: np.ndarray
    utility: np.ndarray
    welfare: float

    def index(self, year: int) -> int:
        hits = np.flatnonzero(self.years == year)
        if len(hits) == 0:
            raise KeyError(f"year {year} is not on the model grid")
        return int(hits[0])

    def at(self, name: str, year: int) -> float:
        return float(getattr(self, name)[self.index(year)])


@dataclass(frozen=True)
class Gradient:
    """Welfare derivatives w.r.t. each period's controls and exogenous shocks.

    ``emissions`` is per GtCO2/yr of extra industrial emissions and
    ``consumption`` per trillion/yr of extra consumption, both for the
    duration of one period.
    """

    mu: np.ndarray
    s: np.ndarray
    emissions: np.ndarray
    consumption: np.ndarray


_STATE_FIELDS = ("capital", "gross_output", "net_output", "damage_frac",
                 "abatement_frac", "investment", "consumption", "consumption_pc",
                 "nonmarket", "nonmarket_pc", "industrial_emissions", "l_at",
                 "l_up", "l_lo", "forcing", "t_at", "t_lo", "utility")


def _forward(mu, s, weights, params: ModelParams, emission_pulse=None,
             consumption_pulse=None, damage_coef=None, keep_marginals=False):
    pref, dmg, eco, cli = (params.preferences, params.damages,
                           params.economy, params.climate)
    paths = params.paths
    n = len(mu)
    if n != eco.horizon or len(s) != n or len(weights) != n:
        raise ValueError(f"controls and weights must have length {eco.horizon}")

    psi1 = dmg.psi1 if damage_coef is None else damage_coef
    psi2, e0 = dmg.psi2, dmg.e0
    gamma, phi2, dt = eco.gamma, eco.phi2, eco.period_years
    theta, eta = pref.theta, pref.eta
    keep = (1.0 - eco.delta) ** dt
    phi = cli.phi_matrix
    a = temperature_matrix(cli)
    z1, kappa, l1750, cconv = cli.zeta1, cli.kappa, cli.l1750, cli.co2_per_c

    pop = paths.population.tolist()
    tfp = paths.productivity.tolist()
    sig = paths.sigma.tolist()
    land = paths.land_emissions.tolist()
    fex = paths.forcing_ex.tolist()
    phi1 = paths.phi1.tolist()
    disc = paths.discount.tolist()
    mu_l, s_l, w_l = list(map(float, mu)), list(map(float, s)), list(map(float, weights))
    dM = [0.0] * n if emission_pulse is None else list(map(float, emission_pulse))
    dC = [0.0] * n if consumption_pulse is None else list(map(float, consumption_pulse))

    out = {name: [0.0] * n for name in _STATE_FIELDS}
    marg = {"uc": [0.0] * n, "ue": [0.0] * n} if keep_marginals else None

    k = eco.k0
    lat, lup, llo = cli.l_at0, cli.l_up0, cli.l_lo0
    tat, tlo = cli.t0, cli.t_lo0
    f_now = kappa * math.log(lat / l1750) / LN2 + fex[0]
    welfare = 0.0
    for t in range(n):
        m, sv = mu_l[t], s_l[t]
        gross = tfp[t] * k ** gamma * (pop[t] / 1000.0) ** (1.0 - gamma)
        omega = psi1 * tat * tat
        lam = phi1[t] * m ** phi2
        y = gross * (1.0 - lam) / (1.0 + omega)
        inv = sv * y
        c = y - inv + dC[t]
        if not c > 0.0:
            raise SimulationError(t, f"consumption non-positive ({c})")
        cpc = 1000.0 * c / pop[t]
        e = e0 / (1.0 + psi2 * tat * tat)
        epc = 1000.0 * e / pop[t]
        u, uc, ue = utility_and_marginals(cpc, epc, w_l[t], theta, eta)
        welfare += pop[t] * disc[t] * u
        eind = sig[t] * gross * (1.0 - m) + dM[t]

        o = out
        o["capital"][t] = k
        o["gross_output"][t] = gross
        o["net_output"][t] = y
        o["damage_frac"][t] = omega
        o["abatement_frac"][t] = lam
        o["investment"][t] = inv
        o["consumption"][t] = c
        o["consumption_pc"][t] = cpc
        o["nonmarket"][t] = e
        o["nonmarket_pc"][t] = epc
        o["industrial_emissions"][t] = eind
        o["l_at"][t], o["l_up"][t], o["l_lo"][t] = lat, lup, llo
        o["forcing"][t] = f_now
        o["t_at"][t], o["t_lo"][t] = tat, tlo
        o["utility"][t] = u
        if marg is not None:
            marg["uc"][t], marg["ue"][t] = uc, ue

        if t == n - 1:
            break
        k = keep * k + dt * inv
        if not k > 0.0:
            raise SimulationError(t + 1, f"capital non-positive ({k})")
        inflow = dt * (eind + land[t]) / cconv
        lat, lup, llo = (phi[0, 0] * lat + phi[0, 1] * lup + inflow,
                         phi[1, 0] * lat + phi[1, 1] * lup + phi[1, 2] * llo,
                         phi[2, 1] * lup + phi[2, 2] * llo)
        f_now = kappa * math.log(lat / l1750) / LN2 + fex[t + 1]
        tat, tlo = (a[0, 0] * tat + a[0, 1] * tlo + z1 * f_now,
                    a[1, 0] * tat + a[1, 1] * tlo)
    return welfare, out, marg


def _reverse(mu, s, weights, params: ModelParams, out, marg, damage_coef=None) -> Gradient:
    """Reverse sweep: propagate welfare adjoints of the states back in time."""
    pref, dmg, eco, cli = (params.preferences, params.damages,
                           params.economy, params.climate)
    paths = params.paths
    n = len(mu)
    psi1 = dmg.psi1 if damage_coef is None else damage_coef
    psi2, e0 = dmg.psi2, dmg.e0
    gamma, phi2, dt = eco.gamma, eco.phi2, eco.period_years
    keep = (1.0 - eco.delta) ** dt
    phi = cli.phi_matrix
    a = temperature_matrix(cli)
    z1, kappa, cconv = cli.zeta1, cli.kappa, cli.co2_per_c
    pop, sig, phi1, disc = (paths.population, paths.sigma, paths.phi1, paths.discount)

    g_mu, g_s, g_m, g_c = (np.zeros(n) for _ in range(4))
    # adjoints of next-period states, excluding the forcing channel of l_at
    aK = aT = aTlo = 0.0
    aLat = aLup = aLlo = 0.0
    for t in range(n - 1, -1, -1):
        if t < n - 1:
            lat_next = out["l_at"][t + 1]
            aLat_tot = aLat + aT * z1 * kappa / (LN2 * lat_next)
            aM = aLat_tot * dt / cconv
            aI = dt * aK
            aK_t = keep * aK
            aT_t = a[0, 0] * aT + a[1, 0] * aTlo
            aTlo_t = a[0, 1] * aT + a[1, 1] * aTlo
            aLat_t = phi[0, 0] * aLat_tot + phi[1, 0] * aLup
            aLup_t = phi[0, 1] * aLat_tot + phi[1, 1] * aLup + phi[2, 1] * aLlo
            aLlo_t = phi[1, 2] * aLup + phi[2, 2] * aLlo
        else:
            aM = aI = aK_t = aT_t = aTlo_t = aLat_t = aLup_t = aLlo_t = 0.0

        wt = pop[t] * disc[t]
        aC = wt * marg["uc"][t] * 1000.0 / pop[t]
        aE = wt * marg["ue"][t] * 1000.0 / pop[t]
        m, sv = float(mu[t]), float(s[t])
        gross = out["gross_output"][t]
        y = out["net_output"][t]
        omega = out["damage_frac"][t]
        lam = out["abatement_frac"][t]
        tat = out["t_at"][t]

        aY = aC * (1.0 - sv) + aI * sv
        g_s[t] = (aI - aC) * y
        ag = aY * (1.0 - lam) / (1.0 + omega) + aM * sig[t] * (1.0 - m)
        a_lam = -aY * gross / (1.0 + omega)
        a_omega = -aY * y / (1.0 + omega)
        dlam = phi1[t] * phi2 * m ** (phi2 - 1.0) if m > 0.0 else 0.0
        g_mu[t] = a_lam * dlam - aM * sig[t] * gross
        g_m[t] = aM
        g_c[t] = aC
        dE_dT = -e0 * 2.0 * psi2 * tat / (1.0 + psi2 * tat * tat) ** 2
        aT_t += a_omega * 2.0 * psi1 * tat + aE * dE_dT
        aK_t += ag * gamma * gross / out["capital"][t]

        aK, aT, aTlo = aK_t, aT_t, aTlo_t
        aLat, aLup, aLlo = aLat_t, aLup_t, aLlo_t
    return Gradient(g_mu, g_s, g_m, g_c)


def _weights_array(weights) -> np.ndarray:
    return np.asarray(weights.weights if isinstance(weights, WeightPath) else weights,
                      dtype=float)


def simulate(controls: ControlPath, weights, params: ModelParams, *,
             emission_pulse=None, consumption_pulse=None,
             damage_coef: float | None = None) -> Trajectory:
    """Run the full recursion for given controls and (predetermined) weights.

    ``damage_coef`` replaces the market damage coefficient, which the DICE
    comparison run uses for its aggregate damage function.
    """
    eco = params.economy
    mu, s = controls.mu, controls.s
    if np.any(mu < 0.0) or np.any(mu > max(eco.mu_max, eco.mu_max_late)):
        raise ValueError("abatement rate outside its bounds")
    if np.any(s < 0.0) or np.any(s >= 1.0):
        raise ValueError("savings rate outside [0, 1)")
    w = _weights_array(weights)
    welfare, out, _ = _forward(mu, s, w, params, emission_pulse,
                               consumption_pulse, damage_coef)
    arrays = {k: np.array(v) for k, v in out.items()}
    return Trajectory(years=params.paths.years.copy(), mu=mu.copy(), s=s.copy(),
                      weights=w.copy(), population=params.paths.population.copy(),
                      welfare=welfare, **arrays)


def welfare(controls: ControlPath, weights, params: ModelParams, **kw) -> float:
    w = _weights_array(weights)
    return _forward(controls.mu, controls.s, w, params,
                    kw.get("emission_pulse"), kw.get("consumption_pulse"),
                    kw.get("damage_coef"))[0]


def welfare_and_gradient(controls: ControlPath, weights, params: ModelParams, *,
                         damage_coef: float | None = None,
                         emission_pulse=None, consumption_pulse=None):
    w = _weights_array(weights)
    value, out, marg = _forward(controls.mu, controls.s, w, params, emission_pulse,
                                consumption_pulse, damage_coef, keep_marginals=True)
    grad = _reverse(controls.mu, controls.s, w, params, out, marg, damage_coef)
    return value, grad


def fd_gradient(controls: ControlPath, weights, params: ModelParams, *,
                step: float = 1e-6, damage_coef: float | None = None) -> Gradient:
    """Central finite differences with a relative step; the check on the reverse sweep."""
    w = _weights_array(weights)
    n = len(controls.mu)

    def f(mu, s, dM=None, dC=None):
        return _forward(mu, s, w, params, dM, dC, damage_coef)[0]

    def central(x, i, build, lower=-np.inf):
        h = step * max(1.0, abs(x[i]))
        up, dn = x.copy(), x.copy()
        up[i] += h
        if x[i] - h < lower:    # one-sided second-order stencil at the bound
            up2 = x.copy()
            up2[i] += 2.0 * h
            return (-3.0 * build(x) + 4.0 * build(up) - build(up2)) / (2.0 * h)
        dn[i] -= h
        return (build(up) - build(dn)) / (2.0 * h)

    mu, s = controls.mu, controls.s
    zero = np.zeros(n)
    g_mu = np.array([central(mu, i, lambda v: f(v, s), 0.0) for i in range(n)])
    g_s = np.array([central(s, i, lambda v: f(mu, v), 0.0) for i in range(n)])
    g_m = np.array([central(zero, i, lambda v: f(mu, s, dM=v)) for i in range(n)])
    g_c = np.array([central(zero, i, lambda v: f(mu, s, dC=v)) for i in range(n)])
    return Gradient(g_mu, g_s, g_m, g_c)


# --- optimisation ---------------------------------------------------------

@dataclass
class OptimizeOptions:
    max_iters: int = 3000
    tol: float = 1e-6
    fd_step: float = 1e-6
    gradient: str = "adjoint"          # or "fd"
    # Newton polishing target, relative to tol; resolves near-flat directions
    polish_factor: float = 1e-3
    objective_scale: float | None = None


@dataclass
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    @property
    def free(self) -> np.ndarray:
        return self.upper > self.lower


@dataclass
class OptimizationReport:
    controls: ControlPath
    welfare: float
    iterations: int
    stationarity: float
    converged: bool
    message: str = ""
    welfare_history: list = field(default_factory=list)


def control_bounds(params: ModelParams, mu_fixed: float | None = None) -> Bounds:
    """Stacked ``[mu, s]`` bounds; pinned entries have equal lower and upper."""
    eco = params.economy
    n = eco.horizon
    mu_lo, mu_hi = np.zeros(n), np.full(n, eco.mu_max)
    mu_hi[eco.mu_late_period:] = eco.mu_max_late
    mu_lo[0] = mu_hi[0] = eco.mu0
    # last-period emissions never reach the carbon cycle: abatement there is pure cost
    mu_hi[-1] = 0.0
    if mu_fixed is not None:
        mu_lo[:] = mu_hi[:] = mu_fixed
    s_lo, s_hi = np.full(n, eco.savings_min), np.full(n, eco.savings_max)
    tail = eco.terminal_savings_periods
    if tail:
        s_lo[-tail:] = s_hi[-tail:] = eco.savings_terminal
    return Bounds(np.concatenate([mu_lo, s_lo]), np.concatenate([mu_hi, s_hi]))


def initial_controls(params: ModelParams, ramp_years: int = 100,
                     savings: float = 0.25) -> ControlPath:
    """Linear abatement ramp from the 2015 value to full abatement."""
    eco = params.economy
    years = params.paths.years - eco.start_year
    mu = np.minimum(eco.mu0 + (1.0 - eco.mu0) * years / ramp_years, 1.0)
    mu[0] = eco.mu0
    s = np.full(eco.horizon, savings)
    return clip_controls(ControlPath(mu, s), params)


def clip_controls(controls: ControlPath, params: ModelParams,
                  mu_fixed: float | None = None) -> ControlPath:
    b = control_bounds(params, mu_fixed)
    x = np.clip(np.concatenate([controls.mu, controls.s]), b.lower, b.upper)
    n = params.horizon
    return ControlPath(x[:n], x[n:])


def stationarity(x, grad, bounds: Bounds) -> float:
    """Sup-norm of the projected ascent step ``P(x + g) - x``."""
    step = np.clip(x + grad, bounds.lower, bounds.upper) - x
    return float(np.max(np.abs(step))) if step.size else 0.0


def optimize(initial: ControlPath, weights, params: ModelParams,
             opts: OptimizeOptions | None = None, *, mu_fixed: float | None = None,
             damage_coef: float | None = None) -> OptimizationReport:
    """Maximise welfare over the free controls with L-BFGS-B.

    Weights are held fixed. The objective handed to the solver is welfare
    times ``opts.objective_scale`` (default ``1/|W(initial)|``); stationarity
    is always reported in unscaled welfare units.
    """
    opts = opts or OptimizeOptions()
    n = params.horizon
    bounds = control_bounds(params, mu_fixed)
    start = clip_controls(initial, params, mu_fixed)
    w = _weights_array(weights)
    free = bounds.free
    x_full = np.concatenate([start.mu, start.s])
    base = x_full.copy()

    def unpack(z):
        full = base.copy()
        full[free] = z
        return ControlPath(full[:n], full[n:])

    def raw(z):
        ctrl = unpack(z)
        if opts.gradient == "fd":
            val = welfare(ctrl, w, params, damage_coef=damage_coef)
            g = fd_gradient(ctrl, w, params, step=opts.fd_step, damage_coef=damage_coef)
        else:
            val, g = welfare_and_gradient(ctrl, w, params, damage_coef=damage_coef)
        return val, np.concatenate([g.mu, g.s])[free]

    w0, _ = raw(x_full[free])
    scale = opts.objective_scale or 1.0 / max(abs(w0), 1e-300)
    history = [w0]
    cache = {}

    def objective(z):
        key = z.tobytes()
        if key not in cache:
            cache.clear()
            cache[key] = raw(z)
        val, g = cache[key]
        return -scale * val, -scale * g

    def callback(z):
        history.append(objective(z)[0] / -scale)

    fb = Bounds(bounds.lower[free], bounds.upper[free])
    sb = list(zip(fb.lower, fb.upper))
    res = minimize(objective, x_full[free], jac=True, method="L-BFGS-B", bounds=sb,
                   callback=callback,
                   options={"maxiter": opts.max_iters, "maxfun": 4 * opts.max_iters,
                            "ftol": 1e-15, "gtol": opts.tol * scale, "maxcor": 30})
    z = np.clip(res.x, fb.lower, fb.upper)
    val, g = raw(z)
    iters = int(res.nit)
    # L-BFGS-B stalls once welfare differences hit rounding; finish on the gradient
    z, val, g, extra = _newton_polish(z, val, g, raw, fb, opts, history)
    iters += extra
    stat = stationarity(z, g, fb)
    ctrl = unpack(z)
    report = OptimizationReport(ctrl, val, iters, stat, stat <= opts.tol,
                                str(res.message), history)
    _warn_non_monotone(ctrl.mu, params)
    log.debug("optimize: W=%.10g iters=%d stationarity=%.3g", val, res.nit, stat)
    return report


def _newton_polish(z, val, g, raw, b: Bounds, opts: OptimizeOptions, history,
                   max_steps: int = 25, h: float = 1e-5):
    """Projected Newton ascent on the free set with a finite-difference Hessian."""
    stat = stationarity(z, g, b)
    target = opts.tol * opts.polish_factor
    steps = 0
    hess, hess_idx = None, None
    while stat > target and steps < max_steps:
        snapped = _snap_to_bounds(z, val, g, raw, b)
        if snapped is not None:
            z, val, g = snapped
            stat = stationarity(z, g, b)
            hess = None
            history.append(val)
            continue
        active = (((z <= b.lower + 1e-12) & (g <= 0.0))
                  | ((z >= b.upper - 1e-12) & (g >= 0.0)))
        idx = np.flatnonzero(~active)
        if idx.size == 0:
            break
        if hess is None or not np.array_equal(idx, hess_idx):
            hess = np.empty((idx.size, idx.size))
            for j, i in enumerate(idx):
                hj = h if z[i] + h <= b.upper[i] else -h
                zp = z.copy()
                zp[i] += hj
                hess[:, j] = (raw(zp)[1][idx] - g[idx]) / hj
            hess = 0.5 * (hess + hess.T)
            top = np.linalg.eigvalsh(hess)[-1]
            if top >= 0.0:
                hess -= (top + 1e-8 * max(1.0, abs(top))) * np.eye(idx.size)
            hess_idx = idx
        d = -np.linalg.solve(hess, g[idx])
        t = 1.0
        for _ in range(30):
            zn = z.copy()
            zn[idx] += t * d
            zn = np.clip(zn, b.lower, b.upper)
            vn, gn = raw(zn)
            sn = stationarity(zn, gn, b)
            if vn > val or (vn >= val - 1e-13 * abs(val) and sn < stat):
                break
            t *= 0.5
        else:
            break
        if sn >= stat and t < 1.0:
            hess = None
        z, val, g, stat = zn, vn, gn, sn
        history.append(val)
        steps += 1
    return z, val, g, steps


def _snap_to_bounds(z, val, g, raw, b: Bounds, reach: float = 0.05):
    """Move controls that the gradient pushes toward a nearby bound onto it.

    Near a bound where the objective is very flat (abatement cost grows like
    mu**2.6) Newton steps crawl; the snap is kept only if welfare does not fall.
    """
    span = b.upper - b.lower
    lo = (g < 0.0) & (z > b.lower) & (z - b.lower <= reach * span)
    hi = (g > 0.0) & (z < b.upper) & (b.upper - z <= reach * span)
    if not (lo.any() or hi.any()):
        return None
    zn = z.copy()
    zn[lo], zn[hi] = b.lower[lo], b.upper[hi]
    vn, gn = raw(zn)
    if vn < val:
        return None
    return zn, vn, gn


def _warn_non_monotone(mu: np.ndarray, params: ModelParams, horizon_year: int = 2100):
    years = params.paths.years[1:-1]     # first and last abatement rates are pinned
    head = mu[1:-1][years <= horizon_year]
    sat = np.flatnonzero(head >= params.economy.mu_max - 1e-6)
    head = head[: sat[0] + 1] if len(sat) else head
    if np.any(np.diff(head) < -1e-4):
        warnings.warn("optimal abatement path decreases before saturation",
                      RuntimeWarning, stacklevel=3)
