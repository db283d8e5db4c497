"""Model parameters, config loading and the exogenous DICE-2016 time paths.

Parameters are grouped the way they enter the model (preferences, damages,
economy, climate) and carried together in a frozen :class:`ModelParams`.
Everything not printed as a headline value lives in the bundled
``data/dice2016.cfg`` file; a user config only needs the keys it changes.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

CALIBRATION_ENV = "EPDICE_CALIBRATION"


class ParameterError(ValueError):
    """A parameter failed validation. ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class PreferenceParams:
    alpha: float = 0.1
    theta: float = 0.5
    beta_mu: float = 0.02
    eta: float = 1.45
    rho: float = 0.015


@dataclass(frozen=True)
class DamageParams:
    psi1: float = 0.00181
    psi2: float = 0.016
    e0: float = 77.74
    psi_dice: float = 0.00362


@dataclass(frozen=True)
class EconomyParams:
    gamma: float = 0.3
    delta: float = 0.1
    k0: float = 223.0
    phi2: float = 2.6
    mu_max: float = 1.0
    mu_max_late: float = 1.2
    mu_late_period: int = 29
    mu0: float = 0.03
    savings_min: float = 0.05
    savings_max: float = 0.9
    savings_terminal: float = 0.2582781456953642
    terminal_savings_periods: int = 10
    period_years: int = 5
    horizon: int = 100
    start_year: int = 2015


@dataclass(frozen=True)
class ClimateParams:
    b12: float = 0.12
    b23: float = 0.007
    mateq: float = 588.0
    mueq: float = 360.0
    mleq: float = 1720.0
    l_at0: float = 851.0
    l_up0: float = 460.0
    l_lo0: float = 1740.0
    l1750: float = 588.0
    co2_per_c: float = 3.666
    kappa: float = 3.6813
    t2xco2: float = 3.1
    zeta1: float = 0.1005
    zeta3: float = 0.088
    zeta4: float = 0.975
    t0: float = 0.85
    t_lo0: float = 0.0068

    @property
    def zeta2(self) -> float:
        """Climate feedback (W/m2 per C); equilibrium warming is kappa/zeta2."""
        return self.kappa / self.t2xco2

    @cached_property
    def phi_matrix(self) -> np.ndarray:
        """Carbon transfer matrix acting on (atmosphere, upper, lower) column vectors.

        Entry ``[i, j]`` is the share of reservoir ``j`` that ends up in ``i``
        after one period, so every column sums to one.
        """
        b21 = self.b12 * self.mateq / self.mueq
        b32 = self.b23 * self.mueq / self.mleq
        m = np.array([
            [1.0 - self.b12, b21, 0.0],
            [self.b12, 1.0 - b21 - self.b23, b32],
            [0.0, self.b23, 1.0 - b32],
        ])
        m.setflags(write=False)
        return m


@dataclass(frozen=True)
class ExogenousSpec:
    """Coefficients of the DICE-2016 recursions for the exogenous paths."""

    pop0: float = 7403.0
    popadj: float = 0.134
    popasym: float = 11500.0
    a0: float = 5.115
    ga0: float = 0.076
    dela: float = 0.005
    gsigma1: float = -0.0152
    dsig: float = -0.001
    e_ind0: float = 35.85
    q0: float = 105.5
    eland0: float = 2.6
    deland: float = 0.115
    fex0: float = 0.5
    fex1: float = 1.0
    fex_ramp_periods: int = 17
    pback: float = 550.0
    gback: float = 0.025


@dataclass(frozen=True)
class ExogenousPaths:
    """Per-period exogenous drivers, each an array of length ``horizon``.

    population is in millions, sigma in GtCO2 per trillion USD of gross
    output, land emissions in GtCO2/yr, forcing in W/m2 and phi1 the share of
    gross output spent at full abatement.
    """

    population: np.ndarray
    productivity: np.ndarray
    sigma: np.ndarray
    land_emissions: np.ndarray
    forcing_ex: np.ndarray
    phi1: np.ndarray
    discount: np.ndarray
    years: np.ndarray


_GROUPS = {
    "preferences": PreferenceParams,
    "damages": DamageParams,
    "economy": EconomyParams,
    "climate": ClimateParams,
    "exogenous": ExogenousSpec,
}

_FIELD_GROUP = {f.name: group
                for group, cls in _GROUPS.items()
                for f in dataclasses.fields(cls)}


@dataclass(frozen=True)
class ModelParams:
    preferences: PreferenceParams = field(default_factory=PreferenceParams)
    damages: DamageParams = field(default_factory=DamageParams)
    economy: EconomyParams = field(default_factory=EconomyParams)
    climate: ClimateParams = field(default_factory=ClimateParams)
    exogenous: ExogenousSpec = field(default_factory=ExogenousSpec)
    calibration_version: str = "unversioned"

    def __post_init__(self):
        validate(self)

    @cached_property
    def paths(self) -> ExogenousPaths:
        return build_exogenous_paths(self)

    @property
    def horizon(self) -> int:
        return self.economy.horizon

    def to_dict(self) -> dict:
        out = {}
        for group in _GROUPS:
            out.update(dataclasses.asdict(getattr(self, group)))
        return out

    def replace(self, **overrides) -> "ModelParams":
        """Return a copy with flat keys (``alpha``, ``psi1``, ...) replaced."""
        grouped: dict[str, dict] = {}
        for key, value in overrides.items():
            if key not in _FIELD_GROUP:
                raise ParameterError(key, "unknown parameter")
            grouped.setdefault(_FIELD_GROUP[key], {})[key] = value
        updates = {g: dataclasses.replace(getattr(self, g), **kv)
                   for g, kv in grouped.items()}
        return dataclasses.replace(self, **updates)

    def dumps(self) -> str:
        """Serialise to the flat config format; :func:`loads` inverts this exactly."""
        lines = [f"calibration_version = {self.calibration_version}"]
        for key, value in self.to_dict().items():
            lines.append(f"{key} = {_format_value(value)}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()


def _format_value(value) -> str:
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    return str(value)


def _check(ok: bool, name: str, message: str):
    if not ok:
        raise ParameterError(name, message)


def validate(params: ModelParams) -> None:
    pref, dmg, eco, cli = (params.preferences, params.damages,
                           params.economy, params.climate)
    for key, value in params.to_dict().items():
        _check(not (isinstance(value, float) and math.isnan(value)), key, "is NaN")

    _check(0.0 < pref.alpha < 1.0, "alpha", f"must lie in (0, 1), got {pref.alpha}")
    _check(pref.theta > 0.0, "theta", f"must be positive, got {pref.theta}")
    _check(pref.eta > 0.0, "eta", f"must be positive, got {pref.eta}")
    _check(pref.rho >= 0.0, "rho", f"must be non-negative, got {pref.rho}")
    for mu in (0.0, max(eco.mu_max, eco.mu_max_late)):
        w = pref.alpha + pref.beta_mu * mu
        _check(0.0 < w < 1.0, "beta_mu",
               f"alpha + beta_mu*mu = {w} leaves (0, 1) at mu = {mu}")

    _check(dmg.psi1 >= 0.0, "psi1", "must be non-negative")
    _check(dmg.psi2 >= 0.0, "psi2", "must be non-negative")
    _check(dmg.psi_dice >= 0.0, "psi_dice", "must be non-negative")
    _check(dmg.e0 > 0.0, "e0", "must be positive")

    _check(0.0 < eco.gamma < 1.0, "gamma", "must lie in (0, 1)")
    _check(0.0 < eco.delta < 1.0, "delta", "must lie in (0, 1)")
    _check(eco.k0 > 0.0, "k0", "must be positive")
    _check(eco.phi2 > 1.0, "phi2", "must exceed 1")
    _check(eco.mu_max >= 1.0, "mu_max", "must be at least 1")
    _check(eco.mu_max_late >= eco.mu_max, "mu_max_late", "must be at least mu_max")
    _check(eco.mu_late_period >= 1, "mu_late_period", "must be a period after the first")
    _check(0.0 <= eco.mu0 <= eco.mu_max, "mu0", "must lie in [0, mu_max]")
    _check(0.0 <= eco.savings_min < eco.savings_max < 1.0, "savings_min",
           "need 0 <= savings_min < savings_max < 1")
    _check(eco.savings_min <= eco.savings_terminal <= eco.savings_max,
           "savings_terminal", "must lie within the savings bounds")
    _check(eco.horizon >= 2, "horizon", "need at least 2 periods")
    _check(0 <= eco.terminal_savings_periods < eco.horizon,
           "terminal_savings_periods", "must be shorter than the horizon")
    _check(eco.period_years > 0, "period_years", "must be positive")

    for name in ("l_at0", "l_up0", "l_lo0", "l1750", "mateq", "mueq", "mleq",
                 "kappa", "t2xco2", "co2_per_c"):
        _check(getattr(cli, name) > 0.0, name, "must be positive")
    _check(np.all(cli.phi_matrix >= 0.0), "b12", "carbon transfer shares must be non-negative")
    _check(0.0 < cli.zeta4 <= 1.0, "zeta4", "must lie in (0, 1]")


# --- config I/O -----------------------------------------------------------

def _parse_flat(text: str) -> dict[str, str]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",),
                                       interpolation=None)
    parser.optionxform = str
    parser.read_string("[params]\n" + text)
    return dict(parser["params"])


def _coerce(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            return raw.strip().lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        value = float(raw)
    except ValueError:
        raise ParameterError(key, f"cannot parse {raw!r}") from None
    return value


def default_calibration_path() -> Path:
    env = os.environ.get(CALIBRATION_ENV)
    if env:
        return Path(env)
    return Path(str(resources.files("epdice") / "data" / "dice2016.cfg"))


def loads(text: str, base: ModelParams | None = None) -> ModelParams:
    """Parse a flat config document on top of ``base`` (defaults to the bundled calibration)."""
    if base is None:
        base = load_calibration()
    entries = _parse_flat(text)
    version = entries.pop("calibration_version", None)
    defaults = base.to_dict()
    overrides = {}
    for key, raw in entries.items():
        if key not in defaults:
            raise ParameterError(key, "unknown parameter")
        overrides[key] = _coerce(key, raw, defaults[key])
    params = base.replace(**overrides) if overrides else base
    if version is not None:
        params = dataclasses.replace(params, calibration_version=version)
    return params


def load_calibration(path: str | os.PathLike | None = None) -> ModelParams:
    path = Path(path) if path is not None else default_calibration_path()
    return loads(path.read_text(), base=ModelParams())


def load_params(config: str | os.PathLike | None = None) -> ModelParams:
    """Baseline calibration overridden by an optional config file."""
    base = load_calibration()
    if config is None:
        return base
    return loads(Path(config).read_text(), base=base)


# --- exogenous paths ------------------------------------------------------

def build_exogenous_paths(params: ModelParams) -> ExogenousPaths:
    x, eco = params.exogenous, params.economy
    n, dt = eco.horizon, eco.period_years
    t = np.arange(n)

    pop = np.empty(n)
    pop[0] = x.pop0
    for i in range(1, n):
        pop[i] = pop[i - 1] * (x.popasym / pop[i - 1]) ** x.popadj

    ga = x.ga0 * np.exp(-x.dela * dt * t)
    tfp = np.empty(n)
    tfp[0] = x.a0
    for i in range(1, n):
        tfp[i] = tfp[i - 1] / (1.0 - ga[i - 1])

    gsig = x.gsigma1 * (1.0 + x.dsig) ** (dt * t)
    sigma = np.empty(n)
    sigma[0] = x.e_ind0 / (x.q0 * (1.0 - eco.mu0))
    for i in range(1, n):
        sigma[i] = sigma[i - 1] * np.exp(gsig[i - 1] * dt)

    land = x.eland0 * (1.0 - x.deland) ** t
    ramp = np.minimum(t, x.fex_ramp_periods) / x.fex_ramp_periods
    forcing_ex = x.fex0 + ramp * (x.fex1 - x.fex0)

    backstop = x.pback * (1.0 - x.gback) ** t
    phi1 = backstop * sigma / eco.phi2 / 1000.0

    discount = (1.0 + params.preferences.rho) ** (-dt * t)
    years = eco.start_year + dt * t

    arrays = (pop, tfp, sigma, land, forcing_ex, phi1, discount, years)
    for a in arrays:
        a.setflags(write=False)
    return ExogenousPaths(*arrays)
