"""Three-reservoir carbon cycle, radiative forcing and two-box temperature."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .calibration import ClimateParams

LN2 = math.log(2.0)


@dataclass(frozen=True)
class ClimateState:
    l_at: float
    l_up: float
    l_lo: float
    t_at: float
    t_lo: float
    forcing: float = 0.0

    @property
    def reservoirs(self) -> np.ndarray:
        return np.array([self.l_at, self.l_up, self.l_lo])


def initial_state(params: ClimateParams, f_ex0: float = 0.0) -> ClimateState:
    return ClimateState(params.l_at0, params.l_up0, params.l_lo0, params.t0,
                        params.t_lo0, forcing(params.l_at0, f_ex0, params))


def step_carbon(state: ClimateState, industrial_emissions: float,
                land_emissions: float, params: ClimateParams) -> ClimateState:
    """Advance reservoirs one period. Emissions are GtCO2 over the period."""
    inflow = (industrial_emissions + land_emissions) / params.co2_per_c
    l_at, l_up, l_lo = params.phi_matrix @ state.reservoirs
    return replace(state, l_at=l_at + inflow, l_up=l_up, l_lo=l_lo)


def forcing(l_at: float, f_ex: float, params: ClimateParams) -> float:
    if not l_at > 0.0:
        raise ValueError(f"atmospheric carbon must be positive, got {l_at}")
    return params.kappa * math.log(l_at / params.l1750) / LN2 + f_ex


def temperature_matrix(params: ClimateParams) -> np.ndarray:
    z1, z2, z3, z4 = params.zeta1, params.zeta2, params.zeta3, params.zeta4
    return np.array([[1.0 - z1 * z2 - z1 * z3, z1 * z3],
                     [1.0 - z4, z4]])


def step_temperature(state: ClimateState, forcing: float,
                     params: ClimateParams) -> ClimateState:
    """Two-box temperature update driven by this period's forcing."""
    a = temperature_matrix(params)
    t_at = a[0, 0] * state.t_at + a[0, 1] * state.t_lo + params.zeta1 * forcing
    t_lo = a[1, 0] * state.t_at + a[1, 1] * state.t_lo
    return replace(state, t_at=t_at, t_lo=t_lo, forcing=forcing)


def step(state: ClimateState, industrial_emissions: float, land_emissions: float,
         f_ex_next: float, params: ClimateParams) -> ClimateState:
    """Carbon first, then forcing from the updated stock, then temperature."""
    state = step_carbon(state, industrial_emissions, land_emissions, params)
    return step_temperature(state, forcing(state.l_at, f_ex_next, params), params)


def equilibrium_warming(params: ClimateParams) -> float:
    return params.kappa / params.zeta2
