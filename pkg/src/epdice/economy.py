"""Production, damages, abatement cost, capital and emissions for one period.

Monetary quantities are trillion model-US$ per year; population enters the
production function in billions (the DICE convention), while the exogenous
path stores millions.
"""

from __future__ import annotations

from dataclasses import dataclass


class InfeasibleError(RuntimeError):
    pass


@dataclass(frozen=True)
class EconomyState:
    capital: float
    gross_output: float
    net_output: float
    consumption_total: float
    consumption_pc: float
    nonmarket_stock: float
    abatement_cost_frac: float
    damage_frac: float


def market_damage_frac(t_at: float, psi1: float) -> float:
    """Damage index; output is divided by ``1 + market_damage_frac``."""
    return psi1 * t_at * t_at


def nonmarket_stock(t_at: float, e0: float, psi2: float) -> float:
    return e0 / (1.0 + psi2 * t_at * t_at)


def abatement_cost_frac(mu: float, phi1_t: float, phi2: float,
                        mu_max: float = 1.0) -> float:
    if not 0.0 <= mu <= mu_max:
        raise ValueError(f"abatement rate {mu} outside [0, {mu_max}]")
    return phi1_t * mu ** phi2


def gross_output(capital: float, tfp: float, population: float, gamma: float) -> float:
    """Cobb-Douglas gross output; ``population`` in millions."""
    return tfp * capital ** gamma * (population / 1000.0) ** (1.0 - gamma)


def gross_and_net_output(capital, tfp, population, mu, t_at, *, gamma, psi1,
                         phi1_t, phi2, mu_max=1.0):
    """Return ``(gross, net, damage_frac, abatement_frac)``."""
    gross = gross_output(capital, tfp, population, gamma)
    damage = market_damage_frac(t_at, psi1)
    abate = abatement_cost_frac(mu, phi1_t, phi2, mu_max)
    return gross, (1.0 - abate) * gross / (1.0 + damage), damage, abate


def step_capital(capital: float, investment: float, delta: float,
                 period_years: int) -> float:
    """Next-period capital from an annual investment flow held over the period."""
    if investment < 0.0:
        raise ValueError("investment must be non-negative")
    k = (1.0 - delta) ** period_years * capital + period_years * investment
    if not k > 0.0:
        raise InfeasibleError(f"capital became non-positive ({k})")
    return k


def industrial_emissions(mu: float, sigma_t: float, gross: float,
                         period_years: float = 1.0) -> float:
    """Unabated industrial CO2 (GtCO2); annual rate when ``period_years`` is 1."""
    return (1.0 - mu) * sigma_t * gross * period_years
