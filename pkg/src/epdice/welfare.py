"""CES utility over market and non-market goods, endogenous weights and welfare.

The weight on non-market goods is ``alpha + beta_mu * mu``. Within a single
optimisation the weights are data: they are computed from a previous
abatement path and never differentiated through.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import ParameterError


@dataclass(frozen=True)
class WeightPath:
    weights: np.ndarray
    mu: np.ndarray | None = None

    def __len__(self):
        return len(self.weights)


def preference_weight(alpha, beta_mu, mu):
    w = alpha + beta_mu * np.asarray(mu, dtype=float)
    if np.any(w <= 0.0) or np.any(w >= 1.0):
        raise ParameterError("beta_mu", "non-market weight left (0, 1)")
    return float(w) if w.ndim == 0 else w


def weight_path(alpha: float, beta_mu: float, mu) -> WeightPath:
    mu = np.array(mu, dtype=float)
    return WeightPath(preference_weight(alpha, beta_mu, mu), mu)


def constant_weights(value: float, horizon: int) -> WeightPath:
    return WeightPath(np.full(horizon, float(value)))


def ces(c, e, weight, theta):
    """CES aggregate of market ``c`` and non-market ``e`` consumption."""
    c, e = np.asarray(c, dtype=float), np.asarray(e, dtype=float)
    if math.isinf(theta):
        return weight * e + (1.0 - weight) * c
    if theta == 1.0:
        return e ** weight * c ** (1.0 - weight)
    r = (theta - 1.0) / theta
    return (weight * e ** r + (1.0 - weight) * c ** r) ** (1.0 / r)


def crra(x, eta):
    if eta == 1.0:
        return np.log(x)
    return x ** (1.0 - eta) / (1.0 - eta)


def instantaneous_utility(c_pc, e_pc, weight, theta, eta):
    c_pc, e_pc = np.asarray(c_pc, dtype=float), np.asarray(e_pc, dtype=float)
    if np.any(c_pc <= 0.0) or np.any(e_pc <= 0.0):
        raise ValueError("consumption must be positive")
    u = crra(ces(c_pc, e_pc, weight, theta), eta)
    return float(u) if np.ndim(u) == 0 else u


def utility_and_marginals(c, e, weight, theta, eta):
    """Scalar ``(u, du/dc, du/de)``; used inside the simulation loop."""
    if math.isinf(theta):
        x = weight * e + (1.0 - weight) * c
        dxdc, dxde = 1.0 - weight, weight
    elif theta == 1.0:
        x = math.exp(weight * math.log(e) + (1.0 - weight) * math.log(c))
        dxdc, dxde = (1.0 - weight) * x / c, weight * x / e
    else:
        r = (theta - 1.0) / theta
        inner = weight * e ** r + (1.0 - weight) * c ** r
        x = inner ** (1.0 / r)
        scale = x / inner
        dxdc = scale * (1.0 - weight) * c ** (r - 1.0)
        dxde = scale * weight * e ** (r - 1.0)
    if eta == 1.0:
        u, mu_x = math.log(x), 1.0 / x
    else:
        u, mu_x = x ** (1.0 - eta) / (1.0 - eta), x ** (-eta)
    return u, mu_x * dxdc, mu_x * dxde


def relative_price(c, e, weight, theta):
    """Marginal rate of substitution U_E / U_C, in market-good units."""
    ratio = np.asarray(c, dtype=float) / np.asarray(e, dtype=float)
    scarcity = 1.0 if math.isinf(theta) else ratio ** (1.0 / theta)
    return weight / (1.0 - weight) * scarcity


@dataclass(frozen=True)
class RPESeries:
    """Annualised growth of the relative price, split into its two drivers.

    Arrays have one entry per interval between consecutive periods.
    """

    total: np.ndarray
    preference: np.ndarray
    scarcity: np.ndarray


def rpe_series(consumption, nonmarket, weights, theta, period_years=5) -> RPESeries:
    c = np.asarray(consumption, dtype=float)
    e = np.asarray(nonmarket, dtype=float)
    w = np.asarray(weights, dtype=float)
    if len(c) < 2:
        raise ValueError("need at least two periods")

    def growth(x):
        return np.diff(np.log(x)) / period_years

    preference = growth(w) / (1.0 - w[:-1])
    scarcity = np.zeros(len(c) - 1) if math.isinf(theta) else (growth(c) - growth(e)) / theta
    return RPESeries(preference + scarcity, preference, scarcity)


def total_welfare(c_pc, e_pc, weights, population, discount, theta, eta) -> float:
    """Population-weighted discounted sum of per-capita utility."""
    u = instantaneous_utility(c_pc, e_pc, np.asarray(weights), theta, eta)
    return float(np.sum(np.asarray(population) * np.asarray(discount) * u))


def discount_factors(rho: float, horizon: int, period_years: int = 5) -> np.ndarray:
    return (1.0 + rho) ** (-period_years * np.arange(horizon))
