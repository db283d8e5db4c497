"""Alternating optimise / re-weight iteration for abatement-dependent preferences.

Each pass optimises the controls with the non-market weights held fixed,
then recomputes the weights from the abatement path just obtained. The loop
stops once two consecutive abatement paths agree in sup-norm.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .calibration import ModelParams
from .optimizer import (ControlPath, OptimizationReport, OptimizeOptions,
                        initial_controls, optimize)
from .welfare import WeightPath, constant_weights, weight_path

log = logging.getLogger(__name__)


@dataclass
class FixedPointOptions:
    tol: float = 1e-4
    max_iters: int = 50
    damping: float = 0.0     # share of the previous abatement path mixed into the weights
    optimizer: OptimizeOptions = field(default_factory=OptimizeOptions)


@dataclass
class FixedPointReport:
    controls: ControlPath
    weights: WeightPath
    iterations: int
    mu_changes: list[float]
    welfare: list[float]
    converged: bool
    oscillating: bool
    start: ControlPath
    last: OptimizationReport | None = None

    @property
    def status(self) -> str:
        if self.converged:
            return "converged"
        return "oscillating" if self.oscillating else "max-iterations"


def solve_endogenous(params: ModelParams, opts: FixedPointOptions | None = None,
                     start: ControlPath | None = None) -> FixedPointReport:
    """Iterate to a control path consistent with the weights it induces.

    Iteration 0 uses the constant weight ``alpha``; iteration ``k`` uses
    ``alpha + beta_mu * mu`` from iteration ``k - 1``. ``iterations`` counts
    the re-weighted passes, so a preference response of zero converges at 1.
    """
    opts = opts or FixedPointOptions()
    pref = params.preferences
    start = start or initial_controls(params)

    weights = constant_weights(pref.alpha, params.horizon)
    rep = optimize(start, weights, params, opts.optimizer)
    paths = [rep.controls.mu]
    mu_weights = None
    changes: list[float] = []
    welfare = [rep.welfare]
    converged = oscillating = False
    k = 0
    while k < opts.max_iters:
        k += 1
        mu_weights = paths[-1] if mu_weights is None else (
            opts.damping * mu_weights + (1.0 - opts.damping) * paths[-1])
        weights = weight_path(pref.alpha, pref.beta_mu, mu_weights)
        rep = optimize(rep.controls, weights, params, opts.optimizer)
        change = float(np.max(np.abs(rep.controls.mu - paths[-1])))
        paths.append(rep.controls.mu)
        changes.append(change)
        welfare.append(rep.welfare)
        log.info("fixed point %d: max |d mu| = %.3g", k, change)
        if change <= opts.tol:
            converged = True
            break
        if _two_cycle(paths, opts.tol):
            oscillating = True
            break

    if converged and len(changes) > 3 and np.any(np.diff(changes[1:]) > 0.0):
        warnings.warn("abatement changes did not shrink monotonically", RuntimeWarning,
                      stacklevel=2)
    return FixedPointReport(rep.controls, weights, k, changes, welfare, converged,
                            oscillating, start, rep)


def _two_cycle(paths: list[np.ndarray], tol: float) -> bool:
    """The iterates alternate between two distinct abatement paths."""
    if len(paths) < 4:
        return False
    a, b, c, d = paths[-4:]
    return (np.max(np.abs(d - b)) <= tol and np.max(np.abs(c - a)) <= tol
            and np.max(np.abs(d - c)) > tol)
