"""Closed-form kernels of the controlled SIS diffusion.

All functions are vectorised over the state ``x`` (scalars or numpy arrays)
and free of side effects.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from ._validation import check_finite, check_state

DEFAULT_RHO_MAX = 10.0
ETA_SCAN_POINTS = 401


@dataclass(frozen=True)
class ModelParams:
    """Rates of the controlled SIS system (all per unit time)."""

    alpha: float = 0.5
    beta: float = 0.5
    gamma: float = 0.15
    sigma: float = 0.3
    delta: float = 0.05

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        for name in ("alpha", "beta", "gamma", "sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} >= 0 required")
        if not self.delta > 0:
            raise ValueError("delta > 0 required")


@dataclass(frozen=True)
class CostParams:
    """Coefficients of the quadratic running cost.

    The usual modelling assumption is ``amI > amS > 0`` and ``ar > 0``;
    degenerate (zero) coefficients are accepted so that closed-form checks
    such as the constant-cost problem can be expressed.
    """

    a0: float = 0.5
    aI: float = 5.0
    amI: float = 2.5
    amS: float = 0.5
    ar: float = 5.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            if value < 0:
                raise ValueError(f"{name} >= 0 required")

    @property
    def standard(self) -> bool:
        """True when ``amI > amS > 0`` and ``ar > 0``."""
        return self.amI > self.amS > 0 and self.ar > 0

    def bound(self, rho_max: float = DEFAULT_RHO_MAX) -> float:
        """Supremum of the running cost over [0,1] x [0,1] x [0, rho_max]."""
        # f is affine in x, maximal at eta=0 and rho=rho_max
        at_zero = self.a0 + self.amS
        at_one = self.a0 + self.aI + self.amI + self.ar * rho_max**2
        return max(at_zero, at_one)


class ControlPair(NamedTuple):
    eta: float | np.ndarray
    rho: float | np.ndarray


class UpdateMode(str, enum.Enum):
    AS_PRINTED = "as_printed"
    EXACT_FOC = "exact_foc"


def drift(x, c: ControlPair, p: ModelParams):
    x = check_state(x)
    eta, rho = c
    return eta * p.alpha * (1 - x) + x * (eta**2 * p.beta * (1 - x) - (p.gamma + rho))


def diffusion(x, p: ModelParams):
    x = check_state(x)
    return p.sigma * x * (1 - x)


def running_cost(x, c: ControlPair, k: CostParams):
    x = check_state(x)
    eta, rho = c
    gap = (1 - eta) ** 2
    return k.a0 + k.aI * x + k.amS * gap + (k.amI - k.amS) * x * gap + k.ar * x * rho**2


def drift_lipschitz(c: ControlPair, p: ModelParams) -> float:
    """Explicit Lipschitz constant in x for drift and diffusion at a fixed control."""
    eta, rho = c
    quad = eta**2 * p.beta
    return max(abs(quad - eta * p.alpha - (p.gamma + rho)) + 2 * quad, 3 * p.sigma)


def _management_cost(x, k: CostParams):
    return k.amS + (k.amI - k.amS) * x


def _mitigation(x, dv, k: CostParams, rho_max: float, divide_by_state: bool):
    pos = np.maximum(dv, 0.0)
    if k.ar == 0:
        return np.where(pos > 0, rho_max, 0.0)
    denom = 2 * k.ar * (x if divide_by_state else 1.0)
    return np.minimum(pos / denom, rho_max)


def _eta_scan(x, dv, p: ModelParams, k: CostParams):
    """Minimise the eta-dependent Hamiltonian part on a uniform grid (pointwise)."""
    grid = np.linspace(0.0, 1.0, ETA_SCAN_POINTS)[::-1]  # ties resolve toward eta=1
    x = np.atleast_1d(x)[:, None]
    dv = np.atleast_1d(dv)[:, None]
    vals = _eta_part(x, grid[None, :], dv, p, k)
    return grid[np.argmin(vals, axis=1)]


def _eta_part(x, eta, dv, p: ModelParams, k: CostParams):
    # eta-dependent terms of b*dv + f
    return (eta * p.alpha * (1 - x) + eta**2 * p.beta * x * (1 - x)) * dv + _management_cost(x, k) * (1 - eta) ** 2


def update_controls(
    x,
    dv,
    p: ModelParams,
    k: CostParams,
    mode: UpdateMode = UpdateMode.EXACT_FOC,
    rho_max: float = DEFAULT_RHO_MAX,
) -> ControlPair:
    """Control update from a sampled value gradient.

    ``AS_PRINTED`` applies the closed-form first-order rules with the
    linearised contagion term and the state-scaled mitigation rate.
    ``EXACT_FOC`` returns the exact pointwise minimiser of ``b*dv + f``;
    where the eta-quadratic is not convex (only for ``dv < 0``) it falls back
    to a 401-point scan of [0, 1].
    """
    x = check_state(x)
    dv = check_finite(dv, "dv")
    x, dv = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(dv, dtype=float))
    scalar = x.ndim == 0
    x, dv = np.atleast_1d(x), np.atleast_1d(dv)
    mode = UpdateMode(mode)
    cm = _management_cost(x, k)

    if mode is UpdateMode.AS_PRINTED:
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = 1 - (p.alpha + p.beta * x) * (1 - x) * dv / (2 * cm)
        raw = np.where(dv == 0, 1.0, raw)
        eta = np.clip(np.nan_to_num(raw, nan=1.0, posinf=1.0, neginf=0.0), 0.0, 1.0)
        rho = _mitigation(x, dv, k, rho_max, divide_by_state=True)
    else:
        num = 2 * cm - p.alpha * (1 - x) * dv
        den = 2 * cm + 2 * p.beta * x * (1 - x) * dv
        convex = den > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            eta = np.where(convex, np.clip(num / np.where(convex, den, 1.0), 0.0, 1.0), 0.0)
        eta = np.where(dv == 0, 1.0, eta)
        bad = ~convex & (dv != 0)
        if bad.any():
            eta[bad] = _eta_scan(x[bad], dv[bad], p, k)
        rho = _mitigation(x, dv, k, rho_max, divide_by_state=False)

    if scalar:
        return ControlPair(float(eta[0]), float(rho[0]))
    return ControlPair(eta, rho)


def hamiltonian(x, c: ControlPair, v, dv, d2v, p: ModelParams, k: CostParams):
    """``b*dv + sigma(x)^2 d2v / 2 - delta*v + f`` at a fixed control."""
    return drift(x, c, p) * dv + 0.5 * diffusion(x, p) ** 2 * d2v - p.delta * v + running_cost(x, c, k)


def hamiltonian_min(x, v, dv, d2v, p: ModelParams, k: CostParams, rho_max: float = DEFAULT_RHO_MAX):
    """Infimum of the HJB Hamiltonian over eta in [0,1], rho in [0, rho_max]."""
    c = update_controls(x, dv, p, k, UpdateMode.EXACT_FOC, rho_max)
    return hamiltonian(x, c, v, dv, d2v, p, k)
