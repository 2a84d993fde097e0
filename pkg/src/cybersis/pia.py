"""Policy improvement driver: alternate a fixed-policy ODE solve with a
pointwise control update until successive value iterates agree."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .bvp import BoundaryCondition, Grid, PolicyField, ValueField, solve_bellman
from .model import (
    DEFAULT_RHO_MAX,
    CostParams,
    ModelParams,
    UpdateMode,
    hamiltonian_min,
    update_controls,
)
from .sde_mc import BoundaryData, CostEstimate, McConfig, boundary_data, estimate_costs

log = logging.getLogger(__name__)


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class PiaConfig:
    eps: float = 1e-4
    max_iter: int = 100
    mode: UpdateMode = UpdateMode.EXACT_FOC
    refresh_boundary: bool = True
    rho_max: float = DEFAULT_RHO_MAX
    eta0: float = 0.0
    rho0: float = 0.0
    fixed_eta: float | None = None
    fixed_rho: float | None = None
    mc: McConfig = field(default_factory=McConfig)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps > 0 required")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter >= 1 required")
        object.__setattr__(self, "mode", UpdateMode(self.mode))
        if not self.rho_max > 0:
            raise ValueError("rho_max > 0 required")
        for name in ("eta0", "fixed_eta"):
            v = getattr(self, name)
            if v is not None and not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("rho0", "fixed_rho"):
            v = getattr(self, name)
            if v is not None and not 0 <= v <= self.rho_max:
                raise ValueError(f"{name} must lie in [0, rho_max]")


@dataclass
class IterationRecord:
    iteration: int
    error: float
    max_residual: float
    monotone_sign: int
    boundary: BoundaryData
    values: np.ndarray
    eta: np.ndarray
    rho: np.ndarray


@dataclass
class IterationTrace:
    records: list[IterationRecord] = field(default_factory=list)
    initial_boundary: BoundaryData | None = None
    initial_values: np.ndarray | None = None
    converged: bool = False
    refresh_boundary: bool = True

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.records])

    @property
    def n_iter(self) -> int:
        return len(self.records)

    def summary(self) -> dict:
        return {
            "iterations": self.n_iter,
            "converged": self.converged,
            "refresh_boundary": self.refresh_boundary,
            "errors": [float(e) for e in self.errors],
            "max_residuals": [float(r.max_residual) for r in self.records],
            "monotone_signs": [int(r.monotone_sign) for r in self.records],
            "boundary": [
                {"dirichlet": b.dirichlet, "neumann": b.neumann, "dirichlet_se": b.dirichlet_se, "neumann_se": b.neumann_se}
                for b in [self.initial_boundary] + [r.boundary for r in self.records]
                if b is not None
            ],
        }


class PiaResult(NamedTuple):
    value: ValueField
    policy: PolicyField
    trace: IterationTrace


def initial_policy(grid: Grid, cfg: PiaConfig) -> PolicyField:
    eta = cfg.eta0 if cfg.fixed_eta is None else cfg.fixed_eta
    rho = cfg.rho0 if cfg.fixed_rho is None else cfg.fixed_rho
    return PolicyField.constant(grid, eta, rho, cfg.rho_max)


def improve(value: ValueField, p: ModelParams, k: CostParams, cfg: PiaConfig) -> PolicyField:
    grid = value.grid
    eta, rho = update_controls(grid.nodes, value.gradient, p, k, cfg.mode, cfg.rho_max)
    if cfg.fixed_eta is not None:
        eta = np.full(grid.n, float(cfg.fixed_eta))
    if cfg.fixed_rho is not None:
        rho = np.full(grid.n, float(cfg.fixed_rho))
    return PolicyField(grid, eta, rho, cfg.rho_max)


def hjb_residual(v: ValueField, p: ModelParams, k: CostParams, rho_max: float = DEFAULT_RHO_MAX) -> np.ndarray:
    """Pointwise HJB residual at interior nodes; the two edge entries are NaN."""
    x = v.grid.nodes
    out = np.full(x.shape, np.nan)
    out[1:-1] = hamiltonian_min(x[1:-1], v.values[1:-1], v.gradient[1:-1], v.curvature[1:-1], p, k, rho_max)
    return out


def interior_max_residual(residual: np.ndarray, band: float = 0.05) -> float:
    """Max |residual| after dropping ``band`` of the nodes at each edge."""
    n = residual.size
    cut = max(1, int(math.ceil(band * n)))
    return float(np.nanmax(np.abs(residual[cut : n - cut])))


def run(p: ModelParams, k: CostParams, grid: Grid, cfg: PiaConfig | None = None) -> PiaResult:
    """Policy improvement from the constant initial policy.

    Returns the value iterate ``v^n`` at the first ``n`` with
    ``||v^{n+1} - v^n||_2 / sqrt(N) < eps`` together with the policy
    ``u^{n+1}``. At ``max_iter`` the last pair is returned with
    ``trace.converged`` left False.
    """
    cfg = cfg or PiaConfig()
    policy = initial_policy(grid, cfg)
    bd = boundary_data(policy, p, k, cfg.mc)
    value = solve_bellman(policy, p, k, bd.condition)
    trace = IterationTrace(initial_boundary=bd, initial_values=value.values.copy(), refresh_boundary=cfg.refresh_boundary)
    sqrt_n = math.sqrt(grid.n)

    for n in range(1, cfg.max_iter + 1):
        new_policy = improve(value, p, k, cfg)
        if cfg.refresh_boundary:
            bd = boundary_data(new_policy, p, k, cfg.mc)
        new_value = solve_bellman(new_policy, p, k, bd.condition)
        diff = new_value.values - value.values
        err = float(np.linalg.norm(diff) / sqrt_n)
        res = hjb_residual(new_value, p, k, cfg.rho_max)
        trace.records.append(
            IterationRecord(
                iteration=n,
                error=err,
                max_residual=float(np.nanmax(np.abs(res))),
                monotone_sign=int(np.sign(diff[1:-1]).sum()),
                boundary=bd,
                values=new_value.values.copy(),
                eta=new_policy.eta.copy(),
                rho=new_policy.rho.copy(),
            )
        )
        log.info("iteration %d: error %.3e", n, err)
        if err < cfg.eps:
            trace.converged = True
            return PiaResult(value, new_policy, trace)
        value, policy = new_value, new_policy

    log.warning("no convergence after %d iterations (last error %.3e)", cfg.max_iter, trace.errors[-1])
    return PiaResult(value, improve(value, p, k, cfg), trace)


class RateFit(NamedTuple):
    q_hat: float
    r2: float

    @property
    def contracting(self) -> bool:
        return self.q_hat < 1


def fit_rate(trace_or_errors) -> RateFit:
    """Geometric ratio from a least-squares fit of log error against iteration."""
    errors = trace_or_errors.errors if isinstance(trace_or_errors, IterationTrace) else trace_or_errors
    e = np.asarray(errors, dtype=float)
    if e.size < 3 or np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise InsufficientDataError("need at least 3 strictly positive errors")
    n = np.arange(e.size, dtype=float)
    y = np.log(e)
    slope, intercept = np.polyfit(n, y, 1)
    ss_res = float(np.sum((y - (slope * n + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return RateFit(float(np.exp(slope)), r2)


class ProbeCheck(NamedTuple):
    x: float
    value: float
    estimate: CostEstimate
    tolerance: float
    passed: bool


def mc_cross_validate(
    v: ValueField,
    policy: PolicyField,
    p: ModelParams,
    k: CostParams,
    cfg: McConfig,
    probes=(0.2, 0.5, 0.8),
    c_h: float = 20.0,
) -> list[ProbeCheck]:
    """Compare ODE values against direct cost estimates at interior probes.

    The tolerance is ``3 * std_err + tail_bound + c_h * h``.
    """
    probes = np.asarray(probes, dtype=float)
    grid = v.grid
    if np.any(probes <= grid.x_lo) or np.any(probes >= grid.x_hi):
        raise ValueError("probes must lie strictly inside the grid")
    estimates = estimate_costs(probes, policy, p, k, cfg)
    out = []
    for x, est in zip(probes, estimates):
        val = float(v(x))
        tol = 3 * est.std_err + est.tail_bound + c_h * grid.h
        out.append(ProbeCheck(float(x), val, est, tol, abs(val - est.mean) <= tol))
    return out


def evaluate_policy(policy: PolicyField, p: ModelParams, k: CostParams, mc: McConfig) -> tuple[ValueField, BoundaryData]:
    """Single fixed-policy evaluation with fresh boundary data (no improvement step)."""
    bd = boundary_data(policy, p, k, mc)
    return solve_bellman(policy, p, k, bd.condition), bd


__all__ = [
    "BoundaryCondition",
    "InsufficientDataError",
    "IterationRecord",
    "IterationTrace",
    "PiaConfig",
    "PiaResult",
    "ProbeCheck",
    "RateFit",
    "evaluate_policy",
    "fit_rate",
    "hjb_residual",
    "improve",
    "interior_max_residual",
    "mc_cross_validate",
    "run",
]
