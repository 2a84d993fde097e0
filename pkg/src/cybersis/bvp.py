"""Finite-difference solver for the linear Bellman ODE under a fixed policy.

Interior rows use a centred diffusion stencil with first-order upwinding of
the drift; the left edge carries a Dirichlet row and the right edge a
second-order one-sided Neumann row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import DEFAULT_RHO_MAX, ControlPair, CostParams, ModelParams, diffusion, drift, running_cost


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, row: int):
        super().__init__(f"zero pivot in tridiagonal elimination at row {row}")
        self.row = row


@dataclass(frozen=True)
class Grid:
    x_lo: float = 0.01
    x_hi: float = 0.99
    n: int = 1000

    def __post_init__(self):
        if not 0 < self.x_lo < self.x_hi < 1:
            raise ValueError("0 < x_lo < x_hi < 1 required")
        if int(self.n) != self.n or self.n < 3:
            raise ValueError("n >= 3 required")

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.n)


@dataclass(frozen=True, eq=False)
class PolicyField:
    grid: Grid
    eta: np.ndarray
    rho: np.ndarray
    rho_max: float = DEFAULT_RHO_MAX

    def __post_init__(self):
        eta = np.array(self.eta, dtype=float).reshape(-1)
        rho = np.array(self.rho, dtype=float).reshape(-1)
        if eta.shape != (self.grid.n,) or rho.shape != (self.grid.n,):
            raise ValueError("policy arrays must match the grid size")
        if np.any(eta < 0) or np.any(eta > 1) or not np.all(np.isfinite(eta)):
            raise ValueError("eta must lie in [0, 1]")
        if np.any(rho < 0) or np.any(rho > self.rho_max) or not np.all(np.isfinite(rho)):
            raise ValueError(f"rho must lie in [0, {self.rho_max}]")
        eta.setflags(write=False)
        rho.setflags(write=False)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def constant(cls, grid: Grid, eta: float, rho: float, rho_max: float = DEFAULT_RHO_MAX) -> PolicyField:
        return cls(grid, np.full(grid.n, float(eta)), np.full(grid.n, float(rho)), rho_max)

    @property
    def controls(self) -> ControlPair:
        return ControlPair(self.eta, self.rho)

    def __call__(self, x) -> ControlPair:
        """Piecewise-linear lookup, held constant beyond the grid edges."""
        nodes = self.grid.nodes
        eta = np.clip(np.interp(x, nodes, self.eta), 0.0, 1.0)
        rho = np.clip(np.interp(x, nodes, self.rho), 0.0, self.rho_max)
        return ControlPair(eta, rho)


def gradient(values: np.ndarray, h: float) -> np.ndarray:
    """Central differences inside, second-order one-sided at both edges."""
    return np.gradient(values, h, edge_order=2)


def curvature(values: np.ndarray, h: float) -> np.ndarray:
    """Central second difference; NaN at the two edge nodes."""
    out = np.full(values.shape, np.nan)
    out[1:-1] = (values[:-2] - 2 * values[1:-1] + values[2:]) / h**2
    return out


@dataclass(frozen=True, eq=False)
class ValueField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.shape != (self.grid.n,):
            raise ValueError("values must match the grid size")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def gradient(self) -> np.ndarray:
        return gradient(self.values, self.grid.h)

    @property
    def curvature(self) -> np.ndarray:
        return curvature(self.values, self.grid.h)

    def __call__(self, x):
        return np.interp(x, self.grid.nodes, self.values)


class BoundaryCondition(NamedTuple):
    dirichlet: float
    neumann: float


@dataclass(eq=False)
class TridiagonalSystem:
    """Row i reads ``lower[i] v[i-1] + diag[i] v[i] + upper[i] v[i+1] = rhs[i]``.

    ``lower[0]`` and ``upper[-1]`` are unused and kept at zero.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray

    def __len__(self):
        return len(self.diag)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[1:] += self.lower[1:] * v[:-1]
        out[:-1] += self.upper[:-1] * v[1:]
        return out

    def dense(self) -> np.ndarray:
        n = len(self)
        a = np.diag(self.diag)
        a[np.arange(1, n), np.arange(n - 1)] = self.lower[1:]
        a[np.arange(n - 1), np.arange(1, n)] = self.upper[:-1]
        return a


def upwind_coefficients(x, sigma_x, b, h: float, delta: float):
    """Interior stencil coefficients (lower, diag, upper)."""
    diff = 0.5 * sigma_x**2 / h**2
    central = np.abs(b) * h < 1e-12 * sigma_x**2
    fwd = np.where(central, 0.0, np.maximum(b, 0.0)) / h
    bwd = np.where(central, 0.0, np.maximum(-b, 0.0)) / h
    cen = np.where(central, b / (2 * h), 0.0)
    lower = diff + bwd - cen
    upper = diff + fwd + cen
    diag = -2 * diff - fwd - bwd - delta
    return lower, diag, upper


def assemble(
    policy: PolicyField,
    p: ModelParams,
    k: CostParams,
    bc: BoundaryCondition,
    source: np.ndarray | None = None,
) -> TridiagonalSystem:
    """Discretise ``sigma^2 v''/2 + b v' - delta v = -f`` on the policy's grid.

    ``source`` replaces the running cost samples when given (used for
    manufactured solutions). The one-sided Neumann row couples three nodes;
    its ``v[n-3]`` entry is eliminated against row ``n-2`` so the returned
    system stays tridiagonal.
    """
    grid = policy.grid
    x, h, n = grid.nodes, grid.h, grid.n
    sx = diffusion(x, p)
    if np.any(sx[1:-1] <= 0):
        raise ValueError("diffusion must be positive at interior nodes")
    b = drift(x, policy.controls, p)
    f = running_cost(x, policy.controls, k) if source is None else np.asarray(source, dtype=float)

    lower, diag, upper = upwind_coefficients(x, sx, b, h, p.delta)
    rhs = -f.astype(float, copy=True)
    lower[0], diag[0], upper[0], rhs[0] = 0.0, 1.0, 0.0, bc.dirichlet

    # (3 v[n-1] - 4 v[n-2] + v[n-3]) / (2h) = neumann, minus (1/2h)/lower[n-2] * row n-2
    s = 1.0 / (2 * h * lower[n - 2])
    lower[n - 1] = -4.0 / (2 * h) - s * diag[n - 2]
    diag[n - 1] = 3.0 / (2 * h) - s * upper[n - 2]
    rhs[n - 1] = bc.neumann - s * rhs[n - 2]
    upper[n - 1] = 0.0

    if np.any(diag == 0):
        raise AssertionError("zero diagonal entry in assembled system")
    return TridiagonalSystem(lower, diag, upper, rhs)


def solve_tridiagonal(system: TridiagonalSystem) -> np.ndarray:
    """Thomas algorithm (no pivoting)."""
    a, b, c, d = (np.asarray(t, dtype=float).tolist() for t in (system.lower, system.diag, system.upper, system.rhs))
    n = len(b)
    cp = [0.0] * n
    dp = [0.0] * n
    if b[0] == 0:
        raise SingularSystemError(0)
    cp[0] = c[0] / b[0]
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        m = b[i] - a[i] * cp[i - 1]
        if m == 0:
            raise SingularSystemError(i)
        cp[i] = c[i] / m
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m
    x = [0.0] * n
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return np.array(x)


def solve_bellman(
    policy: PolicyField,
    p: ModelParams,
    k: CostParams,
    bc: BoundaryCondition,
    source: np.ndarray | None = None,
) -> ValueField:
    system = assemble(policy, p, k, BoundaryCondition(*bc), source)
    return ValueField(policy.grid, solve_tridiagonal(system))


def operator_residual(system: TridiagonalSystem, v: np.ndarray) -> np.ndarray:
    return system.matvec(np.asarray(v, dtype=float)) - system.rhs
