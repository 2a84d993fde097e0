"""Monte-Carlo estimation of the discounted cost under a feedback policy.

Paths are advanced by Euler-Maruyama and projected back into
``[clamp_eps, 1 - clamp_eps]`` after every step. Paths are grouped in
batches; batch ``i`` draws its normals from a generator seeded by
``SeedSequence(seed, spawn_key=(i,))``, so results do not depend on how
batches are scheduled across workers.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numba
import numpy as np

from .bvp import BoundaryCondition, PolicyField
from .model import CostParams, ModelParams

CHUNK_STEPS = 512


class NoisyBoundaryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class McConfig:
    dt: float = 1e-3
    horizon: float | None = None
    n_paths: int = 20_000
    seed: int = 0
    clamp_eps: float = 1e-10
    batch_size: int = 1000
    quadrature: str = "trapezoid"
    tail_tol: float = 1e-4
    fd_step: float | None = None
    neumann_rel_tol: float = 0.25
    workers: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt > 0 required")
        if self.horizon is not None and not self.horizon >= self.dt:
            raise ValueError("horizon >= dt required")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValueError("n_paths >= 1 required")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError("batch_size >= 1 required")
        if not 0 < self.clamp_eps < 0.5:
            raise ValueError("0 < clamp_eps < 0.5 required")
        if self.quadrature not in ("left", "trapezoid"):
            raise ValueError("quadrature must be 'left' or 'trapezoid'")
        if not self.tail_tol > 0:
            raise ValueError("tail_tol > 0 required")
        if self.fd_step is not None and not self.fd_step > 0:
            raise ValueError("fd_step > 0 required")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ValueError("workers >= 1 required")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def resolve_horizon(self, f_max: float, delta: float) -> float:
        if self.horizon is not None:
            return float(self.horizon)
        return max(200.0, math.log(max(f_max, 1e-300) / (delta * self.tail_tol)) / delta)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    std_err: float
    tail_bound: float
    n_paths: int
    clamp_count: int = 0
    horizon: float = 0.0

    def contains(self, value: float, n_se: float = 3.0, extra: float = 0.0) -> bool:
        return abs(value - self.mean) <= n_se * self.std_err + self.tail_bound + extra


class BoundaryData(NamedTuple):
    dirichlet: float
    neumann: float
    dirichlet_se: float
    neumann_se: float
    fd_step: float

    @property
    def condition(self) -> BoundaryCondition:
        return BoundaryCondition(self.dirichlet, self.neumann)


class BatchResult(NamedTuple):
    costs: np.ndarray  # (n_starts, n_paths)
    terminal: np.ndarray  # (n_starts, n_paths)
    clamp_count: int
    state_min: float
    state_max: float


@numba.njit(nogil=True, cache=True)
def _advance(state, acc, disc, z, t0, dt, trapezoid, x_lo, h, eta_g, rho_g, p, c, eps, stats):
    alpha, beta, gamma, sigma, delta = p[0], p[1], p[2], p[3], p[4]
    a0, a_i, am_i, am_s, a_r = c[0], c[1], c[2], c[3], c[4]
    n_steps, n_paths = z.shape
    n_starts = state.shape[0]
    npt = eta_g.shape[0]
    sq = math.sqrt(dt)
    decay = math.exp(-delta * dt)
    for s in range(n_starts):
        for j in range(n_paths):
            x = state[s, j]
            a = acc[s, j]
            w = disc[s, j]
            for i in range(n_steps):
                u = (x - x_lo) / h
                if u <= 0.0:
                    eta = eta_g[0]
                    rho = rho_g[0]
                elif u >= npt - 1:
                    eta = eta_g[npt - 1]
                    rho = rho_g[npt - 1]
                else:
                    q = int(u)
                    fr = u - q
                    eta = eta_g[q] + (eta_g[q + 1] - eta_g[q]) * fr
                    rho = rho_g[q] + (rho_g[q + 1] - rho_g[q]) * fr
                gap = (1.0 - eta) * (1.0 - eta)
                f = a0 + a_i * x + am_s * gap + (am_i - am_s) * x * gap + a_r * x * rho * rho
                if trapezoid and t0 + i == 0:
                    a += 0.5 * w * f * dt
                else:
                    a += w * f * dt
                b = eta * alpha * (1.0 - x) + x * (eta * eta * beta * (1.0 - x) - (gamma + rho))
                x = x + b * dt + sigma * x * (1.0 - x) * sq * z[i, j]
                if x < eps:
                    x = eps
                    stats[0] += 1
                elif x > 1.0 - eps:
                    x = 1.0 - eps
                    stats[0] += 1
                if x < stats[1]:
                    stats[1] = x
                if x > stats[2]:
                    stats[2] = x
                w *= decay
            state[s, j] = x
            acc[s, j] = a
            disc[s, j] = w


@numba.njit(nogil=True, cache=True)
def _terminal_cost(state, disc, x_lo, h, eta_g, rho_g, c, dt, acc):
    # closing half-weight of the trapezoid rule at t = horizon
    a0, a_i, am_i, am_s, a_r = c[0], c[1], c[2], c[3], c[4]
    npt = eta_g.shape[0]
    for s in range(state.shape[0]):
        for j in range(state.shape[1]):
            x = state[s, j]
            u = (x - x_lo) / h
            if u <= 0.0:
                eta = eta_g[0]
                rho = rho_g[0]
            elif u >= npt - 1:
                eta = eta_g[npt - 1]
                rho = rho_g[npt - 1]
            else:
                q = int(u)
                fr = u - q
                eta = eta_g[q] + (eta_g[q + 1] - eta_g[q]) * fr
                rho = rho_g[q] + (rho_g[q + 1] - rho_g[q]) * fr
            gap = (1.0 - eta) * (1.0 - eta)
            f = a0 + a_i * x + am_s * gap + (am_i - am_s) * x * gap + a_r * x * rho * rho
            acc[s, j] += 0.5 * disc[s, j] * f * dt


def stream_generator(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(stream),))))


def _pack(policy: PolicyField, p: ModelParams, k: CostParams):
    pv = np.array([p.alpha, p.beta, p.gamma, p.sigma, p.delta])
    cv = np.array([k.a0, k.aI, k.amI, k.amS, k.ar])
    eta = np.clip(np.ascontiguousarray(policy.eta, dtype=float), 0.0, 1.0)
    rho = np.clip(np.ascontiguousarray(policy.rho, dtype=float), 0.0, policy.rho_max)
    return pv, cv, eta, rho


def simulate_batch(
    x0s,
    policy: PolicyField,
    p: ModelParams,
    k: CostParams,
    cfg: McConfig,
    stream: int,
    n_paths: int | None = None,
) -> BatchResult:
    """Simulate one batch of paths from every start in ``x0s`` with shared noise."""
    x0s = np.atleast_1d(np.asarray(x0s, dtype=float))
    if np.any((x0s <= 0) | (x0s >= 1)):
        raise ValueError("start states must lie in (0, 1)")
    n = cfg.batch_size if n_paths is None else int(n_paths)
    pv, cv, eta, rho = _pack(policy, p, k)
    horizon = cfg.resolve_horizon(k.bound(policy.rho_max), p.delta)
    n_steps = max(1, int(round(horizon / cfg.dt)))
    rng = stream_generator(cfg.seed, stream)

    start = np.clip(x0s, cfg.clamp_eps, 1 - cfg.clamp_eps)
    state = np.repeat(start[:, None], n, axis=1)
    acc = np.zeros_like(state)
    disc = np.ones_like(state)
    stats = np.array([0.0, np.inf, -np.inf])
    trapezoid = cfg.quadrature == "trapezoid"
    grid = policy.grid
    done = 0
    while done < n_steps:
        m = min(CHUNK_STEPS, n_steps - done)
        z = rng.standard_normal((m, n))
        _advance(state, acc, disc, z, done, cfg.dt, trapezoid, grid.x_lo, grid.h, eta, rho, pv, cv, cfg.clamp_eps, stats)
        done += m
    if trapezoid:
        _terminal_cost(state, disc, grid.x_lo, grid.h, eta, rho, cv, cfg.dt, acc)
    lo = min(float(start.min()), stats[1])
    hi = max(float(start.max()), stats[2])
    return BatchResult(acc, state, int(stats[0]), lo, hi)


def simulate_path(x0: float, policy: PolicyField, p: ModelParams, k: CostParams, cfg: McConfig, stream: int = 0) -> float:
    """Discounted-cost sample of a single path drawn from ``stream``."""
    return float(simulate_batch([x0], policy, p, k, cfg, stream, n_paths=1).costs[0, 0])


def _batch_sizes(cfg: McConfig) -> list[int]:
    full, rest = divmod(cfg.n_paths, cfg.batch_size)
    return [cfg.batch_size] * full + ([rest] if rest else [])


def sample_costs(x0s, policy: PolicyField, p: ModelParams, k: CostParams, cfg: McConfig) -> tuple[np.ndarray, int]:
    """All path samples, shape ``(len(x0s), n_paths)``, plus the clamp count.

    Every start state sees the same noise (common random numbers).
    """
    sizes = _batch_sizes(cfg)

    def work(i):
        return simulate_batch(x0s, policy, p, k, cfg, stream=i, n_paths=sizes[i])

    if cfg.workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(work, range(len(sizes))))
    else:
        results = [work(i) for i in range(len(sizes))]
    samples = np.concatenate([r.costs for r in results], axis=1)
    return samples, sum(r.clamp_count for r in results)


def _summarise(samples: np.ndarray, tail: float, clamps: int, horizon: float) -> CostEstimate:
    n = samples.size
    mean = math.fsum(samples.tolist()) / n
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return CostEstimate(mean, se, tail, n, clamps, horizon)


def tail_bound(k: CostParams, p: ModelParams, cfg: McConfig, rho_max: float) -> float:
    f_max = k.bound(rho_max)
    return math.exp(-p.delta * cfg.resolve_horizon(f_max, p.delta)) * f_max / p.delta


def estimate_costs(x0s, policy: PolicyField, p: ModelParams, k: CostParams, cfg: McConfig) -> list[CostEstimate]:
    x0s = np.atleast_1d(np.asarray(x0s, dtype=float))
    samples, clamps = sample_costs(x0s, policy, p, k, cfg)
    tail = tail_bound(k, p, cfg, policy.rho_max)
    horizon = cfg.resolve_horizon(k.bound(policy.rho_max), p.delta)
    return [_summarise(row, tail, clamps, horizon) for row in samples]


def estimate_cost(x0: float, policy: PolicyField, p: ModelParams, k: CostParams, cfg: McConfig) -> CostEstimate:
    return estimate_costs([x0], policy, p, k, cfg)[0]


def boundary_data(
    policy: PolicyField,
    p: ModelParams,
    k: CostParams,
    cfg: McConfig,
    x_lo: float | None = None,
    x_hi: float | None = None,
    fd_step: float | None = None,
) -> BoundaryData:
    """Dirichlet value at ``x_lo`` and a one-sided derivative estimate at ``x_hi``.

    Both ends of the difference quotient share noise, so the quotient's
    variance reflects path sensitivity rather than sampling noise.
    """
    grid = policy.grid
    x_lo = grid.x_lo if x_lo is None else x_lo
    x_hi = grid.x_hi if x_hi is None else x_hi
    h_b = fd_step or cfg.fd_step or 5 * grid.h
    if not (0 < x_lo < x_hi < 1):
        raise ValueError("0 < x_lo < x_hi < 1 required")
    if not 0 < h_b < x_hi - x_lo:
        raise ValueError("fd_step must lie in (0, x_hi - x_lo)")

    samples, _ = sample_costs([x_lo, x_hi - h_b, x_hi], policy, p, k, cfg)
    n = samples.shape[1]
    left = samples[0]
    slope = (samples[2] - samples[1]) / h_b
    dirichlet = math.fsum(left.tolist()) / n
    neumann = math.fsum(slope.tolist()) / n
    d_se = float(np.std(left, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    n_se = float(np.std(slope, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    if n_se > cfg.neumann_rel_tol * abs(neumann) and n_se > 0:
        warnings.warn(
            f"Neumann estimate {neumann:.4g} has standard error {n_se:.3g}",
            NoisyBoundaryWarning,
            stacklevel=2,
        )
    return BoundaryData(dirichlet, neumann, d_se, n_se, h_b)
