"""Benchmark, suboptimal, perturbation and comparative-statics runs.

Each run produces a :class:`RunArtifact` holding the per-node table
(x, v, eta, rho, residual), a trace summary and reproducibility metadata.
Artifacts are written as ``<experiment>/<variant>/<label>.csv|svg``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np

from . import pia
from .bvp import Grid, PolicyField, ValueField
from .model import CostParams, ModelParams
from .pia import PiaConfig, PiaResult

log = logging.getLogger(__name__)

BAND = 1e-3
SWEEP_PARAMETERS = ("alpha", "beta", "sigma", "aI", "amI", "amS", "ar")
MODEL_FIELDS = ("alpha", "beta", "gamma", "sigma", "delta")
COST_FIELDS = ("a0", "aI", "amI", "amS", "ar")
DEFAULT_OFFSETS = (-0.15, -0.10, -0.05, 0.05, 0.10, 0.15)
# sigma and ar use fixed grids; other parameters scale the base value
FIXED_SWEEPS = {"sigma": (0.1, 0.5, 1.0, 2.0), "ar": (1.0, 2.5, 5.0, 7.5)}
SWEEP_MULTIPLIERS = (0.5, 1.0, 1.5, 2.0)


@dataclass(frozen=True)
class Benchmark:
    pass


@dataclass(frozen=True)
class FixEta:
    value: float = 1.0


@dataclass(frozen=True)
class FixRho:
    value: float = 0.0


@dataclass(frozen=True)
class Perturb:
    target: str
    offsets: tuple[float, ...] = DEFAULT_OFFSETS

    def __post_init__(self):
        if self.target not in ("eta", "rho"):
            raise ValueError("perturbation target must be 'eta' or 'rho'")
        if not all(math.isfinite(o) for o in self.offsets):
            raise ValueError("offsets must be finite")
        object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))


@dataclass(frozen=True)
class Sweep:
    parameter: str
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"cannot sweep {self.parameter!r}; choose from {SWEEP_PARAMETERS}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))


Variant = Union[Benchmark, FixEta, FixRho, Perturb, Sweep]


def default_sweep_values(parameter: str, model: ModelParams, cost: CostParams) -> tuple[float, ...]:
    if parameter in FIXED_SWEEPS:
        return FIXED_SWEEPS[parameter]
    base = getattr(model, parameter) if parameter in MODEL_FIELDS else getattr(cost, parameter)
    return tuple(m * base for m in SWEEP_MULTIPLIERS)


def with_parameter(model: ModelParams, cost: CostParams, name: str, value: float) -> tuple[ModelParams, CostParams]:
    if name in MODEL_FIELDS:
        return replace(model, **{name: value}), cost
    if name in COST_FIELDS:
        return model, replace(cost, **{name: value})
    raise KeyError(name)


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    model: ModelParams = field(default_factory=ModelParams)
    cost: CostParams = field(default_factory=CostParams)
    grid: Grid = field(default_factory=Grid)
    pia: PiaConfig = field(default_factory=PiaConfig)
    variant: Variant = field(default_factory=Benchmark)

    def config_dict(self) -> dict:
        return {
            "name": self.name,
            "model": asdict(self.model),
            "cost": asdict(self.cost),
            "grid": asdict(self.grid),
            "pia": _jsonable(asdict(self.pia)),
            "variant": {"kind": type(self.variant).__name__, **_jsonable(asdict(self.variant))},
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str)):
        return obj.value
    return obj


def content_hash(data: bytes) -> str:
    """Git blob hash of ``data``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True, default=_json_default)


@dataclass
class RunArtifact:
    experiment: str
    variant: str
    label: str
    x: np.ndarray
    v: np.ndarray
    eta: np.ndarray
    rho: np.ndarray
    residual: np.ndarray
    trace: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "v", "eta", "rho", "residual"])
        for row in zip(self.x, self.v, self.eta, self.rho, self.residual):
            w.writerow([repr(float(c)) for c in row])
        return buf.getvalue()

    def relpath(self) -> Path:
        return Path(self.experiment) / self.variant / self.label

    def write(self, root: Path, plot: bool = True) -> list[Path]:
        base = Path(root) / self.relpath()
        base.parent.mkdir(parents=True, exist_ok=True)
        out = [base.parent / f"{base.name}.csv"]
        out[0].write_text(self.csv_text())
        if plot:
            from .plots import run_figure

            out.append(run_figure(self, base.parent / f"{base.name}.svg"))
        return out


def _artifact(spec: ExperimentSpec, variant: str, label: str, value: ValueField, policy: PolicyField, trace=None, extra=None) -> RunArtifact:
    residual = pia.hjb_residual(value, spec.model, spec.cost, spec.pia.rho_max)
    cfg = spec.config_dict()
    meta = {
        "config": cfg,
        "config_hash": content_hash(canonical_json(cfg).encode()),
        "seed": spec.pia.mc.seed,
        "mode": spec.pia.mode.value,
        "scheme": {
            "drift": "first-order upwind",
            "right_edge": "second-order one-sided Neumann",
            "gradient": "central inside, second-order one-sided at edges",
            "mc_quadrature": spec.pia.mc.quadrature,
        },
    }
    if extra:
        meta.update(extra)
    return RunArtifact(
        experiment=spec.name,
        variant=variant,
        label=label,
        x=value.grid.nodes,
        v=value.values.copy(),
        eta=policy.eta.copy(),
        rho=policy.rho.copy(),
        residual=residual,
        trace=trace.summary() if trace is not None else {},
        metadata=meta,
    )


def nonincreasing_violation(y: np.ndarray) -> float:
    """Largest rise ``y[j] - y[i]`` over ``i < j`` (<= 0 for a nonincreasing array)."""
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        return -math.inf
    running_min = np.minimum.accumulate(y)[:-1]
    return float(np.max(y[1:] - running_min))


def nondecreasing_violation(y: np.ndarray) -> float:
    return nonincreasing_violation(-np.asarray(y, dtype=float))


def zero_left_segment(eta: np.ndarray, tol: float = 0.0) -> int:
    """Length of the leading run of nodes with ``eta <= tol``."""
    nz = np.flatnonzero(np.asarray(eta) > tol)
    return int(nz[0]) if nz.size else len(eta)


def solve(spec: ExperimentSpec) -> PiaResult:
    return pia.run(spec.model, spec.cost, spec.grid, spec.pia)


def run_benchmark(spec: ExperimentSpec) -> RunArtifact:
    if not isinstance(spec.variant, Benchmark):
        raise TypeError("run_benchmark needs a Benchmark variant")
    result = solve(spec)
    art = _artifact(spec, "benchmark", "base", result.value, result.policy, result.trace)
    v, eta, rho = art.v, art.eta, art.rho
    art.checks = {
        "converged_within_12": result.trace.converged and result.trace.n_iter <= 12,
        "eta_zero_on_left_segment": zero_left_segment(eta) > 0,
        "value_at_right_edge_in_[23,33]": bool(23 <= v[-1] <= 33),
    }
    art.diagnostics = {
        "iterations": result.trace.n_iter,
        "value_range": [float(v.min()), float(v.max())],
        "value_nondecreasing_violation": nondecreasing_violation(v),
        "eta_zero_nodes": zero_left_segment(eta),
        "eta_nonincreasing_violation": nonincreasing_violation(eta),
        "rho_nonincreasing_violation": nonincreasing_violation(rho),
        "interior_max_residual": pia.interior_max_residual(art.residual),
    }
    return art


def run_suboptimal(spec: ExperimentSpec) -> RunArtifact:
    variant = spec.variant
    if isinstance(variant, FixEta):
        cfg = replace(spec.pia, fixed_eta=variant.value, fixed_rho=None)
        name, label = "fix_eta", f"eta={variant.value:g}"
    elif isinstance(variant, FixRho):
        cfg = replace(spec.pia, fixed_rho=variant.value, fixed_eta=None)
        name, label = "fix_rho", f"rho={variant.value:g}"
    else:
        raise TypeError("run_suboptimal needs a FixEta or FixRho variant")
    spec = replace(spec, pia=cfg)
    result = solve(spec)
    art = _artifact(spec, name, label, result.value, result.policy, result.trace)
    checks = {"converged": bool(result.trace.converged)}
    if isinstance(variant, FixEta):
        checks["eta_fixed"] = bool(np.all(art.eta == variant.value))
        if variant.value == 1.0:
            checks["values_in_[68,87]"] = bool(np.all((art.v >= 68) & (art.v <= 87)))
    else:
        checks["rho_fixed"] = bool(np.all(art.rho == variant.value))
        if variant.value == 0.0:
            checks["value_at_right_edge_in_[48,62]"] = bool(48 <= art.v[-1] <= 62)
    art.checks = checks
    art.diagnostics = {"iterations": result.trace.n_iter, "value_range": [float(art.v.min()), float(art.v.max())]}
    return art


def perturbed_policy(policy: PolicyField, target: str, offset: float) -> PolicyField:
    if target == "eta":
        return PolicyField(policy.grid, np.clip(policy.eta + offset, 0.0, 1.0), policy.rho, policy.rho_max)
    return PolicyField(policy.grid, policy.eta, np.clip(policy.rho + offset, 0.0, policy.rho_max), policy.rho_max)


def perturbation_tolerance(base_bd, bd) -> float:
    """Three standard errors of the difference of the two Dirichlet estimates."""
    return 3.0 * math.hypot(base_bd.dirichlet_se, bd.dirichlet_se)


def run_perturbation(spec: ExperimentSpec, base_solution: PiaResult | tuple) -> list[RunArtifact]:
    """Fixed-policy evaluations of uniformly shifted copies of the base policy.

    The first artifact is the unshifted evaluation (offset 0); each
    evaluation is a single linear solve with boundary data re-estimated under
    the shifted policy.
    """
    if not isinstance(spec.variant, Perturb):
        raise TypeError("run_perturbation needs a Perturb variant")
    target = spec.variant.target
    policy = base_solution[1]
    base_value, base_bd = pia.evaluate_policy(policy, spec.model, spec.cost, spec.pia.mc)
    base = _artifact(spec, target, "offset=0", base_value, policy, extra={"offset": 0.0, "boundary": base_bd._asdict()})
    base.checks = {}
    out = [base]
    for off in spec.variant.offsets:
        shifted = perturbed_policy(policy, target, off)
        value, bd = pia.evaluate_policy(shifted, spec.model, spec.cost, spec.pia.mc)
        art = _artifact(spec, target, f"offset={off:+g}", value, shifted, extra={"offset": off, "boundary": bd._asdict()})
        tol = perturbation_tolerance(base_bd, bd)
        gap = float(np.min(art.v - base.v))
        art.diagnostics = {"min_value_gain": gap, "tolerance": tol}
        art.checks = {"not_below_base": bool(gap >= -tol)}
        out.append(art)
    return out


@dataclass
class SweepResult:
    parameter: str
    values: tuple[float, ...]
    artifacts: list[RunArtifact]
    failures: dict[float, str] = field(default_factory=dict)

    def field_matrix(self, name: str) -> np.ndarray:
        """Rows follow ``values`` (successful runs only); columns are grid nodes."""
        return np.vstack([getattr(a, name) for a in self.artifacts])

    @property
    def run_values(self) -> list[float]:
        return [a.metadata["sweep_value"] for a in self.artifacts]

    def comparison_rows(self):
        for a in self.artifacts:
            for row in zip(a.x, a.v, a.eta, a.rho):
                yield (a.metadata["sweep_value"], *row)

    def comparison_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.parameter, "x", "v", "eta", "rho"])
        for row in self.comparison_rows():
            w.writerow([repr(float(c)) for c in row])
        return buf.getvalue()

    def direction_violation(self, name: str, direction: str) -> float:
        """Largest pointwise move against ``direction`` between consecutive sweep values."""
        m = self.field_matrix(name)
        order = np.argsort(self.run_values)
        steps = np.diff(m[order], axis=0)
        if steps.size == 0:
            return -math.inf
        return float(np.max(-steps if direction == "up" else steps))

    def follows(self, name: str, direction: str, band: float = BAND) -> bool:
        return self.direction_violation(name, direction) <= band


def run_sweep(spec: ExperimentSpec, workers: int = 1) -> SweepResult:
    if not isinstance(spec.variant, Sweep):
        raise TypeError("run_sweep needs a Sweep variant")
    param = spec.variant.parameter
    values = spec.variant.values or default_sweep_values(param, spec.model, spec.cost)

    def one(val):
        model, cost = with_parameter(spec.model, spec.cost, param, val)
        sub = replace(spec, model=model, cost=cost)
        result = solve(sub)
        art = _artifact(sub, param, f"{param}={val:g}", result.value, result.policy, result.trace, {"sweep_value": val})
        art.checks = {"converged": result.trace.converged}
        return art

    def guarded(val):
        try:
            return one(val), None
        except Exception as exc:  # per-run failures must not abort the sweep
            log.error("sweep %s=%g failed: %s", param, val, exc)
            return None, f"{type(exc).__name__}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(guarded, values))
    else:
        outcomes = [guarded(v) for v in values]
    arts = [a for a, _ in outcomes if a is not None]
    failures = {v: err for v, (_, err) in zip(values, outcomes) if err is not None}
    return SweepResult(param, tuple(values), arts, failures)
