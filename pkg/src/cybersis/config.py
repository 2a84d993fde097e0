"""Run configuration: a single JSON document plus ``key=value`` overrides.

Schema (every section optional, every key defaulted)::

    {
      "model":  {"alpha", "beta", "gamma", "sigma", "delta"},
      "cost":   {"a0", "aI", "amI", "amS", "ar"},
      "grid":   {"x_lo", "x_hi", "n"},
      "pia":    {"eps", "max_iter", "mode", "refresh_boundary", "rho_max", "eta0", "rho0"},
      "mc":     {"dt", "horizon", "n_paths", "seed", "clamp_eps", "batch_size",
                 "quadrature", "tail_tol", "fd_step", "neumann_rel_tol"},
      "experiment": {"name", "suboptimal", "perturb_targets", "perturb_offsets",
                     "sweeps", "evaluate_eta", "evaluate_rho", "probes", "plots"},
      "output_dir": "runs/benchmark",
      "workers": 1
    }

Override keys are dotted paths (``mc.seed=42``); a bare key is accepted when
it names exactly one field across the sections (``delta=0``). Values are
parsed as JSON when possible and kept as strings otherwise.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .bvp import Grid
from .experiments import DEFAULT_OFFSETS, SWEEP_PARAMETERS
from .model import CostParams, ModelParams
from .pia import PiaConfig
from .sde_mc import McConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentOptions:
    name: str = "run"
    suboptimal: tuple[str, ...] = ("rho=0", "eta=1")
    perturb_targets: tuple[str, ...] = ("eta", "rho")
    perturb_offsets: tuple[float, ...] = DEFAULT_OFFSETS
    sweeps: dict = field(default_factory=lambda: {"alpha": None, "ar": None, "amI": None})
    evaluate_eta: float = 1.0
    evaluate_rho: float = 0.0
    probes: tuple[float, ...] = (0.2, 0.5, 0.8)
    plots: bool = True

    def __post_init__(self):
        for item in self.suboptimal:
            ctl, _, val = str(item).partition("=")
            if ctl not in ("eta", "rho") or not val:
                raise ValueError(f"suboptimal entries look like 'rho=0' or 'eta=1', got {item!r}")
            float(val)
        for t in self.perturb_targets:
            if t not in ("eta", "rho"):
                raise ValueError(f"perturb target must be eta or rho, got {t!r}")
        for name in self.sweeps:
            if name not in SWEEP_PARAMETERS:
                raise ValueError(f"cannot sweep {name!r}; choose from {SWEEP_PARAMETERS}")
        for attr in ("suboptimal", "perturb_targets", "perturb_offsets", "probes"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))


SECTIONS = {
    "model": ModelParams,
    "cost": CostParams,
    "grid": Grid,
    "pia": PiaConfig,
    "mc": McConfig,
    "experiment": ExperimentOptions,
}
# keys owned elsewhere in the document
_EXCLUDED = {"pia": {"mc", "fixed_eta", "fixed_rho"}, "mc": {"workers"}}
TOP_LEVEL = {"output_dir", "workers"}


def section_keys(section: str) -> set[str]:
    return {f.name for f in fields(SECTIONS[section])} - _EXCLUDED.get(section, set())


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams = field(default_factory=ModelParams)
    cost: CostParams = field(default_factory=CostParams)
    grid: Grid = field(default_factory=Grid)
    pia: PiaConfig = field(default_factory=PiaConfig)
    experiment: ExperimentOptions = field(default_factory=ExperimentOptions)
    output_dir: str = "runs"
    workers: int = 1

    @property
    def mc(self) -> McConfig:
        return self.pia.mc

    @property
    def seed(self) -> int:
        return self.pia.mc.seed

    def to_dict(self) -> dict:
        pia = {k: v for k, v in asdict(self.pia).items() if k in section_keys("pia")}
        pia["mode"] = self.pia.mode.value
        mc = {k: v for k, v in asdict(self.mc).items() if k in section_keys("mc")}
        exp = asdict(self.experiment)
        for k, v in exp.items():
            if isinstance(v, tuple):
                exp[k] = list(v)
        return {
            "model": asdict(self.model),
            "cost": asdict(self.cost),
            "grid": asdict(self.grid),
            "pia": pia,
            "mc": mc,
            "experiment": exp,
            "output_dir": self.output_dir,
            "workers": self.workers,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _resolve_key(key: str) -> tuple[str, ...]:
    parts = tuple(key.split("."))
    if len(parts) == 1:
        if key in TOP_LEVEL:
            return parts
        owners = [s for s in SECTIONS if key in section_keys(s)]
        if len(owners) == 1:
            return (owners[0], key)
        if not owners:
            raise ConfigError(f"unknown key {key!r}")
        raise ConfigError(f"ambiguous key {key!r}; qualify it as one of {[o + '.' + key for o in owners]}")
    section = parts[0]
    if section not in SECTIONS:
        raise ConfigError(f"unknown section {section!r} in key {key!r}")
    if section == "experiment" and len(parts) == 3 and parts[1] == "sweeps":
        return parts
    if len(parts) != 2 or parts[1] not in section_keys(section):
        raise ConfigError(f"unknown key {key!r}")
    return parts


def apply_overrides(doc: dict, overrides) -> dict:
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        key, sep, text = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path = _resolve_key(key.strip())
        node = doc
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override inside non-object {part!r}")
        node[path[-1]] = _parse_value(text.strip())
    return doc


def _check_keys(doc: dict):
    for key, val in doc.items():
        if key in TOP_LEVEL:
            continue
        if key not in SECTIONS:
            raise ConfigError(f"unknown key {key!r}")
        if not isinstance(val, dict):
            raise ConfigError(f"section {key!r} must be an object")
        unknown = set(val) - section_keys(key)
        if unknown:
            raise ConfigError(f"unknown key {key}.{sorted(unknown)[0]}")


def build(doc: dict) -> RunConfig:
    _check_keys(doc)
    try:
        workers = int(doc.get("workers", 1))
        mc = McConfig(**doc.get("mc", {}), workers=workers)
        pia_cfg = PiaConfig(**doc.get("pia", {}), mc=mc)
        return RunConfig(
            model=ModelParams(**doc.get("model", {})),
            cost=CostParams(**doc.get("cost", {})),
            grid=Grid(**doc.get("grid", {})),
            pia=pia_cfg,
            experiment=ExperimentOptions(**doc.get("experiment", {})),
            output_dir=str(doc.get("output_dir", "runs")),
            workers=workers,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_document(path) -> dict:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def parse_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the file at ``path`` (if any), then ``overrides`` in order."""
    doc = load_document(path) if path is not None else {}
    return build(apply_overrides(doc, overrides))
