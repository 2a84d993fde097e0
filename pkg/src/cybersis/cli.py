"""Command-line entry point.

    cybersis <command> [--config FILE] [--set KEY=VALUE ...] [--output-dir DIR]

Exit status: 0 on success, 2 when policy improvement stops without meeting
its tolerance, 1 on any error or failed check.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import bvp, pia
from .config import ConfigError, RunConfig, parse_config
from .experiments import (
    Benchmark,
    ExperimentSpec,
    FixEta,
    FixRho,
    Perturb,
    RunArtifact,
    Sweep,
    _artifact,
    canonical_json,
    content_hash,
    run_benchmark,
    run_perturbation,
    run_suboptimal,
    run_sweep,
)
from .model import ControlPair, drift, diffusion
from .sde_mc import estimate_cost

log = logging.getLogger("cybersis")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2
COMMANDS = ("solve", "evaluate", "benchmark", "suboptimal", "perturb", "sweep", "validate")


class Outcome:
    """Collects artifacts, check results and convergence flags for one command."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.root = Path(cfg.output_dir)
        self.files: list[Path] = []
        self.checks: dict[str, bool] = {}
        self.not_converged: list[str] = []

    def add(self, art: RunArtifact, gate: bool = True):
        if art.trace and not art.trace.get("converged", True):
            self.not_converged.append(str(art.relpath()))
        if gate:
            for name, ok in art.checks.items():
                self.checks[f"{art.relpath()}:{name}"] = bool(ok)
        self.files.extend(art.write(self.root, plot=self.cfg.experiment.plots))
        trace_path = self.root / f"{art.relpath()}.json"
        trace_path.write_text(
            canonical_json({"checks": art.checks, "diagnostics": art.diagnostics, "trace": art.trace, "metadata": art.metadata})
            + "\n"
        )
        self.files.append(trace_path)

    def add_text(self, relpath: str, text: str):
        path = self.root / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.files.append(path)

    def status(self) -> int:
        if not all(self.checks.values()):
            return EXIT_ERROR
        if self.not_converged:
            return EXIT_NOT_CONVERGED
        return EXIT_OK

    def finish(self) -> int:
        self.root.mkdir(parents=True, exist_ok=True)
        cfg_path = self.root / "config.json"
        cfg_path.write_text(self.cfg.dumps())
        files = sorted({f.resolve() for f in self.files + [cfg_path]})
        manifest = {
            "command": self.command,
            "status": self.status(),
            "checks": self.checks,
            "not_converged": self.not_converged,
            "files": [{"path": str(f.relative_to(self.root.resolve())), "sha1": content_hash(f.read_bytes())} for f in files],
        }
        (self.root / "manifest.json").write_text(canonical_json(manifest) + "\n")
        for name, ok in self.checks.items():
            print(f"{'PASS' if ok else 'FAIL'}  {name}")
        for name in self.not_converged:
            print(f"NOT CONVERGED  {name}", file=sys.stderr)
        return self.status()


def spec_for(cfg: RunConfig, variant=None) -> ExperimentSpec:
    return ExperimentSpec(cfg.experiment.name, cfg.model, cfg.cost, cfg.grid, cfg.pia, variant or Benchmark())


def cmd_solve(cfg: RunConfig, out: Outcome):
    spec = spec_for(cfg)
    result = pia.run(cfg.model, cfg.cost, cfg.grid, cfg.pia)
    art = _artifact(spec, "solve", "base", result.value, result.policy, result.trace)
    art.diagnostics = {"iterations": result.trace.n_iter, "value_at_right_edge": float(art.v[-1])}
    out.add(art)


def cmd_evaluate(cfg: RunConfig, out: Outcome):
    spec = spec_for(cfg)
    eta, rho = cfg.experiment.evaluate_eta, cfg.experiment.evaluate_rho
    policy = bvp.PolicyField.constant(cfg.grid, eta, rho, cfg.pia.rho_max)
    value, bd = pia.evaluate_policy(policy, cfg.model, cfg.cost, cfg.mc)
    art = _artifact(spec, "evaluate", f"eta={eta:g},rho={rho:g}", value, policy, extra={"boundary": bd._asdict()})
    out.add(art)


def cmd_benchmark(cfg: RunConfig, out: Outcome):
    out.add(run_benchmark(spec_for(cfg)))


def _suboptimal_variant(item: str):
    ctl, _, val = item.partition("=")
    return FixEta(float(val)) if ctl == "eta" else FixRho(float(val))


def cmd_suboptimal(cfg: RunConfig, out: Outcome):
    for item in cfg.experiment.suboptimal:
        out.add(run_suboptimal(spec_for(cfg, _suboptimal_variant(item))))


def cmd_perturb(cfg: RunConfig, out: Outcome):
    base = pia.run(cfg.model, cfg.cost, cfg.grid, cfg.pia)
    if not base.trace.converged:
        out.not_converged.append("perturb/base")
    for target in cfg.experiment.perturb_targets:
        spec = spec_for(cfg, Perturb(target, cfg.experiment.perturb_offsets))
        arts = run_perturbation(spec, base)
        for art in arts:
            out.add(art)
        if cfg.experiment.plots:
            from .plots import family_figure

            path = out.root / spec.name / target / "family.svg"
            out.files.append(family_figure(arts, path, f"{target} perturbations"))


def cmd_sweep(cfg: RunConfig, out: Outcome):
    for param, values in sorted(cfg.experiment.sweeps.items()):
        spec = spec_for(cfg, Sweep(param, tuple(values or ())))
        res = run_sweep(spec, workers=cfg.workers)
        for art in res.artifacts:
            out.add(art)
        out.add_text(f"{spec.name}/{param}/comparison.csv", res.comparison_csv())
        for val, err in res.failures.items():
            out.checks[f"{spec.name}/{param}/{param}={val:g}:completed"] = False
            print(f"sweep {param}={val:g} failed: {err}", file=sys.stderr)
        if cfg.experiment.plots and res.artifacts:
            from .plots import family_figure

            out.files.append(family_figure(res.artifacts, out.root / spec.name / param / "family.svg", f"{param} sweep"))


def _manufactured_check(cfg: RunConfig) -> tuple[bool, str]:
    """Fixed-policy solve against v = x^2 on two grids."""
    p, k = cfg.model, cfg.cost
    errors = []
    for n in (500, 1000):
        grid = bvp.Grid(cfg.grid.x_lo, cfg.grid.x_hi, n)
        policy = bvp.PolicyField.constant(grid, 0.5, 0.5, cfg.pia.rho_max)
        x = grid.nodes
        c = ControlPair(0.5, 0.5)
        sig = diffusion(x, p)
        source = p.delta * x**2 - drift(x, c, p) * 2 * x - sig**2
        bc = bvp.BoundaryCondition(grid.x_lo**2, 2 * grid.x_hi)
        v = bvp.solve_bellman(policy, p, k, bc, source=source)
        errors.append(float(np.max(np.abs(v.values - x**2))))
    ratio = errors[0] / errors[1] if errors[1] > 0 else float("inf")
    return ratio >= 1.8, f"error n=500 {errors[0]:.3e}, n=1000 {errors[1]:.3e}, ratio {ratio:.2f} (need >= 1.8)"


def cmd_validate(cfg: RunConfig, out: Outcome):
    rows = []
    k, p = cfg.cost, cfg.model
    constant = k.aI == k.amI == k.amS == k.ar == 0.0
    result = pia.run(p, k, cfg.grid, cfg.pia)
    if constant:
        target = k.a0 / p.delta
        err = float(np.max(np.abs(result.value.values - target)))
        rows.append(("constant cost: PIA value = a0/delta", err < 1e-6, f"target {target:g}, max error {err:.2e}"))
        est = estimate_cost(0.5, result.policy, p, k, cfg.mc)
        ok = est.contains(target, extra=est.tail_bound)
        rows.append(
            ("constant cost: MC J(0.5) = a0/delta", ok, f"estimate {est.mean:.5f} +- {est.std_err:.1e}, tail {est.tail_bound:.1e}")
        )
    ok, detail = _manufactured_check(cfg)
    rows.append(("manufactured solution v = x^2", ok, detail))
    if not result.trace.converged:
        out.not_converged.append("validate/solve")
    for chk in pia.mc_cross_validate(result.value, result.policy, p, k, cfg.mc, cfg.experiment.probes):
        rows.append(
            (
                f"MC cross-validation x={chk.x:g}",
                chk.passed,
                f"ode {chk.value:.4f}, mc {chk.estimate.mean:.4f}, tolerance {chk.tolerance:.3f}",
            )
        )
    width = max(len(r[0]) for r in rows)
    table = "\n".join(f"{'PASS' if ok else 'FAIL'}  {name.ljust(width)}  {detail}" for name, ok, detail in rows)
    print(table)
    out.add_text("validate.txt", table + "\n")
    for name, ok, _ in rows:
        out.checks[name] = bool(ok)


HANDLERS = {
    "solve": cmd_solve,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
    "suboptimal": cmd_suboptimal,
    "perturb": cmd_perturb,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
}


def dispatch(command: str, cfg: RunConfig) -> int:
    out = Outcome(cfg, command)
    HANDLERS[command](cfg, out)
    return out.finish()


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would read as non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cybersis", description="Optimal cyber-risk controls for the stochastic SIS model.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("-c", "--config", type=Path, help="JSON run configuration")
    parser.add_argument(
        "-s", "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config entry (repeatable, last wins)"
    )
    parser.add_argument("-o", "--output-dir", help="shorthand for --set output_dir=DIR")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = list(args.overrides)
    if args.output_dir is not None:
        overrides.append("output_dir=" + json.dumps(args.output_dir))
    try:
        cfg = parse_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore")
            return dispatch(args.command, cfg)
    except Exception as exc:
        log.debug("command failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
