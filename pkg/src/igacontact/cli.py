"""Command line runner for the benchmark scenarios.

A run executes one scenario for every combination of the requested sweep
axes (formulation, mortar kind, Gauss point count) and writes one output
directory per sweep point. Exit codes: 0 all points solved, 2 a solver
aborted, 1 bad configuration or usage.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace

from .assembly import FORMULATIONS, PASS_MODES, PENALTY_MODES, ContactError
from .mesh import SceneError
from .mortar import MORTAR_KINDS, MortarError
from .report import write_run_outputs
from .scenarios import SCENARIOS, get_scenario
from .solver import Model, SolverError
from .xmortar import ExtendedMortarError


class ConfigError(ValueError):
    pass


def _split(raw: str | None, valid: tuple[str, ...] | None, what: str) -> list[str] | None:
    if raw is None:
        return None
    items = [s.strip() for s in raw.split(",") if s.strip()]
    if not items:
        raise ConfigError(f"{what} list is empty")
    if valid is not None:
        for it in items:
            if it not in valid:
                raise ConfigError(f"unknown {what} {it!r}, pick from {valid}")
    return items


def _point_name(formulation: str, pass_mode: str, mortar: str, ngp: int) -> str:
    mt = mortar.replace("*", "star")
    return f"{formulation}_{pass_mode}_{mt}_ngp{ngp}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="igacontact",
        description="isogeometric contact benchmark runner",
    )
    sub = parser.add_subparsers(dest="command")
    run = sub.add_parser("run", help="solve a scenario and write result tables")
    run.add_argument("--scenario", required=True, choices=sorted(SCENARIOS))
    run.add_argument("--formulation", default=None,
                     help="comma list from gpts,sm,xm (default: scenario preset)")
    run.add_argument("--pass", dest="pass_mode", default=None,
                     choices=PASS_MODES, help="full or 2hp")
    run.add_argument("--mortar", default=None,
                     help="comma list of mortar kinds, e.g. lmls*,gls")
    run.add_argument("--ngp", default=None,
                     help="comma list of Gauss point counts per element")
    run.add_argument("--eps", type=float, default=None,
                     help="penalty parameter (reference-modulus units)")
    run.add_argument("--rbq", choices=("on", "off"), default=None,
                     help="refined boundary quadrature")
    run.add_argument("--penalty-mode", choices=PENALTY_MODES, default=None)
    run.add_argument("--mesh-level", type=int, default=0,
                     help="uniform refinements of the preset mesh")
    run.add_argument("--outdir", default="runs")
    run.add_argument("--plots", dest="plots", action="store_true", default=True)
    run.add_argument("--no-plots", dest="plots", action="store_false")
    return parser


def run_command(args) -> int:
    try:
        scenario = get_scenario(args.scenario, args.mesh_level)
    except KeyError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return 1

    base = scenario.config
    try:
        forms = _split(args.formulation, FORMULATIONS, "formulation") or [base.formulation]
        mortars = _split(args.mortar, MORTAR_KINDS, "mortar kind") or [base.mortar]
        ngps_raw = _split(args.ngp, None, "ngp") or [str(base.ngp)]
        ngps = []
        for s in ngps_raw:
            try:
                ngps.append(int(s))
            except ValueError:
                raise ConfigError(f"ngp must be an integer, got {s!r}") from None
            if ngps[-1] < 1:
                raise ConfigError("ngp must be at least 1")
    except ConfigError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return 1

    failures = 0
    for form in forms:
        for mortar in mortars:
            for ngp in ngps:
                try:
                    cfg = replace(
                        base,
                        formulation=form,
                        mortar=mortar,
                        ngp=ngp,
                        pass_mode=args.pass_mode or base.pass_mode,
                        eps=args.eps if args.eps is not None else base.eps,
                        rbq=(args.rbq == "on") if args.rbq is not None else base.rbq,
                        penalty_mode=args.penalty_mode or base.penalty_mode,
                    )
                except ValueError as e:
                    print(f"error: config: {e}", file=sys.stderr)
                    return 1
                name = _point_name(cfg.formulation, cfg.pass_mode, cfg.mortar, cfg.ngp)
                outdir = os.path.join(args.outdir, f"{scenario.name}_{name}")
                t0 = time.perf_counter()
                print(f"run: {scenario.name} {name} -> {outdir}")
                try:
                    model = Model(scenario.scene, cfg, scenario.settings)
                    u, report = model.solve()
                except (SolverError, ContactError, MortarError,
                        ExtendedMortarError, SceneError) as e:
                    print(f"error: solver: {name}: {e}", file=sys.stderr)
                    failures += 1
                    continue
                write_run_outputs(outdir, scenario, cfg, model, u, report,
                                  mesh_level=args.mesh_level, plots=args.plots)
                status = "ok" if report.converged else "aborted"
                print(f"run: {name} {status}, "
                      f"{len([r for r in report.steps if r.scheduled])} steps, "
                      f"{time.perf_counter() - t0:.1f}s")
                if not report.converged:
                    print(f"error: solver: {name}: {report.message}",
                          file=sys.stderr)
                    failures += 1
    return 2 if failures else 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse uses exit code 2 for usage errors; the contract here is
        # 1 for configuration problems, so remap (but keep --help at 0).
        return 0 if e.code == 0 else 1
    if args.command != "run":
        parser.print_usage(sys.stderr)
        return 1
    try:
        return run_command(args)
    except ConfigError as e:
        print(f"error: config: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
