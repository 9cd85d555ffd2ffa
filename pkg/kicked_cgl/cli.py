"""Command-line runner.

    kcgl simulate   --config run.json --seed 7 --out results/
    kcgl couple     --config run.json
    kcgl mix        --replicas 2000
    kcgl stationary
    kcgl verify     --suite all

Exit codes: 0 all gates pass, 2 a gated check failed, 3 configuration error,
4 replica failure budget exceeded or a trajectory diverged.
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

from .config import SUITES, RunConfig, parse_config
from .errors import ConfigError, DivergenceError, KickedCGLError
from .kicks import make_streams, simulate
from .spectral import SpectralField, scale_to_energy, smooth_random_field
from .suites import RunManifest, run_suite
from .telemetry import EventDumper, Metrics, MetricsHook
from .telemetry.emitters import STOPPING_COLUMNS, trajectory_columns, write_csv, write_json

EXIT_OK = 0
EXIT_GATE = 2
EXIT_CONFIG = 3
EXIT_BUDGET = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kcgl", description="Kicked complex Ginzburg-Landau laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, default=None, help="JSON config file (default: all defaults)")
        p.add_argument("--seed", type=int, default=None, help="Root seed (overrides experiment.seed)")
        p.add_argument("--out", default=None, help="Output directory (overrides output_dir)")
        p.add_argument("--replicas", type=int, default=None, help="Replica count (overrides experiment.replicas)")
        p.add_argument("--metrics", action="store_true", help="Print a Prometheus metrics dump at the end")

    common(sub.add_parser("simulate", help="One kicked trajectory with dense samples"))
    common(sub.add_parser("couple", help="One coupled run until ell"))
    common(sub.add_parser("mix", help="Mixing curve suite"))
    common(sub.add_parser("stationary", help="Stationary measure suite"))
    verify = sub.add_parser("verify", help="Run verification suites")
    common(verify)
    verify.add_argument("--suite", choices=SUITES, default="all", help="Suite to run (default: all)")
    return parser


def _load(args: argparse.Namespace) -> RunConfig:
    cfg = parse_config(args.config)
    return cfg.with_overrides(seed=args.seed, replicas=args.replicas, output_dir=args.out)


def _initial_state(cfg: RunConfig) -> SpectralField:
    grid = cfg.build_grid()
    rng = make_streams(cfg.experiment.seed, 2**30).kicks
    return scale_to_energy(smooth_random_field(grid, rng), 10.0, cfg.energy_params())


def _cmd_simulate(cfg: RunConfig, hook: MetricsHook) -> int:
    exp = cfg.experiment
    u0 = _initial_state(cfg)
    log = simulate(
        u0, exp.horizon, exp.time_grid, cfg.kick_spec(), cfg.clock(), cfg.flow_params(),
        make_streams(exp.seed), hook,
    )
    out = Path(cfg.output_dir)
    write_csv(out / "trajectory.csv", trajectory_columns(4), log.sample_rows(cfg.energy_params(), 4))
    write_json(out / "trajectory_events.json", log.events())
    if log.diverged:
        print(f"⚠ Trajectory diverged: {log.failure}")
        return EXIT_BUDGET
    print(f"✓ {len(log.kick_times)} kicks on [0, {exp.horizon}], samples written to {out}")
    return EXIT_OK


def _cmd_couple(cfg: RunConfig, hook: MetricsHook) -> int:
    from .coupling import run_until_ell

    grid = cfg.build_grid()
    result = run_until_ell(
        _initial_state(cfg), SpectralField.zeros(grid), cfg.coupling_config(), cfg.kick_spec(grid),
        cfg.clock(), cfg.flow_params(), make_streams(cfg.experiment.seed), hook,
    )
    out = Path(cfg.output_dir)
    dumper = EventDumper(enabled=True, path=out / "couple_events.jsonl", buffer_size=500)
    dumper.path.write_text("")
    dumper.write_many(result.events(cfg.energy_params()))
    dumper.flush()
    write_csv(out / "stopping.csv", STOPPING_COLUMNS, [result.summary_row()])
    if result.resolved:
        print(f"✓ ell = {result.ell} after {result.record.cycles} cycle(s)")
    else:
        print(f"⚠ ell unresolved within max_kicks={cfg.coupling.max_kicks}")
    return EXIT_OK


def _report(manifest: RunManifest) -> None:
    print("=" * 70)
    for suite, verdicts in manifest.suites.items():
        print(f"[{suite}]")
        for v in verdicts:
            mark = "✓" if v.passed else "⚠"
            gate = "" if v.gated else " (report)"
            print(f"  {mark} {v.name}{gate}: {v.detail}")
    for error in manifest.errors:
        print(f"⚠ {error}")
    print("=" * 70)
    print(f"exit {manifest.exit_code}, {len(manifest.files)} files, {manifest.wall_time:.1f}s")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as e:
        print(f"⚠ Configuration error:\n{e}", file=sys.stderr)
        return EXIT_CONFIG

    hook = MetricsHook(Metrics())
    try:
        if args.command == "simulate":
            code = _cmd_simulate(cfg, hook)
        elif args.command == "couple":
            code = _cmd_couple(cfg, hook)
        else:
            suite = {"mix": "mixing", "stationary": "stationary"}.get(args.command, getattr(args, "suite", "all"))
            manifest = run_suite(suite, cfg, hook)
            _report(manifest)
            code = manifest.exit_code
    except DivergenceError as e:
        print(f"⚠ Trajectory diverged: {e}", file=sys.stderr)
        code = EXIT_BUDGET
    except KickedCGLError as e:
        print(f"⚠ {type(e).__name__}: {e}", file=sys.stderr)
        code = EXIT_GATE
    if args.metrics:
        print(hook.metrics.export_prometheus())
    return code


if __name__ == "__main__":
    sys.exit(main())
