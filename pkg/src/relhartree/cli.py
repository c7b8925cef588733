"""Command line entry point: ``relhartree {hartree,vlasov,sweep,check,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .diagnostics import hartree_record
from .fields import FieldSolverError, Kernel
from .hartree import CoverageError, FieldSolver, OrthonormalizationError, load_checkpoint
from .io import write_json
from .runs import (
    AssumptionError,
    BlowUpError,
    RunReport,
    epsilon_sweep,
    run_hartree,
    run_vlasov,
    write_diagnostics_csv,
    write_manifest,
    write_pairings_csv,
    write_vlasov_csv,
)
from .spectral import RepresentationError
from .vlasov import BoundaryLossError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

NUMERICAL_ERRORS = (
    BlowUpError,
    BoundaryLossError,
    FieldSolverError,
    CoverageError,
    OrthonormalizationError,
    RepresentationError,
    FloatingPointError,
)

log = logging.getLogger("relhartree")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relhartree", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def run_parser(name: str, help_text: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, help="seed recorded in the manifest (overrides the config)")
        sp.add_argument("--override-assumption-b", action="store_true",
                        help="run attractive cases even when the smallness margin fails")
        return sp

    run_parser("hartree", "Hartree run(s) for every eps in the config")
    run_parser("vlasov", "Vlasov-Poisson reference run")
    run_parser("sweep", "eps sweep against the Vlasov reference")
    chk = sub.add_parser("check", help="diagnostics of a saved checkpoint")
    chk.add_argument("checkpoint", help="checkpoint directory")
    rep = sub.add_parser("report", help="re-render report.json as CSV/JSON tables")
    rep.add_argument("run_dir", help="directory holding report.json")
    rep.add_argument("--out", help="where to write the tables (default: run_dir)")
    return p


def _load(args) -> tuple[RunConfig, Path | None]:
    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    config = load_config(args.config, seed=args.seed)
    out = args.out or config.output_dir
    return config, Path(out) if out else None


def _cmd_hartree(args) -> int:
    config, out = _load(args)
    items, rows = [], []
    for eps in config.eps:
        traj = run_hartree(config, eps, out_dir=out, override_assumption_b=args.override_assumption_b)
        items.extend((eps, r) for r in traj.records)
        rows.extend([eps, t, m, v] for t, vals in zip(traj.times, traj.pairings) for m, v in enumerate(vals))
        print(f"eps={eps:g}: J={traj.n_orbitals} wall={traj.wall_clock:.2f}s "
              + json.dumps(traj.conservation_summary()))
    if out is not None:
        write_manifest(out, config, "hartree")
        write_diagnostics_csv(out / "diagnostics.csv", items)
        write_pairings_csv(out / "pairings.csv", rows)
    return EXIT_OK


def _cmd_vlasov(args) -> int:
    config, out = _load(args)
    traj = run_vlasov(config)
    print(json.dumps(traj.conservation_summary()))
    if out is not None:
        write_manifest(out, config, "vlasov")
        write_vlasov_csv(out / "diagnostics.csv", traj)
        write_pairings_csv(out / "pairings.csv", [[0.0, t, m, v] for t, vals in zip(traj.times, traj.pairings)
                                                  for m, v in enumerate(vals)])
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config, out = _load(args)
    report = epsilon_sweep(config, out_dir=out, override_assumption_b=args.override_assumption_b)
    for e in report.eps:
        key = RunReport.key(e)
        if key in report.distances:
            print(f"eps={e:g} max_t D={max(report.distances[key]):.6g}")
        else:
            print(f"eps={e:g} FAILED: {report.failures.get(key)}")
    print(f"monotone={report.monotone} ratio={report.distance_ratio}")
    return EXIT_NUMERIC if report.failed else EXIT_OK


def _cmd_check(args) -> int:
    path = Path(args.checkpoint)
    if not (path / "manifest.json").exists():
        raise ConfigError(f"{path} holds no checkpoint manifest")
    state, manifest = load_checkpoint(path)
    kappa = manifest.get("kappa")
    solver = None
    if kappa is not None:
        solver = FieldSolver(state.grid, kappa, Kernel(**manifest.get("kernel", {})))
    record = hartree_record(state, solver)
    print(json.dumps(record.to_dict(), indent=2))
    return EXIT_OK


def _cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    try:
        data = json.loads((run_dir / "report.json").read_text())
        report = RunReport.from_dict(data)
    except FileNotFoundError as exc:
        raise ConfigError(f"no report.json in {run_dir}") from exc
    except (json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"unreadable report: {exc}") from exc
    out = Path(args.out) if args.out else run_dir
    report.write(out)
    summary = {k: data[k] for k in ("monotone", "distance_ratio", "empirical_orders", "failed")}
    write_json(out / "summary.json", summary)
    print(json.dumps(summary))
    return EXIT_OK


COMMANDS = {
    "hartree": _cmd_hartree,
    "vlasov": _cmd_vlasov,
    "sweep": _cmd_sweep,
    "check": _cmd_check,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, AssumptionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # inputs that validate individually but cannot be combined (e.g. profile vs grid)
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
