"""Command line entry point: ``lerayns run|bounds|check|analyze|compare``.

Exit codes: 0 all checks pass, 1 usage or configuration error, 2 an
analysis or audit failed, 3 the solver aborted.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bounds import BoundReport, all_scalar_reports
from .checkpoint import CheckpointError, read_checkpoint
from .config import ConfigError, load_config, parse_analysis_config
from .experiment import (
    EXIT_ANALYSIS,
    EXIT_OK,
    EXIT_USAGE,
    AnalysisResult,
    dumps,
    resolve_output_dir,
    run_analysis,
    run_experiment,
    write_analyses,
)
from .fields import divergence_residual, hermitian_defect
from .norms import NormSpec, norm_of_array, outer_shell_fraction
from .solver import Trajectory


class UsageError(Exception):
    pass


def _emit(args, payload, table: str) -> None:
    if args.json:
        sys.stdout.write(dumps(payload))
    else:
        sys.stdout.write(table.rstrip("\n") + "\n")


def _report_table(reports: list[BoundReport]) -> str:
    rows = [f"{'name':36s} {'lhs':>14s} {'rhs':>14s} {'margin':>12s}  status"]
    for r in reports:
        rows.append(f"{r.name:36s} {r.lhs:14.8g} {r.rhs:14.8g} {r.margin:12.4g}  {r.status}")
    return "\n".join(rows)


def _results_table(results: list[AnalysisResult]) -> str:
    lines = []
    for i, res in enumerate(results):
        lines.append(f"[{i}] {res.kind}: {res.status}")
        for key, value in res.payload.items():
            if key == "reports":
                lines.append("    " + _report_table_dicts(value).replace("\n", "\n    "))
            elif not isinstance(value, (dict, list)):
                lines.append(f"    {key} = {value}")
            else:
                lines.append(f"    {key} = {json.dumps(value, default=str)}")
    return "\n".join(lines) if lines else "no analyses"


def _report_table_dicts(reports: list[dict]) -> str:
    rows = []
    for r in reports:
        rows.append(f"{r['name']:36s} {r['lhs']!s:>22s} {r['rhs']!s:>22s}  {r['status']}")
    return "\n".join(rows)


# ---------------------------------------------------------------------------
# subcommands


def cmd_bounds(args) -> int:
    reports = all_scalar_reports()
    _emit(args, [r.to_dict() for r in reports], _report_table(reports))
    return EXIT_OK if all(r.status != "fail" for r in reports) else EXIT_ANALYSIS


def cmd_check(args) -> int:
    path = Path(args.checkpoint)
    if not path.exists():
        raise UsageError(f"no such checkpoint: {path}")
    try:
        ck = read_checkpoint(path)
    except CheckpointError as exc:
        _emit(args, {"file": str(path), "status": "corrupt", "reason": exc.reason, "error": str(exc)},
              f"{path}: corrupt ({exc.reason})")
        return EXIT_ANALYSIS
    u = ck.field
    g = u.grid
    values = g.inverse(u.coeffs)
    l2 = norm_of_array(g, u.coeffs, NormSpec.l2())
    div = divergence_residual(g, u.coeffs)
    herm = hermitian_defect(g, u.coeffs)
    finite = bool(np.all(np.isfinite(u.coeffs)))
    ok = finite and div <= 1e-10 * max(1.0, l2) and herm <= 1e-10 * max(1.0, l2)
    info = {
        "file": str(path),
        "status": "ok" if ok else "invalid",
        "t": ck.t,
        "grid": g.to_dict(),
        "finite": finite,
        "divergence_residual": div,
        "hermitian_defect": herm,
        "l2": l2,
        "dl2": norm_of_array(g, u.coeffs, NormSpec.dl2()),
        "sup": norm_of_array(g, u.coeffs, NormSpec.sup(), values),
        "outer_shell_fraction": outer_shell_fraction(g, values),
    }
    table = "\n".join(f"{k:22s} {v}" for k, v in info.items())
    _emit(args, info, table)
    return EXIT_OK if ok else EXIT_ANALYSIS


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    manifest, results = run_experiment(cfg, args.output)
    out = resolve_output_dir(cfg, args.output)
    if args.json:
        sys.stdout.write(dumps({"output": str(out), "manifest": manifest.to_dict(),
                                "analyses": [r.to_dict() for r in results]}))
    else:
        head = f"output: {out}\nexit: {manifest.exit_code}"
        if manifest.aborted:
            head += f"\nsolver aborted: {manifest.aborted}"
        sys.stdout.write(head + "\n" + _results_table(results) + "\n")
    return manifest.exit_code


def _load_traj(directory: str) -> Trajectory:
    try:
        return Trajectory.load(directory)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None


def cmd_analyze(args) -> int:
    traj = _load_traj(args.trajectory)
    analyses = parse_analysis_config(Path(args.analysis_config).read_text(encoding="utf-8"), traj.config.t_end)
    results = []
    for spec in analyses:
        try:
            results.append(run_analysis(traj, spec))
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        except ValueError as exc:
            results.append(AnalysisResult(spec.kind, "error", {"error": str(exc)}))
    if args.output:
        write_analyses(results, Path(args.output))
    _emit(args, [r.to_dict() for r in results], _results_table(results))
    return EXIT_ANALYSIS if any(r.failed for r in results) else EXIT_OK


def cmd_compare(args) -> int:
    from .decay import heat_flow_difference_series

    traj = _load_traj(args.trajectory)
    norms = [n.strip() for n in args.norms.split(",") if n.strip()]
    try:
        series = heat_flow_difference_series(traj, args.t0, norms)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    if args.output:
        series.to_csv(args.output)
    if args.json:
        names = series.ordered_names()
        payload = {"t0": series.notes["t0"], "columns": ["t"] + names,
                   "rows": [[float(t)] + [float(series[n][i]) for n in names] for i, t in enumerate(series.times)]}
        sys.stdout.write(dumps(payload))
    else:
        sys.stdout.write(series.to_csv())
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="write JSON to stdout instead of tables")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="lerayns", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run a configured experiment")
    p.add_argument("config", help="TOML experiment configuration")
    p.add_argument("-o", "--output", help="output directory (overrides the config and LERAYNS_OUTPUT_DIR)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bounds", parents=[common], help="certify the scalar constants and integral bounds")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("check", parents=[common], help="audit a stored checkpoint")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("analyze", parents=[common], help="run analyses on a saved trajectory")
    p.add_argument("trajectory", help="directory written by 'run'")
    p.add_argument("analysis_config", help="TOML file with [[analysis]] tables")
    p.add_argument("-o", "--output", help="directory for analysis files")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", parents=[common], help="difference between a run and the heat flow from u(t0)")
    p.add_argument("trajectory", help="directory written by 'run'")
    p.add_argument("--t0", type=float, required=True, help="anchor time; must be a snapshot time")
    p.add_argument("--norms", default="l2,sup", help="comma-separated norm labels (default l2,sup)")
    p.add_argument("-o", "--output", help="also write the series to this CSV file")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        sys.stderr.write(f"lerayns {args.command}: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
