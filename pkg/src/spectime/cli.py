"""Command-line front end.

Subcommands:

* ``run`` executes a scenario file and writes ``trace.csv``,
  ``summary.txt``, and ``scenario.json`` into the output directory,
  optionally sampling the trajectory at requested times.
* ``builtin`` prints one of the shipped scenarios as JSON.
* ``verify`` re-runs every trace check from a run directory and exits
  zero only if all of them pass.
* ``report`` renders diagnostic figures beside the delimited output.

Exit codes: 0 success, 1 usage, 2 scenario rejected or verification
failed, 3 divergence or internal error, 4 missing or corrupt files.
Nothing nondeterministic is ever written into the output files.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .fileio import (
    BUILTIN_NAMES,
    FileFormatError,
    builtin_scenario,
    emit_scenario,
    parse_scenario,
    read_summary,
    read_trace,
    write_summary,
    write_trace,
)
from .objective import value
from .schedule import ZenoUnboundedError
from .simulator import (
    DivergedError,
    InvariantBreachError,
    Scenario,
    ScenarioError,
    SimulationTrace,
    run,
    sample_at,
    verify_trace,
)

__all__ = [
    "main",
    "parse_scenario",
    "cmd_run",
    "cmd_builtin",
    "cmd_verify",
    "cmd_report",
]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 (argparse hook)
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="spectime",
        description="Specified-time distributed optimization simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario file")
    p_run.add_argument("scenario", help="scenario JSON path (or literal JSON text)")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--beta", type=float, default=None, help="override the step gain")
    p_run.add_argument(
        "--unsafe",
        action="store_true",
        help="accept a step gain above the certified bound",
    )
    p_run.add_argument(
        "--verbose-psi",
        action="store_true",
        dest="verbose_psi",
        help="record the full observer stack in the trace",
    )
    p_run.add_argument(
        "--sample-at",
        dest="sample_at",
        default=None,
        metavar="T1,T2,...",
        help="sample the trajectory at these times (written to the summary)",
    )
    p_run.set_defaults(func=cmd_run)

    p_builtin = sub.add_parser("builtin", help="print a shipped scenario")
    p_builtin.add_argument("name", help=f"one of: {', '.join(BUILTIN_NAMES)}")
    p_builtin.add_argument("--out", default=None, help="write to a file instead of stdout")
    p_builtin.set_defaults(func=cmd_builtin)

    p_verify = sub.add_parser("verify", help="re-check a finished run directory")
    p_verify.add_argument("rundir", help="directory written by the run subcommand")
    p_verify.set_defaults(func=cmd_verify)

    p_report = sub.add_parser("report", help="render figures for a run directory")
    p_report.add_argument("rundir", help="directory written by the run subcommand")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point; returns the process exit code instead of raising."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ScenarioError, ZenoUnboundedError) as exc:
        print(f"scenario rejected: {exc}", file=sys.stderr)
        return 2
    except DivergedError as exc:
        print(f"run diverged: {exc}", file=sys.stderr)
        return 3
    except InvariantBreachError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except FileFormatError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    """Execute one scenario and write its artifacts."""
    sc = parse_scenario(args.scenario)
    if args.beta is not None or args.unsafe:
        sc = replace(
            sc,
            beta=args.beta if args.beta is not None else sc.beta,
            unsafe_beta=sc.unsafe_beta or args.unsafe,
        )
    sample_times = _parse_sample_times(args.sample_at)
    for t in sample_times:
        if not 0.0 <= t <= sc.horizon:
            raise _UsageError(f"--sample-at time {t:g} outside [0, {sc.horizon:g}]")
    if sc.unsafe_beta and sc.beta is not None:
        print("note: step gain accepted without certification", file=sys.stderr)
    tr = run(sc, record_psi=args.verbose_psi)
    report = verify_trace(tr, sc)
    samples = []
    for t in sample_times:
        point = sample_at(tr, sc, t)
        samples.append((t, point, value(sc.objective, point.x)))
    os.makedirs(args.out, exist_ok=True)
    scenario_path = os.path.join(args.out, "scenario.json")
    trace_path = os.path.join(args.out, "trace.csv")
    summary_path = os.path.join(args.out, "summary.txt")
    with open(scenario_path, "w", encoding="utf-8") as fh:
        fh.write(emit_scenario(sc))
    write_trace(trace_path, tr)
    write_summary(summary_path, sc, tr, report, samples)
    print(f"wrote {scenario_path}")
    print(f"wrote {trace_path} ({len(tr.records)} records)")
    print(f"wrote {summary_path}")
    final = tr.records[-1]
    print(f"final record: k = {final.k}, t = {final.t:.10g}, f = {final.f:.10g}")
    for t, point, f_val in samples:
        xs = " ".join(format(v, ".10g") for v in point.x)
        print(f"sample t = {t:.10g}: f = {f_val:.10g}, x = {xs}")
    print(f"verification: {'PASS' if report.passed else 'FAIL'}")
    return 0


def cmd_builtin(args: argparse.Namespace) -> int:
    """Emit a shipped scenario as JSON text."""
    try:
        sc = builtin_scenario(args.name)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    text = emit_scenario(sc)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    """Re-run all checks from serialized data; zero exit only on all-pass."""
    sc, tr = _load_run_dir(args.rundir)
    report = verify_trace(tr, sc)
    for check in report.checks:
        verdict = "skipped" if check.passed is None else ("pass" if check.passed else "FAIL")
        print(f"{check.name}: {verdict} | {check.detail}")
    print(f"verification: {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 2


def cmd_report(args: argparse.Namespace) -> int:
    """Render figures from a run directory, next to the delimited output."""
    sc, tr = _load_run_dir(args.rundir)
    from . import report as report_mod  # matplotlib loads only when needed

    for path in report_mod.render_figures(args.rundir, sc, tr):
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _parse_sample_times(text: str | None) -> list[float]:
    if text is None:
        return []
    times = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            times.append(float(token))
        except ValueError:
            raise _UsageError(f"invalid --sample-at time {token!r}") from None
    return times


def _load_run_dir(rundir: str) -> tuple[Scenario, SimulationTrace]:
    """Load and cross-check the scenario/trace/summary triple of a run."""
    scenario_path = os.path.join(rundir, "scenario.json")
    trace_path = os.path.join(rundir, "trace.csv")
    summary_path = os.path.join(rundir, "summary.txt")
    for path in (scenario_path, trace_path, summary_path):
        if not os.path.exists(path):
            raise FileFormatError(f"missing {path}")
    sc = parse_scenario(scenario_path)
    records = read_trace(trace_path)
    cert, meta = read_summary(summary_path)
    mismatch = None
    if meta["protocol"] != sc.protocol:
        mismatch = "protocol"
    elif meta["n"] != sc.n or records[0].x.size != sc.n:
        mismatch = "agent count"
    elif meta["C"] != sc.c:
        mismatch = "demand"
    elif meta["horizon"] != sc.horizon:
        mismatch = "horizon"
    elif meta["schedule"] != sc.schedule.kind or meta["T_c"] != sc.schedule.t_c:
        mismatch = "schedule"
    elif meta["records"] != len(records):
        mismatch = "record count"
    if mismatch is not None:
        raise FileFormatError(
            f"{summary_path}: {mismatch} does not match the rest of the run directory"
        )
    return sc, SimulationTrace(records=records, certificate=cert, lookahead=None)
