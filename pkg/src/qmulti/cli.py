"""Command-line entry point: ``qmulti run`` and ``qmulti sample``.

Exit codes: 0 when every task passes, 1 on a verification failure or a
task runtime error, 2 when the document cannot be parsed or validated.
"""

from __future__ import annotations

import argparse
import sys

from .scenario import Report, ScenarioError, parse_scenario, run_scenario

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


def _load(path: str, tol):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(path, str(exc)) from None
    return parse_scenario(text, tol=tol)


def _emit(report: Report, fmt: str, timing: bool, out) -> None:
    if fmt == "structured":
        out.write(report.to_json(timing=timing) + "\n")
    else:
        out.write(report.to_text() + "\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmulti", description="Run multi-observable and instrument scenarios.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute every task of a scenario")
    run.add_argument("file")
    run.add_argument("--tol", type=float, default=None, help="override the scenario tolerance")
    run.add_argument("--report", choices=("text", "structured"), default="text")
    run.add_argument("--parallel", action="store_true", help="run independent tasks concurrently")
    run.add_argument("--no-timing", action="store_true", help="omit elapsed times from structured output")

    smp = sub.add_parser("sample", help="run one sample task with overridden counts and seed")
    smp.add_argument("file")
    smp.add_argument("--task", required=True)
    smp.add_argument("--trajectories", type=int, default=None)
    smp.add_argument("--seed", type=int, default=None)
    smp.add_argument("--steps", type=int, default=None)
    smp.add_argument("--tol", type=float, default=None)
    smp.add_argument("--report", choices=("text", "structured"), default="structured")
    smp.add_argument("--no-timing", action="store_true")
    return p


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        scenario = _load(args.file, args.tol)
        if args.command == "run":
            report = run_scenario(scenario, parallel=args.parallel)
        else:
            task = next((t for t in scenario.tasks if t.name == args.task), None)
            if task is None:
                raise ScenarioError("--task", f"no task named {args.task!r}")
            if task.kind != "sample":
                raise ScenarioError("--task", f"task {args.task!r} is a {task.kind} task, not sample")
            override = {k: v for k, v in (("trajectories", args.trajectories), ("seed", args.seed),
                                          ("steps", args.steps)) if v is not None}
            report = run_scenario(scenario, only=[args.task], overrides={args.task: override})
    except ScenarioError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_INVALID
    _emit(report, args.report, not args.no_timing, out)
    return report.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
