"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or scenario, 2 failure while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .audit import read_audit
from .harness import apply_backend_override, cmd_oracle, run, summary
from .llm import BackendError
from .metrics import report_from_audit
from .scenario import PRESETS, Scenario, ScenarioError, load_scenario, preset

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
CI_ENV = "SYMBIOTIC_RAN_CI"


def _scenario(args, kind: str) -> Scenario:
    if (args.scenario is None) == (args.preset is None):
        raise ScenarioError("give exactly one of a scenario file or --preset")
    sc = preset(args.preset) if args.preset else load_scenario(args.scenario)
    if sc.kind != kind:
        raise ScenarioError(f"'{kind}' needs a {kind} scenario, got {sc.kind!r}")
    if args.seed is not None:
        sc.seed = args.seed
        sc.negotiation.get("jitter", {}).pop("seed", None)
    if args.backend_override:
        text = args.backend_override
        spec = json.loads(text) if text.lstrip().startswith("{") else text
        sc = apply_backend_override(sc, spec)
    return sc


def _run(args, kind: str) -> int:
    sc = _scenario(args, kind)
    ci = args.ci or os.environ.get(CI_ENV, "") not in ("", "0")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
    art = run(sc, args.out, ci)
    if args.format == "json":
        print(json.dumps(summary(art), indent=2))
    elif args.format == "csv":
        sys.stdout.write(art.report.to_csv())
    else:
        print(f"run {art.run_id}")
        for row in art.phases:
            print("  phase {phase} at {t_ms} ms ({trigger}): {action}".format(**row)
                  + (f", consensus {row['consensus']}" if "consensus" in row else ""))
        for tr in art.transcripts if not art.phases else []:
            print(f"  outcome {tr.outcome}, consensus {tr.consensus}, rounds {len(tr.rounds)}")
        print(art.report.table())
    if args.out:
        (Path(args.out) / f"{art.run_id}.report.csv").write_text(art.report.to_csv(), encoding="utf-8")
    return EXIT_OK


def _oracle(args) -> int:
    value = cmd_oracle(args.intents, args.target)
    print("none" if value is None else value)
    return EXIT_OK


def _report(args) -> int:
    try:
        records = read_audit(args.audit)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    rep = report_from_audit(records)
    if args.format == "csv":
        sys.stdout.write(rep.to_csv())
    elif args.format == "json":
        print(json.dumps(rep.to_dict(), indent=2))
    else:
        print(rep.table())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="symbiotic-ran", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, help_ in (("simulate", "Type I control over a channel trace"),
                        ("negotiate", "one Type II negotiation game"),
                        ("demo", "four-phase negotiate/enforce demo with a static baseline")):
        s = sub.add_parser(verb, help=help_)
        s.add_argument("scenario", nargs="?", help="scenario JSON file")
        s.add_argument("--preset", choices=sorted(PRESETS))
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output directory for audit, transcripts and report")
        s.add_argument("--backend-override", help="scripted backend name or JSON backend spec")
        s.add_argument("--ci", action="store_true", help=f"refuse http backends (also ${CI_ENV}=1)")
        s.add_argument("--format", choices=("table", "json", "csv"), default="table")
        s.set_defaults(func=lambda a, v=verb: _run(a, v))
    o = sub.add_parser("oracle", help="reference consensus routine")
    o.add_argument("intents", type=float, nargs="*")
    o.add_argument("--target", type=float, required=True)
    o.set_defaults(func=_oracle)
    r = sub.add_parser("report", help="recompute metrics from an audit file")
    r.add_argument("audit")
    r.add_argument("--format", choices=("table", "json", "csv"), default="table")
    r.set_defaults(func=_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (BackendError, RuntimeError, ValueError, OSError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
