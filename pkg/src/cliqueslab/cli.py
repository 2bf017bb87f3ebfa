"""Command line scenario runner.

    cliqueslab run --config CONFIG [--scenario S] [--n N] [--seed S]
                   [--backend B] [--out-dir DIR] [--fixed-secrets a,b,c]
    cliqueslab verify --transcript FILE --config CONFIG [--report FILE]

Exit codes: 0 all verdicts hold, 1 verdict mismatch, 2 configuration error,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError, LabError
from .network import transcript_from_jsonl
from .scenarios import parse_config, run_scenario, write_outputs
from .verify import verify

log = logging.getLogger("cliqueslab")

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cliqueslab", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write transcript and report")
    run.add_argument("--config", help="YAML scenario config")
    run.add_argument("--scenario")
    run.add_argument("--n", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--backend", help="preset name: modexp or elliptic")
    run.add_argument("--out-dir")
    run.add_argument("--fixed-secrets", type=_int_list)

    ver = sub.add_parser("verify", help="re-derive a report's keys from its transcript")
    ver.add_argument("--transcript", required=True)
    ver.add_argument("--config", required=True)
    ver.add_argument("--report", help="defaults to the report path named by the config")
    return parser


def _load(args):
    overrides = {"scenario": getattr(args, "scenario", None), "n": getattr(args, "n", None),
                 "seed": getattr(args, "seed", None), "backend": getattr(args, "backend", None),
                 "fixed_secrets": getattr(args, "fixed_secrets", None)}
    source = args.config if args.config else {}
    cfg = parse_config(source, overrides)
    if getattr(args, "out_dir", None):
        cfg.out_dir = args.out_dir
        cfg.transcript_path = cfg.report_path = None
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    result = run_scenario(cfg)
    code = write_outputs(result)
    if code == EXIT_IO:
        print("error: could not write outputs", file=sys.stderr)
        return code
    for name, ok in result.report["verdicts"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"transcript: {cfg.transcript_file}")
    print(f"report:     {cfg.report_file}")
    return code


def cmd_verify(args) -> int:
    cfg = _load(args)
    report_path = Path(args.report) if args.report else cfg.report_file
    try:
        report = json.loads(report_path.read_text(encoding="utf-8"))
        transcript = transcript_from_jsonl(Path(args.transcript).read_text(encoding="utf-8"),
                                           cfg.action)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    problems = verify(cfg, transcript, report)
    for p in problems:
        print(f"MISMATCH  {p}")
    if problems:
        return EXIT_VERDICT
    print(f"OK  {len(report['phases'])} phases, every key reproduced from the transcript")
    return EXIT_OK if report.get("all_verdicts_hold") else EXIT_VERDICT


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_verify(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LabError as exc:
        log.debug("scenario aborted", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
