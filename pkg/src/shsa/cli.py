"""Command-line entry point.

Exit status: 0 on success, 1 when a domain error was detected and reported
(e.g. nothing to localize, invalid knowledge base), 2 on usage or parse
errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import KbValidationError, bundled, parse_kb_file, serialize_kb
from .diagnosis import parse_spectrum, sfl_rank
from .errors import ConfigSyntaxError, ScenarioError, ShsaError
from .harness.scenario import parse_scenario_file, validate_scenario
from .harness.simulation import replay_log, run_scenario
from .knowledge_base import ItomStatus, provided_variables
from .monitoring import monitor_trace, report_rows
from .substitution import (
    SearchConfig,
    best_substitution,
    enumerate_substitutions,
    format_report,
    substitution_cost,
)

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(f"{self.prog}: error: {message}") from None


def _read(path: str | None, default: str | None = None) -> str:
    if path is None:
        return bundled(default)
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise _UsageError(f"cannot read {path}: {exc.strerror}") from None


class _UsageError(Exception):
    pass


def _kb(args):
    return parse_kb_file(_read(args.kb, "highway.kb"))


# -- subcommands ---------------------------------------------------------------

def cmd_check_kb(args) -> int:
    kb, reg = _kb(args)
    print(f"variables: {len(kb.variables)}")
    print(f"relations: {len(kb.relations)}")
    print(f"itoms: {len(reg)}")
    provided = provided_variables(kb, reg)
    print("provided: " + (" ".join(sorted(provided)) if provided else "-"))
    if args.echo:
        sys.stdout.write(serialize_kb(kb, reg))
    print("ok")
    return EXIT_OK


def cmd_search(args) -> int:
    kb, reg = _kb(args)
    for itom in args.fail or ():
        if itom not in reg:
            raise _UsageError(f"unknown itom {itom!r}")
        reg.set_status(itom, ItomStatus.FAILED)
    if args.provided is not None:
        provided = frozenset(p for p in args.provided.split(",") if p)
    else:
        provided = provided_variables(kb, reg)
    cfg = SearchConfig(args.relation_weight, args.staleness_weight, args.max_depth)
    subs = enumerate_substitutions(kb, args.variable, args.max_depth)
    print(f"substitutions of {args.variable} (max depth {args.max_depth}): {len(subs)}")
    for s in subs:
        mark = "*" if s.sources <= provided else " "
        print(f" {mark} depth {s.depth}: {s}")
    print("provided: " + (" ".join(sorted(provided)) if provided else "-"))
    best = best_substitution(kb, args.variable, provided, reg, cfg)
    if best is None:
        print(f"best: none (no valid substitution of {args.variable})")
        return EXIT_DOMAIN
    selected = {v: reg.freshest(v).id for v in best.sources if reg.freshest(v) is not None}
    print("best:")
    sys.stdout.write(format_report(best, selected, substitution_cost(best, reg, cfg)))
    return EXIT_OK


def _parse_trace(text: str):
    rows = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#") or line.lower().startswith("time,"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ConfigSyntaxError("expected 'time,branch,value[;value...]'", n, 1)
        try:
            t = float(parts[0])
            val = [float(x) for x in parts[2].split(";")]
        except ValueError:
            raise ConfigSyntaxError("non-numeric time or value", n, 1) from None
        rows.append((t, parts[1].strip(), val))
    return rows


def cmd_monitor(args) -> int:
    rows = _parse_trace(_read(args.trace))
    reports = monitor_trace(rows, args.epsilon, args.theta, args.hold)
    print("time,branch,value,confidence,status")
    for r in reports:
        for line in report_rows(r):
            print(line)
    return EXIT_OK


def cmd_localize(args) -> int:
    spectrum = parse_spectrum(_read(args.spectrum))
    ranking = sfl_rank(spectrum, args.formula)
    sys.stdout.write(ranking.format())
    return EXIT_OK


def cmd_run(args) -> int:
    sc = parse_scenario_file(_read(args.scenario, "highway.scn"), validate=False)
    overrides = {k: getattr(args, k) for k in ("epsilon", "theta", "hold", "delta", "seed")
                 if getattr(args, k) is not None}
    sc = sc.with_params(**overrides)
    validate_scenario(sc)
    kb = parse_kb_file(_read(args.kb))[0] if args.kb else None
    result = run_scenario(sc, kb)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "events.log").write_text(result.log_text())
    (out / "metrics.csv").write_text(result.metrics.to_csv())
    lines = ["channel,packets_in,packets_out,class"]
    for stats, cls in result.channel_report():
        lines.append(f"{stats.channel},{stats.packets_in},{stats.packets_out},{cls.value}")
    (out / "channels.csv").write_text("\n".join(lines) + "\n")
    sys.stdout.write(result.metrics.to_csv())
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        metrics = replay_log(_read(args.log))
    except ValueError as exc:
        raise ConfigSyntaxError(str(exc)) from None
    sys.stdout.write(metrics.to_csv())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="shsa", description="Self-healing by structural adaptation: tools and simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("check-kb", help="parse and validate a knowledge-base file")
    s.add_argument("kb", nargs="?", help="knowledge-base file (default: bundled highway.kb)")
    s.add_argument("--echo", action="store_true", help="print the normalized file")
    s.set_defaults(func=cmd_check_kb)

    s = sub.add_parser("search", help="enumerate substitutions and pick the best valid one")
    s.add_argument("variable")
    s.add_argument("--kb", help="knowledge-base file (default: bundled highway.kb)")
    s.add_argument("--max-depth", type=int, default=2)
    s.add_argument("--provided", help="comma-separated provided variables (default: from itoms)")
    s.add_argument("--fail", action="append", metavar="ITOM", help="mark an itom failed (repeatable)")
    s.add_argument("--relation-weight", type=float, default=1.0)
    s.add_argument("--staleness-weight", type=float, default=0.0)
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("monitor", help="offline plausibility check over a recorded trace")
    s.add_argument("trace", help="CSV rows time,branch,value[;value...] ('-' for stdin)")
    s.add_argument("--epsilon", type=float, default=2.0)
    s.add_argument("--theta", type=float, default=0.3)
    s.add_argument("--hold", type=int, default=3)
    s.set_defaults(func=cmd_monitor)

    s = sub.add_parser("localize", help="rank components of a spectrum by suspiciousness")
    s.add_argument("spectrum")
    s.add_argument("--formula", choices=("ochiai", "tarantula"), default="ochiai")
    s.set_defaults(func=cmd_localize)

    s = sub.add_parser("run", help="run a highway scenario")
    s.add_argument("scenario", nargs="?", help="scenario file (default: bundled highway.scn)")
    s.add_argument("--out", default=".", help="output directory (default: .)")
    s.add_argument("--kb", help="knowledge-base file (default: bundled highway.kb)")
    s.add_argument("--epsilon", type=float)
    s.add_argument("--theta", type=float)
    s.add_argument("--hold", type=int)
    s.add_argument("--delta", type=float)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("replay", help="re-derive metrics from an event log")
    s.add_argument("log")
    s.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return EXIT_USAGE
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigSyntaxError, ScenarioError, _UsageError) as exc:
        print(f"shsa {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KbValidationError, ShsaError) as exc:
        print(f"shsa {args.command}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"shsa {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
