"""``dfsnet`` command line: run, truth-table, sweep, routing-check, estimate-time."""
from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from . import __version__
from . import protocols as P
from . import runner
from .dfs import DEFAULT_NAMES
from .scenario import ScenarioError, ValidationError, _parse_branch, load

EXIT_RUNTIME = 1


def _emit(text: str, output: str | None) -> None:
    if output and output != "-":
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _branch(text: str) -> tuple[int, int]:
    try:
        return _parse_branch(text)
    except ValidationError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _nodes(text: str) -> list[int]:
    names = DEFAULT_NAMES
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok in names and tok:
            out.append(names.index(tok))
        elif tok.isdigit():
            out.append(int(tok))
        else:
            raise argparse.ArgumentTypeError(f"bad node {tok!r}")
    return out


def _protocol(text: str) -> str:
    if text not in P.REFLECTIONS:
        raise argparse.ArgumentTypeError(f"choose from {', '.join(P.REFLECTIONS)}")
    return text


def _load_scenario(args):
    sc = load(args.scenario)
    over = {"trials": args.trials, "seed": args.seed, "output_format": args.format}
    if getattr(args, "force_branch", None) is not None:
        if sc.protocol != "Teleport":
            raise ValidationError("force_branch", "only meaningful for Teleport")
        over["force_branch"] = args.force_branch
    return sc.with_overrides(**over)


def cmd_run(args) -> int:
    sc = _load_scenario(args)
    report, code = runner.run_scenario(sc, timestamp=not args.no_timestamp)
    text = runner.report_csv(report) if sc.output_format == "csv" else runner.to_json(report)
    _emit(text, args.output)
    return code


def cmd_truth_table(args) -> int:
    table = runner.truth_table(args.protocol, args.nodes)
    text = runner.truth_table_csv(table) if args.format == "csv" else runner.to_json(table)
    _emit(text, args.output)
    return runner.EXIT_OK


def cmd_sweep(args) -> int:
    sc = _load_scenario(args)
    rows = runner.sweep(sc, args.parameter, args.grid)
    if args.format == "json":
        text = runner.to_json({"schema": "dfsnet.sweep/1", "parameter": args.parameter,
                               "rows": rows})
    else:
        text = runner.rows_to_csv(rows)
    _emit(text, args.output)
    return runner.EXIT_OK


def cmd_routing_check(args) -> int:
    text = Path(args.table).read_text(encoding="utf-8") if args.table else None
    body, ok = runner.routing_check(args.setup, args.check, args.T0, args.T1, text)
    report = {"schema": runner.REPORT_SCHEMA, "version": __version__, "protocol": "RoutingCheck",
              "result": body, "passed": ok}
    out = runner.report_csv(report) if args.format == "csv" else runner.to_json(report)
    _emit(out, args.output)
    return runner.EXIT_OK if ok else runner.EXIT_ACCEPTANCE


def cmd_estimate_time(args) -> int:
    params = P.ExperimentalParams(args.kappa_mhz, args.g_mhz, args.gamma_mhz, args.T_us)
    rows = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", P.RegimeWarning)
        for proto in args.protocol or list(P.REFLECTIONS):
            gt = P.estimate_gate_time(params, proto)
            rows.append({"protocol": proto, "reflections": gt.reflections,
                         "seconds": gt.seconds, "kappa_T": gt.kappa_T, "regime_ok": gt.regime_ok})
    for w in caught[:1]:
        print(f"warning: {w.message}", file=sys.stderr)
    if args.format == "csv":
        text = runner.rows_to_csv(rows)
    else:
        text = runner.to_json({
            "schema": "dfsnet.gate-time/1",
            "params": {"kappa_mhz": args.kappa_mhz, "g_mhz": args.g_mhz,
                       "gamma_mhz": args.gamma_mhz, "T_us": args.T_us},
            "rows": [{**r, "seconds": {"value": r["seconds"], "tolerance": 0.0}} for r in rows],
        })
    _emit(text, args.output)
    return runner.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dfsnet", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, fmt_default=None):
        sp.add_argument("--output", "-o", help="write here instead of stdout")
        sp.add_argument("--format", choices=("json", "csv"), default=fmt_default)

    r = sub.add_parser("run", help="execute a scenario file")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--no-timestamp", action="store_true")
    r.add_argument("--force-branch", type=_branch, metavar="m_i,m_j")
    common(r)
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("truth-table", help="logical-basis amplitude table")
    t.add_argument("protocol", choices=runner.TRUTH_PROTOCOLS)
    t.add_argument("--nodes", type=_nodes, help="e.g. i,j or 0,1")
    common(t, "json")
    t.set_defaults(func=cmd_truth_table)

    s = sub.add_parser("sweep", help="scan one noise parameter over a grid")
    s.add_argument("scenario")
    s.add_argument("--parameter", required=True, choices=runner.SWEEP_PARAMETERS)
    s.add_argument("--grid", required=True, type=_floats, help="comma-separated, monotone")
    s.add_argument("--seed", type=int)
    s.add_argument("--trials", type=int)
    common(s, "csv")
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("routing-check", help="trace a photon through a TR schedule")
    g.add_argument("--setup", default="hadamard", choices=("hadamard", "cz"))
    g.add_argument("--check", help="named expected path; default: all in the setup")
    g.add_argument("--table", help="YAML optical table with schedules and expected paths")
    g.add_argument("--T0", type=float, default=1.0)
    g.add_argument("--T1", type=float, default=1.0)
    common(g, "json")
    g.set_defaults(func=cmd_routing_check)

    e = sub.add_parser("estimate-time", help="gate durations from cavity parameters")
    e.add_argument("protocol", nargs="*", type=_protocol, help="default: all")
    e.add_argument("--kappa-mhz", type=float, default=4.0)
    e.add_argument("--g-mhz", type=float, default=30.0)
    e.add_argument("--gamma-mhz", type=float, default=2.6)
    e.add_argument("--T-us", type=float, default=5.0)
    common(e, "json")
    e.set_defaults(func=cmd_estimate_time)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return runner.EXIT_VALIDATION
    except ValidationError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return runner.EXIT_VALIDATION
    except (KeyError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return runner.EXIT_VALIDATION
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
