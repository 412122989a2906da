"""Command-line entry point: every computation as a flag-driven subcommand with
CSV or JSON output.

CSV output starts with ``# key: value`` metadata lines followed by a header row.
JSON output is ``{"metadata": {...}, "data": [{column: value}, ...]}``. Floats
are written with 12 significant digits in both formats.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any, Sequence

from . import __version__, aos, lastzero, ros, sim
from .quadrature import QuadratureError
from .ros import ConvergenceError

EXIT_USAGE = 2
EXIT_NUMERIC = 3

# Scheduling and destination flags never change a reported value; the command is echoed on its own.
_NOT_ECHOED = {"handler", "output", "format", "workers", "command"}


class UsageError(ValueError):
    pass


def _num(x: Any) -> Any:
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    if isinstance(x, dict):
        return {k: _num(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_num(v) for v in x]
    x = float(x)
    if not math.isfinite(x):
        return repr(x)
    return float(format(x, ".12g"))


def _cell(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def render(metadata: dict, columns: Sequence[str], rows: Sequence[Sequence[Any]], fmt: str) -> str:
    rows = [[_num(v) for v in row] for row in rows]
    if fmt == "json":
        doc = {"metadata": metadata, "data": [dict(zip(columns, row)) for row in rows]}
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    for key, value in metadata.items():
        text = value if isinstance(value, str) else json.dumps(value, sort_keys=True)
        buf.write(f"# {key}: {text}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _metadata(args: argparse.Namespace, **extra) -> dict:
    params = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_ECHOED}
    meta = {"tool": f"secsamp {__version__}", "command": args.command, "params": params}
    meta.update({k: _num(v) for k, v in extra.items()})
    return meta


def _probability(text: str) -> float:
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 <= p <= 1:
        raise argparse.ArgumentTypeError(f"p must lie in [0, 1], got {text}")
    return p


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


# ---------------------------------------------------------------------------
# Subcommands; each returns (metadata, columns, rows).


def cmd_guarantee(args):
    if args.side == "aos":
        if args.p >= 1:
            raise UsageError("aos guarantee needs p < 1")
        g = aos.kmax_guarantee(args.p)
        return (
            _metadata(args),
            ["p", "k", "guarantee", "lower_bound", "upper_bound"],
            [[args.p, g.k, g.guarantee, g.lower_bound, g.upper_bound]],
        )
    if args.p >= 1:
        raise UsageError("ros guarantee needs p < 1")
    value = ros.ros_guarantee(args.p, args.tail_tol)
    return _metadata(args), ["p", "guarantee", "tail_tol"], [[args.p, value, args.tail_tol]]


def sweep_grid(step: float) -> list[float]:
    count = math.ceil(1.0 / step - 1e-9)
    return [round(i * step, 12) for i in range(1, count) if round(i * step, 12) < 1]


def sweep_rows(step: float, tail_tol: float) -> list[list]:
    rows = []
    for p in sweep_grid(step):
        g = aos.kmax_guarantee(p)
        rows.append([p, g.k, g.guarantee, g.lower_bound, g.upper_bound, ros.ros_guarantee(p, tail_tol)])
    return rows


SWEEP_COLUMNS = ["p", "k", "aos_guarantee", "aos_lower", "aos_upper", "ros_guarantee"]


def cmd_sweep(args):
    if not 0 < args.step <= 0.1:
        raise UsageError("step must lie in (0, 0.1]")
    return _metadata(args), SWEEP_COLUMNS, sweep_rows(args.step, args.tail_tol)


def cmd_thresholds(args):
    t = ros.solve_thresholds(args.count, args.tol)
    rows = [[i + 1, t.thresholds[i], t.complements[i]] for i in range(t.count)]
    return _metadata(args), ["i", "t", "one_minus_t"], rows


def cmd_dp(args):
    table, ell = ros.optimal_policy_dp(args.n)
    if args.table == "ell":
        rows = [[j, ell(j), table.start_value(j)] for j in range(1, args.n + 1)]
        extra = {}
        if args.p is not None:
            extra["success"] = ros.seq_ell_success(args.n, args.p, ell)
        return _metadata(args, **extra), ["j", "ell", "start_value"], rows
    rows = [[j, r, table(j, r)] for j in range(args.n + 1) for r in range(1, j + 2)]
    return _metadata(args), ["j", "r", "W"], rows


def cmd_gamma(args):
    g = ros.gamma_constants(args.tol)
    return _metadata(args), ["c", "gamma", "tail_bound"], [[g.c, g.gamma, g.tail_bound]]


REPORT_COLUMNS = ["policy", "generator", "n", "p", "trials", "wins", "estimate", "ci", "seed"]


def cmd_simulate(args):
    gen = sim.GeneratorSpec(args.generator, args.n, args.drop_point, args.file)
    params = {}
    if args.k is not None:
        params["k"] = args.k
    if args.count is not None:
        params["count"] = args.count
    if args.engine is not None:
        params["engine"] = args.engine
    report = sim.run_trials(args.policy, gen, args.p, args.trials, args.seed, args.workers, **params)
    d = report.to_dict()
    used = {k: v for k, v in d["params"].items() if k != "ell"}
    return _metadata(args, **{"policy_params": used}), REPORT_COLUMNS, [[d[c] for c in REPORT_COLUMNS]]


def cmd_conflict(args):
    if args.what == "census":
        if args.n is None:
            raise UsageError("census needs --n")
        counts = lastzero.degree_census(args.n)
        if args.p is None:
            rows = [[args.n, d, c] for d, c in sorted(counts.items())]
            return _metadata(args), ["size", "degree", "count"], rows
        w = lastzero.weight_census(args.n, args.p)
        rows = [[args.n, d, c, w.get(d, 0.0)] for d, c in sorted(counts.items())]
        return _metadata(args), ["size", "degree", "count", "weight"], rows
    if args.what == "edges":
        if args.n is None:
            raise UsageError("edges needs --n (largest size)")
        rows = [[str(a), str(b)] for a, b in lastzero.edges(args.n)]
        return _metadata(args), ["parent", "child"], rows
    if args.start is None or args.end is None or args.p is None:
        raise UsageError("strategy needs --start, --end and --p")
    if args.p >= 1:
        raise UsageError("strategy needs p < 1")
    if args.kind == "fill-in":
        strat = lastzero.fill_in(args.start, args.end, args.p)
    else:
        strat = lastzero.kmax_selection(args.start, args.end, args.k or aos.kmax_k(args.p))
    rows = [
        [s, lastzero.performance(strat, s, args.p), lastzero.cover_ratio(strat, s, args.p)]
        for s in strat.sizes
    ]
    extra = {"average_performance": lastzero.average_performance(strat, args.p), "valid": strat.is_valid()}
    return _metadata(args, **extra), ["size", "performance", "cover_ratio"], rows


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="secsamp", description="Secretary problems with a sampled history.")
    parser.add_argument("--version", action="version", version=f"secsamp {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--output", "-o", default="-", help="destination path, '-' for standard output")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("guarantee", parents=[common], help="guarantee of the best rule at one p")
    g.add_argument("side", choices=("aos", "ros"))
    g.add_argument("--p", type=_probability, required=True)
    g.add_argument("--tail-tol", type=_positive_float, default=1e-12)
    g.set_defaults(handler=cmd_guarantee)

    s = sub.add_parser("sweep", parents=[common], help="both guarantee curves over a p grid")
    s.add_argument("--step", type=_positive_float, default=0.01)
    s.add_argument("--tail-tol", type=_positive_float, default=1e-12)
    s.set_defaults(handler=cmd_sweep)

    t = sub.add_parser("thresholds", parents=[common], help="optimal time thresholds")
    t.add_argument("--count", type=_positive_int, required=True)
    t.add_argument("--tol", type=_positive_float, default=1e-12)
    t.set_defaults(handler=cmd_thresholds)

    d = sub.add_parser("dp", parents=[common], help="optimal positional rule by backward induction")
    d.add_argument("--n", type=_positive_int, required=True)
    d.add_argument("--table", choices=("ell", "W"), default="ell")
    d.add_argument("--p", type=_probability, default=None, help="also report the binomial-mixed success")
    d.set_defaults(handler=cmd_dp)

    c = sub.add_parser("gamma", parents=[common], help="full-information limit constants")
    c.add_argument("--tol", type=_positive_float, default=1e-12)
    c.set_defaults(handler=cmd_gamma)

    m = sub.add_parser("simulate", parents=[common], help="Monte Carlo win rate of a policy")
    m.add_argument("--policy", choices=sim.POLICIES, required=True)
    m.add_argument("--generator", choices=sim.GENERATOR_KINDS, default="increasing")
    m.add_argument("--n", type=_positive_int, required=True)
    m.add_argument("--p", type=_probability, required=True)
    m.add_argument("--trials", type=_positive_int, default=100_000)
    m.add_argument("--seed", type=_seed, default=0)
    m.add_argument("--k", type=_positive_int, default=None)
    m.add_argument("--count", type=_positive_int, default=None, help="thresholds used by alg-t")
    m.add_argument("--engine", choices=("lazy", "direct"), default=None)
    m.add_argument("--drop-point", type=_positive_int, default=None)
    m.add_argument("--file", default=None)
    m.add_argument("--workers", type=_positive_int, default=None)
    m.set_defaults(handler=cmd_simulate)

    k = sub.add_parser("conflict", parents=[common], help="conflict graph censuses and window strategies")
    k.add_argument("what", choices=("census", "edges", "strategy"))
    k.add_argument("--n", type=_positive_int, default=None)
    k.add_argument("--p", type=_probability, default=None)
    k.add_argument("--start", type=_positive_int, default=None)
    k.add_argument("--end", type=_positive_int, default=None)
    k.add_argument("--kind", choices=("fill-in", "kmax"), default="fill-in")
    k.add_argument("--k", type=_positive_int, default=None)
    k.add_argument("--graph", choices=("text", "dot"), default=None, help="edges as plain text or DOT")
    k.set_defaults(handler=cmd_conflict)
    return parser


def _fail(code: int, message: str) -> int:
    print(f"secsamp: error: {message}", file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "graph", None) and args.what == "edges":
            if args.n is None:
                raise UsageError("edges needs --n (largest size)")
            export = lastzero.edges_dot if args.graph == "dot" else lastzero.edge_list
            return _write(args.output, export(args.n))
        meta, columns, rows = args.handler(args)
    except (ConvergenceError, QuadratureError) as exc:
        return _fail(EXIT_NUMERIC, str(exc))
    except (ValueError, OSError) as exc:
        return _fail(EXIT_USAGE, str(exc).splitlines()[0] if str(exc) else type(exc).__name__)
    return _write(args.output, render(meta, columns, rows, args.format))


def _write(destination: str, text: str) -> int:
    if destination == "-":
        sys.stdout.write(text)
        return 0
    try:
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        return _fail(EXIT_USAGE, f"cannot write {destination}: {exc.strerror}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
