"""Command-line driver: load data, run queries, drain the idle queue, benchmarks.

Engine data lives in memory only, so every invocation (and the shell) loads
what it needs with ``--load KIND:NAME=PATH``. The monitor store and the
background queue are the only state that survives between invocations.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import shlex
import statistics
import sys
from dataclasses import replace

import numpy as np

from . import bench
from .analytics import WorkloadConfig
from .array.engine import DenseArray
from .errors import PolystoreError
from .keyvalue import Document
from .middleware import Polystore
from .middleware.monitor import DEFAULT_STALE_THRESHOLD
from .relational.relation import Relation

LOAD_KINDS = ("rel-csv", "array", "kv-jsonl")
FORMATS = ("table", "csv", "json")
SUITES = ("micro", "matmul", "overhead", "medical")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # Usage errors go through the same "error:" channel as everything else.
    def error(self, message):
        raise CliError(message)


# ---------------------------------------------------------------- rendering

def _cell(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    if isinstance(v, bytes):
        return v.decode("utf-8", "replace")
    return str(v)


def _render_rows(columns, rows, fmt, out):
    if fmt == "json":
        out.write(json.dumps([dict(zip(columns, r)) for r in rows], default=str) + "\n")
        return
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(columns)
        w.writerows([_cell(v) for v in r] for r in rows)
        return
    text = [[_cell(v) for v in r] for r in rows]
    widths = [max([len(c)] + [len(r[i]) for r in text]) for i, c in enumerate(columns)]
    out.write("  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for r in text:
        out.write("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() + "\n")


def result_table(value):
    """(columns, rows) for any engine result."""
    if isinstance(value, Relation):
        return value.columns, [tuple(r) for r in value.rows]
    if isinstance(value, DenseArray):
        names = [d for d, _ in value.dims]
        rows = [tuple(int(i) for i in idx) + (float(v),)
                for idx, v in np.ndenumerate(value.values) if v == v]
        return names + ["val"], rows
    if isinstance(value, list) and all(isinstance(d, Document) for d in value):
        return ["key", "fields"], [(d.key.decode("utf-8", "replace"),
                                    json.dumps(d.fields, sort_keys=True)) for d in value]
    if value is None:
        return ["result"], []
    return ["result"], [(value.item() if isinstance(value, np.generic) else value,)]


def _json_value(value):
    cols, rows = result_table(value)
    return {"columns": cols, "rows": [[None if isinstance(v, float) and math.isnan(v) else v
                                       for v in r] for r in rows]}


# ---------------------------------------------------------------- session

class Session:
    def __init__(self, args, out=None):
        self.out = out or sys.stdout
        self.seed = args.seed
        self.ps = Polystore(args.monitor_store, seed=args.seed, on_miss=args.on_miss,
                            stale_threshold=args.stale_threshold)
        for spec in args.load or []:
            kind, rest = spec.split(":", 1) if ":" in spec else (None, spec)
            name, _, path = rest.partition("=")
            if kind not in LOAD_KINDS or not name or not path:
                raise CliError(f"--load expects KIND:NAME=PATH with KIND in {LOAD_KINDS}, "
                               f"got {spec!r}")
            self.load(kind, path, name, quiet=True)

    def load(self, kind, path, name, quiet=False):
        ps = self.ps
        if kind == "rel-csv":
            msg = f"{ps.load_csv(name, path)} rows into {name}"
        elif kind == "array":
            msg = f"{ps.load_array(name, path).kept} cells into {name}"
        else:
            msg = f"{ps.load_jsonl(name, path)} documents into {name}"
        if not quiet:
            self.out.write(msg + "\n")

    def query(self, text, training, fmt):
        outcome = self.ps.query(text, training=True if training else None)
        rep = outcome.report
        if fmt == "json":
            self.out.write(json.dumps({"result": _json_value(outcome.value),
                                       "report": rep.to_json()}, default=str) + "\n")
            return
        cols, rows = result_table(outcome.value)
        _render_rows(cols, rows, fmt, self.out)
        if fmt == "csv":
            return
        self.out.write("\n")
        prows = []
        for p in rep.plans:
            mark = "*" if p.plan_id == rep.chosen else ""
            prows.append((p.plan_id + mark, "", "total", f"{p.elapsed_ms:.3f}"))
            for i, (step, ms) in enumerate(zip(p.steps, p.step_ms)):
                prows.append(("", i, step, f"{ms:.3f}"))
        _render_rows(["plan", "step", "action", "ms"], prows, "table", self.out)
        self.out.write(f"\n{rep.phase}: {rep.plan_count} plan(s), chosen {rep.chosen}\n")
        if rep.phase == "production":
            self.out.write("monitor hit\n" if rep.monitor_hit else "monitor miss\n")
        for note in rep.notes:
            self.out.write(f"note: {note}\n")

    def idle(self, budget, fmt):
        rep = self.ps.run_idle(budget)
        if fmt == "json":
            self.out.write(json.dumps({"executed": rep.executed, "failed": rep.failed,
                                       "remaining": rep.remaining, "errors": rep.errors}) + "\n")
            return
        word = "plan" if rep.executed == 1 else "plans"
        self.out.write(f"{rep.executed} {word} executed, {rep.failed} failed, "
                       f"{rep.remaining} remaining\n")
        for e in rep.errors:
            self.out.write(f"note: {e}\n")

    def monitor_dump(self, fmt):
        _render_rows(*monitor_groups(self.ps.monitor.records()), fmt, self.out)


def signature_id(sig):
    blob = json.dumps(sig.to_json(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def monitor_groups(records):
    """One row per (signature, plan): run count and min/median elapsed ms."""
    groups = {}
    for r in records:
        if r.ok:
            groups.setdefault((signature_id(r.signature), r.plan_id), []).append(r)
    rows = []
    for (sig, plan_id), recs in sorted(groups.items()):
        times = [r.elapsed_ms for r in recs]
        rows.append((sig, plan_id, len(recs), round(min(times), 4),
                     round(statistics.median(times), 4), recs[0].query))
    return ["signature", "plan", "runs", "min_ms", "median_ms", "query"], rows


# ---------------------------------------------------------------- bench

def run_bench(args, out):
    seed = 0 if args.seed is None else args.seed
    if args.suite == "micro":
        report = bench.bench_micro(args.sizes or bench.MICRO_SIZES, args.repeats or 3, seed)
    elif args.suite == "matmul":
        report = bench.bench_matmul(args.sizes or bench.MATMUL_SIZES, args.repeats or 1, seed)
    elif args.suite == "overhead":
        report = bench.bench_overhead(args.repeats or 7, seed, args.scale)
    else:
        config = WorkloadConfig(seed=seed)
        if args.paper_scale:
            config = bench.full_scale(config)
        overrides = {"n_patients": args.patients, "length": args.length, "n_bins": args.bins,
                     "k": args.k}
        config = replace(config, **{k: v for k, v in overrides.items() if v is not None})
        report = bench.bench_medical(config)
    if args.out_csv:
        with open(args.out_csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(report.to_csv())
    if args.out_json:
        with open(args.out_json, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=1, sort_keys=True)
    if args.format == "json":
        out.write(json.dumps(report.to_json(), sort_keys=True) + "\n")
    elif args.format == "csv":
        out.write(report.to_csv())
    else:
        _render_rows(list(bench.CSV_FIELDS),
                     [(r.suite, r.case, r.engine_or_mode, r.size, f"{r.elapsed_ms:.3f}")
                      for r in report.rows], "table", out)
        out.write("\n" + json.dumps(report.summary, indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------- parsers

def _threshold(text):
    x = float(text)
    if not x >= 0:
        raise argparse.ArgumentTypeError("stale threshold must be non-negative")
    return x


def _common_parser(session_flags=True):
    p = _Parser(add_help=False)
    p.add_argument("--format", choices=FORMATS, default="table")
    if session_flags:
        p.add_argument("--monitor-store", metavar="PATH", default=None,
                       help="JSON-lines performance history (memory only when omitted)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--on-miss", choices=("random", "train"), default="random")
        p.add_argument("--stale-threshold", type=_threshold, default=DEFAULT_STALE_THRESHOLD)
        p.add_argument("--load", action="append", metavar="KIND:NAME=PATH",
                       help=f"load data before running; KIND is one of {', '.join(LOAD_KINDS)}")
    return p


def _add_commands(sub, parent, top_level):
    p = sub.add_parser("load", parents=[parent], help="load a data file")
    p.add_argument("kind", choices=LOAD_KINDS)
    p.add_argument("path")
    p.add_argument("--name", required=True)

    p = sub.add_parser("query", parents=[parent], help="run a polystore query")
    p.add_argument("text")
    p.add_argument("--training", action="store_true",
                   help="run every plan and record timings (same as a TRAINING: prefix)")

    p = sub.add_parser("idle", parents=[parent], help="run queued plans")
    p.add_argument("--budget", type=int, default=None)

    sub.add_parser("monitor-dump", parents=[parent], help="performance history by signature")

    p = sub.add_parser("bench", parents=[parent], help="benchmark suites")
    p.add_argument("suite", choices=SUITES)
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--repeats", type=int)
    p.add_argument("--scale", type=float, default=1.0, help="overhead fixture scale")
    p.add_argument("--patients", type=int)
    p.add_argument("--length", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--paper-scale", action="store_true",
                   help="medical: 600 patients with length 16384")
    p.add_argument("--out-csv", metavar="PATH")
    p.add_argument("--out-json", metavar="PATH")

    if top_level:
        sub.add_parser("shell", parents=[parent], help="line-oriented interactive shell")
    else:
        sub.add_parser("help")
        sub.add_parser("quit")
        sub.add_parser("exit")


def build_parser():
    parser = _Parser(prog="polystore", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_commands(sub, _common_parser(), top_level=True)
    return parser


def _shell_parser():
    parser = _Parser(prog="", add_help=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _add_commands(sub, _common_parser(session_flags=False), top_level=False)
    return parser


# ---------------------------------------------------------------- dispatch

def _dispatch(session, args):
    cmd = args.command
    if cmd == "load":
        session.load(args.kind, args.path, args.name)
    elif cmd == "query":
        session.query(args.text, args.training, args.format)
    elif cmd == "idle":
        session.idle(args.budget, args.format)
    elif cmd == "monitor-dump":
        session.monitor_dump(args.format)
    elif cmd == "bench":
        if not hasattr(args, "seed"):
            args.seed = session.seed
        run_bench(args, session.out)


def _fail(exc, err):
    err.write(f"error: {exc}\n")
    return 1


SHELL_HELP = """commands: load KIND PATH --name N | query TEXT [--training] | idle [--budget N]
          monitor-dump | bench SUITE [...] | help | quit
every command accepts --format table|csv|json
"""


def shell(session, stdin, out, err):
    parser = _shell_parser()
    interactive = stdin.isatty()
    status = 0
    while True:
        if interactive:
            out.write("polystore> ")
            out.flush()
        line = stdin.readline()
        if not line:
            break
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            args = parser.parse_args(shlex.split(line))
            if args.command in ("quit", "exit"):
                break
            if args.command == "help":
                out.write(SHELL_HELP)
                continue
            _dispatch(session, args)
        except (CliError, PolystoreError, OSError, ValueError) as exc:
            status = _fail(exc, err)
    return status


def main(argv=None, stdin=None, stdout=None, stderr=None) -> int:
    stdin, out, err = stdin or sys.stdin, stdout or sys.stdout, stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command == "bench":
            run_bench(args, out)
            return 0
        session = Session(args, out)
        if args.command == "shell":
            return shell(session, stdin, out, err)
        _dispatch(session, args)
        return 0
    except (CliError, PolystoreError, OSError, ValueError) as exc:
        return _fail(exc, err)


if __name__ == "__main__":
    sys.exit(main())
