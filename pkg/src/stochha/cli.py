"""Command-line front end: ``stochha <command> ...``.

Every command prints a provenance line, then either aligned text or CSV
(``--format csv``).  The exit status is 0 when every check passes, 1 when a
check fails, 2 on unreadable input and 3 on model or runtime errors.
"""

from __future__ import annotations

import argparse
import bisect
import csv
import hashlib
import io
import math
import os
import sys
from pathlib import Path as FsPath
from typing import Sequence

from . import __version__
from .composed import ComposedSchedule, first_jump_frequencies
from .decomposed import DecomposedSchedule
from .dist import min_of, prob_is_min, shift_condition
from .dsl import document_of, edge_map_of, load, parse_dist, serialize
from .equiv import check_pr_equivalence, counterexample_witness
from .errors import ParseError, StochhaError
from .measure import (ESTIMATE_HEADER, Trace, composed_prefix_counts, delay_distribution,
                      mc_estimate, trace_prob_composed, trace_prob_decomposed_mc, trace_prob_decomposed_quad,
                      zeno_probe)
from .parallel import run_trajectories
from .paths import write_paths_csv
from .translate import RULES, translate

OUT_ENV = "STOCHHA_OUT"
EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_MODEL = 0, 1, 2, 3


class UsageError(Exception):
    """Options that parse but do not fit together."""


class Table:
    def __init__(self, title: str, header: Sequence[str], rows: Sequence[Sequence]):
        self.title = title
        self.header = list(header)
        self.rows = [[_cell(x) for x in r] for r in rows]


def _cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


class Output:
    def __init__(self, stream, fmt: str, provenance: str):
        self.stream = stream
        self.fmt = fmt
        self.stream.write(f"# {provenance}\n")
        self.first = True

    def table(self, t: Table):
        if not self.first:
            self.stream.write("\n")
        self.first = False
        if self.fmt == "csv":
            self.stream.write(f"# {t.title}\n")
            w = csv.writer(self.stream, lineterminator="\n")
            w.writerow(t.header)
            w.writerows(t.rows)
            return
        widths = [max(len(h), *(len(r[i]) for r in t.rows)) if t.rows else len(h)
                  for i, h in enumerate(t.header)]
        self.stream.write(f"{t.title}\n")
        self.stream.write("  ".join(h.ljust(w) for h, w in zip(t.header, widths)).rstrip() + "\n")
        for r in t.rows:
            self.stream.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")

    def line(self, text: str):
        prefix = "# " if self.fmt == "csv" else ""
        self.stream.write(f"{prefix}{text}\n")


def model_hash(paths: Sequence[str]) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(FsPath(p).read_bytes())
    return h.hexdigest()


def provenance(seed, paths: Sequence[str]) -> str:
    seed_txt = "none" if seed is None else str(seed)
    model = f"sha256:{model_hash(paths)}" if paths else "none"
    return f"stochha {__version__} seed={seed_txt} model={model}"


def _out_dir(args) -> FsPath:
    d = FsPath(args.out or os.environ.get(OUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------- commands


def cmd_validate(args, out: Output) -> int:
    doc, model = load(args.model)
    rep = model.validate()
    H = model.automaton
    out.table(Table("model", ["property", "value"], [
        ["name", doc.name], ["schedule", type(model).__name__],
        ["locations", len(H.locations)], ["variables", len(H.variables)],
        ["edges", len(H.edges)]]))
    out.table(Table("issues", ["severity", "where", "message"],
                    [[i.severity, i.where, i.message] for i in rep.issues]))
    out.line("valid" if rep.ok else "invalid")
    return EXIT_OK if rep.ok else EXIT_FAIL


def cmd_simulate(args, out: Output) -> int:
    if args.max_jumps is None and math.isinf(args.max_time):
        raise UsageError("simulate needs --max-jumps or --max-time")
    doc, model = load(args.model)
    paths = run_trajectories(model, args.seed, args.trajectories, args.max_jumps,
                             args.max_time, args.workers)
    race_k = model.k if isinstance(model, DecomposedSchedule) else 0
    stem = FsPath(args.model).stem
    d = _out_dir(args)
    head = provenance(args.seed, [args.model])
    with open(d / f"{stem}.paths.csv", "w", newline="") as fh:
        write_paths_csv(paths, model.automaton.variables, fh, race_k, [head])
    freq = first_jump_frequencies(paths)
    n = len(paths)
    rows = [[e, p, round(p * n), math.sqrt(p * (1 - p) / n) if n else 0.0]
            for e, p in freq.items()]
    table = Table("first-jump frequencies", ["edge", "frequency", "count", "std_error"], rows)
    buf = io.StringIO()
    Output(buf, "csv", head).table(table)
    (d / f"{stem}.first_jump.csv").write_text(buf.getvalue())
    delays = sorted(p.steps[0].delay for p in paths if p.steps)
    law = delay_distribution(model, model.automaton.init)
    cdf_rows = []
    if delays:
        top = delays[-1]
        for i in range(args.cdf_points + 1):
            t = top * i / args.cdf_points
            emp = bisect.bisect_right(delays, t) / len(delays)
            cdf_rows.append([t, emp, law.cdf(t)])
    buf = io.StringIO()
    Output(buf, "csv", head).table(Table("first delay cdf", ["t", "empirical", "analytic"],
                                         cdf_rows))
    (d / f"{stem}.first_delay_cdf.csv").write_text(buf.getvalue())
    out.table(table)
    out.line(f"wrote {n} trajectories to {d / f'{stem}.paths.csv'}")
    return EXIT_OK


def cmd_trace_prob(args, out: Output) -> int:
    _, model = load(args.model)
    edges = tuple(x for x in args.trace.split(",") if x)
    for e in edges:
        if not model.automaton.has_edge(e):
            raise StochhaError(f"unknown edge {e!r} in trace")
    trace = Trace(model.automaton.init, edges)
    method = args.method
    if method == "auto":
        method = "mc" if isinstance(model, DecomposedSchedule) else "quad"
    if method == "mc" and args.seed is None:
        raise UsageError("Monte Carlo estimates need --seed")
    if method == "quad":
        if isinstance(model, DecomposedSchedule):
            est = trace_prob_decomposed_quad(model, trace, args.tol)
        else:
            est = trace_prob_composed(model, trace, args.tol)
    elif isinstance(model, DecomposedSchedule):
        est = trace_prob_decomposed_mc(model, trace, args.n, args.seed, args.level)
    else:
        counts = composed_prefix_counts(model, trace.head, len(edges), args.n, args.seed)
        est = mc_estimate(counts.get(edges, 0) if edges else args.n, args.n, args.level)
    out.table(Table(f"Pr{trace}", ["trace", *ESTIMATE_HEADER], [[" ".join(edges), *est.row()]]))
    return EXIT_OK


def cmd_translate(args, out: Output) -> int:
    doc, model = load(args.model)
    if not isinstance(model, DecomposedSchedule):
        raise StochhaError("translate expects a decomposed model")
    res = translate(model, args.rule)
    stem = FsPath(args.model).stem
    target = _out_dir(args) / f"{stem}.translated.sha"
    tdoc = document_of(res.composed, f"{doc.name}_translated",
                       (("source", doc.name),), res.edge_map)
    target.write_text(serialize(tdoc))
    out.table(Table("translation", ["property", "value"], [
        ["variables", res.layout.dim], ["edges", len(res.composed.automaton.edges)],
        ["rule", args.rule], ["file", str(target)]]))
    return EXIT_OK


def _read_map(path: str) -> dict[str, str]:
    out = {}
    for no, raw in enumerate(FsPath(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].replace("->", " ").split()
        if not line:
            continue
        if len(line) != 2:
            raise ParseError("expected 'edge_a edge_b'", no, 1)
        out[line[0]] = line[1]
    return out


def cmd_equiv(args, out: Output) -> int:
    doc_a, a = load(args.model)
    doc_b, b = load(args.other)
    if args.map == "auto":
        emap = edge_map_of(doc_b)
        if emap is None:
            inv = edge_map_of(doc_a)
            if inv is None:
                raise StochhaError("neither model records a translation edge map; "
                                   "pass --map identity or a map file")
            emap = {v: k for k, v in inv.items()}
    elif args.map == "identity":
        emap = None
    else:
        emap = _read_map(args.map)
    rep = check_pr_equivalence(a, b, emap, depth=args.depth, n=args.n, alpha=args.alpha,
                               seed=args.seed, decomposed_method=args.decomposed_method,
                               cdf_method=args.cdf_method, cdf_tol=args.cdf_tol,
                               names=(doc_a.name, doc_b.name))
    rows = []
    for c in rep.trace_sets:
        rows.append(["trace-set", c.depth, f"{c.count_a}/{c.count_b}", "", "",
                     "pass" if c.passed else "fail"])
    for c in rep.probabilities:
        rows.append(["trace-prob", " ".join(c.edges), c.a.value, c.b.value,
                     f"[{c.a.lo!r}, {c.a.hi!r}] [{c.b.lo!r}, {c.b.hi!r}]",
                     "pass" if c.passed else "fail"])
    for c in rep.delay_cdfs:
        rows.append(["delay-cdf", " ".join(c.edges) or "(head)", c.statistic, c.where,
                     c.method if c.p_value is None else f"p={c.p_value!r}",
                     "pass" if c.passed else "fail"])
    out.table(Table("checks", ["check", "subject", "a", "b", "detail", "verdict"], rows))
    for line in rep.summary_lines():
        out.line(line)
    for note in rep.notes:
        out.line(f"note: {note}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_race(args, out: Output) -> int:
    specs = [parse_dist(t) for t in args.rv]
    dists = [s.resolve(()) for s in specs]
    if args.shift:
        dists = [shift_condition(d, args.shift) for d in dists]
    rows = [[i + 1, args.rv[i], str(d), d.cdf(1.0), prob_is_min(i, dists)]
            for i, d in enumerate(dists)]
    out.table(Table("race", ["index", "rv", "law", "cdf_at_1", "win_probability"], rows))
    m = min_of(dists)
    top = m.tail(1e-6)
    grid = [top * i / args.grid for i in range(args.grid + 1)]
    out.table(Table("minimum", ["t", "cdf", "pdf"], [[t, m.cdf(t), m.pdf(t)] for t in grid]))
    ok = True
    if args.witness:
        if len(dists) != 2:
            raise StochhaError("--witness needs exactly two random variables")
        target = parse_dist(args.witness).resolve(())
        rep = counterexample_witness(dists[0], dists[1], target)
        ok = rep.valid
        out.table(Table("witness", ["property", "value"], [
            ["valid", rep.valid], ["reason", rep.reason], ["overlap", rep.overlap],
            ["interval", rep.interval], ["density_ratio", rep.ratio],
            ["sup_cdf_distance", rep.ks_distance], ["at", rep.ks_at]]))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_zeno(args, out: Output) -> int:
    _, model = load(args.model)
    if not isinstance(model, ComposedSchedule):
        raise StochhaError("zeno probes kernel-scheduled models")
    rep = zeno_probe(model, args.location, args.k, tol=args.tol)
    out.table(Table(f"resampling runs in {args.location}", ["k", "probability"], rep.rows()))
    out.line(f"strictly decreasing: {rep.decreasing}")
    out.line(f"non-vanishing: {rep.non_vanishing}")
    return EXIT_OK if rep.decreasing else EXIT_FAIL


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochha", description="Stochastic hybrid automata toolkit.")
    p.add_argument("--version", action="version", version=f"stochha {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_required=False):
        sp.add_argument("--format", choices=("text", "csv"), default="text")
        sp.add_argument("--seed", type=int, required=seed_required)
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
        return sp

    sp = common(sub.add_parser("validate", help="check a model file"))
    sp.add_argument("model")
    sp.set_defaults(func=cmd_validate, inputs=("model",))

    sp = common(sub.add_parser("simulate", help="simulate trajectories"), seed_required=True)
    sp.add_argument("model")
    sp.add_argument("--trajectories", type=int, default=1000)
    sp.add_argument("--max-jumps", type=int)
    sp.add_argument("--max-time", type=float, default=math.inf)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--cdf-points", type=int, default=100)
    sp.set_defaults(func=cmd_simulate, inputs=("model",))

    sp = common(sub.add_parser("trace-prob", help="probability of an edge sequence"))
    sp.add_argument("model")
    sp.add_argument("--trace", required=True, help="comma-separated edge ids")
    sp.add_argument("--method", choices=("auto", "quad", "mc"), default="auto")
    sp.add_argument("--n", type=int, default=100_000)
    sp.add_argument("--level", type=float, default=0.99)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.set_defaults(func=cmd_trace_prob, inputs=("model",))

    sp = common(sub.add_parser("translate", help="compile a race model to a kernel model"))
    sp.add_argument("model")
    sp.add_argument("--rule", choices=RULES, default="race")
    sp.set_defaults(func=cmd_translate, inputs=("model",))

    sp = common(sub.add_parser("equiv", help="statistical equivalence check"),
                seed_required=True)
    sp.add_argument("model")
    sp.add_argument("other")
    sp.add_argument("--map", default="auto", help="auto, identity or a file of 'a b' lines")
    sp.add_argument("--depth", type=int, default=3)
    sp.add_argument("--n", type=int, default=100_000)
    sp.add_argument("--alpha", type=float, default=0.01)
    sp.add_argument("--decomposed-method", choices=("mc", "quad"), default="mc")
    sp.add_argument("--cdf-method", choices=("analytic", "ks"), default="analytic")
    sp.add_argument("--cdf-tol", type=float, default=1e-9)
    sp.set_defaults(func=cmd_equiv, inputs=("model", "other"))

    sp = common(sub.add_parser("race", help="minimum, residual and win tables"))
    sp.add_argument("--rv", action="append", required=True, help="e.g. 'exp(1)'; repeatable")
    sp.add_argument("--shift", type=float, default=0.0, help="elapsed time for residual laws")
    sp.add_argument("--grid", type=int, default=20)
    sp.add_argument("--witness", help="uniform target law for the minimum of two variables")
    sp.set_defaults(func=cmd_race, inputs=())

    sp = common(sub.add_parser("zeno", help="probabilities of repeated resampling"))
    sp.add_argument("model")
    sp.add_argument("--location", required=True)
    sp.add_argument("--k", type=int, default=4)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.set_defaults(func=cmd_zeno, inputs=("model",))
    return p


def main(argv: Sequence[str] | None = None, stdout=None) -> int:
    args = build_parser().parse_args(argv)
    stream = stdout or sys.stdout
    inputs = [getattr(args, k) for k in args.inputs]
    try:
        out = Output(stream, args.format, provenance(args.seed, inputs))
        return args.func(args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ParseError as exc:
        where = inputs[0] if inputs else "input"
        print(f"{where}:{exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StochhaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
