"""Command-line front end: ``odestrata <command> ...``.

Exit status is 0 on success, 2 on parse or usage errors and 3 on solver
errors.  A human-readable report goes to standard output; ``--out PATH``
additionally writes tab-separated blocks (header row first, blocks
separated by blank lines).
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

from . import bench
from .continuation import continue_to
from .errors import OdeStrataError, ParseError, PartialSolutionError, SolverError
from .euler import euler_polygon, extend_maximal, solve_certified
from .polyivp import newton_solve, picard_solve
from .problem import parse_problem
from .regularity import classify_stratum
from .series import Dyadic, Interval
from .strata import MAX_RANK, derived_rank, solve_stratified

EXIT_OK, EXIT_PARSE, EXIT_SOLVER = 0, 2, 3


@dataclass
class Table:
    name: str
    header: tuple
    rows: list = field(default_factory=list)

    def add(self, *row):
        if len(row) != len(self.header):
            raise ValueError(f"row of length {len(row)} for header {self.header}")
        self.rows.append(tuple("" if v is None else str(v) for v in row))


@dataclass
class RunReport:
    command: str
    stratum: str | None = None
    summary: dict = field(default_factory=dict)
    tables: list = field(default_factory=list)
    elapsed_ms: float = 0.0

    def table(self, name: str, *header) -> Table:
        t = Table(name, tuple(header))
        self.tables.append(t)
        return t

    def meta(self) -> Table:
        t = Table("run", ("key", "value"))
        t.add("command", self.command)
        if self.stratum is not None:
            t.add("stratum", self.stratum)
        for k, v in self.summary.items():
            t.add(k, v)
        t.add("elapsed_ms", f"{self.elapsed_ms:.3f}")
        return t

    def tsv(self) -> str:
        blocks = []
        for t in [self.meta()] + self.tables:
            lines = ["\t".join(t.header)] + ["\t".join(r) for r in t.rows]
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"

    def human(self) -> str:
        out = []
        for t in [self.meta()] + self.tables:
            out.append(f"== {t.name}")
            widths = [max(len(h), *(len(r[i]) for r in t.rows)) if t.rows else len(h) for i, h in enumerate(t.header)]
            out.append("  ".join(h.ljust(w) for h, w in zip(t.header, widths)).rstrip())
            for r in t.rows:
                out.append("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
        return "\n".join(out) + "\n"


def format_dyadic(q) -> str:
    """``m*2^e (decimal)`` for dyadic values, ``p/q`` otherwise."""
    q = Fraction(q)
    d = q.denominator
    if d & (d - 1):
        return str(q)
    dy = Dyadic.exact(q)
    return f"{dy} ({dy.decimal(20)})"


def _interval_row(iv: Interval) -> tuple:
    return format_dyadic(iv.lo.to_fraction()), format_dyadic(iv.hi.to_fraction()), format_dyadic(iv.width)


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _targets(text: str) -> list[Fraction]:
    return [_rational(x) for x in text.split(",") if x.strip()]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParseError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="odestrata", description="Regularity-stratified IVP solver.")
    p.add_argument("--out", help="write tab-separated report blocks to this path")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="series (picard/newton) or Euler solution")
    s.add_argument("problem")
    s.add_argument("--method", choices=("picard", "newton", "euler"))
    s.add_argument("--order", type=int)
    s.add_argument("--k", type=int, help="Euler mesh count")
    s.add_argument("--horizon", type=_rational, help="Euler time span t*")
    s.add_argument("--eps", type=_rational, help="certified Euler tolerance")

    c = sub.add_parser("continue", help="certified enclosure of y(T)")
    c.add_argument("problem")
    c.add_argument("--to", type=_rational)
    c.add_argument("--prec", type=int)

    k = sub.add_parser("classify", help="place the problem in a stratum")
    k.add_argument("problem")

    st = sub.add_parser("stratify", help="derived-set rank and glued solution")
    st.add_argument("problem")
    st.add_argument("--max-rank", type=int, dest="max_rank")
    st.add_argument("--floor", type=_rational)

    e = sub.add_parser("extend", help="maximal Euler extension")
    e.add_argument("problem")

    b = sub.add_parser("bench", help="fixed benchmarks")
    b.add_argument("which", choices=("doubling", "patches", "expblowup", "eulerorder"))
    b.add_argument("--order", type=int, default=1024)
    b.add_argument("--targets", type=_targets)
    b.add_argument("--prec", type=int, default=10)
    b.add_argument("--repeats", type=int, default=1)
    for sp in (s, c, k, st, e, b):
        sp.add_argument("--out", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    return p


def _load(path: str):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_problem(data)


def _pick(args, prob, key, default):
    value = getattr(args, key, None)
    if value is None:
        value = prob.option(key, default)
    return value


def _cmd_solve(args, report: RunReport):
    prob = _load(args.problem)
    method = _pick(args, prob, "method", "newton")
    report.summary["method"] = method
    if method in ("picard", "newton"):
        ivp = prob.poly_ivp()
        order = _pick(args, prob, "order", 16)
        if method == "newton":
            series, steps = newton_solve(ivp, order)
            report.summary["newton_steps"] = steps
        else:
            series = picard_solve(ivp, order)
        report.summary["order"] = order
        t = report.table("coefficients", "index", "component", "coefficient")
        for i, comp in enumerate(series.components):
            for n, c in enumerate(comp):
                t.add(n, i + 1, c)
        return
    f = prob.field()
    eps = _pick(args, prob, "eps", None)
    horizon = _pick(args, prob, "horizon", f.domain.t_end - prob.t0)
    if eps is not None:
        poly = solve_certified(f, horizon, eps)
    else:
        poly = euler_polygon(f, prob.t0, prob.y0, horizon, _pick(args, prob, "k", 64))
    report.summary.update(k=poly.k, error_bound=poly.error_bound, mesh_width=poly.mesh_width)
    _polygon_table(report, poly)


def _polygon_table(report: RunReport, poly):
    dim = len(poly.values[0])
    t = report.table("polygon", "index", "t", *(f"y{j + 1}" for j in range(dim)))
    for i, (tau, vals) in enumerate(zip(poly.times, poly.values)):
        t.add(i, tau, *(format_dyadic(v) for v in vals))


def _cmd_continue(args, report: RunReport):
    prob = _load(args.problem)
    ivp = prob.poly_ivp()
    T = _pick(args, prob, "to", ivp.domain.t_end)
    n = _pick(args, prob, "prec", 30)
    trace = continue_to(ivp, T, n)
    report.summary.update(target=T, prec=n, patches=trace.count, working_bits=trace.precision)
    t = report.table("enclosure", "component", "lo", "hi", "width")
    for i, iv in enumerate(trace.value):
        t.add(i + 1, *_interval_row(iv))
    pt = report.table("patches", "index", "center", "radius_lb", "order", "step")
    for i, p in enumerate(trace.patches):
        pt.add(i, format_dyadic(p.center), format_dyadic(p.radius_lb), p.order, format_dyadic(p.step))


def _cmd_classify(args, report: RunReport):
    prob = _load(args.problem)
    r = classify_stratum(prob.descriptor())
    report.stratum = r.stratum
    report.summary["evidence"] = r.evidence
    t = report.table("parameters", "name", "value")
    for k, v in r.parameters.items():
        t.add(k, v)


def _cmd_stratify(args, report: RunReport):
    prob = _load(args.problem)
    f = prob.piecewise()
    max_rank = _pick(args, prob, "max_rank", MAX_RANK)
    floor = _pick(args, prob, "floor", None)
    cert = derived_rank(f, max_rank)
    report.summary["rank"] = "exceeds bound" if cert.rank is None else cert.rank
    chain = report.table("chain", "level", "set")
    for i, level in enumerate(cert.chain):
        chain.add(i, level)
    if cert.rank is None:
        return
    try:
        sol = solve_stratified(f, max_rank, floor=floor)
    except PartialSolutionError as exc:
        _polygon_table(report, exc.polygon)
        raise
    report.summary.update(mesh_points=sol.polygon.k + 1, stub_error=sol.stub_error)
    spans = report.table("spans", "lo", "hi", "stub")
    for s in sol.spans:
        spans.add(s.lo, s.hi, int(s.stub))
    _polygon_table(report, sol.polygon)


def _cmd_extend(args, report: RunReport):
    prob = _load(args.problem)
    ext = extend_maximal(prob.field())
    report.summary.update(beta=ext.beta, reason=ext.reason, beta_decimal=f"{float(ext.beta):.12g}")
    _polygon_table(report, ext.polygon)


def _cmd_bench(args, report: RunReport):
    which = args.which
    report.summary["benchmark"] = which
    if which == "doubling":
        rows = bench.doubling(args.order)
        t = report.table("doubling", "step", "correct", "valuation", "ms")
        for r in rows:
            t.add(r["step"], r["correct"], r["valuation"], r["ms"])
    elif which == "patches":
        rows = bench.patches(args.targets or bench.DEFAULT_PATCH_TARGETS, args.prec)
        t = report.table("patches", "T", "log_term", "patches", "ms")
        for r in rows:
            t.add(r["T"], f"{r['log_term']:.6f}", r["patches"], r["ms"])
        slopes = bench.fit_patch_slopes(rows)
        if slopes:
            report.summary["slope_min"] = f"{min(slopes):.4f}"
            report.summary["slope_max"] = f"{max(slopes):.4f}"
    elif which == "expblowup":
        targets = [int(x) for x in (args.targets or bench.DEFAULT_BLOWUP_TARGETS)]
        rows = bench.expblowup(targets, args.prec, args.repeats)
        t = report.table("expblowup", "T", "patches", "value_bits", "ms", "growth")
        prev = None
        for r in rows:
            growth = None if prev is None else f"{r['ms'] / prev:.3f}"
            t.add(r["T"], r["patches"], r["value_bits"], r["ms"], growth)
            prev = r["ms"]
    else:
        rows = bench.eulerorder()
        t = report.table("eulerorder", "k", "error", "ratio", "ms")
        for r in rows[:-1]:
            t.add(r["k"], f"{r['error']:.6e}", None if r["ratio"] is None else f"{r['ratio']:.4f}", r["ms"])
        last = rows[-1]
        report.summary.update(certified_k=last["k"], certified_error=f"{last['error']:.6e}", certified_bound=last["bound"])


_COMMANDS = {
    "solve": _cmd_solve,
    "continue": _cmd_continue,
    "classify": _cmd_classify,
    "stratify": _cmd_stratify,
    "extend": _cmd_extend,
    "bench": _cmd_bench,
}


def run_command(argv, stdout=None, stderr=None) -> tuple[int, RunReport | None]:
    """Run one command; returns ``(exit_status, report)``."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(list(argv))
    except ParseError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_PARSE, None
    report = RunReport(" ".join(["odestrata", *argv]))
    start = time.perf_counter()
    status = EXIT_OK
    try:
        _COMMANDS[args.command](args, report)
    except ParseError as exc:
        print(f"parse error: {exc}", file=stderr)
        return EXIT_PARSE, None
    except (SolverError, OdeStrataError) as exc:
        print(f"solver error ({type(exc).__name__}): {exc}", file=stderr)
        report.summary["error"] = f"{type(exc).__name__}: {exc}"
        status = EXIT_SOLVER
    report.elapsed_ms = (time.perf_counter() - start) * 1000
    stdout.write(report.human())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.tsv())
    return status, report


def main(argv=None) -> int:
    try:
        status, _ = run_command(sys.argv[1:] if argv is None else argv)
    except BrokenPipeError:
        # reader closed early (e.g. piped into head)
        sys.stderr.close()
        return EXIT_OK
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
