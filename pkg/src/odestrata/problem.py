"""Line-based problem files: parsing and canonical emission.

A problem file is a sequence of ``key=value`` lines; ``#`` starts a comment.

    dim=1
    t0=0
    y0=1
    rhs=poly: y1^2
    domain=[0,2]x[-10,10]

``rhs`` is ``poly: ...`` (polynomial in t, y1..yd), ``expr: ...`` (adds
``/``, ``sqrt``, ``abs``, ``min``, ``max``) or ``piecewise``; components are
separated by ``;``.  A piecewise field lists ``piece=<label>: <expr>; ...``
lines and a ``breaks=`` layout:

    layout    := gap (component gap)*
    gap       := label | '-'
    component := 'point' '(' rat ',' label ')'
               | 'tower' '(' rat ',' rat ',' (rat | 'harmonic') ',' int ',' label ':' slot+ ')'
    slot      := '[' gap (label | '{' component (gap component)* '}') ']'

``-`` marks a gap outside the time interval.  ``modulus=lipschitz: L`` or
``modulus=osgood: <family> <params> [delta=q]`` attaches a modulus.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .domain import RectDomain
from .errors import DomainError, InvalidModulusError, OdeStrataError, ParseError
from .euler import FieldSpec
from .expr import Abs, Add, Const, Div, Expr, Max, Min, Mul, Neg, Pow, Sqrt, Sub, Var, expr_from_polynomial
from .polyivp import PolyIVP
from .regularity import ModulusSpec
from .series import Polynomial
from .strata import BreakPoint, Breaks, BreakTower, Cluster, PiecewiseField, TowerSlot

OPTION_KEYS = ("method", "order", "to", "prec", "eps", "k", "horizon", "max_rank", "floor")
_KEYS = ("dim", "t0", "y0", "rhs", "domain", "modulus", "bound", "breaks", "piece") + OPTION_KEYS
_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z_0-9]*)|(\S))")
_FUNCS = {"sqrt": Sqrt, "abs": Abs, "min": Min, "max": Max}


# ---------------------------------------------------------------------------
# tokens
# ---------------------------------------------------------------------------


class _Tokens:
    def __init__(self, text: str, line: int, column: int):
        self.items = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                break
            kind = "int" if m.group(1) else "name" if m.group(2) else "sym"
            start = m.start(m.lastindex)
            self.items.append((kind, m.group(m.lastindex), column + start))
            pos = m.end()
        self.i = 0
        self.line = line
        self.end_col = column + len(text.rstrip())

    def peek(self, offset: int = 0):
        j = self.i + offset
        return self.items[j] if j < len(self.items) else ("end", "", self.end_col)

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def error(self, msg: str, tok=None):
        tok = tok or self.peek()
        return ParseError(msg, self.line, tok[2])

    def accept(self, value: str) -> bool:
        if self.peek()[1] == value and self.peek()[0] != "end":
            self.i += 1
            return True
        return False

    def expect(self, value: str):
        tok = self.next()
        if tok[1] != value or tok[0] == "end":
            raise self.error(f"expected {value!r}, found {tok[1] or 'end of line'!r}", tok)
        return tok

    def done(self):
        if self.peek()[0] != "end":
            raise self.error(f"unexpected {self.peek()[1]!r}")

    def integer(self) -> int:
        tok = self.next()
        if tok[0] != "int":
            raise self.error(f"expected an integer, found {tok[1] or 'end of line'!r}", tok)
        return int(tok[1])

    def rational(self) -> Fraction:
        sign = -1 if self.accept("-") else 1
        num = self.integer()
        if self.accept("/"):
            tok = self.peek()
            den = self.integer()
            if den == 0:
                raise self.error("zero denominator", tok)
            return sign * Fraction(num, den)
        return Fraction(sign * num)


# ---------------------------------------------------------------------------
# expressions
# ---------------------------------------------------------------------------


class _ExprParser:
    def __init__(self, toks: _Tokens, dim: int, poly: bool):
        self.toks, self.dim, self.poly = toks, dim, poly

    def parse(self) -> Expr:
        return self.sum()

    def sum(self) -> Expr:
        out = self.product()
        while True:
            if self.toks.accept("+"):
                out = Add(out, self.product())
            elif self.toks.accept("-"):
                out = Sub(out, self.product())
            else:
                return out

    def product(self) -> Expr:
        out = self.unary()
        while True:
            if self.toks.accept("*"):
                out = Mul(out, self.unary())
            elif self.peek_is("/"):
                tok = self.toks.next()
                rhs = self.unary()
                out = self.divide(out, rhs, tok)
            else:
                return out

    def peek_is(self, sym: str) -> bool:
        kind, value, _ = self.toks.peek()
        return kind == "sym" and value == sym

    def divide(self, a: Expr, b: Expr, tok) -> Expr:
        if isinstance(a, Const) and isinstance(b, Const):
            if b.value == 0:
                raise self.toks.error("division by zero", tok)
            return Const(a.value / b.value)
        if isinstance(b, Const) and b.value != 0:
            return Mul(a, Const(1 / b.value))
        if isinstance(b, Const):
            raise self.toks.error("division by zero", tok)
        if self.poly:
            raise self.toks.error("a polynomial may only divide by a constant", tok)
        return Div(a, b)

    def unary(self) -> Expr:
        if self.toks.accept("-"):
            inner = self.unary()
            return Const(-inner.value) if isinstance(inner, Const) else Neg(inner)
        return self.power()

    def power(self) -> Expr:
        out = self.atom()
        while self.toks.accept("^"):
            out = Pow(out, self.toks.integer())
        return out

    def atom(self) -> Expr:
        kind, value, col = tok = self.toks.next()
        if kind == "int":
            return Const(int(value))
        if kind == "sym" and value == "(":
            inner = self.sum()
            self.toks.expect(")")
            return inner
        if kind == "name":
            if value == "t":
                return Var(0)
            if value == "y" and self.dim == 1:
                return Var(1)
            m = re.fullmatch(r"y([1-9]\d*)", value)
            if m:
                j = int(m.group(1))
                if j > self.dim:
                    raise self.toks.error(f"{value} exceeds the dimension {self.dim}", tok)
                return Var(j)
            if value in _FUNCS:
                if self.poly:
                    raise self.toks.error(f"{value} is not allowed in a polynomial", tok)
                self.toks.expect("(")
                a = self.sum()
                if value in ("min", "max"):
                    self.toks.expect(",")
                    b = self.sum()
                    self.toks.expect(")")
                    return _FUNCS[value](a, b)
                self.toks.expect(")")
                return _FUNCS[value](a)
            raise self.toks.error(f"unknown name {value!r}", tok)
        raise self.toks.error(f"unexpected {value or 'end of line'!r}", tok)


def parse_expression(text: str, dim: int, *, poly: bool = False, line: int = 1, column: int = 1) -> Expr:
    toks = _Tokens(text, line, column)
    out = _ExprParser(toks, dim, poly).parse()
    toks.done()
    return out


def _components(text: str, dim: int, poly: bool, line: int, column: int) -> tuple:
    parts, offset = [], 0
    for chunk in text.split(";"):
        parts.append(parse_expression(chunk, dim, poly=poly, line=line, column=column + offset))
        offset += len(chunk) + 1
    if len(parts) != dim:
        raise ParseError(f"expected {dim} components, found {len(parts)}", line, column)
    return tuple(parts)


# ---------------------------------------------------------------------------
# breakpoint layouts
# ---------------------------------------------------------------------------


def _gap(toks: _Tokens):
    if toks.accept("-"):
        return None
    return toks.integer()


def _component(toks: _Tokens):
    kind, word, _ = tok = toks.next()
    if word == "point":
        toks.expect("(")
        at = toks.rational()
        toks.expect(",")
        label = toks.integer()
        toks.expect(")")
        return BreakPoint(at, label)
    if word == "tower":
        toks.expect("(")
        anchor = toks.rational()
        toks.expect(",")
        scale = toks.rational()
        toks.expect(",")
        ratio = None if toks.accept("harmonic") else toks.rational()
        toks.expect(",")
        start = toks.integer()
        toks.expect(",")
        anchor_label = toks.integer()
        toks.expect(":")
        slots = []
        while toks.accept("["):
            gap = toks.integer()
            if toks.accept("{"):
                comps, gaps = [_component(toks)], []
                while not toks.accept("}"):
                    gaps.append(toks.integer())
                    comps.append(_component(toks))
                slots.append(TowerSlot(gap, cluster=Cluster(tuple(comps), tuple(gaps))))
            else:
                slots.append(TowerSlot(gap, label=toks.integer()))
            toks.expect("]")
        if not slots:
            raise toks.error("a tower needs at least one slot")
        toks.expect(")")
        return BreakTower(anchor, scale, ratio, start, anchor_label, tuple(slots))
    raise toks.error(f"expected 'point' or 'tower', found {word or 'end of line'!r}", tok)


def parse_layout(text: str, line: int = 1, column: int = 1) -> Breaks:
    toks = _Tokens(text, line, column)
    gaps, comps = [_gap(toks)], []
    while toks.peek()[0] != "end":
        comps.append(_component(toks))
        gaps.append(_gap(toks))
    try:
        return Breaks(tuple(comps), tuple(gaps))
    except DomainError as exc:
        raise ParseError(str(exc), line, column) from None


def _emit_rational(q: Fraction) -> str:
    return str(q)


def _emit_component(c) -> str:
    if isinstance(c, BreakPoint):
        return f"point({c.at}, {c.label})"
    ratio = "harmonic" if c.ratio is None else str(c.ratio)
    slots = []
    for s in c.slots:
        if s.cluster is None:
            slots.append(f"[{s.gap} {s.label}]")
        else:
            slots.append(f"[{s.gap} {{{_emit_cluster(s.cluster)}}}]")
    return f"tower({c.anchor}, {c.scale}, {ratio}, {c.start}, {c.anchor_label}: {' '.join(slots)})"


def _emit_cluster(cl: Cluster) -> str:
    parts = [_emit_component(cl.components[0])]
    for g, c in zip(cl.gaps, cl.components[1:]):
        parts += [str(g), _emit_component(c)]
    return " ".join(parts)


def emit_layout(b: Breaks) -> str:
    def gap(g):
        return "-" if g is None else str(g)

    parts = [gap(b.gaps[0])]
    for c, g in zip(b.components, b.gaps[1:]):
        parts += [_emit_component(c), gap(g)]
    return " ".join(parts)


# ---------------------------------------------------------------------------
# problem files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemFile:
    """Parsed problem; ``rhs_kind`` is ``poly``, ``expr`` or ``piecewise``."""

    dim: int
    t0: Fraction
    y0: tuple
    domain: RectDomain
    rhs_kind: str
    polynomial: Polynomial | None = None
    exprs: tuple | None = None
    pieces: tuple = ()
    breaks: Breaks | None = None
    modulus: ModulusSpec | None = None
    bound: Fraction | None = None
    options: tuple = ()

    def option(self, key: str, default=None):
        return dict(self.options).get(key, default)

    def poly_ivp(self) -> PolyIVP:
        if self.rhs_kind == "poly":
            P = self.polynomial
        elif self.rhs_kind == "expr":
            P = self.field().as_polynomial()
            if P is None:
                raise DomainError("the right-hand side is not polynomial")
        else:
            raise DomainError("a piecewise field is not a polynomial IVP")
        return PolyIVP(P, self.t0, self.y0, self.domain)

    def field(self) -> FieldSpec:
        if self.rhs_kind == "piecewise":
            raise DomainError("use piecewise() for a piecewise field")
        if self.rhs_kind == "poly":
            comps = tuple(expr_from_polynomial(self.polynomial, i) for i in range(self.dim))
        else:
            comps = self.exprs
        return FieldSpec(comps, self.domain, self.modulus, self.bound, self.t0, self.y0)

    def piecewise(self) -> PiecewiseField:
        if self.rhs_kind != "piecewise":
            raise DomainError("the right-hand side is not piecewise")
        return PiecewiseField(self.breaks, self.pieces, self.domain, self.t0, self.y0, self.modulus)

    def descriptor(self):
        """Most specific object for classification."""
        if self.rhs_kind == "poly":
            return self.poly_ivp()
        if self.rhs_kind == "piecewise":
            return self.piecewise()
        return self.field()


def _rationals(text: str, line: int, column: int) -> tuple:
    toks = _Tokens(text, line, column)
    out = [toks.rational()]
    while toks.accept(","):
        out.append(toks.rational())
    toks.done()
    return tuple(out)


def _domain(text: str, line: int, column: int) -> RectDomain:
    toks = _Tokens(text, line, column)
    parts = []
    while True:
        toks.expect("[")
        lo = toks.rational()
        toks.expect(",")
        hi = toks.rational()
        toks.expect("]")
        parts.append((lo, hi))
        if not toks.accept("x"):
            break
    toks.done()
    if len(parts) < 2:
        raise ParseError("domain needs a time interval and at least one space interval", line, column)
    try:
        return RectDomain(parts[0][0], parts[0][1], parts[1:])
    except DomainError as exc:
        raise ParseError(str(exc), line, column) from None


def _modulus(text: str, line: int, column: int) -> ModulusSpec:
    kind, sep, body = text.partition(":")
    kind = kind.strip()
    if not sep or kind not in ("lipschitz", "osgood"):
        raise ParseError("modulus must start with 'lipschitz:' or 'osgood:'", line, column)
    words = body.split()
    delta = None
    if words and words[-1].startswith("delta="):
        delta = _rationals(words.pop()[6:], line, column)[0]
    if kind == "lipschitz":
        family, params = "linear", words
    else:
        if not words:
            raise ParseError("osgood modulus needs a family", line, column)
        family, params = words[0], words[1:]
    try:
        values = tuple(_rationals(p, line, column)[0] for p in params)
        if family == "rlog" and delta is None:
            return ModulusSpec.rlog(*values)
        return ModulusSpec(family, values, delta)
    except (InvalidModulusError, TypeError) as exc:
        raise ParseError(f"bad modulus: {exc}", line, column) from None


def _emit_modulus(m: ModulusSpec) -> str:
    tail = "" if m.delta is None or m.family == "table" else f" delta={m.delta}"
    params = " ".join(str(p) for p in m.params)
    if m.family == "linear":
        return f"lipschitz: {params}{tail}"
    return f"osgood: {m.family} {params}{tail}"


def _option(key: str, text: str, line: int, column: int):
    text = text.strip()
    if key == "method":
        if text not in ("picard", "newton", "euler"):
            raise ParseError(f"unknown method {text!r}", line, column)
        return text
    if key in ("order", "prec", "k", "max_rank"):
        if not text.isdigit():
            raise ParseError(f"{key} must be a non-negative integer", line, column)
        return int(text)
    return _rationals(text, line, column)[0]


def parse_problem(text) -> ProblemFile:
    """Parse a problem file given as ``str`` or UTF-8 ``bytes``."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not UTF-8: {exc}", 1, 1) from None
    raw: dict = {}
    pieces: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        key, sep, value = body.partition("=")
        if not sep:
            raise ParseError("expected key=value", lineno, 1)
        key = key.strip()
        col = body.index("=") + 2
        if key not in _KEYS:
            raise ParseError(f"unknown key {key!r}", lineno, 1)
        if key == "piece":
            label, sep, rest = value.partition(":")
            if not sep or not label.strip().isdigit():
                raise ParseError("expected piece=<label>: <expr>", lineno, col)
            lab = int(label.strip())
            if lab in pieces:
                raise ParseError(f"piece {lab} given twice", lineno, col)
            pieces[lab] = (rest, lineno, col + len(label) + 1)
            continue
        if key in raw:
            raise ParseError(f"duplicate key {key!r}", lineno, 1)
        raw[key] = (value, lineno, col)
    for key in ("dim", "t0", "y0", "rhs", "domain"):
        if key not in raw:
            raise ParseError(f"missing key {key!r}", len(text.splitlines()) + 1, 1)

    value, ln, col = raw["dim"]
    if not value.strip().isdigit() or int(value) < 1:
        raise ParseError("dim must be a positive integer", ln, col)
    dim = int(value)
    t0 = _rationals(*raw["t0"])
    if len(t0) != 1:
        raise ParseError("t0 must be a single rational", raw["t0"][1], raw["t0"][2])
    y0 = _rationals(*raw["y0"])
    if len(y0) != dim:
        raise ParseError(f"y0 has {len(y0)} entries, dim is {dim}", raw["y0"][1], raw["y0"][2])
    domain = _domain(*raw["domain"])
    if domain.dim != dim:
        raise ParseError(f"domain has {domain.dim} space intervals, dim is {dim}", raw["domain"][1], raw["domain"][2])
    modulus = _modulus(*raw["modulus"]) if "modulus" in raw else None
    bound = _rationals(*raw["bound"])[0] if "bound" in raw else None
    options = tuple(sorted((k, _option(k, *raw[k])) for k in OPTION_KEYS if k in raw))

    value, ln, col = raw["rhs"]
    kind, sep, body = value.partition(":")
    kind = kind.strip()
    fields = dict(dim=dim, t0=t0[0], y0=y0, domain=domain, modulus=modulus, bound=bound, options=options)
    body_col = col + len(value) - len(body)
    if kind == "piecewise" and not body.strip():
        if "breaks" not in raw or not pieces:
            raise ParseError("a piecewise rhs needs breaks= and piece= lines", ln, col)
        labels = sorted(pieces)
        if labels != list(range(len(labels))):
            raise ParseError("piece labels must be 0, 1, ..., n-1", ln, col)
        exprs = tuple(_components(pieces[lab][0], dim, False, pieces[lab][1], pieces[lab][2]) for lab in labels)
        breaks = parse_layout(*raw["breaks"])
        out = ProblemFile(rhs_kind="piecewise", pieces=exprs, breaks=breaks, **fields)
        try:
            out.piecewise()
        except OdeStrataError as exc:
            raise ParseError(f"invalid piecewise field: {exc}", *raw["breaks"][1:]) from None
        return out
    if "breaks" in raw or pieces:
        raise ParseError("breaks= and piece= need rhs=piecewise", ln, col)
    if kind == "poly" and sep:
        exprs = _components(body, dim, True, ln, body_col)
        P = Polynomial.from_dicts(dim, [e.polynomial(dim) for e in exprs])
        return ProblemFile(rhs_kind="poly", polynomial=P, **fields)
    if kind == "expr" and sep:
        exprs = _components(body, dim, False, ln, body_col)
        return ProblemFile(rhs_kind="expr", exprs=exprs, **fields)
    raise ParseError("rhs must be 'poly: ...', 'expr: ...' or 'piecewise'", ln, col)


def emit_problem(p: ProblemFile) -> str:
    """Canonical text of a problem; ``parse_problem`` reads it back to an equal structure."""
    lines = [
        f"dim={p.dim}",
        f"t0={p.t0}",
        "y0=" + ",".join(str(v) for v in p.y0),
    ]
    if p.rhs_kind == "poly":
        lines.append(f"rhs=poly: {p.polynomial}")
    elif p.rhs_kind == "expr":
        lines.append("rhs=expr: " + "; ".join(str(e) for e in p.exprs))
    else:
        lines.append("rhs=piecewise")
        for lab, piece in enumerate(p.pieces):
            lines.append(f"piece={lab}: " + "; ".join(str(e) for e in piece))
        lines.append("breaks=" + emit_layout(p.breaks))
    lines.append(f"domain={p.domain}")
    if p.modulus is not None:
        lines.append("modulus=" + _emit_modulus(p.modulus))
    if p.bound is not None:
        lines.append(f"bound={p.bound}")
    for key, value in p.options:
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
