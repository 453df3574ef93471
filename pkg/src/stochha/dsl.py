"""Line-oriented model language (``.sha`` files): parser, serializer and lowering.

One statement per line, ``#`` starts a comment.  Variables must be declared
before they are used; locations and edges may be referenced before their
declaration.  Example::

    model fig2b
    var x
    location l0 rate x = 1
    location l1 rate x = 2
    init l0 x = 0
    edge e1 l0 -> l1 guard x >= 4
    composed
      delay l0 uniform(0, 10)
      delay l1 exp(5)
      jump l0 when x in [4, 7] : e1 0.7, e2 0.3
    end

Schedule sections are ``composed ... end``, ``decomposed ... end`` and
``composed race ... end``; the last stores a translated race model together
with the layout of its auxiliary variables and the edge map to its source.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

from .composed import ComposedSchedule, JumpRow, TableSchedule, build_composed_extension
from .core import (INF, AffineReset, Affine, Box, Edge, EdgeKind, HybridAutomaton, Interval,
                   Region, State, _fmt)
from .decomposed import DecomposedSchedule, make_decomposed
from .dist import DistSpec
from .errors import ModelError, ParseError, ResolutionError, StochhaError
from .translate import RULES, RaceKernelSchedule, layout_for

MAX_NESTING = 64

# ---------------------------------------------------------------- document


@dataclass(frozen=True)
class LocationDecl:
    name: str
    rates: tuple[float, ...]
    invariant: Box


@dataclass(frozen=True)
class EdgeDecl:
    id: str
    source: str
    target: str
    guard: Region
    reset: AffineReset
    kind: EdgeKind = EdgeKind.ORIGINAL
    # random variable of a decomposed resampling loop
    rv: str | None = None


@dataclass(frozen=True)
class ComposedSection:
    delays: tuple[tuple[str, DistSpec], ...]
    jumps: tuple[tuple[str, JumpRow], ...] = ()


@dataclass(frozen=True)
class DecomposedSection:
    rvs: tuple[tuple[str, DistSpec], ...]
    labels: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class RaceSection:
    rule: str
    base: tuple[str, ...]
    rvs: tuple[tuple[str, DistSpec], ...]
    labels: tuple[tuple[str, str], ...]
    edge_map: tuple[tuple[str, str], ...] = ()


Schedule = ComposedSection | DecomposedSection | RaceSection


@dataclass(frozen=True)
class ModelDocument:
    name: str
    variables: tuple[str, ...]
    locations: tuple[LocationDecl, ...]
    init: State
    edges: tuple[EdgeDecl, ...]
    schedule: Schedule
    meta: tuple[tuple[str, str], ...] = ()

    def meta_value(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.meta:
            if k == key:
                return v
        return default


# ---------------------------------------------------------------- lexer

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|:=|<=|>=|==|[<>=()\[\],+\-*/:])
""", re.VERBOSE)


_META_HEAD = re.compile(r"\s*meta\s+[A-Za-z_][A-Za-z0-9_]*")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def _tokens(text: str, line: int) -> list[Token]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos + 1)
        if m.lastgroup != "ws":
            out.append(Token(m.lastgroup, m.group(), line, pos + 1))
        pos = m.end()
    return out


class _Line:
    """Cursor over the tokens of one source line."""

    def __init__(self, raw: str, line: int):
        self.raw = raw
        self.line = line
        # a meta value is free text, so only its keyword and key are tokens
        m = _META_HEAD.match(raw)
        self.toks = _tokens(raw[:m.end()] if m else raw, line)
        self.i = 0
        self.depth = 0

    def peek(self, ahead: int = 0) -> Token | None:
        j = self.i + ahead
        return self.toks[j] if j < len(self.toks) else None

    def col(self) -> int:
        t = self.peek()
        return t.col if t else len(self.raw.rstrip()) + 1

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        return ParseError(msg, self.line, tok.col if tok else self.col())

    def at(self, text: str) -> bool:
        t = self.peek()
        return t is not None and t.text == text and t.kind != "num"

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        t = self.peek()
        if not self.at(text):
            raise self.error(f"expected {text!r}, found {t.text!r}" if t else
                             f"expected {text!r} at end of line")
        self.i += 1
        return t

    def name(self, what: str = "name") -> Token:
        t = self.peek()
        if t is None or t.kind != "name":
            raise self.error(f"expected {what}" + (f", found {t.text!r}" if t else ""))
        self.i += 1
        return t

    def number(self) -> float:
        sign = -1.0 if self.accept("-") else 1.0
        if not sign < 0:
            self.accept("+")
        t = self.peek()
        if t is not None and t.kind == "name" and t.text == "inf":
            self.i += 1
            return sign * INF
        if t is None or t.kind != "num":
            raise self.error("expected a number")
        self.i += 1
        return sign * float(t.text)

    def rest(self) -> str:
        """Raw text after the consumed tokens."""
        start = 0
        if self.i:
            prev = self.toks[self.i - 1]
            start = prev.col - 1 + len(prev.text)
        self.i = len(self.toks)
        return self.raw[start:].strip()

    def done(self):
        t = self.peek()
        if t is not None:
            raise self.error(f"unexpected {t.text!r}")

    def nest(self):
        self.depth += 1
        if self.depth > MAX_NESTING:
            raise self.error("expression nested too deeply")

    def unnest(self):
        self.depth -= 1


# ---------------------------------------------------------------- expressions


class _Scope:
    def __init__(self, variables: Sequence[str]):
        self.variables = tuple(variables)
        self.index = {v: i for i, v in enumerate(self.variables)}

    @property
    def dim(self) -> int:
        return len(self.variables)

    def var(self, ln: _Line) -> tuple[int, Token]:
        t = ln.name("variable")
        if t.text not in self.index:
            raise ResolutionError(f"undeclared variable {t.text!r}", t.line, t.col)
        return self.index[t.text], t


def _affine(ln: _Line, scope: _Scope) -> Affine:
    coeffs, const = _sum(ln, scope)
    return Affine(tuple(coeffs), const)


def _sum(ln: _Line, scope: _Scope):
    c, k = _product(ln, scope)
    while ln.at("+") or ln.at("-"):
        sign = 1.0 if ln.accept("+") else -1.0
        if sign < 0:
            ln.expect("-")
        c2, k2 = _product(ln, scope)
        c = [a + sign * b for a, b in zip(c, c2)]
        k = k + sign * k2
    return c, k


def _product(ln: _Line, scope: _Scope):
    c, k = _factor(ln, scope)
    while ln.at("*") or ln.at("/"):
        tok = ln.peek()
        if ln.accept("*"):
            c2, k2 = _factor(ln, scope)
            if any(c2):
                if any(c):
                    raise ln.error("product of two variable terms is not affine", tok)
                c, k = [k * b for b in c2], k * k2
            else:
                c, k = [a * k2 for a in c], k * k2
        else:
            ln.expect("/")
            c2, k2 = _factor(ln, scope)
            if any(c2):
                raise ln.error("division by a variable term is not affine", tok)
            if k2 == 0:
                raise ln.error("division by zero", tok)
            c, k = [a / k2 for a in c], k / k2
    return c, k


def _factor(ln: _Line, scope: _Scope):
    t = ln.peek()
    zero = [0.0] * scope.dim
    if t is None:
        raise ln.error("expected an expression")
    if ln.accept("-"):
        ln.nest()
        c, k = _factor(ln, scope)
        ln.unnest()
        return [-a for a in c], -k
    if ln.accept("("):
        ln.nest()
        out = _sum(ln, scope)
        ln.unnest()
        ln.expect(")")
        return out
    if t.kind == "num" or t.text == "inf":
        return zero, ln.number()
    j, _ = scope.var(ln)
    zero[j] = 1.0
    return zero, 0.0


def _dist(ln: _Line, scope: _Scope) -> DistSpec:
    t = ln.name("distribution")
    arity = {"uniform": 2, "exp": 1}.get(t.text)
    if arity is None:
        raise ln.error(f"unknown distribution {t.text!r}; expected uniform or exp", t)
    ln.expect("(")
    params = [_affine(ln, scope)]
    for _ in range(arity - 1):
        ln.expect(",")
        params.append(_affine(ln, scope))
    ln.expect(")")
    return DistSpec(t.text, tuple(params))


# ---------------------------------------------------------------- conditions


def _cond(ln: _Line, scope: _Scope) -> list[Box]:
    """Disjunction of conjunctions; ``and`` binds tighter than ``or``."""
    boxes = _conj(ln, scope)
    while ln.accept("or"):
        boxes = boxes + _conj(ln, scope)
    return boxes


def _conj(ln: _Line, scope: _Scope) -> list[Box]:
    boxes = _atom(ln, scope)
    while ln.accept("and"):
        rhs = _atom(ln, scope)
        boxes = [a.intersect(b) for a in boxes for b in rhs]
    return boxes


def _atom(ln: _Line, scope: _Scope) -> list[Box]:
    full = Box.full(scope.dim)
    if ln.accept("true"):
        return [full]
    if ln.accept("false"):
        return []
    if ln.accept("("):
        ln.nest()
        out = _cond(ln, scope)
        ln.unnest()
        ln.expect(")")
        return out
    j, _ = scope.var(ln)
    op = ln.peek()
    if op is None:
        raise ln.error("expected a comparison")
    if ln.accept("in"):
        lo_tok = ln.peek()
        if not (ln.accept("[") or ln.accept("(")):
            raise ln.error("expected '[' or '('")
        lo = ln.number()
        ln.expect(",")
        hi = ln.number()
        hi_tok = ln.peek()
        if not (ln.accept("]") or ln.accept(")")):
            raise ln.error("expected ']' or ')'")
        iv = Interval(lo, hi, lo_tok.text == "(", hi_tok.text == ")")
    else:
        ln.i += 1
        c = ln.number()
        ivs = {"<=": Interval(-INF, c, True, False), "<": Interval(-INF, c, True, True),
               ">=": Interval(c, INF, False, True), ">": Interval(c, INF, True, True),
               "==": Interval(c, c)}
        if op.text not in ivs:
            raise ln.error(f"expected a comparison, found {op.text!r}", op)
        iv = ivs[op.text]
    bounds = list(full.bounds)
    bounds[j] = iv
    return [Box(tuple(bounds))]


# ---------------------------------------------------------------- parser


@dataclass
class _Ref:
    name: str
    line: int
    col: int


@dataclass
class _State:
    name: str | None = None
    meta: list = field(default_factory=list)
    variables: list = field(default_factory=list)
    locations: list = field(default_factory=list)
    init: tuple | None = None
    edges: list = field(default_factory=list)
    schedule: Schedule | None = None
    loc_refs: list = field(default_factory=list)
    edge_refs: list = field(default_factory=list)
    rv_refs: list = field(default_factory=list)


def _decode(data) -> str:
    if isinstance(data, (bytes, bytearray)):
        try:
            return bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            head = bytes(data[:exc.start])
            line = head.count(b"\n") + 1
            col = exc.start - (head.rfind(b"\n") + 1) + 1
            raise ParseError("input is not valid UTF-8", line, col) from None
    return data


def _source_lines(text: str):
    for no, raw in enumerate(text.splitlines(), start=1):
        code = raw.split("#", 1)[0]
        if code.strip():
            yield no, code


def parse(data: str | bytes) -> ModelDocument:
    """Parse ``.sha`` source into a document; diagnostics carry line and column."""
    text = _decode(data)
    st = _State()
    lines = list(_source_lines(text))
    pos = 0
    while pos < len(lines):
        no, raw = lines[pos]
        ln = _Line(raw, no)
        try:
            pos = _statement(ln, st, lines, pos)
        except StochhaError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), ln.line, ln.col()) from None
    last = lines[-1][0] if lines else 1
    return _finish(st, last)


def _statement(ln: _Line, st: _State, lines, pos: int) -> int:
    head = ln.name("statement keyword")
    kw = head.text
    scope = _Scope(st.variables)
    if kw == "model":
        if st.name is not None:
            raise ln.error("model name given twice", head)
        st.name = ln.name("model name").text
    elif kw == "meta":
        key = ln.name("meta key").text
        st.meta.append((key, ln.rest()))
    elif kw == "var":
        if st.locations or st.edges or st.init:
            raise ln.error("variables must be declared before locations, edges and init", head)
        while True:
            t = ln.name("variable")
            if t.text in st.variables:
                raise ResolutionError(f"variable {t.text!r} declared twice", t.line, t.col)
            st.variables.append(t.text)
            if not ln.accept(","):
                break
    elif kw == "location":
        t = ln.name("location")
        if any(loc.name == t.text for loc in st.locations):
            raise ResolutionError(f"location {t.text!r} declared twice", t.line, t.col)
        rates = [0.0] * scope.dim
        inv = Box.full(scope.dim)
        if ln.accept("rate"):
            seen = set()
            while True:
                j, vt = scope.var(ln)
                if j in seen:
                    raise ln.error(f"rate of {vt.text!r} given twice", vt)
                seen.add(j)
                ln.expect("=")
                rates[j] = ln.number()
                if not ln.accept(","):
                    break
        if ln.accept("invariant"):
            tok = ln.peek()
            boxes = _cond(ln, scope)
            if len(boxes) != 1:
                raise ln.error("invariant must be a single conjunction of bounds", tok)
            inv = boxes[0]
        st.locations.append(LocationDecl(t.text, tuple(rates), inv))
    elif kw == "init":
        if st.init is not None:
            raise ln.error("init given twice", head)
        t = ln.name("location")
        st.loc_refs.append(_Ref(t.text, t.line, t.col))
        val = [0.0] * scope.dim
        if ln.peek() is not None:
            seen = set()
            while True:
                j, vt = scope.var(ln)
                if j in seen:
                    raise ln.error(f"initial value of {vt.text!r} given twice", vt)
                seen.add(j)
                ln.expect("=")
                val[j] = ln.number()
                if not ln.accept(","):
                    break
        st.init = State(t.text, tuple(val))
    elif kw == "edge":
        st.edges.append(_edge(ln, st, scope))
    elif kw in ("composed", "decomposed"):
        if st.schedule is not None:
            raise ln.error("only one schedule section is allowed", head)
        race = kw == "composed" and ln.accept("race")
        ln.done()
        return _section(st, lines, pos, "race" if race else kw, head)
    else:
        raise ln.error(f"unknown statement {kw!r}", head)
    ln.done()
    return pos + 1


def _edge(ln: _Line, st: _State, scope: _Scope) -> EdgeDecl:
    t = ln.name("edge id")
    if any(e.id == t.text for e in st.edges):
        raise ResolutionError(f"edge {t.text!r} declared twice", t.line, t.col)
    src = ln.name("source location")
    ln.expect("->")
    tgt = ln.name("target location")
    st.loc_refs += [_Ref(src.text, src.line, src.col), _Ref(tgt.text, tgt.line, tgt.col)]
    guard = Region((Box.full(scope.dim),), scope.dim)
    reset = AffineReset.identity(scope.dim)
    kind, rv = EdgeKind.ORIGINAL, None
    if ln.accept("guard"):
        guard = Region(tuple(_cond(ln, scope)), scope.dim)
    if ln.accept("reset"):
        matrix = [list(r) for r in reset.matrix]
        offset = list(reset.offset)
        seen = set()
        while True:
            j, vt = scope.var(ln)
            if j in seen:
                raise ln.error(f"{vt.text!r} reset twice", vt)
            seen.add(j)
            ln.expect(":=")
            a = _affine(ln, scope)
            matrix[j], offset[j] = list(a.coeffs), a.const
            if not ln.accept(","):
                break
        reset = AffineReset(tuple(tuple(r) for r in matrix), tuple(offset))
    if ln.accept("forced"):
        kind = EdgeKind.FORCED
    elif ln.accept("resample"):
        kind = EdgeKind.RESAMPLE_COMPOSED
        if ln.peek() is not None:
            r = ln.name("random variable")
            kind, rv = EdgeKind.RESAMPLE_DECOMPOSED, r.text
            st.rv_refs.append(_Ref(r.text, r.line, r.col))
    return EdgeDecl(t.text, src.text, tgt.text, guard, reset, kind, rv)


def _section(st: _State, lines, pos: int, kind: str, head: Token) -> int:
    delays, jumps, rvs, labels, emap = [], [], [], [], []
    base: list[str] | None = None
    rule = None
    aux: list[tuple] = []
    pos += 1
    while True:
        if pos >= len(lines):
            raise ParseError(f"section opened here is missing 'end'", head.line, head.col)
        no, raw = lines[pos]
        ln = _Line(raw, no)
        try:
            kw = ln.name("section statement")
            if kw.text == "end":
                ln.done()
                break
            allowed = {"composed": ("delay", "jump"), "decomposed": ("rv", "label"),
                       "race": ("rule", "base", "rv", "label", "aux", "map")}[kind]
            if kw.text not in allowed:
                raise ln.error(f"unexpected {kw.text!r} in {kind} section", kw)
            scope = _Scope(base if kind == "race" and base is not None else st.variables)
            if kw.text == "delay":
                t = ln.name("location")
                st.loc_refs.append(_Ref(t.text, t.line, t.col))
                if any(loc == t.text for loc, _ in delays):
                    raise ResolutionError(f"delay of {t.text!r} given twice", t.line, t.col)
                delays.append((t.text, _dist(ln, scope)))
            elif kw.text == "jump":
                t = ln.name("location")
                st.loc_refs.append(_Ref(t.text, t.line, t.col))
                cond, conditional = Region.full(scope.dim), False
                if ln.accept("when"):
                    cond, conditional = Region(tuple(_cond(ln, scope)), scope.dim), True
                normalize = ln.accept("normalize")
                ln.expect(":")
                weights = []
                while True:
                    e = ln.name("edge id")
                    st.edge_refs.append(_Ref(e.text, e.line, e.col))
                    weights.append((e.text, ln.number()))
                    if not ln.accept(","):
                        break
                jumps.append((t.text, JumpRow(cond, tuple(weights), normalize, conditional)))
            elif kw.text == "rv":
                if kind == "race" and base is None:
                    raise ln.error("'base' must precede random variables", kw)
                t = ln.name("random variable")
                if any(n == t.text for n, _ in rvs):
                    raise ResolutionError(f"random variable {t.text!r} declared twice",
                                          t.line, t.col)
                rvs.append((t.text, _dist(ln, scope)))
            elif kw.text == "label":
                e = ln.name("edge id")
                r = ln.name("random variable")
                st.edge_refs.append(_Ref(e.text, e.line, e.col))
                if r.text not in {n for n, _ in rvs}:
                    raise ResolutionError(f"unknown random variable {r.text!r}", r.line, r.col)
                if any(x == e.text for x, _ in labels):
                    raise ResolutionError(f"edge {e.text!r} labelled twice", e.line, e.col)
                labels.append((e.text, r.text))
            elif kw.text == "rule":
                t = ln.name("jump rule")
                if t.text not in RULES:
                    raise ln.error(f"unknown jump rule {t.text!r}", t)
                rule = t.text
            elif kw.text == "base":
                if base is not None:
                    raise ln.error("base variables given twice", kw)
                base = []
                while True:
                    b = ln.name("variable")
                    base.append(b.text)
                    if not ln.accept(","):
                        break
            elif kw.text == "aux":
                t = ln.name("auxiliary variable")
                aux.append((t, tuple(x.text for x in ln.toks[ln.i:])))
                ln.i = len(ln.toks)
            elif kw.text == "map":
                a = ln.name("edge id")
                ln.expect("->")
                b = ln.name("edge id")
                emap.append((a.text, b.text))
            ln.done()
        except StochhaError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), ln.line, ln.col()) from None
        pos += 1
    if kind == "composed":
        st.schedule = ComposedSection(tuple(delays), tuple(jumps))
    elif kind == "decomposed":
        st.schedule = DecomposedSection(tuple(rvs), tuple(labels))
    else:
        if rule is None or base is None:
            raise ParseError("race section needs 'rule' and 'base'", head.line, head.col)
        st.schedule = RaceSection(rule, tuple(base), tuple(rvs), tuple(labels), tuple(emap))
        _check_aux(st, aux, head)
    return pos + 1


def _aux_roles(base: Sequence[str], rv_names: Sequence[str]) -> list[tuple[str, tuple]]:
    """Auxiliary variable names paired with what each one records."""
    lay = layout_for(base, rv_names, ())
    roles = [("code", x) for x in lay.rv_names]
    roles += [("copy", x, v) for x in lay.rv_names for v in lay.variables]
    roles += [("age", x) for x in lay.rv_names]
    roles.append(("since_jump",))
    return list(zip(lay.names()[lay.d:], roles))


def _check_aux(st: _State, aux, head: Token):
    sec = st.schedule
    expected = _aux_roles(sec.base, [n for n, _ in sec.rvs])
    got = [(t.text, roles) for t, roles in aux]
    if got != expected:
        where = aux[0][0] if aux else head
        raise ResolutionError("aux annotations do not match the layout of base variables "
                              "and random variables", where.line, where.col)
    names = tuple(sec.base) + tuple(n for n, _ in expected)
    if tuple(st.variables) != names:
        raise ResolutionError("model variables differ from the race layout", head.line, head.col)


def _finish(st: _State, last_line: int) -> ModelDocument:
    if st.schedule is None:
        raise ParseError("missing schedule section", last_line, 1)
    if st.init is None:
        raise ParseError("missing init statement", last_line, 1)
    if not st.locations:
        raise ParseError("model declares no locations", last_line, 1)
    locs = {loc.name for loc in st.locations}
    edges = {e.id for e in st.edges}
    rvs = {n for n, _ in getattr(st.schedule, "rvs", ())}
    for r in st.loc_refs:
        if r.name not in locs:
            raise ResolutionError(f"unknown location {r.name!r}", r.line, r.col)
    for r in st.edge_refs:
        if r.name not in edges:
            raise ResolutionError(f"unknown edge {r.name!r}", r.line, r.col)
    for r in st.rv_refs:
        if r.name not in rvs:
            raise ResolutionError(f"unknown random variable {r.name!r}", r.line, r.col)
    return ModelDocument(st.name or "model", tuple(st.variables), tuple(st.locations),
                         st.init, tuple(st.edges), st.schedule, tuple(st.meta))


# ---------------------------------------------------------------- serializer


def _num(x: float) -> str:
    return _fmt(x)


def _affine_text(a: Affine, names: Sequence[str]) -> str:
    parts = []
    for c, v in zip(a.coeffs, names):
        if c == 0:
            continue
        parts.append(v if c == 1 else f"-{v}" if c == -1 else f"{_num(c)}*{v}")
    if a.const != 0 or not parts:
        parts.append(_num(a.const))
    out = parts[0]
    for p in parts[1:]:
        out += f" - {p[1:]}" if p.startswith("-") else f" + {p}"
    return out


def _dist_text(d: DistSpec, names: Sequence[str]) -> str:
    return f"{d.family}({', '.join(_affine_text(p, names) for p in d.params)})"


def _interval_text(iv: Interval, v: str) -> str:
    if iv.lo == -INF and iv.hi < INF:
        return f"{v} {'<' if iv.hi_open else '<='} {_num(iv.hi)}"
    if iv.hi == INF and iv.lo > -INF:
        return f"{v} {'>' if iv.lo_open else '>='} {_num(iv.lo)}"
    if iv.lo == iv.hi and not iv.lo_open and not iv.hi_open:
        return f"{v} == {_num(iv.lo)}"
    left = "(" if iv.lo_open else "["
    right = ")" if iv.hi_open else "]"
    return f"{v} in {left}{_num(iv.lo)}, {_num(iv.hi)}{right}"


def _box_text(b: Box, names: Sequence[str]) -> str:
    atoms = [_interval_text(iv, v) for iv, v in zip(b.bounds, names) if not iv.is_full()]
    return " and ".join(atoms) if atoms else "true"


def _region_text(r: Region, names: Sequence[str]) -> str:
    return " or ".join(_box_text(b, names) for b in r.boxes) if r.boxes else "false"


def _is_full_region(r: Region) -> bool:
    return len(r.boxes) == 1 and r.boxes[0].is_full()


def serialize(doc: ModelDocument) -> str:
    """Canonical text of a document; ``parse(serialize(doc)) == doc``."""
    names = doc.variables
    out = [f"model {doc.name}"]
    out += [f"meta {k} {v}".rstrip() for k, v in doc.meta]
    if names:
        out.append(f"var {', '.join(names)}")
    for loc in doc.locations:
        line = f"location {loc.name}"
        if names:
            line += " rate " + ", ".join(f"{v} = {_num(r)}" for v, r in zip(names, loc.rates))
        if not loc.invariant.is_full():
            line += f" invariant {_box_text(loc.invariant, names)}"
        out.append(line)
    init = f"init {doc.init.location}"
    if names:
        init += " " + ", ".join(f"{v} = {_num(x)}" for v, x in zip(names, doc.init.valuation))
    out.append(init)
    for e in doc.edges:
        line = f"edge {e.id} {e.source} -> {e.target}"
        if not _is_full_region(e.guard):
            line += f" guard {_region_text(e.guard, names)}"
        assigns = []
        for j, (row, b) in enumerate(zip(e.reset.matrix, e.reset.offset)):
            if b != 0 or any(a != (1.0 if i == j else 0.0) for i, a in enumerate(row)):
                assigns.append(f"{names[j]} := {_affine_text(Affine(tuple(row), b), names)}")
        if assigns:
            line += " reset " + ", ".join(assigns)
        if e.kind is EdgeKind.FORCED:
            line += " forced"
        elif e.kind is EdgeKind.RESAMPLE_COMPOSED:
            line += " resample"
        elif e.kind is EdgeKind.RESAMPLE_DECOMPOSED:
            line += f" resample {e.rv}"
        out.append(line)
    sec = doc.schedule
    if isinstance(sec, ComposedSection):
        out.append("composed")
        out += [f"  delay {loc} {_dist_text(d, names)}" for loc, d in sec.delays]
        for loc, row in sec.jumps:
            line = f"  jump {loc}"
            if row.conditional:
                line += f" when {_region_text(row.condition, names)}"
            if row.normalize:
                line += " normalize"
            line += " : " + ", ".join(f"{e} {_num(w)}" for e, w in row.weights)
            out.append(line)
    elif isinstance(sec, DecomposedSection):
        out.append("decomposed")
        out += [f"  rv {n} {_dist_text(d, names)}" for n, d in sec.rvs]
        out += [f"  label {e} {r}" for e, r in sec.labels]
    else:
        out.append("composed race")
        out.append(f"  rule {sec.rule}")
        out.append(f"  base {', '.join(sec.base)}")
        out += [f"  rv {n} {_dist_text(d, sec.base)}" for n, d in sec.rvs]
        out += [f"  label {e} {r}" for e, r in sec.labels]
        for name, roles in _aux_roles(sec.base, [n for n, _ in sec.rvs]):
            out.append(f"  aux {name} {' '.join(roles)}")
        out += [f"  map {a} -> {b}" for a, b in sec.edge_map]
    out.append("end")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- lowering


def automaton_of(doc: ModelDocument) -> HybridAutomaton:
    rv_index = {n: i for i, (n, _) in enumerate(getattr(doc.schedule, "rvs", ()))}
    edges = tuple(Edge(e.id, e.source, e.target, e.guard, e.reset, e.kind,
                       rv_index[e.rv] if e.rv is not None else None) for e in doc.edges)
    return HybridAutomaton(tuple(loc.name for loc in doc.locations), doc.variables,
                           {loc.name: loc.rates for loc in doc.locations},
                           {loc.name: loc.invariant for loc in doc.locations},
                           edges, doc.init)


def build(doc: ModelDocument):
    """Lower a document to a schedule; resampling loops are added when absent."""
    H = automaton_of(doc)
    extended = any(e.is_resampling for e in H.edges)
    sec = doc.schedule
    if isinstance(sec, ComposedSection):
        if not extended:
            H = build_composed_extension(H)
        jumps: dict[str, tuple[JumpRow, ...]] = {}
        for loc, row in sec.jumps:
            jumps[loc] = jumps.get(loc, ()) + (row,)
        return TableSchedule(H, dict(sec.delays), jumps)
    names = tuple(n for n, _ in sec.rvs)
    specs = tuple(d for _, d in sec.rvs)
    labels = {e: names.index(r) for e, r in sec.labels}
    if isinstance(sec, DecomposedSection):
        if extended:
            return DecomposedSchedule(H, names, specs, labels)
        return make_decomposed(H, names, specs, labels)
    lay = layout_for(sec.base, names, H.locations)
    return RaceKernelSchedule(H, lay, specs, labels, sec.rule)


def edge_map_of(doc: ModelDocument) -> dict[str, str] | None:
    """Edge map recorded by a translation, from source edges to this model's edges."""
    sec = doc.schedule
    if isinstance(sec, RaceSection) and sec.edge_map:
        return dict(sec.edge_map)
    return None


def _edge_decl(e: Edge, rv_names: Sequence[str]) -> EdgeDecl:
    rv = rv_names[e.label] if e.kind is EdgeKind.RESAMPLE_DECOMPOSED else None
    return EdgeDecl(e.id, e.source, e.target, e.guard, e.reset, e.kind, rv)


def document_of(model, name: str = "model", meta: Sequence[tuple[str, str]] = (),
                edge_map: dict[str, str] | None = None) -> ModelDocument:
    """Document of a schedule; tool-built resampling loops are written only for
    translated race models, whose loops carry lifted resets."""
    if not isinstance(model, ComposedSchedule | DecomposedSchedule):
        raise TypeError(f"cannot serialize {type(model).__name__}")
    H = model.automaton
    d = H.dim
    locs = tuple(LocationDecl(loc, tuple(float(r) for r in H.flow[loc]), H.invariant[loc])
                 for loc in H.locations)
    init = State(H.init.location, tuple(float(x) for x in H.init.valuation))
    originals = [e for e in H.edges if not e.is_resampling]
    if isinstance(model, RaceKernelSchedule):
        lay = model.layout
        rvs = tuple((n, s.lift(lay.d)) for n, s in zip(lay.rv_names, model.rvs))
        labels = tuple((e.id, lay.rv_names[model.labels[e.id]]) for e in H.edges
                       if e.id in model.labels)
        emap = tuple(sorted((edge_map or {}).items()))
        sec = RaceSection(model.rule, lay.variables, rvs, labels, emap)
        edges = tuple(_edge_decl(e, lay.rv_names) for e in H.edges)
    elif isinstance(model, DecomposedSchedule):
        rvs = tuple((n, s.lift(d)) for n, s in zip(model.rv_names, model.rvs))
        labels = tuple((e.id, model.rv_names[model.labels[e.id]]) for e in originals
                       if e.kind is not EdgeKind.FORCED)
        sec = DecomposedSection(rvs, labels)
        edges = tuple(_edge_decl(e, model.rv_names) for e in originals)
    elif isinstance(model, TableSchedule):
        delays = tuple((loc, model.delays[loc].lift(d)) for loc in H.locations)
        jumps = tuple((loc, row) for loc in H.locations for row in model.jumps.get(loc, ()))
        sec = ComposedSection(delays, jumps)
        edges = tuple(_edge_decl(e, ()) for e in originals)
    else:
        raise ModelError(f"{type(model).__name__} has no textual form")
    return ModelDocument(name, H.variables, locs, init, edges, sec, tuple(meta))


def load(path) -> tuple[ModelDocument, object]:
    with open(path, "rb") as fh:
        doc = parse(fh.read())
    return doc, build(doc)


def dumps(model, name: str = "model", **kw) -> str:
    return serialize(document_of(model, name, **kw))


def parse_dist(text: str, variables: Sequence[str] = ()) -> DistSpec:
    """Parse a single distribution such as ``exp(0.2)`` or ``uniform(0, 10)``."""
    ln = _Line(text, 1)
    try:
        spec = _dist(ln, _Scope(variables))
    except StochhaError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc), 1, ln.col()) from None
    ln.done()
    return spec
