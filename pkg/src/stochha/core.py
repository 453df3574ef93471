"""Hybrid automata with constant-rate flows, box invariants and affine resets.

All geometry is exact: a trajectory ``nu + t * rate`` crosses an axis-aligned
box during a single interval of time, so enabling-time sets are finite unions
of intervals computed directly from the bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import InvariantViolation, JumpDisabled

INF = math.inf


def _fmt(x) -> str:
    if x == INF:
        return "inf"
    if x == -INF:
        return "-inf"
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


# ---------------------------------------------------------------- intervals


@dataclass(frozen=True)
class Interval:
    """One-dimensional interval; infinite ends are always open."""

    lo: float
    hi: float
    lo_open: bool = False
    hi_open: bool = False

    def __post_init__(self):
        if self.lo == -INF and not self.lo_open:
            object.__setattr__(self, "lo_open", True)
        if self.hi == INF and not self.hi_open:
            object.__setattr__(self, "hi_open", True)

    @classmethod
    def closed(cls, lo: float, hi: float) -> Interval:
        return cls(lo, hi)

    @classmethod
    def full(cls) -> Interval:
        return cls(-INF, INF, True, True)

    @classmethod
    def empty(cls) -> Interval:
        return cls(0.0, 0.0, True, True)

    def is_empty(self) -> bool:
        if self.lo > self.hi:
            return True
        return self.lo == self.hi and (self.lo_open or self.hi_open)

    def is_full(self) -> bool:
        return self.lo == -INF and self.hi == INF

    def contains(self, x) -> bool:
        if x < self.lo or (x == self.lo and self.lo_open):
            return False
        if x > self.hi or (x == self.hi and self.hi_open):
            return False
        return True

    def intersect(self, other: Interval) -> Interval:
        if self.lo > other.lo:
            lo, lo_open = self.lo, self.lo_open
        elif other.lo > self.lo:
            lo, lo_open = other.lo, other.lo_open
        else:
            lo, lo_open = self.lo, self.lo_open or other.lo_open
        if self.hi < other.hi:
            hi, hi_open = self.hi, self.hi_open
        elif other.hi < self.hi:
            hi, hi_open = other.hi, other.hi_open
        else:
            hi, hi_open = self.hi, self.hi_open or other.hi_open
        return Interval(lo, hi, lo_open, hi_open)

    def below(self, other: Interval) -> Interval:
        """Part of ``self`` strictly to the left of ``other``."""
        return self.intersect(Interval(-INF, other.lo, True, not other.lo_open))

    def above(self, other: Interval) -> Interval:
        return self.intersect(Interval(other.hi, INF, not other.hi_open, True))

    @property
    def length(self) -> float:
        return 0.0 if self.is_empty() else self.hi - self.lo

    def __str__(self) -> str:
        if self.is_empty():
            return "{}"
        left = "(" if self.lo_open else "["
        right = ")" if self.hi_open else "]"
        return f"{left}{_fmt(self.lo)}, {_fmt(self.hi)}{right}"


_NONNEG = Interval(0.0, INF, False, True)


@dataclass(frozen=True)
class TimeIntervalSet:
    """Finite union of disjoint, sorted intervals on the time axis."""

    intervals: tuple[Interval, ...] = ()

    @classmethod
    def of(cls, intervals: Iterable[Interval]) -> TimeIntervalSet:
        items = sorted((iv for iv in intervals if not iv.is_empty()),
                       key=lambda iv: (iv.lo, iv.lo_open))
        merged: list[Interval] = []
        for iv in items:
            if merged:
                cur = merged[-1]
                touching = iv.lo < cur.hi or (
                    iv.lo == cur.hi and not (iv.lo_open and cur.hi_open))
                if touching:
                    if iv.hi > cur.hi:
                        hi, hi_open = iv.hi, iv.hi_open
                    elif iv.hi == cur.hi:
                        hi, hi_open = cur.hi, cur.hi_open and iv.hi_open
                    else:
                        hi, hi_open = cur.hi, cur.hi_open
                    merged[-1] = Interval(cur.lo, hi, cur.lo_open, hi_open)
                    continue
            merged.append(iv)
        return cls(tuple(merged))

    @classmethod
    def closed(cls, lo: float, hi: float) -> TimeIntervalSet:
        return cls.of([Interval(lo, hi)])

    def __iter__(self) -> Iterator[Interval]:
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def is_empty(self) -> bool:
        return not self.intervals

    def contains(self, t) -> bool:
        return any(iv.contains(t) for iv in self.intervals)

    def union(self, other: TimeIntervalSet) -> TimeIntervalSet:
        return TimeIntervalSet.of(self.intervals + other.intervals)

    def intersect(self, other: TimeIntervalSet | Interval) -> TimeIntervalSet:
        others = (other,) if isinstance(other, Interval) else other.intervals
        return TimeIntervalSet.of(
            a.intersect(b) for a in self.intervals for b in others)

    def issubset(self, other: TimeIntervalSet) -> bool:
        return self.intersect(other) == self

    @property
    def sup(self) -> float:
        return self.intervals[-1].hi if self.intervals else -INF

    @property
    def length(self) -> float:
        return sum(iv.length for iv in self.intervals)

    def endpoints(self) -> list[float]:
        pts = []
        for iv in self.intervals:
            pts.extend((iv.lo, iv.hi))
        return [p for p in pts if math.isfinite(p)]

    def __str__(self) -> str:
        if not self.intervals:
            return "{}"
        return " u ".join(str(iv) for iv in self.intervals)


# ---------------------------------------------------------------- boxes


@dataclass(frozen=True)
class Box:
    bounds: tuple[Interval, ...]

    @classmethod
    def full(cls, dim: int) -> Box:
        return cls(tuple(Interval.full() for _ in range(dim)))

    @classmethod
    def from_bounds(cls, pairs: Sequence[tuple[float, float]]) -> Box:
        return cls(tuple(Interval(lo, hi) for lo, hi in pairs))

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def contains(self, v: Sequence[float]) -> bool:
        for iv, x in zip(self.bounds, v):
            if not iv.contains(x):
                return False
        return True

    def is_empty(self) -> bool:
        return any(iv.is_empty() for iv in self.bounds)

    def is_full(self) -> bool:
        return all(iv.is_full() for iv in self.bounds)

    def intersect(self, other: Box) -> Box:
        return Box(tuple(a.intersect(b) for a, b in zip(self.bounds, other.bounds)))

    def subtract(self, other: Box) -> list[Box]:
        """Exact set difference as a list of pairwise disjoint boxes."""
        if self.intersect(other).is_empty():
            return [self]
        pieces = []
        cur = list(self.bounds)
        for j, (mine, theirs) in enumerate(zip(self.bounds, other.bounds)):
            for part in (mine.below(theirs), mine.above(theirs)):
                if not part.is_empty():
                    piece = list(cur)
                    piece[j] = part
                    pieces.append(Box(tuple(piece)))
            cur[j] = mine.intersect(theirs)
        return pieces

    def lift(self, dim: int) -> Box:
        """Embed into ``dim`` dimensions, leaving trailing dimensions free."""
        return Box(self.bounds + tuple(Interval.full() for _ in range(dim - self.dim)))

    def time_interval(self, v: Sequence[float], rate: Sequence[float]) -> Interval:
        """Times t (any sign) at which ``v + t * rate`` lies in the box."""
        acc = Interval.full()
        for iv, x, r in zip(self.bounds, v, rate):
            if r == 0:
                if not iv.contains(x):
                    return Interval.empty()
                continue
            a = (iv.lo - x) / r
            b = (iv.hi - x) / r
            if r > 0:
                cand = Interval(a, b, iv.lo_open, iv.hi_open)
            else:
                cand = Interval(b, a, iv.hi_open, iv.lo_open)
            acc = acc.intersect(cand)
            if acc.is_empty():
                return acc
        return acc


@dataclass(frozen=True)
class Region:
    """Finite union of boxes; used for guards and jump-table conditions."""

    boxes: tuple[Box, ...]
    dim: int

    @classmethod
    def full(cls, dim: int) -> Region:
        return cls((Box.full(dim),), dim)

    @classmethod
    def empty(cls, dim: int) -> Region:
        return cls((), dim)

    @classmethod
    def of(cls, boxes: Iterable[Box], dim: int) -> Region:
        return cls(tuple(b for b in boxes if not b.is_empty()), dim)

    def contains(self, v: Sequence[float]) -> bool:
        for b in self.boxes:
            if b.contains(v):
                return True
        return False

    def is_empty(self) -> bool:
        return all(b.is_empty() for b in self.boxes)

    def is_full(self) -> bool:
        return self.complement().is_empty()

    def union(self, other: Region) -> Region:
        return Region.of(self.boxes + other.boxes, self.dim)

    def intersect(self, other: Region) -> Region:
        return Region.of((a.intersect(b) for a in self.boxes for b in other.boxes),
                         self.dim)

    def complement(self) -> Region:
        pieces = [Box.full(self.dim)]
        for b in self.boxes:
            pieces = [p for piece in pieces for p in piece.subtract(b)]
        return Region.of(pieces, self.dim)

    def lift(self, dim: int) -> Region:
        return Region(tuple(b.lift(dim) for b in self.boxes), dim)

    def time_set(self, v: Sequence[float], rate: Sequence[float]) -> TimeIntervalSet:
        return TimeIntervalSet.of(b.time_interval(v, rate) for b in self.boxes)


def union_of(regions: Iterable[Region], dim: int) -> Region:
    boxes: list[Box] = []
    for r in regions:
        boxes.extend(r.boxes)
    return Region.of(boxes, dim)


# ---------------------------------------------------------------- automaton


@dataclass(frozen=True)
class Affine:
    """Affine form ``sum(coeffs[j] * v[j]) + const`` over the automaton variables."""

    coeffs: tuple[float, ...]
    const: float = 0.0

    @classmethod
    def constant(cls, value: float, dim: int = 0) -> Affine:
        return cls(tuple(0.0 for _ in range(dim)), value)

    def __call__(self, v: Sequence[float]) -> float:
        return sum(a * x for a, x in zip(self.coeffs, v)) + self.const

    @property
    def is_constant(self) -> bool:
        return all(a == 0 for a in self.coeffs)

    def lift(self, dim: int) -> Affine:
        return Affine(self.coeffs + (0.0,) * (dim - len(self.coeffs)), self.const)


@dataclass(frozen=True)
class AffineReset:
    """``nu' = matrix @ nu + offset``, stored as nested tuples."""

    matrix: tuple[tuple[float, ...], ...]
    offset: tuple[float, ...]

    @classmethod
    def identity(cls, dim: int) -> AffineReset:
        return cls(tuple(tuple(1.0 if i == j else 0.0 for j in range(dim))
                         for i in range(dim)),
                   tuple(0.0 for _ in range(dim)))

    @property
    def out_dim(self) -> int:
        return len(self.matrix)

    @property
    def in_dim(self) -> int:
        return len(self.matrix[0]) if self.matrix else 0

    @cached_property
    def is_identity(self) -> bool:
        for i, row in enumerate(self.matrix):
            for j, a in enumerate(row):
                if a != (1.0 if i == j else 0.0):
                    return False
        return all(b == 0 for b in self.offset) and self.out_dim == self.in_dim

    def apply(self, v: Sequence[float]) -> tuple:
        if self.is_identity:
            return tuple(v)
        return tuple(sum(a * x for a, x in zip(row, v)) + b
                     for row, b in zip(self.matrix, self.offset))

    def apply_linear(self, v: Sequence[float]) -> tuple:
        if self.is_identity:
            return tuple(v)
        return tuple(sum(a * x for a, x in zip(row, v)) for row in self.matrix)


class EdgeKind(str, Enum):
    ORIGINAL = "original"
    RESAMPLE_COMPOSED = "resample-composed"
    RESAMPLE_DECOMPOSED = "resample-decomposed"
    FORCED = "forced"


@dataclass(frozen=True)
class Edge:
    id: str
    source: str
    target: str
    guard: Region
    reset: AffineReset
    kind: EdgeKind = EdgeKind.ORIGINAL
    # 0-based random-variable index of a decomposed resampling edge
    label: int | None = None

    @property
    def is_resampling(self) -> bool:
        return self.kind in (EdgeKind.RESAMPLE_COMPOSED, EdgeKind.RESAMPLE_DECOMPOSED)


@dataclass(frozen=True)
class State:
    location: str
    valuation: tuple

    def __str__(self) -> str:
        vals = ", ".join(_fmt(x) for x in self.valuation)
        return f"({self.location}, [{vals}])"


@dataclass(frozen=True)
class HybridAutomaton:
    locations: tuple[str, ...]
    variables: tuple[str, ...]
    flow: dict[str, tuple[float, ...]]
    invariant: dict[str, Box]
    edges: tuple[Edge, ...]
    init: State

    @property
    def dim(self) -> int:
        return len(self.variables)

    @cached_property
    def _outgoing(self) -> dict[str, tuple[Edge, ...]]:
        out: dict[str, list[Edge]] = {loc: [] for loc in self.locations}
        for e in self.edges:
            out.setdefault(e.source, []).append(e)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def _by_id(self) -> dict[str, Edge]:
        return {e.id: e for e in self.edges}

    def edges_from(self, location: str) -> tuple[Edge, ...]:
        return self._outgoing.get(location, ())

    def edge(self, edge_id: str) -> Edge:
        try:
            return self._by_id[edge_id]
        except KeyError:
            raise KeyError(f"unknown edge {edge_id!r}") from None

    def has_edge(self, edge_id: str) -> bool:
        return edge_id in self._by_id

    def location_index(self, location: str) -> int:
        return self.locations.index(location)

    def forced_edges(self, location: str) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges_from(location) if e.kind is EdgeKind.FORCED)

    def with_edges(self, edges: Iterable[Edge]) -> HybridAutomaton:
        return HybridAutomaton(self.locations, self.variables, self.flow,
                               self.invariant, tuple(edges), self.init)

    def has_trivial_invariants(self) -> bool:
        return all(self.invariant[loc].is_full() for loc in self.locations)


# ---------------------------------------------------------------- semantics


def flow_to(H: HybridAutomaton, state: State, t) -> State:
    """Follow the flow for ``t`` time units without checking the invariant."""
    rate = H.flow[state.location]
    return State(state.location,
                 tuple(x + t * r for x, r in zip(state.valuation, rate)))


def in_invariant(H: HybridAutomaton, state: State) -> bool:
    return H.invariant[state.location].contains(state.valuation)


def advance(H: HybridAutomaton, state: State, t) -> State:
    if t < 0:
        raise ValueError(f"negative delay {t}")
    if not in_invariant(H, state):
        raise InvariantViolation(f"{state} violates the invariant of {state.location}")
    nxt = flow_to(H, state, t)
    # convex invariant and straight trajectory: the endpoints decide
    if not in_invariant(H, nxt):
        raise InvariantViolation(
            f"delay {_fmt(t)} from {state} leaves the invariant of {state.location}")
    return nxt


def edge_enabled(H: HybridAutomaton, state: State, e: Edge) -> bool:
    if e.source != state.location or not e.guard.contains(state.valuation):
        return False
    return H.invariant[e.target].contains(e.reset.apply(state.valuation))


def take_jump(H: HybridAutomaton, state: State, e: Edge) -> State:
    if e.source != state.location:
        raise JumpDisabled(f"edge {e.id} does not leave {state.location}")
    if not e.guard.contains(state.valuation):
        raise JumpDisabled(f"guard of {e.id} is false in {state}")
    nu = e.reset.apply(state.valuation)
    if not H.invariant[e.target].contains(nu):
        raise JumpDisabled(f"reset of {e.id} violates the invariant of {e.target}")
    return State(e.target, nu)


def enabled_edges(H: HybridAutomaton, state: State) -> tuple[Edge, ...]:
    return tuple(e for e in H.edges_from(state.location) if edge_enabled(H, state, e))


def dwell_interval(H: HybridAutomaton, state: State) -> Interval:
    """Delays t >= 0 for which the whole time step stays inside the invariant."""
    inv = H.invariant[state.location]
    span = inv.time_interval(state.valuation, H.flow[state.location]).intersect(_NONNEG)
    if not span.contains(0):
        return Interval.empty()
    return span


def t_max(H: HybridAutomaton, state: State) -> float:
    span = dwell_interval(H, state)
    if span.is_empty():
        return -INF
    return span.hi


def jump_time_set(H: HybridAutomaton, state: State, e: Edge) -> TimeIntervalSet:
    if e.source != state.location:
        return TimeIntervalSet()
    dwell = dwell_interval(H, state)
    if dwell.is_empty():
        return TimeIntervalSet()
    v, rate = state.valuation, H.flow[state.location]
    times = e.guard.time_set(v, rate).intersect(dwell)
    if times.is_empty():
        return times
    landing = H.invariant[e.target].time_interval(e.reset.apply(v), e.reset.apply_linear(rate))
    return times.intersect(landing)


def time_set(H: HybridAutomaton, state: State) -> TimeIntervalSet:
    acc = TimeIntervalSet()
    for e in H.edges_from(state.location):
        acc = acc.union(jump_time_set(H, state, e))
    return acc


def enabling_breakpoints(H: HybridAutomaton, state: State) -> list[float]:
    """Finite delays at which the enabled set of ``state``'s location may change."""
    pts = set()
    for e in H.edges_from(state.location):
        pts.update(jump_time_set(H, state, e).endpoints())
    top = t_max(H, state)
    if math.isfinite(top):
        pts.add(top)
    return sorted(pts)


# ---------------------------------------------------------------- E+


def _box_reset_feasible(box: Box, reset: AffineReset, target: Box) -> bool:
    """Is there nu in ``box`` with ``reset(nu)`` in ``target``? Exact LP check."""
    if box.is_empty() or target.is_empty():
        return False
    if reset.is_identity:
        return not box.intersect(target).is_empty()
    d = box.dim
    rows, rhs, strict = [], [], []

    def add(coeffs, bound, is_strict):
        rows.append(list(coeffs))
        rhs.append(bound)
        strict.append(is_strict)

    unit = np.eye(d)
    for j, iv in enumerate(box.bounds):
        if math.isfinite(iv.lo):
            add(-unit[j], -iv.lo, iv.lo_open)
        if math.isfinite(iv.hi):
            add(unit[j], iv.hi, iv.hi_open)
    for k, iv in enumerate(target.bounds):
        a = np.asarray(reset.matrix[k], dtype=float)
        b = float(reset.offset[k])
        if math.isfinite(iv.lo):
            add(-a, b - iv.lo, iv.lo_open)
        if math.isfinite(iv.hi):
            add(a, iv.hi - b, iv.hi_open)
    if not rows:
        return True
    # maximise a common slack s on the strict rows: feasible iff s* > 0
    A = np.hstack([np.asarray(rows, dtype=float),
                   np.asarray(strict, dtype=float)[:, None]])
    cost = np.zeros(d + 1)
    cost[-1] = -1.0
    bounds = [(None, None)] * d + [(0.0, 1.0)]
    res = linprog(cost, A_ub=A, b_ub=np.asarray(rhs, dtype=float),
                  bounds=bounds, method="highs")
    if res.status != 0:
        return False
    return not any(strict) or res.x[-1] > 1e-12


def edges_plus(H: HybridAutomaton, location: str) -> tuple[Edge, ...]:
    """Edges of ``location`` enabled for at least one valuation."""
    out = []
    for e in H.edges_from(location):
        target = H.invariant[e.target]
        if any(_box_reset_feasible(b, e.reset, target) for b in e.guard.boxes):
            out.append(e)
    return tuple(out)


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Issue:
    severity: str
    where: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.where}: {self.message}"


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    def error(self, where: str, message: str) -> None:
        self.issues.append(Issue("error", where, message))

    def warning(self, where: str, message: str) -> None:
        self.issues.append(Issue("warning", where, message))

    @property
    def errors(self) -> list[Issue]:
        return [i for i in self.issues if i.severity == "error"]

    @property
    def warnings(self) -> list[Issue]:
        return [i for i in self.issues if i.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def extend(self, other: ValidationReport) -> None:
        self.issues.extend(other.issues)

    def __str__(self) -> str:
        if not self.issues:
            return "valid"
        return "\n".join(str(i) for i in self.issues)


def _keeps_leading(reset: AffineReset, n: int) -> bool:
    """Does ``reset`` leave the first ``n`` variables unchanged?"""
    for i in range(n):
        row = reset.matrix[i]
        if reset.offset[i] != 0 or any(a != (1.0 if i == j else 0.0) for j, a in enumerate(row)):
            return False
    return True


def validate(H: HybridAutomaton, carried: int | None = None) -> ValidationReport:
    """Structural checks; resampling loops must keep the first ``carried``
    variables (default all) unchanged."""
    rep = ValidationReport()
    d = H.dim
    if not H.locations:
        rep.error("automaton", "no locations")
    if len(set(H.locations)) != len(H.locations):
        rep.error("automaton", "duplicate location names")
    if len(set(H.variables)) != len(H.variables):
        rep.error("automaton", "duplicate variable names")
    for loc in H.locations:
        rate = H.flow.get(loc)
        if rate is None:
            rep.error(f"location {loc}", "missing flow")
        elif len(rate) != d:
            rep.error(f"location {loc}", f"flow has {len(rate)} rates, expected {d}")
        inv = H.invariant.get(loc)
        if inv is None:
            rep.error(f"location {loc}", "missing invariant")
        elif inv.dim != d:
            rep.error(f"location {loc}", f"invariant has dimension {inv.dim}, expected {d}")
    seen = set()
    for e in H.edges:
        where = f"edge {e.id}"
        if e.id in seen:
            rep.error(where, "duplicate edge id")
        seen.add(e.id)
        for end in (e.source, e.target):
            if end not in H.locations:
                rep.error(where, f"unknown location {end!r}")
        if e.guard.dim != d or any(b.dim != d for b in e.guard.boxes):
            rep.error(where, f"guard dimension differs from {d}")
        if e.reset.out_dim != d or e.reset.in_dim != d or len(e.reset.offset) != d:
            rep.error(where, f"reset is {e.reset.out_dim}x{e.reset.in_dim}, expected {d}x{d}")
        if e.is_resampling and (e.source != e.target or not _keeps_leading(
                e.reset, d if carried is None else carried)):
            rep.error(where, "resampling edge must be an identity self-loop")
    init = H.init
    if init.location not in H.locations:
        rep.error("init", f"unknown location {init.location!r}")
    elif len(init.valuation) != d:
        rep.error("init", f"valuation has {len(init.valuation)} entries, expected {d}")
    elif H.invariant.get(init.location) is not None and not in_invariant(H, init):
        rep.error("init", f"{init} violates the invariant of {init.location}")
    if not rep.ok:
        return rep
    for loc in H.locations:
        if _dwell_may_be_bounded(H, loc) and not H.forced_edges(loc):
            rep.warning(f"location {loc}",
                        "bounded invariant without a forced edge; a timelock is possible")
    return rep


def _dwell_may_be_bounded(H: HybridAutomaton, loc: str) -> bool:
    for iv, r in zip(H.invariant[loc].bounds, H.flow[loc]):
        if (r > 0 and math.isfinite(iv.hi)) or (r < 0 and math.isfinite(iv.lo)):
            return True
    return False
