"""Trace probabilities under both scheduling styles.

Composed traces are integrated recursively over the exact enabling-time sets
of their first edge.  Decomposed traces are estimated by simulating full
races; for at most two variables and two jumps a brute-force nested
quadrature of the race integrals serves as an oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .composed import ComposedSchedule, delay_breakpoints, step_composed
from .core import (EdgeKind, HybridAutomaton, State, edge_enabled, enabling_breakpoints,
                   flow_to, in_invariant, jump_time_set, t_max, take_jump)
from .decomposed import (DecomposedSchedule, RaceMemory, sample_race, step_decomposed)
from .dist import (QUAD_TOL, Distribution, StreamCursor, integrate, min_of)
from .errors import (DepthLimit, InvariantViolation, UnsupportedModel, UnsupportedSize)

MAX_DEPTH = 12


@dataclass(frozen=True)
class Trace:
    """Head state and edge-id sequence; matched by edge identity."""

    head: State
    edges: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.edges)

    def extend(self, edge_id: str) -> Trace:
        return Trace(self.head, self.edges + (edge_id,))

    def __str__(self) -> str:
        return f"({', '.join([str(self.head), *self.edges])})"


def chains(H: HybridAutomaton, trace: Trace) -> bool:
    """Do consecutive edges connect?  Unknown ids raise KeyError."""
    loc = trace.head.location
    for eid in trace.edges:
        e = H.edge(eid)
        if e.source != loc:
            return False
        loc = e.target
    return True


@dataclass(frozen=True)
class ProbEstimate:
    value: float
    lo: float
    hi: float
    method: str
    level: float = 1.0
    n: int = 0
    error: float = 0.0

    @property
    def half_width(self) -> float:
        return max(self.value - self.lo, self.hi - self.value)

    def overlaps(self, other: ProbEstimate) -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def row(self) -> list[str]:
        return [self.method, repr(self.value), repr(self.lo), repr(self.hi),
                repr(self.level), str(self.n), repr(self.error)]


ESTIMATE_HEADER = ["method", "value", "ci_lo", "ci_hi", "level", "n", "error"]


def exact_estimate(value: float, error: float = 0.0, depth: int = 0) -> ProbEstimate:
    v = min(max(value, 0.0), 1.0)
    return ProbEstimate(v, max(v - error, 0.0), min(v + error, 1.0), "quadrature",
                        1.0, depth, error)


def wilson(hits: int, n: int, level: float = 0.99) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    z = float(norm.ppf(0.5 + level / 2))
    p = hits / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(centre - half, 0.0), min(centre + half, 1.0)


def mc_estimate(hits: int, n: int, level: float = 0.99) -> ProbEstimate:
    lo, hi = wilson(hits, n, level)
    return ProbEstimate(hits / n if n else 0.0, lo, hi, "monte-carlo", level, n)


# ---------------------------------------------------------------- composed


def _pieces(lo: float, hi: float, pts: Sequence[float]) -> list[tuple[float, float]]:
    cuts = [lo, *sorted({p for p in pts if lo < p < hi}), hi]
    return [(a, b) for a, b in zip(cuts, cuts[1:]) if b > a]


def _inward(t: float, lo: float, hi: float) -> float:
    # endpoints of open pieces are evaluated an infinitesimal step inside
    eps = 1e-12 * max(1.0, abs(lo), abs(hi))
    return min(max(t, lo + eps), hi - eps) if hi - lo > 4 * eps else 0.5 * (lo + hi)


def trace_prob_composed(C: ComposedSchedule, trace: Trace, tol: float = 1e-9,
                        max_depth: int = MAX_DEPTH) -> ProbEstimate:
    """Recursive integral of delay density times jump probability."""
    if len(trace) > max_depth:
        raise DepthLimit(f"trace of length {len(trace)} exceeds depth limit {max_depth}")
    H = C.automaton
    if not chains(H, trace):
        return exact_estimate(0.0, depth=len(trace))
    if not in_invariant(H, trace.head):
        raise InvariantViolation(f"trace head {trace.head} violates its invariant")
    err = [0.0]
    value = _pr_composed(C, trace.head, trace.edges, tol, err)
    return exact_estimate(value, err[0], len(trace))


def _pr_composed(C: ComposedSchedule, state: State, edges: tuple[str, ...],
                 tol: float, err: list) -> float:
    if not edges:
        return 1.0
    H = C.automaton
    e = H.edge(edges[0])
    rest = edges[1:]
    if e.source != state.location:
        return 0.0
    dist = C.delay_distribution(state)
    top = t_max(H, state)
    if e.kind is EdgeKind.FORCED:
        if not math.isfinite(top):
            return 0.0
        boundary = flow_to(H, state, top)
        chosen = next((f for f in H.forced_edges(state.location)
                       if edge_enabled(H, boundary, f)), None)
        if chosen is None or chosen.id != e.id:
            return 0.0
        mass = dist.sf(top)
        if mass == 0.0:
            return 0.0
        return mass * _pr_composed(C, take_jump(H, boundary, e), rest, tol, err)

    lo_s, hi_s = dist.support
    cap = dist.tail()
    err[0] += dist.sf(cap) if math.isfinite(cap) else 0.0
    pts = delay_breakpoints(C, state)
    total = 0.0
    for iv in jump_time_set(H, state, e):
        lo = max(iv.lo, lo_s, 0.0)
        hi = min(iv.hi, hi_s, cap)
        if not hi > lo:
            continue
        pieces = _pieces(lo, hi, pts)
        if not rest and C.piecewise_constant_jumps:
            # jump kernel constant on each piece: integrate the density exactly
            for a, b in pieces:
                post = flow_to(H, state, 0.5 * (a + b))
                w = C.jump_probability(post, e.id) if edge_enabled(H, post, e) else 0.0
                if w:
                    total += w * (dist.cdf(b) - dist.cdf(a))
            continue

        def integrand(t, a, b):
            t = _inward(t, a, b)
            post = flow_to(H, state, t)
            if not edge_enabled(H, post, e):
                return 0.0
            w = C.jump_probability(post, e.id)
            if w == 0.0:
                return 0.0
            f = dist.pdf(t)
            if f == 0.0:
                return 0.0
            return f * w * _pr_composed(C, take_jump(H, post, e), rest, tol * 0.1, err)

        share = tol / max(len(pieces), 1)
        for a, b in pieces:
            v, e_est = integrate(lambda t: integrand(t, a, b), a, b, (), share)
            total += v
            err[0] += e_est
    return total


# ---------------------------------------------------------------- decomposed


def _state_matches(a: State, b: State) -> bool:
    return a.location == b.location and tuple(a.valuation) == tuple(b.valuation)


def _run_prefix(D: DecomposedSchedule, head: State, depth: int, rng,
                target: tuple[str, ...] | None = None) -> tuple[str, ...]:
    """Edges of one race run from ``head``; stops early on a mismatch."""
    state = head
    race = sample_race(D, state, rng)
    taken: list[str] = []
    for i in range(depth):
        st = step_decomposed(D, state, race, rng, i)
        taken.append(st.edge)
        if target is not None and st.edge != target[i]:
            break
        state, race = st.target, st.race_after
    return tuple(taken)


def trace_prob_decomposed_mc(D: DecomposedSchedule, trace: Trace, n: int, seed: int,
                             level: float = 0.99) -> ProbEstimate:
    """Fraction of ``n`` race runs from the head whose first jumps equal the trace."""
    if not chains(D.automaton, trace):
        return ProbEstimate(0.0, 0.0, 0.0, "monte-carlo", level, n)
    if not trace.edges:
        return ProbEstimate(1.0, 1.0, 1.0, "monte-carlo", level, n)
    cursor = StreamCursor()
    hits = 0
    for i in range(n):
        if _run_prefix(D, trace.head, len(trace), cursor.at(seed, i), trace.edges) == trace.edges:
            hits += 1
    return mc_estimate(hits, n, level)


def prefix_counts(D: DecomposedSchedule, head: State, depth: int, n: int,
                  seed: int) -> dict[tuple[str, ...], int]:
    """Counts of every edge prefix up to ``depth`` over ``n`` shared race runs."""
    cursor = StreamCursor()
    counts: dict[tuple[str, ...], int] = {}
    for i in range(n):
        path = _run_prefix(D, head, depth, cursor.at(seed, i))
        for j in range(1, len(path) + 1):
            key = path[:j]
            counts[key] = counts.get(key, 0) + 1
    return counts


def composed_prefix_counts(C: ComposedSchedule, head: State, depth: int, n: int,
                           seed: int) -> dict[tuple[str, ...], int]:
    cursor = StreamCursor()
    counts: dict[tuple[str, ...], int] = {}
    for i in range(n):
        rng = cursor.at(seed, i)
        state = head
        path: list[str] = []
        for j in range(depth):
            st = step_composed(C, state, rng, j)
            path.append(st.edge)
            state = st.target
            key = tuple(path)
            counts[key] = counts.get(key, 0) + 1
    return counts


def trace_prob_decomposed_quad(D: DecomposedSchedule, trace: Trace,
                               tol: float = 1e-9) -> ProbEstimate:
    """Nested quadrature of the race integrals; at most 2 variables and 2 jumps.

    The outer integrals run over every variable's initial realisation; the
    race conditions (winning label must have expired, edge must be enabled)
    enter as indicators and the winner's resample is integrated at each jump.
    """
    if D.k > 2 or len(trace) > 2:
        raise UnsupportedSize(
            f"quadrature oracle handles k <= 2 and length <= 2 (got k={D.k}, len={len(trace)})")
    H = D.automaton
    if not H.has_trivial_invariants() or any(e.kind is EdgeKind.FORCED for e in H.edges):
        raise UnsupportedModel("quadrature oracle needs trivial invariants and no forced edges")
    if not chains(H, trace):
        return exact_estimate(0.0, depth=len(trace))
    if not trace.edges:
        return exact_estimate(1.0)
    head = trace.head
    dists = [D.rv_distribution(i, head) for i in range(D.k)]
    caps = [d.tail() for d in dists]
    trunc = sum(d.sf(c) for d, c in zip(dists, caps))
    edges = trace.edges
    base_pts = enabling_breakpoints(H, head)

    def inner_value(ts: Sequence[float]) -> float:
        delta = min(ts)
        race = tuple(t - delta for t in ts)
        return _race_P(D, flow_to(H, head, delta), race, edges, tol * 1e-2)

    # the indicator in P is piecewise constant in the last outer variable
    # exactly when no further resample integral follows
    exact_last = len(edges) == 1
    if D.k == 1:
        value = _density_integral(dists[0], 0.0, caps[0], lambda t: inner_value((t,)),
                                  base_pts, exact_last, tol)
    else:
        def outer(t1):
            pts = list(base_pts) + [t1]
            return _density_integral(dists[1], 0.0, caps[1],
                                     lambda t2: inner_value((t1, t2)), pts, exact_last,
                                     tol * 1e-2)
        value = _density_integral(dists[0], 0.0, caps[0], outer, base_pts, False, tol)
    return exact_estimate(value, trunc + tol, len(trace))


def _density_integral(dist: Distribution, lo: float, hi: float, g, pts, exact: bool,
                      tol: float) -> float:
    """``integral of dist.pdf(t) * g(t)`` over [lo, hi].

    With ``exact`` the factor ``g`` must be constant between ``pts``; each
    piece then contributes ``g(mid) * (F(b) - F(a))``.
    """
    pts = list(pts) + list(dist.breakpoints())
    pieces = _pieces(lo, hi, pts)
    if exact:
        total = 0.0
        for a, b in pieces:
            c = g(0.5 * (a + b))
            if c:
                total += c * (dist.cdf(b) - dist.cdf(a))
        return total
    # substitute u = F(t): the weight becomes flat and g(Q(u)) stays bounded,
    # so long density tails cost no extra panels
    total = 0.0
    share = tol / max(len(pieces), 1)
    for a, b in pieces:
        ua, ub = dist.cdf(a), dist.cdf(b)
        if not ub > ua:
            continue
        v, _ = integrate(lambda u: g(_inward(dist.quantile(u), a, b)), ua, ub, (), share)
        total += v
    return total


def _race_P(D: DecomposedSchedule, state: State, race: tuple[float, ...],
            edges: tuple[str, ...], tol: float) -> float:
    if not edges:
        return 1.0
    H = D.automaton
    e = H.edge(edges[0])
    m0 = D.labels[e.id]
    if not edge_enabled(H, state, e) or race[m0] != 0.0:
        return 0.0
    nxt = take_jump(H, state, e)
    rest = edges[1:]
    if not rest:
        # the resample density integrates to one against P = 1
        return 1.0
    dist = D.rv_distribution(m0, nxt)
    others = [race[m] for m in range(D.k) if m != m0]

    def g(u):
        delta = min([u, *others])
        after = tuple((u if m == m0 else race[m]) - delta for m in range(D.k))
        return _race_P(D, flow_to(H, nxt, delta), after, rest, tol)

    pts = list(enabling_breakpoints(H, nxt)) + others
    return _density_integral(dist, 0.0, dist.tail(), g, pts, len(rest) == 1, tol)


# ---------------------------------------------------------------- delay laws


def delay_distribution(model, state: State, memory: RaceMemory | None = None) -> Distribution:
    """Law of the next time step from ``state``.

    For a race the law depends on when each variable was sampled; ``memory``
    defaults to a fresh race sampled in ``state``.
    """
    if isinstance(model, DecomposedSchedule):
        mem = memory or RaceMemory.initial(model, state)
        return min_of(mem.residuals(model))
    return model.delay_distribution(state)


def delay_cdf(model, state: State, grid, memory: RaceMemory | None = None) -> np.ndarray:
    dist = delay_distribution(model, state, memory)
    return np.array([dist.cdf(float(t)) for t in grid])


def empirical_cdf(samples: Sequence[float], grid) -> np.ndarray:
    xs = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(xs, np.asarray(grid, dtype=float), side="right") / len(xs)


# ---------------------------------------------------------------- Zeno probe


@dataclass
class ZenoReport:
    location: str
    probabilities: list[float] = field(default_factory=list)
    decreasing: bool = False
    non_vanishing: bool = False

    def rows(self) -> list[tuple[int, float]]:
        return [(k + 1, p) for k, p in enumerate(self.probabilities)]


def zeno_probe(C: ComposedSchedule, location: str, k_max: int, head: State | None = None,
               tol: float = 1e-10, stall: float = 1e-6) -> ZenoReport:
    """Probabilities of 1..k_max consecutive resampling jumps in ``location``.

    ``decreasing`` asks for a strictly decreasing sequence; ``non_vanishing``
    flags that successive ratios never drop below ``1 - stall``.
    """
    from .composed import resampling_edge

    H = C.automaton
    head = head or H.init
    if head.location != location:
        raise ValueError(f"probe head lies in {head.location}, not {location}")
    eps = resampling_edge(H, location)
    if eps is None:
        raise ValueError(f"{location} has no resampling edge")
    rep = ZenoReport(location)
    for k in range(1, k_max + 1):
        est = trace_prob_composed(C, Trace(head, (eps.id,) * k), tol, max(MAX_DEPTH, k))
        rep.probabilities.append(est.value)
    ps = rep.probabilities
    rep.decreasing = all(b < a for a, b in zip(ps, ps[1:]))
    rep.non_vanishing = bool(ps) and ps[0] > 0 and all(
        b >= a * (1 - stall) for a, b in zip(ps, ps[1:]))
    return rep
