"""Statistical trace-probability equivalence checks and the uniform-minimum witness.

A passing report means the checks failed to find a difference at the chosen
significance level; it is evidence, not a proof.  Equivalence quantifies over
uncountably many traces and only an enumerated finite subset is examined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import ks_2samp

from .composed import ComposedSchedule
from .core import (EdgeKind, HybridAutomaton, State, edges_plus, enabling_breakpoints,
                   flow_to, jump_time_set, take_jump)
from .decomposed import DecomposedSchedule, RaceMemory
from .dist import Distribution, StreamCursor, Uniform, min_of, uniformity_deviation
from .errors import MappingError
from .measure import (ProbEstimate, Trace, delay_distribution, exact_estimate, mc_estimate,
                      prefix_counts, trace_prob_composed, trace_prob_decomposed_quad, wilson)

PROB_TOL = 1e-6


# ---------------------------------------------------------------- witnesses


@dataclass(frozen=True)
class Witness:
    """A concrete path realising a trace: delays and the head of every sub-trace."""

    edges: tuple[str, ...]
    delays: tuple[float, ...]
    heads: tuple[State, ...]


def representative_delays(H: HybridAutomaton, state: State) -> list[tuple[str, float]]:
    """One delay per piece of each enabling set, split where the enabled set changes."""
    pts = enabling_breakpoints(H, state)
    out = []
    for e in H.edges_from(state.location):
        for iv in jump_time_set(H, state, e):
            if iv.lo == iv.hi:
                out.append((e.id, iv.lo))
                continue
            cuts = [iv.lo, *[p for p in pts if iv.lo < p < iv.hi], iv.hi]
            for a, b in zip(cuts, cuts[1:]):
                if math.isfinite(b):
                    out.append((e.id, 0.5 * (a + b)))
                else:
                    out.append((e.id, a + 1.0))
    return out


def enumerate_witnesses(H: HybridAutomaton, head: State, depth: int) -> dict[tuple, Witness]:
    """Every edge sequence up to ``depth`` realisable along representative delays.

    The canonical witness of a sequence is the one with the lexicographically
    smallest delay tuple.
    """
    found: dict[tuple, Witness] = {(): Witness((), (), (head,))}
    frontier = [found[()]]
    for _ in range(depth):
        nxt = []
        for w in frontier:
            state = w.heads[-1]
            for eid, t in representative_delays(H, state):
                e = H.edge(eid)
                succ = take_jump(H, flow_to(H, state, t), e)
                cand = Witness(w.edges + (eid,), w.delays + (t,), w.heads + (succ,))
                old = found.get(cand.edges)
                if old is None or cand.delays < old.delays:
                    found[cand.edges] = cand
                    nxt.append(cand)
        frontier = [w for w in nxt if found[w.edges] is w]
    return found


# ---------------------------------------------------------------- adapters


class ModelView:
    """Uniform access to the quantities compared by the checker."""

    def __init__(self, model, name: str):
        if not isinstance(model, (ComposedSchedule, DecomposedSchedule)):
            raise TypeError(f"cannot compare {type(model).__name__}")
        self.model = model
        self.name = name

    @property
    def automaton(self) -> HybridAutomaton:
        return self.model.automaton

    @property
    def is_decomposed(self) -> bool:
        return isinstance(self.model, DecomposedSchedule)

    def replay(self, edges: Sequence[str], delays: Sequence[float]) -> tuple[list[State], list]:
        """Heads and race memories along a witness, in this model's own state space."""
        H = self.automaton
        state = H.init
        heads, mems = [state], []
        mem = RaceMemory.initial(self.model, state) if self.is_decomposed else None
        mems.append(mem)
        for eid, t in zip(edges, delays):
            e = H.edge(eid)
            succ = take_jump(H, flow_to(H, state, t), e)
            if mem is not None:
                mem = mem.after(self.model, t, e, succ)
            heads.append(succ)
            mems.append(mem)
            state = succ
        return heads, mems

    def delay_law(self, state: State, mem) -> Distribution:
        return delay_distribution(self.model, state, mem)


# ---------------------------------------------------------------- report


@dataclass
class TraceSetCheck:
    depth: int
    count_a: int
    count_b: int
    only_a: list[tuple]
    only_b: list[tuple]

    @property
    def passed(self) -> bool:
        return not self.only_a and not self.only_b


@dataclass
class ProbCheck:
    edges: tuple[str, ...]
    a: ProbEstimate
    b: ProbEstimate

    @property
    def passed(self) -> bool:
        if self.a.method == "quadrature" and self.b.method == "quadrature":
            return abs(self.a.value - self.b.value) <= max(PROB_TOL, self.a.error + self.b.error)
        return self.a.overlaps(self.b)


@dataclass
class CdfCheck:
    edges: tuple[str, ...]
    position: int
    statistic: float
    where: float
    threshold: float
    method: str
    p_value: float | None = None

    @property
    def passed(self) -> bool:
        if self.method == "ks":
            return self.p_value is not None and self.p_value >= self.threshold
        return self.statistic <= self.threshold


@dataclass
class EquivalenceReport:
    name_a: str
    name_b: str
    depth: int
    alpha: float
    trace_sets: list[TraceSetCheck] = field(default_factory=list)
    probabilities: list[ProbCheck] = field(default_factory=list)
    delay_cdfs: list[CdfCheck] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (all(c.passed for c in self.trace_sets)
                and all(c.passed for c in self.probabilities)
                and all(c.passed for c in self.delay_cdfs))

    def summary_lines(self) -> list[str]:
        def tag(ok):
            return "pass" if ok else "FAIL"
        lines = []
        for c in self.trace_sets:
            lines.append(f"trace-set depth={c.depth} {tag(c.passed)} "
                         f"a={c.count_a} b={c.count_b} only_a={len(c.only_a)} only_b={len(c.only_b)}")
        n_bad = sum(not c.passed for c in self.probabilities)
        lines.append(f"trace-prob {tag(n_bad == 0)} checked={len(self.probabilities)} failed={n_bad}")
        worst = max(self.delay_cdfs, key=lambda c: c.statistic, default=None)
        n_bad = sum(not c.passed for c in self.delay_cdfs)
        stat = f" max_gap={worst.statistic:.3g} at t={worst.where:.4g}" if worst else ""
        lines.append(f"delay-cdf {tag(n_bad == 0)} checked={len(self.delay_cdfs)} failed={n_bad}{stat}")
        lines.append(f"verdict {tag(self.passed)} (fail to reject at alpha={self.alpha:g})"
                     if self.passed else f"verdict FAIL")
        return lines

    def __str__(self) -> str:
        return "\n".join(self.summary_lines() + [f"note: {n}" for n in self.notes])


# ---------------------------------------------------------------- checker


def _check_map(A: HybridAutomaton, B: HybridAutomaton,
               edge_map: Mapping[str, str] | None) -> dict[str, str]:
    if edge_map is None:
        edge_map = {e.id: e.id for e in A.edges if B.has_edge(e.id)}
    edge_map = dict(edge_map)
    live_a = set()
    for loc in A.locations:
        live_a.update(e.id for e in edges_plus(A, loc))
    missing = [e.id for e in A.edges if e.id not in edge_map and e.id in live_a]
    if missing:
        raise MappingError(f"edge map misses edges {missing}")
    unknown = [b for b in edge_map.values() if not B.has_edge(b)]
    if unknown:
        raise MappingError(f"edge map names unknown edges {unknown}")
    stray = [a for a in edge_map if not A.has_edge(a)]
    if stray:
        raise MappingError(f"edge map names unknown source edges {stray}")
    if len(set(edge_map.values())) != len(edge_map):
        raise MappingError("edge map is not injective")
    image = set(edge_map.values())
    live_b = set()
    for loc in B.locations:
        live_b.update(e.id for e in edges_plus(B, loc))
    for e in B.edges:
        if e.id not in image and e.id in live_b:
            raise MappingError(f"edge {e.id} has no preimage and can be enabled")
    return edge_map


def _grid(da: Distribution, db: Distribution, points: int) -> np.ndarray:
    top = max(da.tail(1e-10), db.tail(1e-10))
    pts = set(np.linspace(0.0, top, points).tolist())
    for d in (da, db):
        pts.update(p for p in d.breakpoints() if 0 <= p <= top)
    return np.array(sorted(pts))


def cdf_gap(da: Distribution, db: Distribution, points: int = 401) -> tuple[float, float]:
    """Supremum of the CDF difference, refined around the best grid point."""
    grid = _grid(da, db, points)
    gaps = np.array([abs(da.cdf(float(t)) - db.cdf(float(t))) for t in grid])
    i = int(np.argmax(gaps))
    best, where = float(gaps[i]), float(grid[i])
    lo, hi = float(grid[max(i - 1, 0)]), float(grid[min(i + 1, len(grid) - 1)])
    if hi > lo:
        res = minimize_scalar(lambda t: -abs(da.cdf(t) - db.cdf(t)), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        if -res.fun > best:
            best, where = float(-res.fun), float(res.x)
    return best, where


def check_pr_equivalence(A, B, edge_map: Mapping[str, str] | None = None, depth: int = 3,
                         n: int = 100_000, alpha: float = 0.01, seed: int = 0,
                         decomposed_method: str = "mc", cdf_method: str = "analytic",
                         cdf_tol: float = 1e-9, cdf_samples: int = 100_000,
                         names: tuple[str, str] = ("A", "B")) -> EquivalenceReport:
    """Compare trace sets, trace probabilities and delay laws up to ``depth``.

    ``edge_map`` sends every enabled edge of ``A`` to a distinct edge of ``B``; edges of
    ``B`` outside its image must never be enabled.  Monte Carlo intervals are
    Bonferroni-adjusted over all compared traces.
    """
    va, vb = ModelView(A, names[0]), ModelView(B, names[1])
    emap = _check_map(va.automaton, vb.automaton, edge_map)
    rep = EquivalenceReport(names[0], names[1], depth, alpha)

    wa = enumerate_witnesses(va.automaton, va.automaton.init, depth)
    wb = enumerate_witnesses(vb.automaton, vb.automaton.init, depth)
    mapped_a = {tuple(emap[x] for x in k) for k in wa}
    for k in range(1, depth + 1):
        sa = {m for m in mapped_a if len(m) == k}
        sb = {m for m in wb if len(m) == k}
        rep.trace_sets.append(TraceSetCheck(k, len(sa), len(sb), sorted(sa - sb), sorted(sb - sa)))

    common = sorted(k for k in wa if len(k) >= 1 and tuple(emap[x] for x in k) in wb)
    level = 1.0 - alpha / max(len(common), 1)
    est_a = _estimates(va, common, depth, n, seed, level, decomposed_method, {})
    est_b = _estimates(vb, [tuple(emap[x] for x in k) for k in common], depth, n,
                       seed + 1, level, decomposed_method, {})
    for k in common:
        rep.probabilities.append(ProbCheck(k, est_a[k], est_b[tuple(emap[x] for x in k)]))

    cursor = StreamCursor()
    stream = 0
    for k in sorted(wa):
        if len(k) >= depth:
            continue
        w = wa[k]
        mk = tuple(emap[x] for x in k)
        try:
            heads_a, mems_a = va.replay(w.edges, w.delays)
            heads_b, mems_b = vb.replay(mk, w.delays)
        except Exception as exc:  # noqa: BLE001 - replay failure is a reported mismatch
            rep.notes.append(f"witness {k} does not replay: {exc}")
            rep.delay_cdfs.append(CdfCheck(k, len(k), 1.0, 0.0, cdf_tol, "analytic"))
            continue
        da = va.delay_law(heads_a[-1], mems_a[-1])
        db = vb.delay_law(heads_b[-1], mems_b[-1])
        if cdf_method == "ks":
            xa = np.array([da.sample(cursor.at(seed, stream + i)) for i in range(cdf_samples)])
            stream += cdf_samples
            xb = np.array([db.sample(cursor.at(seed, stream + i)) for i in range(cdf_samples)])
            stream += cdf_samples
            res = ks_2samp(xa, xb)
            rep.delay_cdfs.append(CdfCheck(k, len(k), float(res.statistic),
                                           float(res.statistic_location), alpha, "ks",
                                           float(res.pvalue)))
        else:
            gap, where = cdf_gap(da, db)
            rep.delay_cdfs.append(CdfCheck(k, len(k), gap, where, cdf_tol, "analytic"))
    return rep


def _estimates(view: ModelView, traces: list[tuple], depth: int, n: int, seed: int,
               level: float, method: str, cache: dict) -> dict[tuple, ProbEstimate]:
    out: dict[tuple, ProbEstimate] = {}
    head = view.automaton.init
    if not view.is_decomposed:
        for k in traces:
            out[k] = trace_prob_composed(view.model, Trace(head, k))
        return out
    if method == "quad":
        for k in traces:
            out[k] = trace_prob_decomposed_quad(view.model, Trace(head, k))
        return out
    counts = prefix_counts(view.model, head, depth, n, seed)
    for k in traces:
        out[k] = mc_estimate(counts.get(k, 0), n, level)
    return out


# ---------------------------------------------------------------- witness


@dataclass
class CounterexampleReport:
    valid: bool
    reason: str = ""
    overlap: tuple[float, float] | None = None
    interval: tuple[float, float] | None = None
    ratio: float = math.nan
    ks_distance: float = math.nan
    ks_at: float = math.nan

    def __str__(self) -> str:
        if not self.valid:
            return f"witness invalid: {self.reason}"
        return (f"overlap=({self.overlap[0]:g}, {self.overlap[1]:g}) "
                f"density ratio on [{self.interval[0]:g}, {self.interval[1]:g}] = {self.ratio:.6g}; "
                f"sup |F_min - F_target| = {self.ks_distance:.6g} at t={self.ks_at:.6g}")


def counterexample_witness(x1: Distribution, x2: Distribution,
                           target: Uniform) -> CounterexampleReport:
    """Quantify how far the minimum of two racing variables is from ``target``.

    A race whose two variables overlap can only produce a delay law with a
    non-constant density on the overlap; the report gives the density ratio
    over the first half of the overlap and the sup-distance to the uniform
    target law.
    """
    lo = max(x1.support[0], x2.support[0])
    hi = min(x1.support[1], x2.support[1])
    if not hi > lo:
        return CounterexampleReport(False, "supports of the two variables do not overlap")
    a, b = max(lo, target.a), min(hi, target.b)
    if not b > a:
        return CounterexampleReport(False, "overlap does not meet the target support",
                                    (lo, hi))
    m = min_of([x1, x2])
    dev = uniformity_deviation(m, (a, 0.5 * (a + b)))
    gap, where = cdf_gap(m, target, 2001)
    return CounterexampleReport(True, "", (lo, hi), (a, 0.5 * (a + b)), dev.ratio, gap, where)
