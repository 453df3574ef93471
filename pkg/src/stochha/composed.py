"""Composed scheduling: a delay kernel and a jump kernel over enabled edges.

A schedule samples the dwell time from the current state, lets time pass, and
then picks an enabled edge from the post-delay state.  Sampled delays after
which no original edge is enabled are absorbed by a per-location resampling
self-loop; delays beyond the invariant's reach are absorbed by a forced edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (AffineReset, Edge, EdgeKind, HybridAutomaton, Region, State,
                   ValidationReport, advance, edge_enabled, enabled_edges,
                   enabling_breakpoints, in_invariant, t_max, take_jump,
                   union_of, validate)
from .dist import DiscreteDistribution, Distribution, DistSpec, substream
from .errors import InvariantViolation, KernelError, ModelError, TimelockError
from .paths import Path, Step

WEIGHT_TOL = 1e-9


def composed_resampling_id(location: str) -> str:
    return f"eps_{location}"


def original_edges(H: HybridAutomaton, location: str) -> tuple[Edge, ...]:
    return tuple(e for e in H.edges_from(location) if e.kind is EdgeKind.ORIGINAL)


def build_composed_extension(H_in: HybridAutomaton) -> HybridAutomaton:
    """Add one resampling self-loop per location, guarded by the complement
    of the union of the location's original guards."""
    if any(e.is_resampling for e in H_in.edges):
        raise ModelError("automaton already contains resampling edges")
    d = H_in.dim
    extra = []
    for loc in H_in.locations:
        covered = union_of((e.guard for e in original_edges(H_in, loc)), d)
        eid = composed_resampling_id(loc)
        if H_in.has_edge(eid):
            raise ModelError(f"edge id {eid!r} is reserved for resampling")
        extra.append(Edge(eid, loc, loc, covered.complement(), AffineReset.identity(d),
                          EdgeKind.RESAMPLE_COMPOSED))
    return H_in.with_edges(H_in.edges + tuple(extra))


def resampling_edge(H: HybridAutomaton, location: str) -> Edge | None:
    for e in H.edges_from(location):
        if e.kind is EdgeKind.RESAMPLE_COMPOSED:
            return e
    return None


# ---------------------------------------------------------------- schedules


class ComposedSchedule:
    """Delay kernel and jump kernel over an extended automaton.

    Subclasses implement :meth:`delay_distribution` and :meth:`jump_weights`;
    the base class enforces the resampling rule and the support condition.
    """

    automaton: HybridAutomaton
    # jump probabilities constant between the points reported by breakpoints()
    piecewise_constant_jumps = False

    def delay_distribution(self, state: State) -> Distribution:
        raise NotImplementedError

    def jump_weights(self, state: State, enabled: Sequence[Edge]) -> dict[str, float]:
        """Weights over ``enabled`` original edges (all non-empty)."""
        raise NotImplementedError

    def breakpoints(self, state: State) -> list[float]:
        """Delays from ``state`` at which the jump kernel may jump discontinuously."""
        return []

    def jump_distribution(self, state: State) -> DiscreteDistribution:
        """Distribution over edges at the post-delay ``state``."""
        H = self.automaton
        enabled = [e for e in enabled_edges(H, state) if e.kind is EdgeKind.ORIGINAL]
        if not enabled:
            eps = resampling_edge(H, state.location)
            if eps is None or not edge_enabled(H, state, eps):
                raise KernelError(f"no edge can fire in {state}")
            return DiscreteDistribution(((eps.id, 1.0),))
        weights = self.jump_weights(state, enabled)
        allowed = {e.id for e in enabled}
        stray = [k for k, w in weights.items() if w > 0 and k not in allowed]
        if stray:
            raise KernelError(f"weight on disabled edges {stray} in {state}")
        return DiscreteDistribution(tuple((e.id, weights.get(e.id, 0.0)) for e in enabled
                                          if weights.get(e.id, 0.0) > 0))

    def jump_probability(self, state: State, edge_id: str) -> float:
        return self.jump_distribution(state).probability(edge_id)

    def validate(self) -> ValidationReport:
        return validate(self.automaton)


@dataclass(frozen=True)
class JumpRow:
    """Weights used when the post-delay valuation satisfies ``condition``.

    Weights of disabled edges are dropped; with ``normalize`` the rest is
    rescaled, otherwise it must already sum to one.
    """

    condition: Region
    weights: tuple[tuple[str, float], ...]
    normalize: bool = False
    # the row carries an explicit condition or applies unconditionally
    conditional: bool = True


@dataclass(frozen=True)
class TableSchedule(ComposedSchedule):
    automaton: HybridAutomaton
    delays: dict[str, DistSpec]
    jumps: dict[str, tuple[JumpRow, ...]] = field(default_factory=dict)

    piecewise_constant_jumps = True

    def __post_init__(self):
        H = self.automaton
        missing = [loc for loc in H.locations if loc not in self.delays]
        if missing:
            raise ModelError(f"no delay distribution for locations {missing}")
        for loc, rows in self.jumps.items():
            if loc not in H.locations:
                raise ModelError(f"jump table for unknown location {loc!r}")
            for row in rows:
                for eid, w in row.weights:
                    if not H.has_edge(eid) or H.edge(eid).source != loc:
                        raise ModelError(f"jump table of {loc} names foreign edge {eid!r}")
                    if w < 0:
                        raise ModelError(f"negative weight {w} for {eid}")

    def delay_distribution(self, state: State) -> Distribution:
        return self.delays[state.location].resolve(state.valuation)

    def jump_weights(self, state, enabled):
        ids = [e.id for e in enabled]
        row = next((r for r in self.jumps.get(state.location, ())
                    if r.condition.contains(state.valuation)), None)
        if row is None:
            # no applicable row: every enabled edge is equally likely
            return {i: 1.0 / len(ids) for i in ids}
        table = dict(row.weights)
        w = {i: table.get(i, 0.0) for i in ids}
        total = sum(w.values())
        if row.normalize:
            if total <= 0:
                raise KernelError(f"jump row assigns no weight to enabled edges in {state}")
            return {i: v / total for i, v in w.items()}
        if abs(total - 1.0) > WEIGHT_TOL:
            raise KernelError(
                f"jump weights over enabled edges {ids} sum to {total:g} in {state}")
        return w

    def breakpoints(self, state: State) -> list[float]:
        v, rate = state.valuation, self.automaton.flow[state.location]
        pts = set()
        for row in self.jumps.get(state.location, ()):
            pts.update(row.condition.time_set(v, rate).endpoints())
        return sorted(p for p in pts if p > 0)


# ---------------------------------------------------------------- semantics


def forced_jump(H: HybridAutomaton, state: State, top: float) -> tuple[State, Edge]:
    """Boundary state after dwelling ``top`` and the forced edge that leaves it."""
    if not math.isfinite(top):
        raise TimelockError(f"unbounded dwell in {state} cannot force a jump")
    boundary = advance(H, state, top)
    forced = H.forced_edges(state.location)
    if not forced:
        raise TimelockError(
            f"delay exceeds the dwell bound {top:g} in {state} and "
            f"{state.location} declares no forced edge")
    for e in forced:
        if edge_enabled(H, boundary, e):
            return boundary, e
    raise TimelockError(f"no forced edge of {state.location} is enabled at {boundary}")


def step_composed(C: ComposedSchedule, state: State, rng: np.random.Generator,
                  index: int = 0, time: float = 0.0) -> Step:
    H = C.automaton
    if not in_invariant(H, state):
        raise InvariantViolation(f"{state} violates the invariant of {state.location}")
    sampled = C.delay_distribution(state).sample(rng)
    top = t_max(H, state)
    if sampled > top:
        post, e = forced_jump(H, state, top)
        delay = top
    else:
        delay = sampled
        post = advance(H, state, delay)
        e = H.edge(C.jump_distribution(post).sample(rng))
    nxt = take_jump(H, post, e)
    return Step(index, time, delay, sampled, state, post, e.id, e.kind, nxt)


def _check_bounds(max_jumps, max_time):
    if max_jumps is None and not math.isfinite(max_time):
        raise ValueError("simulation needs a finite max_jumps or max_time")


def simulate_composed(C: ComposedSchedule, seed: int, max_jumps: int | None = None,
                      max_time: float = math.inf, trajectory: int = 0,
                      rng: np.random.Generator | None = None) -> Path:
    """Sample one path; identical for identical ``(seed, trajectory)``.

    A step whose jump would happen after ``max_time`` is not recorded.
    """
    _check_bounds(max_jumps, max_time)
    if rng is None:
        rng = substream(seed, trajectory)
    state = C.automaton.init
    steps: list[Step] = []
    now = 0.0
    stop = "max_jumps"
    while max_jumps is None or len(steps) < max_jumps:
        st = step_composed(C, state, rng, len(steps), now)
        if st.jump_time > max_time:
            stop = "max_time"
            break
        steps.append(st)
        now = st.jump_time
        state = st.target
    return Path(trajectory, C.automaton.init, tuple(steps), stop)


def first_jump_frequencies(paths: Sequence[Path]) -> dict[str, float]:
    counts: dict[str, int] = {}
    for p in paths:
        if p.steps:
            counts[p.steps[0].edge] = counts.get(p.steps[0].edge, 0) + 1
    n = len(paths)
    return {k: c / n for k, c in sorted(counts.items())}


def delay_breakpoints(C: ComposedSchedule, state: State) -> list[float]:
    """Every delay from ``state`` where the integrand of a trace probability
    may be non-smooth: enabling changes, kernel conditions, density kinks."""
    pts = set(enabling_breakpoints(C.automaton, state))
    pts.update(C.breakpoints(state))
    pts.update(C.delay_distribution(state).breakpoints())
    return sorted(p for p in pts if math.isfinite(p) and p >= 0)


@dataclass(frozen=True)
class DelayOverride(ComposedSchedule):
    """``base`` with the delay law of one location replaced."""

    base: ComposedSchedule
    location: str
    delay: DistSpec

    @property
    def automaton(self) -> HybridAutomaton:
        return self.base.automaton

    @property
    def piecewise_constant_jumps(self) -> bool:
        return self.base.piecewise_constant_jumps

    def delay_distribution(self, state: State) -> Distribution:
        if state.location == self.location:
            return self.delay.resolve(state.valuation)
        return self.base.delay_distribution(state)

    def jump_distribution(self, state: State) -> DiscreteDistribution:
        return self.base.jump_distribution(state)

    def breakpoints(self, state: State) -> list[float]:
        return self.base.breakpoints(state)
