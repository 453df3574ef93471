"""Decomposed scheduling: every edge carries a random variable and the
variables race.

The smallest remaining realisation fixes both the delay and the label of the
edge to take; only the winner is resampled after the jump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .composed import _check_bounds, forced_jump
from .core import (AffineReset, Edge, EdgeKind, HybridAutomaton, State,
                   ValidationReport, advance, enabled_edges, in_invariant, t_max,
                   take_jump, union_of, validate)
from .dist import Distribution, DistSpec, shift_condition, substream
from .errors import InvariantViolation, LabelRangeError, ModelError, RaceViolation
from .paths import Path, Step


def decomposed_resampling_id(location: str, label: int) -> str:
    """Id of the resampling loop of ``location`` for 0-based ``label``."""
    return f"eps_{location}_{label + 1}"


def build_decomposed_extension(H_in: HybridAutomaton, labels: Mapping[str, int],
                               k: int) -> tuple[HybridAutomaton, dict[str, int]]:
    """Add one resampling loop per (location, label) and extend the labelling.

    ``labels`` maps every original edge id to a 0-based variable index.
    Forced edges are not raced and must stay unlabelled.
    """
    if k < 1:
        raise LabelRangeError("decomposed scheduling needs at least one random variable")
    if any(e.is_resampling for e in H_in.edges):
        raise ModelError("automaton already contains resampling edges")
    for eid, i in labels.items():
        if not H_in.has_edge(eid):
            raise LabelRangeError(f"label for unknown edge {eid!r}")
        if H_in.edge(eid).kind is EdgeKind.FORCED:
            raise LabelRangeError(f"forced edge {eid!r} cannot carry a label")
        if not (isinstance(i, int) and 0 <= i < k):
            raise LabelRangeError(f"label {i} of edge {eid!r} outside 0..{k - 1}")
    for e in H_in.edges:
        if e.kind is EdgeKind.ORIGINAL and e.id not in labels:
            raise LabelRangeError(f"edge {e.id!r} carries no label")
    d = H_in.dim
    extra = []
    ext_labels = dict(labels)
    for loc in H_in.locations:
        for i in range(k):
            guards = (e.guard for e in H_in.edges_from(loc)
                      if e.kind is EdgeKind.ORIGINAL and labels[e.id] == i)
            eid = decomposed_resampling_id(loc, i)
            if H_in.has_edge(eid):
                raise ModelError(f"edge id {eid!r} is reserved for resampling")
            extra.append(Edge(eid, loc, loc, union_of(guards, d).complement(),
                              AffineReset.identity(d), EdgeKind.RESAMPLE_DECOMPOSED, i))
            ext_labels[eid] = i
    return H_in.with_edges(H_in.edges + tuple(extra)), ext_labels


@dataclass(frozen=True)
class DecomposedSchedule:
    """Extended automaton, ordered random variables and the edge labelling."""

    automaton: HybridAutomaton
    rv_names: tuple[str, ...]
    rvs: tuple[DistSpec, ...]
    labels: dict[str, int]

    def __post_init__(self):
        if not self.rvs:
            raise LabelRangeError("decomposed scheduling needs at least one random variable")
        if len(self.rv_names) != len(self.rvs):
            raise ModelError("random variable names and distributions differ in length")
        for e in self.automaton.edges:
            if e.kind is EdgeKind.FORCED:
                continue
            i = self.labels.get(e.id)
            if i is None or not 0 <= i < self.k:
                raise LabelRangeError(f"edge {e.id!r} has no label in 0..{self.k - 1}")

    @property
    def k(self) -> int:
        return len(self.rvs)

    def label(self, edge_id: str) -> int:
        return self.labels[edge_id]

    def rv_distribution(self, i: int, state: State) -> Distribution:
        return self.rvs[i].resolve(state.valuation)

    def validate(self) -> ValidationReport:
        rep = validate(self.automaton)
        if rep.ok:
            rep.extend(check_well_labeled(self))
        return rep


def make_decomposed(H_in: HybridAutomaton, rv_names: Sequence[str], rvs: Sequence[DistSpec],
                    labels: Mapping[str, int]) -> DecomposedSchedule:
    H, ext = build_decomposed_extension(H_in, labels, len(rvs))
    return DecomposedSchedule(H, tuple(rv_names), tuple(rvs), ext)


def check_well_labeled(D: DecomposedSchedule) -> ValidationReport:
    """Static check: same-source edges sharing a label have disjoint guards.

    Sound for overlaps inside one location; interactions that depend on
    reachability are asserted during simulation instead.
    """
    rep = ValidationReport()
    H = D.automaton
    for loc in H.locations:
        edges = [e for e in H.edges_from(loc) if e.kind is not EdgeKind.FORCED]
        for a_i, a in enumerate(edges):
            for b in edges[a_i + 1:]:
                if D.labels[a.id] != D.labels[b.id]:
                    continue
                if not a.guard.intersect(b.guard).is_empty():
                    rep.error(f"location {loc}",
                              f"edges {a.id} and {b.id} share label "
                              f"{D.rv_names[D.labels[a.id]]} and overlapping guards")
    return rep


def sample_race(D: DecomposedSchedule, state: State, rng: np.random.Generator) -> tuple:
    return tuple(D.rv_distribution(i, state).sample(rng) for i in range(D.k))


def winner(race: Sequence[float]) -> int:
    """Index of the smallest entry; the lowest index wins ties."""
    best = 0
    for i in range(1, len(race)):
        if race[i] < race[best]:
            best = i
    return best


def step_decomposed(D: DecomposedSchedule, state: State, race: Sequence[float],
                    rng: np.random.Generator, index: int = 0,
                    time: float = 0.0) -> Step:
    H = D.automaton
    if not in_invariant(H, state):
        raise InvariantViolation(f"{state} violates the invariant of {state.location}")
    if len(race) != D.k or any(r < 0 for r in race):
        raise RaceViolation(f"invalid race vector {tuple(race)}")
    m = winner(race)
    sampled = race[m]
    top = t_max(H, state)
    if sampled > top:
        # forced exit: every variable keeps running, none is resampled
        post, e = forced_jump(H, state, top)
        after = tuple(r - top for r in race)
        return Step(index, time, top, sampled, state, post, e.id, e.kind,
                    take_jump(H, post, e), tuple(race), after)
    delay = sampled
    post = advance(H, state, delay)
    after = [r - delay for r in race]
    after[m] = 0.0
    cands = [e for e in enabled_edges(H, post)
             if e.kind is not EdgeKind.FORCED and D.labels[e.id] == m]
    if len(cands) != 1:
        ids = [e.id for e in cands]
        raise RaceViolation(
            f"{len(cands)} enabled edges {ids} carry winning label "
            f"{D.rv_names[m]} in {post}")
    e = cands[0]
    nxt = take_jump(H, post, e)
    after[m] = D.rv_distribution(m, nxt).sample(rng)
    return Step(index, time, delay, sampled, state, post, e.id, e.kind, nxt,
                tuple(race), tuple(after))


def simulate_decomposed(D: DecomposedSchedule, seed: int, max_jumps: int | None = None,
                        max_time: float = math.inf, trajectory: int = 0,
                        rng: np.random.Generator | None = None) -> Path:
    """Sample one race path; each step records the race vector before it."""
    _check_bounds(max_jumps, max_time)
    if rng is None:
        rng = substream(seed, trajectory)
    state = D.automaton.init
    race = sample_race(D, state, rng)
    steps: list[Step] = []
    now = 0.0
    stop = "max_jumps"
    while max_jumps is None or len(steps) < max_jumps:
        st = step_decomposed(D, state, race, rng, len(steps), now)
        if st.jump_time > max_time:
            stop = "max_time"
            break
        steps.append(st)
        now = st.jump_time
        state, race = st.target, st.race_after
    return Path(trajectory, D.automaton.init, tuple(steps), stop)


# ---------------------------------------------------------------- race memory


@dataclass(frozen=True)
class RaceMemory:
    """Where each variable was last sampled and how long it has been running.

    Along a fixed edge sequence this is deterministic, which is what makes
    the residual delay distribution at a trace head computable.
    """

    sampled_at: tuple[State, ...]
    age: tuple[float, ...]

    @classmethod
    def initial(cls, D: DecomposedSchedule, state: State) -> RaceMemory:
        return cls(tuple(state for _ in range(D.k)), tuple(0.0 for _ in range(D.k)))

    def after(self, D: DecomposedSchedule, delay: float, edge: Edge,
              target: State) -> RaceMemory:
        ages = [a + delay for a in self.age]
        at = list(self.sampled_at)
        if edge.kind is not EdgeKind.FORCED:
            m = D.labels[edge.id]
            ages[m] = 0.0
            at[m] = target
        return RaceMemory(tuple(at), tuple(ages))

    def residuals(self, D: DecomposedSchedule) -> tuple[Distribution, ...]:
        return tuple(shift_condition(D.rv_distribution(i, s), a)
                     for i, (s, a) in enumerate(zip(self.sampled_at, self.age)))
