"""Compile a race-scheduled model into an equivalent kernel-scheduled one.

The composed model carries, per random variable, the location code and
valuation at its last sampling and the time since then, plus the time since
the last jump.  Its delay kernel is the minimum of the residual lives; its
jump kernel gives each enabled edge the probability that its variable is the
first to expire.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .composed import ComposedSchedule, composed_resampling_id
from .core import (AffineReset, Box, Edge, EdgeKind, HybridAutomaton, State, ValidationReport,
                   enabled_edges, union_of, validate)
from .decomposed import DecomposedSchedule
from .dist import DiscreteDistribution, Distribution, DistSpec, min_of, prob_is_min, shift_condition
from .errors import KernelError, ModelError, UnsupportedModel

CODE_TOL = 1e-9
JUMP_SUM_TOL = 1e-6
RULES = ("race", "hazard")


@dataclass(frozen=True)
class AuxLayout:
    """Positions of the auxiliary variables appended after the originals."""

    variables: tuple[str, ...]
    rv_names: tuple[str, ...]
    locations: tuple[str, ...]

    @property
    def d(self) -> int:
        return len(self.variables)

    @property
    def k(self) -> int:
        return len(self.rv_names)

    @property
    def dim(self) -> int:
        return self.d + self.k * (self.d + 2) + 1

    def loc_var(self, i: int) -> int:
        return self.d + i

    def copy_var(self, i: int, j: int) -> int:
        return self.d + self.k + i * self.d + j

    def age_var(self, i: int) -> int:
        return self.d + self.k + self.k * self.d + i

    @property
    def t_jump(self) -> int:
        return self.dim - 1

    def names(self) -> tuple[str, ...]:
        out = list(self.variables)
        out += [f"d_{x}" for x in self.rv_names]
        out += [f"c_{x}_{v}" for x in self.rv_names for v in self.variables]
        out += [f"r_{x}" for x in self.rv_names]
        out.append("t_jump")
        return tuple(out)

    def code(self, location: str) -> float:
        return float(self.locations.index(location))

    def location_of(self, code: float) -> str:
        j = round(code)
        if abs(code - j) > CODE_TOL or not 0 <= j < len(self.locations):
            raise ModelError(f"location code {code!r} does not decode")
        return self.locations[j]

    def project(self, state: State) -> State:
        return State(state.location, tuple(state.valuation[:self.d]))

    def sampled_at(self, state: State, i: int) -> State:
        v = state.valuation
        loc = self.location_of(v[self.loc_var(i)])
        return State(loc, tuple(v[self.copy_var(i, j)] for j in range(self.d)))

    def age(self, state: State, i: int) -> float:
        return state.valuation[self.age_var(i)]

    def since_jump(self, state: State) -> float:
        return state.valuation[self.t_jump]


@dataclass(frozen=True)
class RaceKernelSchedule(ComposedSchedule):
    """Kernels computed on demand from the auxiliary encoding.

    ``rule`` selects the jump kernel: ``"race"`` weighs edges by the
    probability that their variable wins the race started at the last jump;
    ``"hazard"`` conditions on the realised delay and weighs by the current
    hazard rates instead.
    """

    automaton: HybridAutomaton
    layout: AuxLayout
    rvs: tuple[DistSpec, ...]
    labels: dict[str, int]
    rule: str = "race"

    def __post_init__(self):
        if self.rule not in RULES:
            raise ModelError(f"unknown jump rule {self.rule!r}; expected one of {RULES}")

    @property
    def piecewise_constant_jumps(self) -> bool:
        # race weights depend on r_i - t_jump, which does not change while time passes
        return self.rule == "race"

    def rv_at(self, i: int, state: State) -> Distribution:
        return self.rvs[i].resolve(self.layout.sampled_at(state, i).valuation)

    def residuals(self, state: State, offset: bool = False) -> tuple[Distribution, ...]:
        out = []
        lay = self.layout
        for i in range(lay.k):
            age = lay.age(state, i)
            if offset:
                age -= lay.since_jump(state)
                if age < -CODE_TOL:
                    raise ModelError(
                        f"age of {lay.rv_names[i]} is below the time since the last jump in {state}")
                age = max(age, 0.0)
            out.append(shift_condition(self.rv_at(i, state), age))
        return tuple(out)

    def delay_distribution(self, state: State) -> Distribution:
        return min_of(self.residuals(state))

    def jump_distribution(self, state: State) -> DiscreteDistribution:
        H = self.automaton
        enabled = [e for e in enabled_edges(H, state) if e.kind is not EdgeKind.RESAMPLE_COMPOSED]
        by_label: dict[int, str] = {}
        for e in enabled:
            i = self.labels[e.id]
            if i in by_label:
                raise KernelError(f"edges {by_label[i]} and {e.id} share a label in {state}")
            by_label[i] = e.id
        if self.rule == "race":
            family = self.residuals(state, offset=True)
            weights = {eid: prob_is_min(i, family) for i, eid in by_label.items()}
        else:
            family = self.residuals(state)
            weights = {eid: family[i].pdf(0.0) for i, eid in by_label.items()}
        total = sum(weights.values())
        if self.rule == "race" and abs(total - 1.0) > JUMP_SUM_TOL:
            raise KernelError(f"win probabilities of enabled edges sum to {total:.9g} in {state}")
        if total <= 0:
            raise KernelError(f"no enabled edge has positive weight in {state}")
        return DiscreteDistribution.from_weights(weights, normalize=True)

    def jump_probability(self, state: State, edge_id: str) -> float:
        return self.jump_distribution(state).probability(edge_id)

    def validate(self) -> ValidationReport:
        # resampling loops refresh the auxiliary copies, so only the original
        # variables must stay fixed
        return validate(self.automaton, carried=self.layout.d)


@dataclass(frozen=True)
class TranslationResult:
    composed: RaceKernelSchedule
    edge_map: dict[str, str]
    layout: AuxLayout

    @property
    def aux_index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.layout.names())}


def _lift_reset(e: Edge, lay: AuxLayout, label: int, target_code: float) -> AffineReset:
    d, dim = lay.d, lay.dim
    rows = [list(1.0 if r == c else 0.0 for c in range(dim)) for r in range(dim)]
    offset = [0.0] * dim

    def copy_row(dst: int, src: int):
        rows[dst] = list(e.reset.matrix[src]) + [0.0] * (dim - d)
        offset[dst] = float(e.reset.offset[src])

    for j in range(d):
        copy_row(j, j)
        copy_row(lay.copy_var(label, j), j)
    for pos, value in ((lay.loc_var(label), target_code), (lay.age_var(label), 0.0),
                       (lay.t_jump, 0.0)):
        rows[pos] = [0.0] * dim
        offset[pos] = value
    return AffineReset(tuple(tuple(r) for r in rows), tuple(offset))


def layout_for(D_vars: Sequence[str], rv_names: Sequence[str],
               locations: Sequence[str]) -> AuxLayout:
    lay = AuxLayout(tuple(D_vars), tuple(rv_names), tuple(locations))
    names = lay.names()
    if len(set(names)) != len(names):
        raise ModelError("auxiliary variable names collide with model variables")
    return lay


def translate(D: DecomposedSchedule, rule: str = "race") -> TranslationResult:
    H = D.automaton
    if not H.has_trivial_invariants() or any(e.kind is EdgeKind.FORCED for e in H.edges):
        raise UnsupportedModel("translation needs trivial invariants and no forced edges")
    for spec in D.rvs:
        if not spec.resolve(H.init.valuation).supports_shift:
            raise UnsupportedModel(f"{spec.family} lacks a residual-life operation")
    lay = layout_for(H.variables, D.rv_names, H.locations)
    dim = lay.dim
    zeros_k = (0.0,) * (lay.k * (lay.d + 1))
    ones_k = (1.0,) * (lay.k + 1)
    flow = {loc: tuple(H.flow[loc]) + zeros_k + ones_k for loc in H.locations}
    full = Box.full(dim)
    edges = []
    for e in H.edges:
        i = D.labels[e.id]
        edges.append(Edge(e.id, e.source, e.target, e.guard.lift(dim),
                          _lift_reset(e, lay, i, lay.code(e.target)), e.kind, e.label))
    for loc in H.locations:
        # label-wise resampling loops cover every valuation, so this stays empty
        covered = union_of((x.guard for x in edges if x.source == loc), dim)
        eid = composed_resampling_id(loc)
        if H.has_edge(eid):
            raise ModelError(f"edge id {eid!r} is reserved for resampling")
        edges.append(Edge(eid, loc, loc, covered.complement(), AffineReset.identity(dim),
                          EdgeKind.RESAMPLE_COMPOSED))
    v0 = list(H.init.valuation) + [0.0] * (dim - lay.d)
    for i in range(lay.k):
        v0[lay.loc_var(i)] = lay.code(H.init.location)
        for j in range(lay.d):
            v0[lay.copy_var(i, j)] = H.init.valuation[j]
    H2 = HybridAutomaton(H.locations, lay.names(), flow, {loc: full for loc in H.locations},
                         tuple(edges), State(H.init.location, tuple(v0)))
    C = RaceKernelSchedule(H2, lay, tuple(D.rvs), dict(D.labels), rule)
    return TranslationResult(C, {e.id: e.id for e in H.edges}, lay)


def kernel_delay(C: RaceKernelSchedule, state: State) -> Distribution:
    return C.delay_distribution(state)


def kernel_jump(C: RaceKernelSchedule, state: State, edge_id: str) -> float:
    return C.jump_probability(state, edge_id)


def project_path_states(lay: AuxLayout, states: Sequence[State]) -> list[State]:
    return [lay.project(s) for s in states]


def hazard_ratio_constant(dists: Sequence[Distribution], horizon: float,
                          points: int = 64) -> bool:
    """Whether hazard ratios stay fixed on (0, horizon); then both jump rules agree."""
    grid = [horizon * (i + 0.5) / points for i in range(points)]
    ref = None
    for t in grid:
        hz = []
        for d in dists:
            s = d.sf(t)
            hz.append(d.pdf(t) / s if s > 0 else math.inf)
        if any(not math.isfinite(h) for h in hz) or sum(hz) == 0:
            return False
        ratios = tuple(h / sum(hz) for h in hz)
        if ref is None:
            ref = ratios
        elif any(abs(a - b) > 1e-9 for a, b in zip(ratios, ref)):
            return False
    return True
