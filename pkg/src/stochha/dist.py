"""Delay distributions on the nonnegative reals and their combinators.

Besides the parametric families this module supplies the three operations the
race construction depends on: the minimum of independent variables, the
residual ("shift-conditioned") distribution after an elapsed time, and the
probability that a given variable expires first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Hashable, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import Affine
from .errors import ExhaustedSupport, InvalidParameter, QuadratureFailure

INF = math.inf
TAIL_EPS = 1e-10
QUAD_TOL = 1e-8


# ---------------------------------------------------------------- RNG


def substream(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator for trajectory ``stream`` under master ``seed``.

    The stream depends only on ``(seed, stream)``, so trajectories are
    reproducible no matter how they are distributed over workers.
    """
    mask = (1 << 64) - 1
    key = ((int(seed) & mask) << 64) | (int(stream) & mask)
    return np.random.Generator(np.random.Philox(key=key))


class StreamCursor:
    """Reusable generator repositioned onto substream ``(seed, stream)``.

    Produces the same numbers as :func:`substream` without constructing a
    new bit generator per trajectory.  The returned generator is only valid
    until the next call to :meth:`at`.
    """

    def __init__(self):
        self._bits = np.random.Philox(key=0)
        self._gen = np.random.Generator(self._bits)
        self._template = self._bits.state

    def at(self, seed: int, stream: int) -> np.random.Generator:
        mask = (1 << 64) - 1
        st = dict(self._template)
        st["state"] = {"counter": np.zeros(4, dtype=np.uint64),
                       "key": np.array([int(stream) & mask, int(seed) & mask],
                                       dtype=np.uint64)}
        self._bits.state = st
        return self._gen


# ---------------------------------------------------------------- quadrature


def adaptive_simpson(f, a: float, b: float, tol: float = QUAD_TOL,
                     max_depth: int = 50, min_depth: int = 3) -> tuple[float, float]:
    """Integrate ``f`` over [a, b]; returns ``(value, error_estimate)``.

    Subintervals that hit ``max_depth`` are accepted with their Richardson
    error, which keeps isolated jump discontinuities cheap.
    """
    if not b > a:
        return 0.0, 0.0
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    total = 0.0
    err = 0.0
    while stack:
        lo, hi, flo, fmid, fhi, whole, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        delta = left + right - whole
        if depth >= min_depth and (abs(delta) <= 15.0 * eps or depth >= max_depth):
            total += left + right + delta / 15.0
            err += abs(delta) / 15.0
        else:
            stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
            stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
    if not math.isfinite(total):
        raise QuadratureFailure(f"non-finite integral over [{a}, {b}]")
    return total, err


def integrate(f, a: float, b: float, breakpoints: Sequence[float] = (),
              tol: float = QUAD_TOL) -> tuple[float, float]:
    """Piecewise adaptive Simpson over [a, b] split at ``breakpoints``.

    Raises QuadratureFailure when the accumulated error estimate exceeds ``tol``.
    """
    if not b > a:
        return 0.0, 0.0
    if not (math.isfinite(a) and math.isfinite(b)):
        raise QuadratureFailure("integration bounds must be finite; truncate tails first")
    cuts = sorted({p for p in breakpoints if a < p < b})
    edges = [a, *cuts, b]
    total = 0.0
    err = 0.0
    share = tol / (len(edges) - 1)
    for lo, hi in zip(edges, edges[1:]):
        v, e = adaptive_simpson(f, lo, hi, share)
        total += v
        err += e
    if err > tol:
        raise QuadratureFailure(f"error estimate {err:.3g} exceeds tolerance {tol:.3g}")
    return total, err


# ---------------------------------------------------------------- families


class Distribution:
    """Continuous distribution of a nonnegative delay."""

    supports_shift = True

    def cdf(self, x: float) -> float:
        return 1.0 - self.sf(x)

    def sf(self, x: float) -> float:
        return 1.0 - self.cdf(x)

    def pdf(self, x: float) -> float:
        raise NotImplementedError

    def quantile(self, p: float) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> float:
        return self.quantile(rng.random())

    @property
    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        """Finite points where the density may be discontinuous or kinked."""
        return ()

    def tail(self, eps: float = TAIL_EPS) -> float:
        """Finite upper integration limit holding all but ``eps`` of the mass."""
        hi = self.support[1]
        return hi if math.isfinite(hi) else self.quantile(1.0 - eps)

    def cdf_grid(self, grid) -> np.ndarray:
        return np.array([self.cdf(float(t)) for t in grid])


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise InvalidParameter(f"probability {p} outside [0, 1]")


@dataclass(frozen=True)
class Uniform(Distribution):
    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise InvalidParameter(f"uniform({self.a}, {self.b}) needs finite bounds")
        if self.a < 0:
            raise InvalidParameter(f"uniform({self.a}, {self.b}): delays must be nonnegative")
        if not self.a < self.b:
            raise InvalidParameter(f"uniform({self.a}, {self.b}) needs a < b")

    def cdf(self, x):
        if x <= self.a:
            return 0.0
        if x >= self.b:
            return 1.0
        return (x - self.a) / (self.b - self.a)

    def sf(self, x):
        if x <= self.a:
            return 1.0
        if x >= self.b:
            return 0.0
        return (self.b - x) / (self.b - self.a)

    def pdf(self, x):
        return 1.0 / (self.b - self.a) if self.a <= x <= self.b else 0.0

    def quantile(self, p):
        _check_p(p)
        return self.a + p * (self.b - self.a)

    @property
    def support(self):
        return (self.a, self.b)

    def breakpoints(self):
        return (self.a, self.b)

    def __str__(self):
        return f"uniform({self.a:g}, {self.b:g})"


@dataclass(frozen=True)
class Exponential(Distribution):
    rate: float

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise InvalidParameter(f"exp({self.rate}) needs a positive finite rate")

    def cdf(self, x):
        return -math.expm1(-self.rate * x) if x > 0 else 0.0

    def sf(self, x):
        return math.exp(-self.rate * x) if x > 0 else 1.0

    def pdf(self, x):
        return self.rate * math.exp(-self.rate * x) if x >= 0 else 0.0

    def quantile(self, p):
        _check_p(p)
        if p == 1.0:
            return INF
        return -math.log1p(-p) / self.rate

    @property
    def support(self):
        return (0.0, INF)

    def breakpoints(self):
        return (0.0,)

    def __str__(self):
        return f"exp({self.rate:g})"


@dataclass(frozen=True)
class ShiftConditioned(Distribution):
    """Residual life ``X - r`` given ``X > r``."""

    base: Distribution
    elapsed: float

    def __post_init__(self):
        if self.base.sf(self.elapsed) <= 0.0:
            raise ExhaustedSupport(f"{self.base} has no mass beyond {self.elapsed}")

    @property
    def _survive(self) -> float:
        return self.base.sf(self.elapsed)

    def sf(self, x):
        if x <= 0:
            return 1.0
        return self.base.sf(self.elapsed + x) / self._survive

    def pdf(self, x):
        if x < 0:
            return 0.0
        return self.base.pdf(self.elapsed + x) / self._survive

    def quantile(self, p):
        _check_p(p)
        q = self.base.cdf(self.elapsed) + p * self._survive
        return max(0.0, self.base.quantile(min(q, 1.0)) - self.elapsed)

    @property
    def support(self):
        lo, hi = self.base.support
        return (max(lo - self.elapsed, 0.0), hi - self.elapsed)

    def breakpoints(self):
        return tuple(sorted({0.0, *(p - self.elapsed for p in self.base.breakpoints()
                                     if p > self.elapsed)}))

    def __str__(self):
        return f"shift({self.base}, {self.elapsed:g})"


@dataclass(frozen=True)
class MinOf(Distribution):
    """Minimum of independent continuous variables."""

    parts: tuple[Distribution, ...]

    def sf(self, x):
        out = 1.0
        for d in self.parts:
            out *= d.sf(x)
        return out

    def pdf(self, x):
        sfs = [d.sf(x) for d in self.parts]
        total = 0.0
        for i, d in enumerate(self.parts):
            f = d.pdf(x)
            if f == 0.0:
                continue
            for j, s in enumerate(sfs):
                if j != i:
                    f *= s
            total += f
        return total

    def sample(self, rng):
        return min(d.sample(rng) for d in self.parts)

    def quantile(self, p):
        _check_p(p)
        lo, hi = self.support
        if p == 0.0:
            return lo
        if p == 1.0:
            return hi
        top = min(hi, max(d.tail(min(TAIL_EPS, (1 - p) / 2)) for d in self.parts))
        return brentq(lambda t: self.cdf(t) - p, lo, top, xtol=1e-14, rtol=1e-14)

    @property
    def support(self):
        return (min(d.support[0] for d in self.parts),
                min(d.support[1] for d in self.parts))

    def breakpoints(self):
        pts = set()
        for d in self.parts:
            pts.update(d.breakpoints())
        return tuple(sorted(pts))

    def tail(self, eps=TAIL_EPS):
        hi = self.support[1]
        if math.isfinite(hi):
            return hi
        # heaviest-tailed operand bounds the tail of the minimum
        return max(d.tail(eps) for d in self.parts)

    def __str__(self):
        return "min(" + ", ".join(str(d) for d in self.parts) + ")"


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite distribution over hashable outcomes (edge ids for jump kernels)."""

    outcomes: tuple[tuple[Hashable, float], ...]

    @classmethod
    def from_weights(cls, weights: dict, normalize: bool = True) -> DiscreteDistribution:
        items = [(k, float(w)) for k, w in weights.items()]
        if any(w < 0 for _, w in items):
            raise InvalidParameter("negative weight")
        total = sum(w for _, w in items)
        if normalize:
            if total <= 0:
                raise InvalidParameter("weights sum to zero")
            items = [(k, w / total) for k, w in items]
        return cls(tuple((k, w) for k, w in items if w > 0))

    def probability(self, outcome) -> float:
        for k, w in self.outcomes:
            if k == outcome:
                return w
        return 0.0

    @property
    def support(self) -> tuple:
        return tuple(k for k, _ in self.outcomes)

    def sample(self, rng: np.random.Generator):
        if len(self.outcomes) == 1:
            return self.outcomes[0][0]
        u = rng.random()
        acc = 0.0
        for k, w in self.outcomes:
            acc += w
            if u < acc:
                return k
        return self.outcomes[-1][0]


# ---------------------------------------------------------------- specs


FAMILIES = {"uniform": 2, "exp": 1}


@dataclass(frozen=True)
class DistSpec:
    """Distribution family whose parameters are affine in the state variables."""

    family: str
    params: tuple[Affine, ...]

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParameter(f"unknown distribution family {self.family!r}")
        if len(self.params) != FAMILIES[self.family]:
            raise InvalidParameter(
                f"{self.family} takes {FAMILIES[self.family]} parameter(s), got {len(self.params)}")

    @classmethod
    def uniform(cls, a: float, b: float) -> DistSpec:
        return cls("uniform", (Affine.constant(a), Affine.constant(b)))

    @classmethod
    def exp(cls, rate: float) -> DistSpec:
        return cls("exp", (Affine.constant(rate),))

    @property
    def is_constant(self) -> bool:
        return all(p.is_constant for p in self.params)

    def resolve(self, valuation: Sequence[float]) -> Distribution:
        values = [float(p(valuation)) for p in self.params]
        if self.family == "uniform":
            return Uniform(*values)
        return Exponential(*values)

    def lift(self, dim: int) -> DistSpec:
        return DistSpec(self.family, tuple(p.lift(dim) for p in self.params))


# ---------------------------------------------------------------- operations


def cdf(dist: Distribution, x: float) -> float:
    return dist.cdf(x)


def pdf(dist: Distribution, x: float) -> float:
    return dist.pdf(x)


def quantile(dist: Distribution, p: float) -> float:
    return dist.quantile(p)


def sample(dist: Distribution, rng: np.random.Generator) -> float:
    return dist.sample(rng)


def min_of(dists: Sequence[Distribution]) -> Distribution:
    dists = tuple(dists)
    if not dists:
        raise ValueError("min_of needs at least one distribution")
    if len(dists) == 1:
        return dists[0]
    return MinOf(dists)


def shift_condition(dist: Distribution, elapsed: float) -> Distribution:
    """Distribution of ``X - elapsed`` conditioned on ``X > elapsed``."""
    if elapsed < 0:
        raise ValueError(f"negative elapsed time {elapsed}")
    if dist.sf(elapsed) <= 0.0:
        raise ExhaustedSupport(f"{dist} has no mass beyond {elapsed}")
    if elapsed == 0 and dist.support[0] >= 0:
        return dist
    if isinstance(dist, Exponential):
        return dist
    if isinstance(dist, Uniform):
        return Uniform(max(dist.a - elapsed, 0.0), dist.b - elapsed)
    if isinstance(dist, MinOf):
        return MinOf(tuple(shift_condition(d, elapsed) for d in dist.parts))
    if isinstance(dist, ShiftConditioned):
        return shift_condition(dist.base, dist.elapsed + elapsed)
    return ShiftConditioned(dist, elapsed)


def prob_is_min(i: int, dists: Sequence[Distribution], tol: float = 1e-10) -> float:
    """Probability that variable ``i`` is the smallest of independent ``dists``."""
    return _prob_is_min(i, tuple(dists), tol)


@lru_cache(maxsize=4096)
def _prob_is_min(i: int, dists: tuple[Distribution, ...], tol: float) -> float:
    if len(dists) == 1:
        return 1.0
    me = dists[i]
    others = dists[:i] + dists[i + 1:]
    lo = me.support[0]
    hi = min(d.support[1] for d in dists)
    if not math.isfinite(hi):
        hi = max(d.tail() for d in dists)
    if not hi > lo:
        return 0.0

    def integrand(t):
        v = me.pdf(t)
        if v == 0.0:
            return 0.0
        for d in others:
            v *= d.sf(t)
        return v

    pts = set()
    for d in dists:
        pts.update(d.breakpoints())
    value, _ = integrate(integrand, lo, hi, sorted(pts), tol)
    return min(max(value, 0.0), 1.0)


@dataclass(frozen=True)
class UniformityReport:
    interval: tuple[float, float]
    max_pdf: float
    min_pdf: float
    argmax: float
    argmin: float

    @property
    def ratio(self) -> float:
        if self.min_pdf <= 0.0:
            return INF
        return self.max_pdf / self.min_pdf


def uniformity_deviation(dist: Distribution, interval: tuple[float, float],
                         points: int = 1001) -> UniformityReport:
    """Spread of the density over a grid on ``interval``; ratio 1 means flat."""
    lo, hi = interval
    grid = np.linspace(lo, hi, points)
    dens = np.array([dist.pdf(float(t)) for t in grid])
    imax, imin = int(np.argmax(dens)), int(np.argmin(dens))
    return UniformityReport((lo, hi), float(dens[imax]), float(dens[imin]),
                            float(grid[imax]), float(grid[imin]))


def sup_distance(a: Distribution, b: Distribution, grid) -> tuple[float, float]:
    """Largest CDF gap ``|F_a - F_b|`` over ``grid`` and where it occurs."""
    best, where = 0.0, float(grid[0])
    for t in grid:
        t = float(t)
        gap = abs(a.cdf(t) - b.cdf(t))
        if gap > best:
            best, where = gap, t
    return best, where
