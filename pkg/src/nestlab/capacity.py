"""Quasisymmetric constants and capacity lower bounds.

The operational distortion parameter is the symmetric-ratio constant ``k``
of a monotone map.  Capacities ``sup |h(X)| / |h(T)|`` are bounded from
below by searching an explicit family of test maps:

    h(u) = sum_k w_k * phi(u; c_k, e_k),  phi(u; c, e) = sign(u - c) |u - c|^e

normalized to fix the ends of ``T``.  A nonnegative combination of monotone
maps has symmetric ratios between the extremes of its summands, so every
member is ``k``-qs once each summand is; this is checked by sampling.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .numerics import NotMonotone, RealInterval


class InsufficientPairs(NotMonotone):
    """Fewer than three pairs: no symmetric triple can be formed."""


class FamilyViolatesK(ValueError):
    """A member of the test family has sampled qs constant above ``k``."""


@dataclass(frozen=True)
class MonotonePairs:
    """Strictly increasing samples ``(x, y)`` of a homeomorphism."""

    pairs: tuple

    def __post_init__(self):
        ps = tuple(self.pairs)
        object.__setattr__(self, "pairs", ps)
        if len(ps) < 3:
            raise InsufficientPairs(f"need at least 3 pairs, got {len(ps)}")
        for (x0, y0), (x1, y1) in zip(ps, ps[1:]):
            if not (x0 < x1 and y0 < y1):
                raise NotMonotone("pairs must be strictly increasing in both coordinates")

    @classmethod
    def oriented(cls, pairs) -> "MonotonePairs":
        """Sort by ``x`` and flip ``y`` when the correspondence reverses order."""
        ps = sorted(pairs, key=lambda p: p[0])
        if len(ps) >= 2 and ps[-1][1] < ps[0][1]:
            ps = [(x, -y) for x, y in ps]
        return cls(tuple(ps))

    def normalized(self):
        """Both coordinates affinely mapped onto ``[0, 1]``, as float arrays."""
        (x0, y0), (x1, y1) = self.pairs[0], self.pairs[-1]
        # subtract in the inputs' own arithmetic so tiny windows keep their digits
        xs = np.array([float((x - x0) / (x1 - x0)) for x, _ in self.pairs])
        ys = np.array([float((y - y0) / (y1 - y0)) for _, y in self.pairs])
        return xs, ys


def _grid_constant(h, depth: int) -> float:
    k = 1.0
    for level in range(1, depth + 1):
        n = 2 ** level
        u = np.arange(n + 1) / n
        v = h(u)
        fwd = v[2:] - v[1:-1]
        back = v[1:-1] - v[:-2]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = fwd / back
        r = r[np.isfinite(r) & (r > 0)]
        if len(r):
            k = max(k, float(np.max(r)), float(np.max(1 / r)))
        # symmetric triples with step 2^-m centred on every grid point
        for m in range(level + 1, depth + 1):
            step = 2.0 ** -m
            x = u[1:-1]
            x = x[(x - step >= 0) & (x + step <= 1)]
            if len(x) == 0:
                continue
            f0, fp, fm = h(x), h(x + step), h(x - step)
            with np.errstate(divide="ignore", invalid="ignore"):
                r = (fp - f0) / (f0 - fm)
            r = r[np.isfinite(r) & (r > 0)]
            if len(r):
                k = max(k, float(np.max(r)), float(np.max(1 / r)))
    return k


def qs_constant(pairs, depth: int = 8) -> float:
    """Symmetric-ratio constant of the piecewise-linear interpolant.

    ``pairs`` is a :class:`MonotonePairs` or a sequence of ``(x, y)``.
    Ratios ``(h(x+t)-h(x)) / (h(x)-h(x-t))`` and their reciprocals are
    maximized over dyadic triples of depth ``depth`` in the source interval.
    """
    if not isinstance(pairs, MonotonePairs):
        pairs = MonotonePairs(tuple(pairs))
    xs, ys = pairs.normalized()

    def h(u):
        return np.interp(u, xs, ys)

    return _grid_constant(h, depth)


# -- test family -------------------------------------------------------------------

@dataclass(frozen=True)
class PowerFamily:
    """Sums of at most ``terms`` power maps with exponents in ``[1/p, p]``.

    Singular points ``c`` range over ``[-1, 2]`` in coordinates normalized
    to ``T = [0, 1]`` (outside ``T`` the summand is smooth), refined with the
    endpoints of ``X``.
    """

    p: float = 2.0
    terms: int = 2
    n_exponents: int = 9
    n_centers: int = 25
    rounds: int = 2

    def exponents(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.p == 1:
            return np.array([1.0])
        return np.exp(np.linspace(-math.log(self.p), math.log(self.p), self.n_exponents))

    def centers(self, extra=()):
        base = np.linspace(-1.0, 2.0, self.n_centers)
        return np.unique(np.concatenate([base, np.asarray(extra, dtype=float)]))


def _phi(u, c, e):
    d = u - c
    return np.sign(d) * np.abs(d) ** e


def _normalize(g):
    def h(u):
        g0, g1 = g(np.array([0.0, 1.0]))
        return (g(np.asarray(u, dtype=float)) - g0) / (g1 - g0)
    return h


@dataclass(frozen=True)
class CapacityEstimate:
    value: float
    k: float
    family: str
    direction: str = "lower_bound"
    params: tuple = ()


def _normalize_set(X, T):
    T = T if isinstance(T, RealInterval) else RealInterval(*T)
    out = []
    for piece in X:
        piece = piece if isinstance(piece, RealInterval) else RealInterval(*piece)
        if not T.contains_interval(piece):
            raise ValueError("X must lie inside T")
        out.append((float((piece.lo - T.lo) / (T.hi - T.lo)),
                    float((piece.hi - T.lo) / (T.hi - T.lo))))
    out.sort()
    for (l0, h0), (l1, h1) in zip(out, out[1:]):
        if l1 < h0:
            raise ValueError("pieces of X must be disjoint")
    return np.array(out, dtype=float).reshape(-1, 2)


@functools.lru_cache(maxsize=None)
def power_constant(e: float, depth: int = 10) -> float:
    """Sampled qs constant of ``phi(.; c, e)`` on ``[0, 1]``, maximized over ``c``.

    Restricting to a subinterval cannot raise the constant, so centres on a
    grid of ``[-1, 2]`` stand in for all positions of the singular point.
    """
    return max(_grid_constant(_normalize(lambda u, c=c: _phi(u, c, e)), depth)
               for c in np.linspace(-1.0, 2.0, 49))


class _Searcher:
    def __init__(self, family: PowerFamily, k: float):
        self.family = family
        self.k = k

    def check(self, e):
        kk = power_constant(float(e))
        if kk > self.k * (1 + 1e-9):
            raise FamilyViolatesK(
                f"members with exponent {e:.4g} have qs constant {kk:.4g} > {self.k}")

    def value(self, terms, pts):
        # terms: ((w, c, e), ...); value of sum |h(X)| for normalized h
        g0 = g1 = 0.0
        v = np.zeros(pts.shape)
        for w, c, e in terms:
            v = v + w * _phi(pts, c, e)
            g0 += w * _phi(0.0, c, e)
            g1 += w * _phi(1.0, c, e)
        v = (v - g0) / (g1 - g0)
        return float(np.sum(v[:, 1] - v[:, 0]))

    def maximize(self, pts):
        fam = self.family
        es = fam.exponents()
        cs = fam.centers(pts.ravel())
        best = ((1.0, 0.5, 1.0),)
        best_v = self.value(best, pts)
        for e in es:
            self.check(e)
        singles = []
        for c, e in itertools.product(cs, es):
            t = ((1.0, c, e),)
            singles.append((self.value(t, pts), float(c), float(e)))
        singles.sort(key=lambda s: (-s[0], s[1], s[2]))
        if singles[0][0] > best_v:
            best_v, best = singles[0][0], ((1.0, singles[0][1], singles[0][2]),)
        if fam.terms >= 2:
            weights = (0.1, 0.25, 0.5, 0.75, 0.9)
            seeds = singles[: max(1, fam.rounds * 4)]
            for v1, c1, e1 in seeds:
                for v2, c2, e2 in seeds:
                    if (c1, e1) >= (c2, e2):
                        continue
                    for w in weights:
                        t = ((w, c1, e1), (1 - w, c2, e2))
                        val = self.value(t, pts)
                        if val > best_v + 1e-15:
                            best_v, best = val, t
        return min(1.0, max(0.0, best_v)), best


def capacity_lower_bound(X, T, k: float, family: PowerFamily | None = None) -> CapacityEstimate:
    """Lower bound for ``sup_h |h(X)| / |h(T)|`` over ``k``-qs maps ``h``.

    ``X`` is a sequence of disjoint subintervals of ``T`` (``RealInterval``
    or ``(lo, hi)``).  The identity is always a candidate, so the result is
    at least ``|X| / |T|``.
    """
    family = family or PowerFamily()
    pts = _normalize_set(X, T)
    label = f"power(p={family.p:g},terms={family.terms})"
    if len(pts) == 0:
        return CapacityEstimate(0.0, float(k), label)
    ident = float(np.sum(pts[:, 1] - pts[:, 0]))
    value, params = _Searcher(family, k).maximize(pts)
    return CapacityEstimate(max(value, ident), float(k), label, params=params)


@dataclass(frozen=True)
class TreeCheck:
    holds: bool
    lhs: float
    rhs: float
    slack: float
    flags: tuple = ()


def tree_subadditivity_check(children, X, T, k: float, family: PowerFamily | None = None,
                             atol: float = 1e-12) -> TreeCheck:
    """Covering inequality ``p(X|T) <= p(U T^j | T) * max_j p(X|T^j)``.

    Both sides are family lower bounds, so a violation is reported with the
    ``FamilyArtifact`` flag rather than as a counterexample.
    """
    family = family or PowerFamily()
    T = T if isinstance(T, RealInterval) else RealInterval(*T)
    kids = [c if isinstance(c, RealInterval) else RealInterval(*c) for c in children]
    X = [x if isinstance(x, RealInterval) else RealInterval(*x) for x in X]
    for x in X:
        if not any(c.contains_interval(x) for c in kids):
            raise ValueError("every piece of X must lie in one child")
    lhs = capacity_lower_bound(X, T, k, family).value
    union = capacity_lower_bound(kids, T, k, family).value
    local = 0.0
    for c in kids:
        inside = [x for x in X if c.contains_interval(x)]
        local = max(local, capacity_lower_bound(inside, c, k, family).value)
    rhs = union * local
    slack = rhs - lhs
    holds = slack >= -atol
    return TreeCheck(holds, lhs, rhs, slack, () if holds else ("FamilyArtifact",))
