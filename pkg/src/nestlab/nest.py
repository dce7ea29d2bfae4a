"""The principal nest ``I_0 ⊃ I_1 ⊃ ...`` of a quadratic map.

Branches of the first return map ``R_n`` to ``I_n`` are discovered by
forward subdivision of the right half ``[0, h_n]``; the left half is the
mirror image because ``f`` is even.  A piece is an interval on which the
current iterate is monotone.  Its endpoints carry symbolic images: either
the critical point (image ``f^k(0)``, read from a cached critical orbit) or
a point split off at time ``d`` with ``f^d(x) = ±h_n`` (image read from the
cached boundary orbit).  Advancing a piece therefore needs no arithmetic;
only splits pull points back through inverse branches.

A branch is identified across parameters by its address ``(r, mask)``:
return time and itinerary bits (bit ``j`` set when ``f^j`` of the branch is
negative).  Indices ``j`` are positional among the branches found: positive
to the right of 0 counting outwards, negative mirrored, 0 central.
"""
from __future__ import annotations

import bisect
import heapq
import itertools
import math
from dataclasses import dataclass, field, replace

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .maps import QuadraticMap
from .numerics import (MAX_BITS, PrecisionContext, PrecisionExhausted, RealInterval,
                       monotone_preimage)
from .renorm import (BudgetExceeded, NotInDelta, classify, deepest_delta,
                     detect_renormalizations, orientation_reversing_fixed_point)

CRIT = -1
_ORBIT_ERR_CAP = 1e-12


class NestError(Exception):
    """Base class; ``levels`` holds the levels completed before the failure."""

    levels: tuple = ()

    def with_levels(self, levels):
        self.levels = tuple(levels)
        return self


class CriticalEscape(NestError):
    def __init__(self, n, interval=None):
        super().__init__(f"critical orbit does not return to I_{n} within budget")
        self.n = n
        self.interval = interval


class SinkDetected(NestError):
    def __init__(self, n, classification=None):
        super().__init__(f"critical orbit attracted to a sink (level {n})")
        self.n = n
        self.classification = classification


class NestPrecisionExhausted(NestError, PrecisionExhausted):
    def __init__(self, message, bits=None):
        PrecisionExhausted.__init__(self, message, bits)


class WordNotFound(NestError):
    pass


class NoAvoidingOrbits(Exception):
    pass


@dataclass(frozen=True)
class Branch:
    j: int
    domain: RealInterval
    r: int
    orientation: int
    mask: int = 0
    min_deriv_point: object = None

    @property
    def address(self):
        """``(r, mask)`` with the mask of the right-half copy."""
        return (self.r, self.mask & ~1)

    @property
    def side(self) -> int:
        return -1 if self.mask & 1 else 1

    def signs(self):
        return [-1 if (self.mask >> t) & 1 else 1 for t in range(self.r)]


@dataclass(frozen=True)
class LandingComponent:
    word: tuple
    C: RealInterval
    total_time: int


@dataclass(frozen=True)
class GapeInterval:
    n: int
    interval: RealInterval


@dataclass(frozen=True, eq=False)
class NestLevel:
    n: int
    I: RealInterval
    branches: tuple
    central_return: bool | None
    c: object
    s: int | None
    v: int
    tau: int | None
    coverage: float
    kappa: int = 0
    landing_word: tuple | None = None
    critical_value: object = None
    flags: tuple = ()
    fmap: QuadraticMap = field(default=None, repr=False)

    @property
    def h(self):
        return self.I.hi

    @property
    def central(self) -> Branch:
        return self.branch(0)

    def branch(self, j) -> Branch:
        for b in self.branches:
            if b.j == j:
                return b
        raise KeyError(j)

    def noncentral(self):
        return [b for b in self.branches if b.j != 0]

    def by_address(self, address, side=1):
        for b in self.branches:
            if b.j != 0 and b.address == address and b.side == side:
                return b
        return None

    def locate(self, x):
        """Branch whose domain contains ``x`` (None when in a gap)."""
        for b in self.branches:
            if b.domain.lo <= x <= b.domain.hi:
                return b
        return None

    def gaps(self):
        """Uncovered subintervals of the right half ``[0, h]``."""
        right = sorted((b.domain for b in self.branches if b.domain.hi > 0),
                       key=lambda d: d.lo)
        out, cur = [], mpfr(0)
        for d in right:
            lo = max(d.lo, mpfr(0))
            if lo > cur:
                out.append(RealInterval(cur, lo))
            cur = max(cur, d.hi)
        if cur < self.h:
            out.append(RealInterval(cur, self.h))
        return out

    @property
    def restrictive(self) -> bool:
        return "Restrictive" in self.flags


# -- cached orbits ----------------------------------------------------------

class _CriticalOrbit:
    """Critical orbit with a first-order error bound; refines its own precision."""

    def __init__(self, fmap: QuadraticMap, max_bits: int):
        self.fmap = fmap
        self.bits = fmap.ctx.bits
        self.max_bits = max_bits
        self._build(0)

    def _build(self, upto):
        ctx = PrecisionContext(self.bits, self.fmap.ctx.tol)
        with ctx.local() as gctx:
            a = mpfr(self.fmap.param, self.bits)
            am1 = a - 1
            self._a, self._am1 = a, am1
            self.xs = [mpfr(0)]
            self.errs = [0.0]
            self._gctx = gctx
        self._ulp = 4.0 * 2.0 ** (-self.bits)
        self._extend(upto)

    def _extend(self, k):
        xs, errs = self.xs, self.errs
        if k < len(xs):
            return
        with gmpy2.context(precision=self.bits) as g:
            a, am1 = self._a, self._am1
            twoa = float(2 * a)
            x, e = xs[-1], errs[-1]
            for _ in range(len(xs), k + 1):
                g.clear_flags()
                e = twoa * abs(float(x)) * e
                x = am1 - a * x * x
                if g.inexact:
                    e += self._ulp
                xs.append(x)
                errs.append(e)

    def _refine(self, k):
        if self.bits >= self.max_bits:
            raise NestPrecisionExhausted(
                f"critical orbit unresolved at iterate {k} with {self.bits} bits", self.bits)
        n = len(self.xs) - 1
        self.bits = min(2 * self.bits, self.max_bits)
        self._build(n)

    def value(self, k):
        self._extend(k)
        while self.errs[k] > _ORBIT_ERR_CAP:
            self._refine(k)
        return self.xs[k]

    def inside(self, k, h) -> bool:
        """``|f^k(0)| < h``, decided rigorously up to the linearized bound."""
        while True:
            x = self.value(k)
            e = self.errs[k]
            d = abs(x) - h
            if d < 0 and -d > e:
                return True
            if d > 0 and d > e or (d == 0 and e == 0):
                return False
            self._refine(k)

    def sign(self, k) -> int:
        x = self.value(k)
        while abs(x) <= self.errs[k]:
            if x == 0 and self.errs[k] == 0:
                return 0
            self._refine(k)
            x = self.xs[k]
        return 1 if x > 0 else -1

    def next_visit(self, start, h, kmax):
        """Smallest ``k > start`` with ``|f^k(0)| < h``, or None."""
        for k in range(start + 1, kmax + 1):
            if self.inside(k, h):
                return k
        return None


class _BoundaryOrbit:
    """``B[j] = f^j(±h)`` for ``j >= 1`` (``B[0] = h``), snapped onto the parent."""

    def __init__(self, h, forward=(), d=None, sgn=1, parent=None, cycle=None):
        self.h = h
        self.forward = list(forward)  # f^j(h), 1 <= j < d
        self.d = d
        self.sgn = sgn
        self.parent = parent
        self.cycle = cycle

    def __getitem__(self, j):
        if j == 0:
            return self.h
        if self.cycle is not None:
            return self.cycle[j % len(self.cycle)]
        if j < self.d:
            return self.forward[j - 1]
        if j == self.d:
            return self.parent.h if self.sgn > 0 else -self.parent.h
        return self.parent[j - self.d]


# -- branch discovery -------------------------------------------------------

class _LevelBuilder:
    def __init__(self, fmap, h, bnd, crit, v, ctx, kmax, min_rel):
        self.fmap, self.h, self.B, self.crit = fmap, h, bnd, crit
        self.v, self.ctx, self.kmax = v, ctx, kmax
        self.branches = {}  # address -> (lo, hi)
        self.central = None  # (hi, code_hi, mask)
        self.covered = mpfr(0)
        self.heap = []
        self.counter = itertools.count()
        # f^r of a branch endpoint is reproducible to ~|Df^r| ulp, so branches much
        # shorter than 2h ulp / tol cannot be certified at this precision
        self.cert_len = 64 * h * mpfr(2) ** (-ctx.bits) / mpfr(ctx.tol)
        self.min_len = max(h * mpfr(2) ** (-min_rel), self.cert_len)
        a = fmap.param
        self.a, self.am1, self.inva = a, a - 1, 1 / a
        bits = max(ctx.bits, 64)
        self.t_floor = mpfr(2) ** (40 - bits)

    def img(self, code, t):
        if code == CRIT:
            return self.crit.value(t)
        d = code >> 1
        j = t - d
        if j == 0:
            return -self.h if code & 1 else self.h
        return self.B[j]

    def pull(self, y, mask, t):
        am1, inva, floor = self.am1, self.inva, self.t_floor
        x = y
        for j in range(t - 1, -1, -1):
            tt = (am1 - x) * inva
            if tt <= 0:
                x = mpfr(0)
                continue
            if tt < floor:
                raise NestPrecisionExhausted("pullback too close to the critical point",
                                             self.ctx.bits)
            x = gmpy2.sqrt(tt)
            if (mask >> j) & 1:
                x = -x
        return x

    def advance(self, piece):
        """Move a piece to its next intersection with ``int I_n`` (or None)."""
        lo, hi, t, mask, clo, chi = piece
        h, kmax, crit, img = self.h, self.kmax, self.crit, self.img
        while True:
            if t > 0 and img(clo, t) + img(chi, t) < 0:
                mask |= 1 << t
            t += 1
            if t > kmax:
                return None
            if clo == CRIT:
                if crit.inside(t, h):
                    return (lo, hi, t, mask, clo, chi)
                u = crit.value(t)
            else:
                u = img(clo, t)
            w = img(chi, t)
            if u < w:
                if u < h and w > -h:
                    return (lo, hi, t, mask, clo, chi)
            elif w < h and u > -h:
                return (lo, hi, t, mask, clo, chi)

    def split(self, piece):
        """Split an intersecting piece; returns (branches, continuing pieces)."""
        lo, hi, t, mask, clo, chi = piece
        h = self.h
        u, w = self.img(clo, t), self.img(chi, t)
        increasing = u < w
        ilo, ihi = (u, w) if increasing else (w, u)
        cuts = [(y, neg) for y, neg in ((-h, 1), (h, 0)) if ilo < y < ihi]
        if not increasing:
            cuts.reverse()
        pts = [(lo, clo, u)]
        for y, neg in cuts:
            pts.append((self.pull(y, mask, t), 2 * t + neg, y))
        pts.append((hi, chi, w))
        found, rest = [], []
        for (x0, c0, y0), (x1, c1, y1) in zip(pts, pts[1:]):
            if x1 <= x0:
                continue
            if c0 == CRIT:
                ins = self.crit.inside(t, h)
            else:
                ins = -h <= min(y0, y1) and max(y0, y1) <= h
            (found if ins else rest).append((x0, x1, t, mask, c0, c1))
        return found, rest

    def add_branch(self, lo, hi, r, mask, required=False):
        key = (r, mask)
        if hi - lo < self.cert_len:
            if required:
                raise NestPrecisionExhausted(
                    f"branch of length {float(hi - lo):.3g} below certification floor",
                    self.ctx.bits)
            return
        if key not in self.branches:
            self.branches[key] = (lo, hi)
            self.covered += hi - lo

    def run_central(self):
        piece = (mpfr(0), self.h, 0, 0, CRIT, 0)
        while True:
            piece = self.advance(piece)
            if piece is None:
                raise CriticalEscape(-1)
            found, rest = self.split(piece)
            nxt = None
            for p in found:
                if p[4] == CRIT:
                    self.central = p
                else:
                    self.add_branch(p[0], p[1], p[2], p[3])
            for p in rest:
                if p[4] == CRIT:
                    nxt = p
                else:
                    self.push(p)
            if self.central is not None:
                self.covered += self.central[1]
                return self.central
            if nxt is None:
                raise NestPrecisionExhausted("central piece lost to rounding", self.ctx.bits)
            piece = nxt

    def push(self, p):
        length = p[1] - p[0]
        if length > 0:
            heapq.heappush(self.heap, (-length, next(self.counter), p))

    def run(self, coverage_target, max_branches, max_pieces):
        target = mpfr(coverage_target) * self.h
        processed = 0
        while self.heap and self.covered < target and len(self.branches) < max_branches:
            neg_len, _, piece = heapq.heappop(self.heap)
            if -neg_len < self.min_len or processed >= max_pieces:
                heapq.heappush(self.heap, (neg_len, _, piece))
                break
            processed += 1
            piece = self.advance(piece)
            if piece is None:
                continue
            found, rest = self.split(piece)
            for p in found:
                self.add_branch(p[0], p[1], p[2], p[3])
            for p in rest:
                self.push(p)
        return processed


def _orientation(r, mask):
    return -1 if (r + bin(mask).count("1")) % 2 else 1


def _mirror(b: Branch, j) -> Branch:
    return Branch(j, b.domain.mirror(), b.r, -b.orientation, b.mask | 1)


def _crit_address(crit, t0, t1):
    mask = 0
    for j in range(t1 - t0):
        if crit.sign(t0 + j) < 0:
            mask |= 1 << j
    return t1 - t0, mask


# -- public API -------------------------------------------------------------

def _level0(fmap, kappa, tol):
    if kappa == "auto" or kappa is None:
        fp = deepest_delta(fmap, tol=tol)
    elif kappa == 0:
        fp = orientation_reversing_fixed_point(fmap, 0, tol=tol)
    else:
        chain = detect_renormalizations(fmap, m_max=32, tol=tol)
        fp = orientation_reversing_fixed_point(fmap, kappa, chain, tol=tol)
    ctx = fmap.ctx
    with ctx.local():
        a, am1 = fmap.param, fmap.critical_value
        # cycle[j % m] = f^j(x*), snapped so that f^m(x*) = x* exactly
        x = fp.point
        cycle = [x]
        for _ in range(fp.period - 1):
            x = am1 - a * x * x
            cycle.append(x)
    return fp, _BoundaryOrbit(fp.p, cycle=cycle)


def build_nest(fmap: QuadraticMap, kappa="auto", depth: int = 2, coverage_target=0.99,
               tol=None, max_branches: int = 20000, kmax: int = 10000,
               max_pieces: int = 400000, cascade_budget: int = 16,
               max_bits: int = MAX_BITS):
    """Levels ``0 .. depth-1`` of the principal nest at depth ``kappa``.

    ``coverage_target`` may be a number or a per-level sequence.  With
    ``max_branches=0`` only the central branch and the branches visited by
    the critical orbit are resolved (cheap combinatorics mode).

    When a level cannot be resolved at the working precision the whole nest
    is rebuilt with doubled bits (the parameter value is kept fixed), up to
    ``max_bits``; the returned levels carry the map at the final precision.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if depth == 0:
        return []
    try:
        targets = list(coverage_target)
    except TypeError:
        targets = [coverage_target]
    if any(not (0 <= q < 1) for q in targets):
        raise ValueError("coverage_target must be < 1")
    tol = fmap.ctx.tol if tol is None else tol
    crit = _CriticalOrbit(fmap, max_bits)
    work = fmap
    while True:
        try:
            return _build(work, kappa, depth, targets, tol, max_branches, kmax, max_pieces,
                          cascade_budget, crit)
        except NestPrecisionExhausted as exc:
            if work.ctx.bits >= max_bits:
                raise
            ctx = replace(work.ctx, bits=min(2 * work.ctx.bits, max_bits))
            # the parameter value parsed at the starting precision is kept exactly
            work = QuadraticMap(fmap.param, ctx)


def _build(fmap, kappa, depth, targets, tol, max_branches, kmax, max_pieces,
           cascade_budget, crit):
    fp, bnd = _level0(fmap, kappa, tol)
    ctx = fmap.ctx
    levels = []
    h = fp.p
    with ctx.local():
        v = crit.next_visit(0, h, kmax)
        if v is None:
            raise _no_return(fmap, 0, RealInterval(-h, h)).with_levels(levels)
        cascade = 0
        for n in range(depth):
            q = targets[min(n, len(targets) - 1)]
            lb = _LevelBuilder(fmap, h, bnd, crit, v, ctx, kmax, min_rel=ctx.bits // 2)
            try:
                central = lb.run_central()
            except CriticalEscape:
                raise _no_return(fmap, n, RealInterval(-h, h)).with_levels(levels)
            except NestError as exc:
                raise exc.with_levels(levels)
            if central[2] != v:
                raise RuntimeError(f"central return time {central[2]} != first visit {v}")
            h1, chi = central[1], central[5]
            restrictive = chi == 0
            flags = []
            if restrictive:
                flags.append("Restrictive")
            else:
                try:
                    lb.run(q, max_branches, max_pieces)
                except NestError as exc:
                    raise exc.with_levels(levels)
            # critical visits to I_n until landing in I_{n+1}
            visits = [v]
            addresses = []
            s = None
            escape = None
            if restrictive:
                s = 1
            while s is None:
                t = visits[-1]
                if crit.inside(t, h1):
                    s = len(visits)
                    break
                nxt = crit.next_visit(t, h, kmax)
                if nxt is None:
                    escape = n + 1
                    break
                r, mask = _crit_address(crit, t, nxt)
                addresses.append((r, mask))
                right = mask & ~1
                if (r, right) not in lb.branches:
                    lo = lb.pull(h, right, r)
                    hi = lb.pull(-h, right, r)
                    try:
                        lb.add_branch(min(lo, hi), max(lo, hi), r, right, required=True)
                    except NestError as exc:
                        raise exc.with_levels(levels)
                visits.append(nxt)
            level = _assemble(n, fmap, fp.k, h, lb, central, addresses, s, crit, v,
                              restrictive, flags)
            if not restrictive and level.coverage < q:
                # branch discovery stopped on its budget, not on the target
                level = replace(level, flags=level.flags + ("BranchBudget",))
            levels.append(level)
            if restrictive:
                break
            if escape is not None:
                raise _no_return(fmap, escape, RealInterval(-h1, h1)).with_levels(levels)
            cascade = cascade + 1 if level.central_return else 0
            if cascade > cascade_budget:
                levels[-1] = replace(level, flags=level.flags + ("CascadeBudget",))
                break
            if n + 1 == depth:
                break
            # next level boundary orbit snapped at the split time of h_{n+1}
            d = chi >> 1
            yd = lb.img(chi, d)
            fwd, x = [], h1
            a, am1 = fmap.param, fmap.critical_value
            for _ in range(1, d):
                x = am1 - a * x * x
                fwd.append(x)
            bnd = _BoundaryOrbit(h1, fwd, d, 1 if yd > 0 else -1, bnd)
            h = h1
            v = visits[-1]
    return levels


def _no_return(fmap, n, interval):
    cls = classify(fmap)
    if cls.tag in ("RegularSink", "SuperstableCycle"):
        return SinkDetected(n, cls)
    return CriticalEscape(n, interval)


def _assemble(n, fmap, kappa, h, lb, central, addresses, s, crit, v, restrictive, flags):
    h1 = central[1]
    right = sorted(((lo, hi, r, mask) for (r, mask), (lo, hi) in lb.branches.items()),
                   key=lambda b: b[0])
    index = {}
    out = [Branch(0, RealInterval(-h1, h1), central[2], 0, central[3])]
    for j, (lo, hi, r, mask) in enumerate(right, start=1):
        b = Branch(j, RealInterval(lo, hi), r, _orientation(r, mask), mask)
        index[(r, mask)] = j
        out.append(b)
        out.append(_mirror(b, -j))
    out.sort(key=lambda b: b.domain.lo)
    word = []
    for r, mask in addresses:
        j = index[(r, mask & ~1)]
        word.append(-j if mask & 1 else j)
    cv = crit.value(v)
    central_return = True if restrictive else bool(crit.inside(v, h1))
    if restrictive:
        tau = 0
    elif central_return:
        tau = 0
    elif word:
        tau = word[0]
    else:
        tau = None
    landing = tuple(word[: (s - 1)]) if s is not None else None
    coverage = float(lb.covered / h)
    return NestLevel(n=n, I=RealInterval(-h, h), branches=tuple(out),
                     central_return=central_return, c=h1 / h, s=s, v=v, tau=tau,
                     coverage=min(1.0, coverage), kappa=kappa, landing_word=landing,
                     critical_value=cv, flags=tuple(flags), fmap=fmap)


# -- derived objects --------------------------------------------------------

def _concat_signs(branches):
    signs = []
    for b in branches:
        signs.extend(b.signs())
    return signs


def _pull_signs(fmap, y, signs):
    with fmap.ctx.local():
        a = fmap.param
        am1, inva = a - 1, 1 / a
        x = y
        for s in reversed(signs):
            t = (am1 - x) * inva
            x = gmpy2.sqrt(t) if t > 0 else mpfr(0)
            if s < 0:
                x = -x
        return x


def word_domain(level: NestLevel, word) -> RealInterval:
    """``I^d_n``: points following the branches of ``word`` under ``R_n``."""
    bs = [level.branch(j) for j in word]
    if not bs:
        return level.I
    signs = _concat_signs(bs)
    x1 = _pull_signs(level.fmap, level.h, signs)
    x2 = _pull_signs(level.fmap, -level.h, signs)
    return RealInterval.hull(x1, x2)


def landing_components(level: NestLevel, max_word_len: int = 2, coverage_target: float = 0.99,
                       budget: int = 200000):
    """Components ``C^d_n`` of the first landing map into ``I_{n+1}``.

    Words are enumerated by length, largest ``I^d`` first within a length,
    so raising ``max_word_len`` only ever adds components.
    """
    if level.restrictive:
        return [LandingComponent((), level.central.domain, 0)]
    fmap = level.fmap
    h1 = level.central.domain.hi
    target = mpfr(coverage_target) * 2 * level.h
    comps = [LandingComponent((), level.central.domain, 0)]
    covered = 2 * h1
    nonc = level.noncentral()
    frontier = [((), [], 0)]
    with fmap.ctx.local():
        for length in range(1, max_word_len + 1):
            if covered >= target:
                break
            cand = []
            for word, signs, time in frontier:
                for b in nonc:
                    s2 = signs + b.signs()
                    d = RealInterval.hull(_pull_signs(fmap, level.h, s2),
                                          _pull_signs(fmap, -level.h, s2))
                    if d.length <= 0:
                        continue
                    cand.append((d.length, word + (b.j,), s2, time + b.r))
            cand.sort(key=lambda c: (-c[0], c[1]))
            frontier = []
            for _, word, s2, time in cand:
                c = RealInterval.hull(_pull_signs(fmap, h1, s2), _pull_signs(fmap, -h1, s2))
                comps.append(LandingComponent(word, c, time))
                covered += c.length
                frontier.append((word, s2, time))
                if len(comps) > budget:
                    raise BudgetExceeded(f"more than {budget} landing components")
                if covered >= target:
                    break
    return comps


def landing_coverage(level: NestLevel, comps) -> float:
    return float(sum(c.C.length for c in comps) / level.I.length)


def gape_interval(levels, i: int) -> GapeInterval:
    """``Ĩ_{i+1}``: pullback of ``I^d_{i-1}`` through the central branch of ``R_{i-1}``."""
    if i <= 1:
        raise ValueError("the gape interval is defined for i > 1")
    if len(levels) <= i:
        raise IndexError(f"need levels up to {i}")
    prev, cur = levels[i - 1], levels[i]
    if prev.landing_word is None:
        raise WordNotFound(f"landing word of level {i - 1} not resolved")
    fmap = prev.fmap
    Id = word_domain(prev, prev.landing_word)
    central = prev.central
    with fmap.ctx.local():
        # f^{v}(h_i) = sigma * h_{i-1}
        img = fmap.iterate(cur.h, central.r)
        far = Id.hi if img > 0 else Id.lo
        g = _pull_signs(fmap, far, central.signs())
    return GapeInterval(i, RealInterval(-abs(g), abs(g)))


@dataclass(frozen=True)
class Hyperbolicity:
    values: tuple  # (j, lambda_j, x_min)
    infimum: float | None
    flags: tuple = ()


def _log_deriv(fmap, x, r):
    log_d, sign = fmap.log_deriv_product(x, r)
    return log_d


def branch_hyperbolicity(level: NestLevel, max_branches: int | None = None,
                         iterations: int = 40) -> Hyperbolicity:
    """``λ_n(j) = min over the branch of ln|Df^r| / r``."""
    nonc = [b for b in level.noncentral() if b.j > 0]
    nonc.sort(key=lambda b: b.j)
    if max_branches is not None:
        nonc = nonc[:max_branches]
    if not nonc:
        return Hyperbolicity((), None, ("Undefined",))
    fmap = level.fmap
    invphi = (math.sqrt(5) - 1) / 2
    vals = []
    with fmap.ctx.local():
        for b in nonc:
            lo, hi, r = b.domain.lo, b.domain.hi, b.r
            best = min(((_log_deriv(fmap, lo, r), lo), (_log_deriv(fmap, hi, r), hi)),
                       key=lambda t: t[0])
            u, w = lo, hi
            c = w - invphi * (w - u)
            d = u + invphi * (w - u)
            fc, fd = _log_deriv(fmap, c, r), _log_deriv(fmap, d, r)
            for _ in range(iterations):
                if fc < fd:
                    w, d, fd = d, c, fc
                    c = w - invphi * (w - u)
                    fc = _log_deriv(fmap, c, r)
                else:
                    u, c, fc = c, d, fd
                    d = u + invphi * (w - u)
                    fd = _log_deriv(fmap, d, r)
            inner = min((fc, c), (fd, d), key=lambda t: t[0])
            if inner[0] < best[0]:
                best = inner
            lam = float(best[0]) / r
            vals.append((b.j, lam, best[1]))
            vals.append((-b.j, lam, -best[1]))
    vals.sort(key=lambda t: t[0])
    return Hyperbolicity(tuple(vals), min(v[1] for v in vals))


@dataclass(frozen=True)
class ExpansionFit:
    lam: float
    C: float
    n_used: int
    survivors: tuple  # (n, number of samples still outside)


def expansion_outside(fmap: QuadraticMap, interval, n_max: int = 40, samples: int = 4000,
                      seed: int = 0) -> ExpansionFit:
    """Empirical ``C λ^n`` lower bound for ``|Df^n|`` along orbits avoiding ``interval``."""
    lo, hi = float(interval[0]), float(interval[1])
    if samples <= 0:
        raise NoAvoidingOrbits("no samples")
    a = float(fmap.param)
    rng = np.random.default_rng(np.random.Philox(seed))
    xs = rng.uniform(-1.0, 1.0, size=samples)
    xs = xs[(xs < lo) | (xs > hi)]
    logd = np.zeros_like(xs)
    mins, surv = [], []
    for n in range(1, n_max + 1):
        logd = logd + np.log(2 * a * np.abs(xs))
        xs = a - 1 - a * xs * xs
        # keep orbits whose first n iterates avoid the interval
        alive = (xs < lo) | (xs > hi)
        if n == 1 and not len(xs):
            break
        mins.append((n, float(np.min(logd)) if len(logd) else math.nan))
        surv.append((n, int(len(xs))))
        xs, logd = xs[alive], logd[alive]
        if not len(xs):
            break
    pts = [(n, m) for n, m in mins if math.isfinite(m)]
    if len(pts) < 2:
        raise NoAvoidingOrbits("all sampled orbits enter the interval immediately")
    half = [(n, m) for n, m in pts if n >= max(1, pts[-1][0] // 2)]
    if len(half) < 2:
        half = pts
    ns = np.array([p[0] for p in half], dtype=float)
    ms = np.array([p[1] for p in half])
    slope = float(np.polyfit(ns, ms, 1)[0])
    logC = min(m - n * slope for n, m in pts)
    return ExpansionFit(math.exp(slope), math.exp(logC), len(pts), tuple(surv))


# -- audits -----------------------------------------------------------------

@dataclass(frozen=True)
class NestStatistics:
    ratios: tuple  # (n, ln s_n / ln c_n^{-1})
    inverse_scales: tuple  # (n, c_n^{-1})
    growth_monotone: bool
    additivity_checked: int
    additivity_failures: tuple
    additivity_unresolved: int
    v_order: tuple  # (n, lower, v_n, upper, ok)


def _visits(fmap, x, h, steps):
    """Times ``0 <= t <= steps`` with ``|f^t(x)| < h``."""
    out = []
    with fmap.ctx.local():
        a, am1 = fmap.param, fmap.critical_value
        for t in range(steps + 1):
            if abs(x) < h:
                out.append((t, x))
            x = am1 - a * x * x
    return out


def nest_statistics_check(levels) -> NestStatistics:
    """Scaling ratios, torrential-growth diagnostic and return-time audits."""
    ratios, inv = [], []
    for lv in levels:
        if lv.c is None or lv.c >= 1:
            continue
        inv.append((lv.n, float(1 / lv.c)))
        if lv.s:
            ratios.append((lv.n, math.log(lv.s) / float(gmpy2.log(1 / lv.c))))
    monotone = all(b[1] > a[1] for a, b in zip(inv, inv[1:]))
    checked, failures, unresolved = 0, [], 0
    for n in range(len(levels) - 1):
        lo, up = levels[n], levels[n + 1]
        if lo.restrictive:
            continue
        for b in up.noncentral():
            if b.j < 0:
                continue
            mid = b.domain.mid
            visits = _visits(lo.fmap, mid, lo.h, b.r)
            times = [t for t, _ in visits]
            if not times or times[0] != 0 or times[-1] != b.r:
                failures.append((n + 1, b.j, "visit times inconsistent"))
                continue
            total, ok = 0, True
            for (t0, x0), (t1, _) in zip(visits, visits[1:]):
                br = lo.locate(x0)
                if br is None:
                    ok = False
                    break
                total += br.r
                if br.r != t1 - t0:
                    failures.append((n + 1, b.j, f"gap {t1 - t0} != r {br.r}"))
            if not ok:
                unresolved += 1
                continue
            checked += 1
            if total != b.r:
                failures.append((n + 1, b.j, f"sum {total} != {b.r}"))
    vord = []
    for n in range(1, len(levels)):
        prev = levels[n - 1]
        if prev.s is None:
            continue
        rmax = max([b.r for b in prev.branches])
        ok = prev.s <= levels[n].v <= prev.s * rmax
        vord.append((n, prev.s, levels[n].v, prev.s * rmax, ok))
    return NestStatistics(tuple(ratios), tuple(inv), monotone, checked, tuple(failures),
                          unresolved, tuple(vord))


# -- reports ----------------------------------------------------------------

def _dec(x, ctx):
    from .numerics import format_real
    return format_real(x, ctx)


def nest_report(levels, fmap: QuadraticMap | None = None) -> dict:
    """JSON-ready report: decimal strings carry the precision they were computed at."""
    if fmap is None and levels:
        fmap = levels[0].fmap
    ctx = fmap.ctx if fmap is not None else None
    out = {"schema": "nestlab-nest-v1", "a": fmap.label if fmap else None,
           "bits": ctx.bits if ctx else None, "tol": ctx.tol if ctx else None, "levels": []}
    for lv in levels:
        out["levels"].append({
            "n": lv.n,
            "kappa": lv.kappa,
            "I": [_dec(lv.I.lo, ctx), _dec(lv.I.hi, ctx)],
            "branches": [{"j": b.j, "lo": _dec(b.domain.lo, ctx), "hi": _dec(b.domain.hi, ctx),
                          "r": b.r} for b in lv.branches],
            "c": _dec(lv.c, ctx) if lv.c is not None else None,
            "s": lv.s,
            "v": lv.v,
            "tau": lv.tau,
            "central": lv.central_return,
            "coverage": lv.coverage,
            "landing_word": list(lv.landing_word) if lv.landing_word is not None else None,
            "flags": list(lv.flags),
        })
    return out
