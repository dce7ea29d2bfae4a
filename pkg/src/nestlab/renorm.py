"""Periodic orbits, restrictive intervals and classification of ``f_a``."""
from __future__ import annotations

from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpfr

from .maps import QuadraticMap
from .numerics import RealInterval, bisect_root, pullback_point


class BudgetExceeded(Exception):
    pass


class NotInDelta(Exception):
    """The map has no orientation reversing fixed point at the requested depth."""

    def __init__(self, k, message=None):
        super().__init__(message or f"map is not in Delta_{k}")
        self.k = k


@dataclass(frozen=True)
class PeriodicOrbit:
    period: int
    points: tuple
    multiplier: object


@dataclass(frozen=True)
class RenormalizationRecord:
    period: int
    T: RealInterval
    hatT: RealInterval


@dataclass(frozen=True)
class FixedPointReport:
    k: int
    p: object
    multiplier: object
    period: int
    point: object = None  # the cycle point itself (p or -p)

    @property
    def interval(self) -> RealInterval:
        return RealInterval(-self.p, self.p)


@dataclass(frozen=True)
class Classification:
    tag: str
    period: int | None = None
    multiplier: float | None = None
    kappa: int | None = None
    cycle: tuple = ()
    evidence: dict = field(default_factory=dict)

    def describe(self) -> str:
        if self.tag == "RegularSink":
            return f"RegularSink(period={self.period}, multiplier={self.multiplier:.12g})"
        if self.tag == "SuperstableCycle":
            return f"SuperstableCycle(period={self.period})"
        if self.tag == "RecurrentCandidate":
            return f"RecurrentCandidate(kappa={self.kappa})"
        return self.tag


def _tol(fmap, tol):
    return fmap.ctx.tol if tol is None else tol


def _iter(a, am1, x, n):
    for _ in range(n):
        x = am1 - a * x * x
    return x


def _critical_preimages(fmap: QuadraticMap, depth: int, budget: int):
    """All ``x`` with ``f^j(x) = 0`` for some ``0 <= j < depth``."""
    a, am1 = fmap.param, fmap.critical_value
    level = [mpfr(0)]
    found = [mpfr(0)]
    for _ in range(depth - 1):
        nxt = []
        for z in level:
            t = (am1 - z) / a
            if t < 0:
                continue
            r = gmpy2.sqrt(t)
            nxt.extend((r, -r) if r > 0 else (r,))
        level = nxt
        found.extend(nxt)
        if len(found) > budget:
            raise BudgetExceeded(f"more than {budget} laps")
    return sorted(set(found))


def _roots_on_lap(g, lo, hi, increasing, ctx, tol, samples=64):
    """Zeros of ``g(x) = f^m(x) - x`` on a monotone lap of ``f^m``."""
    if increasing:
        xs = [lo + (hi - lo) * i / samples for i in range(samples + 1)]
    else:
        xs = [lo, hi]  # g strictly decreasing: at most one zero
    gs = [g(x) for x in xs]
    roots = [x for x, gx in zip(xs, gs) if gx == 0]
    # an exact zero at a sample point hides a second root in the adjacent cell
    # unless the sign is read just inside the cell
    nudge = (hi - lo) * mpfr(2) ** (-ctx.bits // 2)
    for i in range(len(xs) - 1):
        x0, x1, g0, g1 = xs[i], xs[i + 1], gs[i], gs[i + 1]
        if g0 == 0:
            x0 = x0 + nudge
            g0 = g(x0)
        if g1 == 0:
            x1 = x1 - nudge
            g1 = g(x1)
        if x0 < x1 and g0 != 0 and g1 != 0 and (g0 > 0) != (g1 > 0):
            roots.append(bisect_root(g, RealInterval(x0, x1), tol, ctx))
    return roots


def _group_cycles(fmap, roots, m, slack):
    a, am1 = fmap.param, fmap.critical_value
    cycles, seen = [], []
    for x in sorted(roots):
        if any(abs(x - s) <= slack for s in seen):
            continue
        pts = [x]
        y = am1 - a * x * x
        while len(pts) < m and abs(y - x) > slack:
            pts.append(y)
            y = am1 - a * y * y
        period = len(pts)
        seen.extend(pts)
        mult = fmap.signed_deriv(x, period)
        cycles.append(PeriodicOrbit(period, tuple(sorted(pts)), mult))
    return cycles


def periodic_points(fmap: QuadraticMap, m: int, tol=None, lap_budget: int = 2 ** 16):
    """All cycles whose period divides ``m``, found lap by lap."""
    if m < 1:
        raise ValueError("m must be >= 1")
    ctx = fmap.ctx
    tol = _tol(fmap, tol)
    with ctx.local():
        a, am1 = fmap.param, fmap.critical_value
        cuts = [mpfr(-1)] + [z for z in _critical_preimages(fmap, m, lap_budget) if -1 < z < 1]
        cuts.append(mpfr(1))

        def g(x):
            return _iter(a, am1, x, m) - x

        roots = []
        for lo, hi in zip(cuts, cuts[1:]):
            if hi <= lo:
                continue
            inc = _iter(a, am1, hi, m) > _iter(a, am1, lo, m)
            roots.extend(_roots_on_lap(g, lo, hi, inc, ctx, tol))
        return _group_cycles(fmap, roots, m, 1000 * mpfr(tol))


def _central_lap(fmap: QuadraticMap, m: int):
    """Largest ``z`` such that ``f^m`` is monotone on ``[0, z]``."""
    a, am1 = fmap.param, fmap.critical_value
    z = mpfr(1)
    y0 = mpfr(0)
    signs = [1]
    for _ in range(1, m):
        y0 = am1 - a * y0 * y0
        yz = _iter(a, am1, z, len(signs))
        if min(y0, yz) < 0 < max(y0, yz):
            z = pullback_point(0, a, signs, fmap.ctx)
            yz = mpfr(0)
        ref = y0 if y0 != 0 else yz
        if ref == 0:
            return mpfr(0)
        signs.append(1 if ref > 0 else -1)
    return z


def _fixed_points_on(fmap, lo, hi, m, tol):
    ctx = fmap.ctx
    a, am1 = fmap.param, fmap.critical_value

    def g(x):
        return _iter(a, am1, x, m) - x

    inc = _iter(a, am1, hi, m) > _iter(a, am1, lo, m)
    return _roots_on_lap(g, lo, hi, inc, ctx, tol)


def _image_avoids(fmap, q, m, slack):
    """``f^j([0, q])`` misses ``int [-q, q]`` and 0 for ``1 <= j < m``."""
    a, am1 = fmap.param, fmap.critical_value
    u, v = mpfr(0), q
    for _ in range(1, m):
        u, v = am1 - a * u * u, am1 - a * v * v
        lo, hi = min(u, v), max(u, v)
        if lo < 0 < hi:
            return False
        if lo < q - slack and hi > -q + slack:
            return False
    return True


def detect_renormalizations(fmap: QuadraticMap, m_max: int = 8, tol=None):
    """Restrictive intervals ``T`` of increasing period, nested."""
    if m_max > 32:
        raise BudgetExceeded("m_max must be <= 32")
    ctx = fmap.ctx
    tol = _tol(fmap, tol)
    records = []
    with ctx.local():
        a, am1 = fmap.param, fmap.critical_value
        slack = 10 * mpfr(tol)
        for m in range(2, m_max + 1):
            if records and m % records[-1].period:
                continue
            z = _central_lap(fmap, m)
            if z <= 0:
                continue
            cands = []
            for lo, hi in ((mpfr(0), z), (-z, mpfr(0))):
                for x in _fixed_points_on(fmap, lo, hi, m, tol):
                    if x == 0:
                        continue
                    if fmap.signed_deriv(x, m) >= 1 - 1e-9:
                        cands.append(abs(x))
            best = None
            for q in sorted(cands, reverse=True):
                fm0 = _iter(a, am1, mpfr(0), m)
                if abs(fm0) <= q + slack and _image_avoids(fmap, q, m, slack):
                    best = q
                    break
            if best is None:
                continue
            T = RealInterval(-best, best)
            if records and not records[-1].T.contains_interval(T, slack):
                continue
            f2m = _iter(a, am1, _iter(a, am1, mpfr(0), m), m)
            hatT = RealInterval.hull(f2m, _iter(a, am1, mpfr(0), m))
            records.append(RenormalizationRecord(m, T, hatT))
    return records


def orientation_reversing_fixed_point(fmap: QuadraticMap, k: int = 0, renorm_chain=None,
                                      tol=None) -> FixedPointReport:
    """``p_k``: the fixed point of ``f^{m_k}|T^(k)`` with multiplier ``<= -1``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    ctx = fmap.ctx
    tol = _tol(fmap, tol)
    with ctx.local():
        a = fmap.param
        if k == 0:
            p = (a - 1) / a
            mult = 2 * (1 - a)
            if mult > -1 + mpfr(tol):
                raise NotInDelta(0, f"multiplier {float(mult):.6g} > -1")
            return FixedPointReport(0, p, mult, 1, p)
        if renorm_chain is None:
            renorm_chain = detect_renormalizations(fmap, m_max=min(32, 2 ** k * 4))
        if len(renorm_chain) < k:
            raise NotInDelta(k, f"only {len(renorm_chain)} renormalizations found")
        rec = renorm_chain[k - 1]
        q, m = rec.T.hi, rec.period
        best = None
        for lo, hi in ((mpfr(0), q), (-q, mpfr(0))):
            for x in _fixed_points_on(fmap, lo, hi, m, tol):
                mu = fmap.signed_deriv(x, m)
                if mu < 0 and (best is None or mu < best[1]):
                    best = (x, mu)
        if best is None or best[1] > -1 + mpfr(tol):
            raise NotInDelta(k)
        x = _newton_polish(fmap, best[0], m)
        best = (x, fmap.signed_deriv(x, m))
        return FixedPointReport(k, abs(best[0]), best[1], m, best[0])


def _newton_polish(fmap, x, m, steps=4):
    """A few Newton steps on ``f^m(x) = x`` from a bisection root."""
    a, am1 = fmap.param, fmap.critical_value
    for _ in range(steps):
        d = fmap.signed_deriv(x, m)
        if d == 1:
            break
        x = x - (_iter(a, am1, x, m) - x) / (d - 1)
    return x


def deepest_delta(fmap: QuadraticMap, chain=None, tol=None):
    """Largest ``k`` with ``f`` in ``Delta_k`` and its fixed-point report."""
    if chain is None:
        chain = detect_renormalizations(fmap, m_max=32, tol=tol)
    best = orientation_reversing_fixed_point(fmap, 0, tol=tol)
    for k in range(1, len(chain) + 1):
        try:
            best = orientation_reversing_fixed_point(fmap, k, chain, tol=tol)
        except NotInDelta:
            break
    return best


def _refine_cycle(fmap, y, p, tol):
    """Newton iteration for ``f^p(y) = y`` started near a periodic point."""
    a, am1 = fmap.param, fmap.critical_value
    for _ in range(200):
        d = fmap.signed_deriv(y, p)
        if d == 1:
            break
        step = (_iter(a, am1, y, p) - y) / (d - 1)
        y -= step
        if abs(step) < mpfr(tol) * 1e-6:
            break
    return y


def classify(fmap: QuadraticMap, iter_budget: int = 4000, period_budget: int = 64,
             tol: float = 1e-12) -> Classification:
    """Sink / superstable / nonrecurrent / recurrent classification."""
    if iter_budget < 8 or period_budget < 1:
        raise ValueError("budgets must be positive")
    ctx = fmap.ctx
    evidence = {"iter_budget": iter_budget, "period_budget": period_budget, "tol": tol}
    with ctx.local():
        a, am1 = fmap.param, fmap.critical_value
        hit = 10 * mpfr(tol)
        xs = [mpfr(0)]
        x = xs[0]
        for _ in range(iter_budget):
            x = am1 - a * x * x
            xs.append(x)
        for k in range(1, min(period_budget, iter_budget) + 1):
            if abs(xs[k]) <= hit:
                return Classification("SuperstableCycle", period=k, cycle=(0.0,),
                                      evidence=evidence)
        last = xs[-1]
        for p in range(1, period_budget + 1):
            if abs(last - xs[-1 - p]) >= 1e-3:
                continue
            y = _refine_cycle(fmap, last, p, tol)
            mult = fmap.signed_deriv(y, p)
            near = abs(abs(mult) - 1)
            if near <= 1e-6 or (near <= 1e-2 and abs(last - xs[-1 - p]) >= 1e-6):
                evidence["near_parabolic"] = float(mult)
                return Classification("Undetermined", period=p, multiplier=float(mult),
                                      evidence=evidence)
            if abs(last - xs[-1 - p]) >= 1e-6:
                continue
            if abs(mult) < 1 - 1e-6:
                cyc, z = [], y
                for _ in range(p):
                    cyc.append(z)
                    z = am1 - a * z * z
                start = iter_budget - iter_budget // 4
                if all(min(abs(xk - c) for c in cyc) <= tol for xk in xs[start:]):
                    return Classification("RegularSink", period=p, multiplier=float(mult),
                                          cycle=tuple(float(c) for c in sorted(cyc)),
                                          evidence=evidence)
                evidence["slow_convergence"] = True
                return Classification("Undetermined", period=p, multiplier=float(mult),
                                      evidence=evidence)
            break
        try:
            chain = detect_renormalizations(fmap, m_max=min(32, period_budget), tol=tol)
            base = deepest_delta(fmap, chain, tol=tol)
        except NotInDelta:
            return Classification("Undetermined", evidence=evidence)
        p = base.p
        if not any(abs(xk) < p for xk in xs[1:]):
            return Classification("NonrecurrentCritical", kappa=base.k, evidence=evidence)
        return Classification("RecurrentCandidate", kappa=len(chain), evidence=evidence)
