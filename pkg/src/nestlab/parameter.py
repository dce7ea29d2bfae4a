"""Symbolic dynamics and parameter windows.

Kneading words are compared in the Milnor-Thurston (parity-lexicographic)
order.  Parameter windows are located by probing combinatorics: a map ``g``
belongs to the window of an anchor when its principal nest, built in the
cheap combinatorics mode, visits the same branch addresses as the anchor's.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

from gmpy2 import mpfr

from .maps import A_MAX, A_MIN, QuadraticMap
from .nest import NestError, _pull_signs, build_nest
from .numerics import PrecisionContext, RealInterval, format_real
from .renorm import NotInDelta, deepest_delta

CSV_TAG = "nestlab-csv-v1"


class NotMonotoneObserved(ValueError):
    """A predicate or sample that should be monotone in the parameter is not."""


class CombinatoricsUnstable(ValueError):
    """The anchor sits within ``tol`` of its window boundary."""


class CombinatoricsMismatch(ValueError):
    """Two maps do not share the combinatorics required for the comparison."""


# -- kneading ----------------------------------------------------------------

@dataclass(frozen=True)
class KneadingWord:
    symbols: str
    terminal: bool = False

    def __post_init__(self):
        if set(self.symbols) - set("LCR"):
            raise ValueError("symbols must be drawn from L, C, R")
        if "C" in self.symbols[:-1] or (self.symbols.endswith("C") != self.terminal):
            raise ValueError("C may only appear as the final symbol of a terminal word")

    def __str__(self):
        return self.symbols

    def __len__(self):
        return len(self.symbols)


def itinerary(fmap: QuadraticMap, x, n: int) -> KneadingWord:
    """Symbols of ``x, f(x), ..., f^{n-1}(x)``; stops at a critical hit."""
    out = []
    with fmap.ctx.local():
        hit = 10 * mpfr(fmap.ctx.tol)
        x = fmap.ctx.real(x)
        a, am1 = fmap.param, fmap.critical_value
        for _ in range(n):
            if abs(x) <= hit:
                out.append("C")
                return KneadingWord("".join(out), True)
            out.append("R" if x > 0 else "L")
            x = am1 - a * x * x
    return KneadingWord("".join(out))


def kneading(fmap: QuadraticMap, n: int) -> KneadingWord:
    """Itinerary of the critical value ``f(0) = a - 1``."""
    return itinerary(fmap, fmap.critical_value, n)


_RANK = {"L": 0, "C": 1, "R": 2}


def mt_compare(w1, w2) -> str:
    """Milnor-Thurston order of two words: ``"<"``, ``"="`` or ``">"``.

    At the first differing symbol the order is ``L < C < R`` after an even
    number of R's in the common prefix and reversed after an odd number.  A
    terminal C therefore sits between the two one-sided continuations.
    Words that agree on their common length compare equal.
    """
    s1, s2 = str(w1), str(w2)
    odd = False
    for c1, c2 in zip(s1, s2):
        if c1 != c2:
            lt = _RANK[c1] < _RANK[c2]
            return ">" if lt == odd else "<"
        if c1 == "R":
            odd = not odd
    return "="


# -- parameter search ----------------------------------------------------------

def _as_map(a, ctx):
    return QuadraticMap(a, ctx)


def _bracket(bracket, ctx):
    lo, hi = (bracket.lo, bracket.hi) if isinstance(bracket, RealInterval) else bracket
    lo, hi = ctx.real(lo), ctx.real(hi)
    if not lo < hi:
        raise ValueError("empty parameter bracket")
    if lo < A_MIN or hi > A_MAX:
        raise ValueError("bracket must lie in [1/2, 2]")
    return lo, hi


def find_parameter_by_combinatorics(predicate, bracket, tol=1e-12,
                                    ctx: PrecisionContext | None = None, probes: int = 17):
    """Transition parameter of a monotone predicate on ``QuadraticMap``.

    The predicate is evaluated on ``probes`` equally spaced parameters; it
    must switch exactly once there.  Bisection then localizes the switch to
    ``tol``; the midpoint of the final bracket is returned.
    """
    ctx = ctx or PrecisionContext()
    lo, hi = _bracket(bracket, ctx)
    with ctx.local():
        grid = [lo + (hi - lo) * k / (probes - 1) for k in range(probes)]
        vals = [bool(predicate(_as_map(g, ctx))) for g in grid]
        switches = [k for k in range(1, probes) if vals[k] != vals[k - 1]]
        if len(switches) != 1:
            raise NotMonotoneObserved(
                f"predicate switches {len(switches)} times on the probe grid")
        k = switches[0]
        lo, hi, vlo = grid[k - 1], grid[k], vals[k - 1]
        tol_r = mpfr(tol)
        while hi - lo > tol_r:
            mid = (lo + hi) / 2
            if bool(predicate(_as_map(mid, ctx))) == vlo:
                lo = mid
            else:
                hi = mid
        return (lo + hi) / 2


# -- combinatorial signatures ------------------------------------------------------

def _resolve_kappa(fmap, kappa):
    if kappa != "auto":
        return int(kappa)
    return deepest_delta(fmap).k


def _levels(g, kappa, depth):
    """Cheap nest of ``g`` plus the name of the error that stopped it, if any."""
    try:
        return list(build_nest(g, kappa=kappa, depth=depth, coverage_target=0.0,
                               max_branches=0)), None
    except NotInDelta:
        return [], "NotInDelta"
    except NestError as exc:
        return list(exc.levels), type(exc).__name__


def _level_signature(lv):
    word = tuple((lv.branch(j).r, lv.branch(j).mask) for j in (lv.landing_word or ()))
    return (lv.central.r, lv.central_return, lv.restrictive, lv.s, word)


def _first_visit(lv):
    if lv.central_return:
        return ("central",)
    if lv.tau is None:
        return None
    b = lv.branch(lv.tau)
    return (b.r, b.mask)


def signature(g: QuadraticMap, i: int, kappa: int, extra: str = "J"):
    """Combinatorics of ``g`` through level ``i-1``; ``extra="Jj"`` adds the
    branch containing ``R_i(0)``."""
    depth = i + 1 if extra == "Jj" else max(i, 1)
    levels, err = _levels(g, kappa, depth)
    sig = tuple(_level_signature(lv) for lv in levels[:i])
    if len(levels) < i:
        sig += (("stopped", err),)
    if extra == "Jj":
        sig += (_first_visit(levels[i]) if len(levels) > i else ("stopped", err),)
    return sig


@dataclass(frozen=True)
class ParameterWindow:
    level: int
    kind: str
    interval: RealInterval
    anchor: object
    kappa: int = 0
    j: int | None = None
    outer: tuple = ()  # nearest probes known to fail, (left, right)

    def contains(self, a) -> bool:
        return self.interval.contains(a)


def grow_window(anchor, predicate, tol=1e-10, ctx: PrecisionContext | None = None,
                step=1e-3, limits=(A_MIN, A_MAX)):
    """Maximal interval around ``anchor`` on which ``predicate`` holds.

    Returns ``(inner, outer)``: ``inner`` is the certified interval and
    ``outer`` the pair of probes just outside it where the predicate fails
    (``None`` when a side reaches the family boundary).
    """
    ctx = ctx or PrecisionContext()
    with ctx.local():
        a0 = ctx.real(anchor)
        lim = (ctx.real(limits[0]), ctx.real(limits[1]))
        tol_r = mpfr(tol)
        for sgn in (-1, 1):
            probe = a0 + sgn * tol_r
            if lim[0] <= probe <= lim[1] and not predicate(_as_map(probe, ctx)):
                raise CombinatoricsUnstable(
                    f"anchor {format_real(a0)} lies within tol of its window boundary")
        ends, outs = [], []
        for side, sgn in ((0, -1), (1, 1)):
            inside, d = a0, mpfr(step)
            outside = None
            while outside is None:
                probe = a0 + sgn * d
                if (probe - lim[side]) * sgn >= 0:
                    probe = lim[side]
                ok = predicate(_as_map(probe, ctx))
                if ok:
                    inside = probe
                    if probe == lim[side]:
                        break
                    d *= 2
                else:
                    outside = probe
            if outside is not None:
                while abs(outside - inside) > tol_r:
                    mid = (inside + outside) / 2
                    if predicate(_as_map(mid, ctx)):
                        inside = mid
                    else:
                        outside = mid
            ends.append(inside)
            outs.append(outside)
        return RealInterval(ends[0], ends[1]), tuple(outs)


def window(anchor: QuadraticMap, i: int, kind: str = "J", j=None, kappa="auto",
           tol=1e-10) -> ParameterWindow:
    """Window ``J_i`` (or ``J_i^j``) of parameters sharing the anchor's combinatorics."""
    if i < 0:
        raise ValueError("level must be >= 0")
    if kind not in ("J", "Jj"):
        raise ValueError("kind must be 'J' or 'Jj'")
    k = _resolve_kappa(anchor, kappa)
    extra = kind
    target = signature(anchor, i, k, extra)
    if kind == "Jj":
        levels, _ = _levels(anchor, k, i + 1)
        if len(levels) <= i:
            raise CombinatoricsUnstable(f"anchor nest stops before level {i}")
        tau = 0 if levels[i].central_return else levels[i].tau
        if j is not None and j != tau:
            raise ValueError(f"R_{i}(0) of the anchor lies in branch {tau}, not {j}")
        j = tau
    ctx = anchor.ctx

    def same(g):
        return signature(g, i, k, extra) == target

    inner, outer = grow_window(anchor.param, same, tol, ctx)
    return ParameterWindow(i, kind, inner, anchor.param, k, j, outer)


# -- phase-parameter samples -----------------------------------------------------------

@dataclass(frozen=True)
class Endpoint:
    """Endpoint of a level-``i`` branch: ``f^r`` maps it to ``side * h_i``."""

    r: int
    mask: int
    side: int

    @property
    def address(self) -> str:
        return f"{self.r}:{self.mask:x}:{'+' if self.side > 0 else '-'}"

    def signs(self):
        return [-1 if (self.mask >> t) & 1 else 1 for t in range(self.r)]

    def locate(self, g: QuadraticMap, h):
        with g.ctx.local():
            return _pull_signs(g, self.side * h, self.signs())


@dataclass(frozen=True)
class XiSample:
    pairs: tuple  # (x, a), sorted by x
    addresses: tuple
    window: ParameterWindow
    increasing: bool = True


def _level(g, i, kappa, budget=0):
    try:
        levels = build_nest(g, kappa=kappa, depth=i + 1, coverage_target=0.99,
                            max_branches=budget)
    except NestError as exc:
        levels = exc.levels
    if len(levels) <= i:
        raise CombinatoricsMismatch(f"nest of a={g.label} stops before level {i}")
    return levels[i]


def level_endpoints(level, count: int):
    """Endpoints of the largest noncentral right-half branches, ``count`` in total."""
    bs = sorted((b for b in level.noncentral() if b.j > 0),
                key=lambda b: b.domain.length, reverse=True)
    out = []
    for b in bs:
        for side in (1, -1):
            if len(out) < count:
                out.append(Endpoint(b.r, b.mask, side))
    return out


def _h(g, i, kappa):
    levels, err = _levels(g, kappa, max(i, 1))
    if i == 0:
        return levels[0].h if levels else None
    if len(levels) < i:
        return None
    return levels[i - 1].central.domain.hi


def xi_sample(anchor: QuadraticMap, i: int, endpoints=8, kappa="auto", tol=1e-10,
              branch_budget: int = 64) -> XiSample:
    """Pairs ``(x, Xi_i(x))`` for branch endpoints ``x`` of level ``i``.

    ``Xi_i(x)`` is the parameter in ``J_i`` where the first return of the
    critical point to ``I_i`` crosses the continuation of ``x``.
    """
    k = _resolve_kappa(anchor, kappa)
    win = window(anchor, i, "J", kappa=k, tol=tol)
    lv = _level(anchor, i, k, branch_budget)
    if isinstance(endpoints, int):
        endpoints = level_endpoints(lv, endpoints)
    if not endpoints:
        raise CombinatoricsMismatch(f"level {i} of the anchor has no noncentral branches")
    v = lv.v
    ctx = anchor.ctx

    def offset(g, ep):
        h = _h(g, i, k)
        if h is None:
            return None
        with ctx.local():
            return g.iterate(0, v) - ep.locate(g, h)

    pairs = []
    with ctx.local():
        lo, hi = win.interval.lo, win.interval.hi
        tol_r = mpfr(tol)
        for ep in endpoints:
            glo, ghi = offset(_as_map(lo, ctx), ep), offset(_as_map(hi, ctx), ep)
            if glo is None or ghi is None or (glo > 0) == (ghi > 0):
                raise NotMonotoneObserved(f"no crossing for endpoint {ep.address} in J_{i}")
            a, b, slo = lo, hi, glo > 0
            while b - a > tol_r:
                mid = (a + b) / 2
                gm = offset(_as_map(mid, ctx), ep)
                if gm is None:
                    raise NotMonotoneObserved(f"probe {format_real(mid)} left J_{i}")
                if (gm > 0) == slo:
                    a = mid
                else:
                    b = mid
            pairs.append((ep.locate(anchor, lv.h), (a + b) / 2, ep.address))
    pairs.sort(key=lambda p: p[0])
    xs = [p[0] for p in pairs]
    as_ = [p[1] for p in pairs]
    inc = all(y < z for y, z in zip(as_, as_[1:]))
    dec = all(y > z for y, z in zip(as_, as_[1:]))
    if not (inc or dec) or any(y >= z for y, z in zip(xs, xs[1:])):
        raise NotMonotoneObserved("phase-parameter sample is not strictly monotone")
    return XiSample(tuple((x, a) for x, a, _ in pairs), tuple(p[2] for p in pairs), win, inc)


def holonomy_sample(f: QuadraticMap, g: QuadraticMap, i: int, kappa="auto",
                    endpoints: int = 16, branch_budget: int = 64):
    """Pairs ``(x, H_i[g](x))`` of branch endpoints with equal addresses.

    Returns ``(addresses, pairs)`` sorted by ``x``.
    """
    k = _resolve_kappa(f, kappa)
    if signature(g, i, k) != signature(f, i, k):
        raise CombinatoricsMismatch(f"a={g.label} is outside J_{i} of a={f.label}")
    lf = _level(f, i, k, branch_budget)
    hg = _h(g, i, k)
    eps = level_endpoints(lf, endpoints)
    out = []
    for ep in eps:
        x = ep.locate(f, lf.h)
        y = ep.locate(g, hg)
        with g.ctx.local():
            err = abs(g.iterate(y, ep.r) - ep.side * hg)
        if err > 1e-6 * hg:
            raise CombinatoricsMismatch(f"branch {ep.address} has no continuation at a={g.label}")
        out.append((x, y, ep.address))
    out.sort(key=lambda p: p[0])
    ys = [p[1] for p in out]
    if any(y >= z for y, z in zip(ys, ys[1:])):
        raise CombinatoricsMismatch("holonomy sample is not monotone")
    return tuple(p[2] for p in out), tuple((x, y) for x, y, _ in out)


def write_pairs_csv(stream, addresses, pairs, columns=("address", "phase_x", "param_a")):
    """CSV with a version row, a column row, then full-precision decimals."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow([CSV_TAG])
    w.writerow(columns)
    for addr, (x, y) in zip(addresses, pairs):
        w.writerow([addr, format_real(x), format_real(y)])
