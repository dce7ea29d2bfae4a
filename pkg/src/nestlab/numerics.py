"""Extended-precision reals, intervals and root finding.

All arithmetic is done with :mod:`gmpy2` ``mpfr`` numbers.  A
:class:`PrecisionContext` fixes the mantissa size and the absolute tolerance
used for interval endpoints; every public routine takes one explicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable

import gmpy2
from gmpy2 import mpfr

MIN_BITS = 53
MAX_BITS = 16384


class NumericsError(Exception):
    """Base class for numerical failures."""


class NoSignChange(NumericsError):
    pass


class PrecisionExhausted(NumericsError):
    """The requested tolerance cannot be met at the current precision."""

    def __init__(self, message="precision exhausted", bits=None):
        super().__init__(message)
        self.bits = bits


class NotMonotone(NumericsError):
    pass


class TargetOutside(NumericsError):
    pass


@dataclass(frozen=True)
class PrecisionContext:
    """Working precision (mantissa bits) and absolute endpoint tolerance."""

    bits: int = 256
    tol: float = 1e-40

    def __post_init__(self):
        if int(self.bits) != self.bits or self.bits < MIN_BITS:
            raise ValueError(f"bits must be an integer >= {MIN_BITS}, got {self.bits!r}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol!r}")

    def local(self):
        """Context manager activating this precision for gmpy2 arithmetic."""
        return gmpy2.context(precision=self.bits)

    def real(self, x) -> mpfr:
        return to_real(x, self)

    @property
    def eps(self) -> float:
        return 2.0 ** (1 - self.bits)

    def doubled(self) -> "PrecisionContext":
        if self.bits >= MAX_BITS:
            raise PrecisionExhausted(f"precision cap of {MAX_BITS} bits reached", self.bits)
        return replace(self, bits=min(2 * self.bits, MAX_BITS))

    def digits(self) -> int:
        """Decimal digits needed to round-trip a number at this precision."""
        return int(math.ceil(self.bits * math.log10(2))) + 1


DEFAULT_CONTEXT = PrecisionContext()


def to_real(x, ctx: PrecisionContext = DEFAULT_CONTEXT) -> mpfr:
    """Convert str, int, float, Fraction or mpfr to an mpfr at ``ctx.bits``."""
    with ctx.local():
        if isinstance(x, Fraction):
            return mpfr(x.numerator) / x.denominator
        if isinstance(x, str):
            x = x.strip()
            if "/" in x:
                frac = Fraction(x)
                return mpfr(frac.numerator) / frac.denominator
        return mpfr(x)


def format_real(x, ctx: PrecisionContext | None = None) -> str:
    """Decimal string that round-trips ``x`` at the given precision."""
    if isinstance(x, float):
        return repr(x)
    if ctx is None:
        ctx = PrecisionContext(bits=max(MIN_BITS, x.precision))
    s = format(x, f".{ctx.digits()}g")
    if "e" in s or "." not in s:
        return s
    # trim digits that do not change the parsed value
    lo, hi = len(s.split(".")[0]) + 1, len(s)
    target = to_real(s, ctx)
    best = s
    while hi > lo:
        mid = (lo + hi) // 2
        cand = s[: mid + 1]
        if to_real(cand, ctx) == target:
            best, hi = cand, mid
        else:
            lo = mid + 1
    return best.rstrip("0").rstrip(".") if "." in best else best


def _prec_context(*xs):
    """gmpy2 context wide enough to hold every mpfr operand exactly."""
    bits = max((x.precision for x in xs if isinstance(x, type(mpfr(0)))), default=MIN_BITS)
    return gmpy2.context(precision=max(bits, gmpy2.get_context().precision) + 1)


@dataclass(frozen=True)
class RealInterval:
    """Closed interval ``[lo, hi]``.

    Arithmetic on the endpoints runs at the endpoints' own precision, so the
    ambient gmpy2 context never truncates them.
    """

    lo: object
    hi: object

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval: lo={self.lo} > hi={self.hi}")

    @classmethod
    def hull(cls, a, b) -> "RealInterval":
        return cls(a, b) if a <= b else cls(b, a)

    @property
    def length(self):
        with _prec_context(self.lo, self.hi):
            return self.hi - self.lo

    @property
    def mid(self):
        with _prec_context(self.lo, self.hi):
            return (self.lo + self.hi) / 2

    def contains(self, x, slack=0) -> bool:
        with _prec_context(self.lo, self.hi, x):
            return self.lo - slack <= x <= self.hi + slack

    def contains_interval(self, other: "RealInterval", slack=0) -> bool:
        with _prec_context(self.lo, self.hi, other.lo, other.hi):
            return self.lo - slack <= other.lo and other.hi <= self.hi + slack

    def interior_overlaps(self, other: "RealInterval") -> bool:
        return other.lo < self.hi and self.lo < other.hi

    def mirror(self) -> "RealInterval":
        with _prec_context(self.lo, self.hi):
            return RealInterval(-self.hi, -self.lo)

    def astuple(self):
        return (self.lo, self.hi)

    def __iter__(self):
        yield self.lo
        yield self.hi


@dataclass(frozen=True)
class Root:
    """Midpoint of a final bisection bracket plus the bracket itself."""

    value: object
    bracket: RealInterval = field(repr=False)
    ctx: PrecisionContext = field(default=DEFAULT_CONTEXT, repr=False)


def bisect_root(g: Callable, bracket: RealInterval, tol=None,
                ctx: PrecisionContext = DEFAULT_CONTEXT, full: bool = False):
    """Locate a sign change of ``g`` inside ``bracket`` by bisection.

    Returns the midpoint of a final bracket of width ``<= tol`` (``ctx.tol``
    by default).  With ``full=True`` a :class:`Root` carrying the bracket is
    returned instead.
    """
    tol = ctx.tol if tol is None else tol
    with ctx.local():
        lo, hi = to_real(bracket.lo, ctx), to_real(bracket.hi, ctx)
        glo, ghi = g(lo), g(hi)
        if glo == 0:
            hi = lo
        elif ghi == 0:
            lo = hi
        elif (glo > 0) == (ghi > 0):
            raise NoSignChange(f"g has the same sign at both ends of [{float(lo)}, {float(hi)}]")
        tol_r = mpfr(tol)
        while hi - lo > tol_r:
            mid = (lo + hi) / 2
            if mid <= lo or mid >= hi:
                raise PrecisionExhausted(
                    f"cannot reach tol={tol} at {ctx.bits} bits", ctx.bits)
            gm = g(mid)
            if gm == 0:
                lo = hi = mid
                break
            if (gm > 0) == (glo > 0):
                lo, glo = mid, gm
            else:
                hi = mid
        root = (lo + hi) / 2
    if full:
        return Root(root, RealInterval(lo, hi), ctx)
    return root


def with_escalation(fn: Callable, ctx: PrecisionContext, *args, **kwargs):
    """Call ``fn(*args, ctx=ctx, **kwargs)``, doubling bits on PrecisionExhausted."""
    while True:
        try:
            return fn(*args, ctx=ctx, **kwargs)
        except PrecisionExhausted:
            ctx = ctx.doubled()


def pullback_point(y, a, signs, ctx: PrecisionContext = DEFAULT_CONTEXT):
    """Pull ``y`` back through inverse branches of ``x -> a-1-a x^2``.

    ``signs[j]`` is the sign (+1/-1) of the j-th iterate along the monotone
    branch, so the result ``x`` satisfies ``f^n(x) = y`` with
    ``sign(f^j(x)) = signs[j]``.
    """
    with ctx.local():
        a = to_real(a, ctx)
        am1, inva = a - 1, 1 / a
        x = to_real(y, ctx)
        for s in reversed(signs):
            t = (am1 - x) * inva
            if t < 0:
                t = mpfr(0)
            x = gmpy2.sqrt(t) if s > 0 else -gmpy2.sqrt(t)
        return x


def monotone_preimage(a, n: int, target: RealInterval, domain: RealInterval,
                      ctx: PrecisionContext = DEFAULT_CONTEXT) -> RealInterval:
    """Subinterval of ``domain`` mapped onto ``target`` by ``f_a^n``.

    The monotonicity certificate is that no intermediate image
    ``f^j(domain)``, ``0 <= j < n``, contains the critical point 0 in its
    interior.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    with ctx.local():
        a = to_real(a, ctx)
        am1 = a - 1
        lo, hi = to_real(domain.lo, ctx), to_real(domain.hi, ctx)
        ylo, yhi = lo, hi
        signs = []
        for _ in range(n):
            if min(ylo, yhi) < 0 < max(ylo, yhi):
                raise NotMonotone("an intermediate image contains the critical point")
            signs.append(1 if ylo + yhi > 0 else -1)
            ylo, yhi = am1 - a * ylo * ylo, am1 - a * yhi * yhi
        image = RealInterval.hull(ylo, yhi)
        t_lo, t_hi = to_real(target.lo, ctx), to_real(target.hi, ctx)
        slack = 10 * mpfr(ctx.tol)
        if t_lo < image.lo - slack or t_hi > image.hi + slack:
            raise TargetOutside(
                f"target [{float(t_lo)}, {float(t_hi)}] not inside image "
                f"[{float(image.lo)}, {float(image.hi)}]")
        x1 = pullback_point(max(t_lo, image.lo), a, signs, ctx)
        x2 = pullback_point(min(t_hi, image.hi), a, signs, ctx)
        x1, x2 = min(max(x1, lo), hi), min(max(x2, lo), hi)
        return RealInterval.hull(x1, x2)
