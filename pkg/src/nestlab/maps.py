"""The quadratic family ``f_a(x) = a - 1 - a x^2`` on ``I = [-1, 1]``."""
from __future__ import annotations

from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpfr

from .numerics import DEFAULT_CONTEXT, PrecisionContext, format_real, to_real

A_MIN = mpfr("0.5")
A_MAX = mpfr(2)


class DomainError(ValueError):
    """A point outside ``[-1, 1]`` was passed to the map."""


class ParameterError(ValueError):
    """Parameter outside ``[1/2, 2]``."""


@dataclass(frozen=True)
class Orbit:
    x0: object
    points: tuple
    derivs: tuple


@dataclass(frozen=True, eq=False)
class QuadraticMap:
    """Member ``f_a`` of the normalized quadratic family.

    ``a`` may be given as a decimal string, int, float, Fraction or mpfr; it
    is converted once at the precision of ``ctx``.
    """

    a: object
    ctx: PrecisionContext = field(default=DEFAULT_CONTEXT, repr=False)

    def __post_init__(self):
        a = to_real(self.a, self.ctx)
        if not (A_MIN <= a <= A_MAX):
            raise ParameterError(f"parameter a={self.a!r} outside [1/2, 2]")
        object.__setattr__(self, "_a", a)
        with self.ctx.local():
            object.__setattr__(self, "_am1", a - 1)

    @property
    def param(self) -> mpfr:
        return self._a

    @property
    def label(self) -> str:
        return self.a if isinstance(self.a, str) else format_real(self._a, self.ctx)

    def with_parameter(self, a) -> "QuadraticMap":
        return QuadraticMap(a, self.ctx)

    def with_context(self, ctx: PrecisionContext) -> "QuadraticMap":
        return QuadraticMap(self.a, ctx)

    def __eq__(self, other):
        return (isinstance(other, QuadraticMap) and self._a == other._a
                and self.ctx == other.ctx)

    def __hash__(self):
        return hash((float(self._a), self.ctx))

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        with self.ctx.local():
            x = to_real(x, self.ctx)
            if abs(x) > 1 + mpfr(self.ctx.tol):
                raise DomainError(f"x={float(x)} outside [-1, 1]")
            return self._am1 - self._a * x * x

    def deriv(self, x):
        with self.ctx.local():
            return -2 * self._a * to_real(x, self.ctx)

    @property
    def critical_value(self):
        return self._am1

    def iterate(self, x, n: int):
        with self.ctx.local():
            x = to_real(x, self.ctx)
            a, am1 = self._a, self._am1
            for _ in range(n):
                x = am1 - a * x * x
            return x

    def orbit(self, x0, n: int) -> Orbit:
        """Points ``f^k(x0)`` and ``|Df(f^k(x0))|`` for ``0 <= k < n``."""
        pts, ders = [], []
        with self.ctx.local():
            x = to_real(x0, self.ctx)
            a, am1 = self._a, self._am1
            for _ in range(n):
                pts.append(x)
                ders.append(2 * a * abs(x))
                x = am1 - a * x * x
        return Orbit(to_real(x0, self.ctx), tuple(pts), tuple(ders))

    def log_deriv_product(self, x, n: int):
        """``(log|Df^n(x)|, sign Df^n(x))``; log is ``-inf`` on a critical hit."""
        if n < 1:
            raise ValueError("n must be >= 1")
        with self.ctx.local():
            x = to_real(x, self.ctx)
            a, am1 = self._a, self._am1
            total, sign = mpfr(0), 1
            log2a = gmpy2.log(2 * a)
            for _ in range(n):
                if x == 0:
                    return mpfr("-inf"), 0
                total += log2a + gmpy2.log(abs(x))
                if x > 0:
                    sign = -sign
                x = am1 - a * x * x
            return total, sign

    def deriv_product(self, x, n: int):
        """``|Df^n(x)|`` accumulated in log space."""
        log_d, sign = self.log_deriv_product(x, n)
        with self.ctx.local():
            if sign == 0:
                return mpfr(0)
            return gmpy2.exp(log_d)

    def signed_deriv(self, x, n: int):
        log_d, sign = self.log_deriv_product(x, n)
        with self.ctx.local():
            return sign * gmpy2.exp(log_d) if sign else mpfr(0)

    @property
    def conjugate_parameter(self):
        return conjugate_parameter(self._a, self.ctx)


def conjugate_parameter(a, ctx: PrecisionContext = DEFAULT_CONTEXT):
    """``a^2 - a``: ``f_a`` is conjugate by ``y = a x`` to ``y -> a~ - y^2``."""
    with ctx.local():
        a = to_real(a, ctx)
        if not (A_MIN <= a <= A_MAX):
            raise ParameterError(f"parameter a={a} outside [1/2, 2]")
        return a * a - a


def parameter_from_conjugate(at, ctx: PrecisionContext = DEFAULT_CONTEXT):
    """Inverse of :func:`conjugate_parameter` on ``[1/2, 2]``."""
    with ctx.local():
        at = to_real(at, ctx)
        return (1 + gmpy2.sqrt(1 + 4 * at)) / 2
