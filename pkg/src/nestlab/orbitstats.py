"""Statistics of the critical orbit and of typical orbits.

The critical-orbit observables (Collet-Eckmann series, recurrence) run at
the map's working precision.  Long Birkhoff-type orbits (``N`` up to 1e7)
run in double precision; they are statistical estimators, not certified
values.
"""
from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .maps import QuadraticMap
from .numerics import RealInterval


class CriticalHit(Exception):
    """The critical orbit hit the critical point: ``f^n(0) = 0``."""

    def __init__(self, n):
        super().__init__(f"critical orbit hits 0 at iterate {n}")
        self.n = n


def _window(n_max, window):
    lo = max(1, int(math.floor(window[0] * n_max)))
    hi = max(lo, int(math.floor(window[1] * n_max)))
    return lo, hi


@dataclass(frozen=True)
class CEReport:
    n_max: int
    series: tuple  # (n, ln|Df^n(f(0))| / n)
    liminf_proxy: float
    window: tuple = (0.5, 1.0)
    bits: int = 0


@dataclass(frozen=True)
class RecurrenceReport:
    n_max: int
    exponent_proxy: float
    alpha: float
    subexp_margins: tuple  # (n, |f^n(0)| e^{alpha n})
    window: tuple = (0.5, 1.0)
    bits: int = 0


def _hit_threshold(fmap: QuadraticMap):
    return 10 * mpfr(fmap.ctx.tol)


def ce_exponent(fmap: QuadraticMap, n_max: int = 1000, window=(0.5, 1.0)) -> CEReport:
    """Series ``(1/n) ln|Df^n(f(0))|`` and its tail-window minimum."""
    if n_max < 10:
        raise ValueError("n_max must be >= 10")
    ctx = fmap.ctx
    series = []
    with ctx.local():
        a, am1 = fmap.param, fmap.critical_value
        log2a = gmpy2.log(2 * a)
        hit = _hit_threshold(fmap)
        x = am1
        total = mpfr(0)
        for n in range(1, n_max + 1):
            if abs(x) <= hit:
                raise CriticalHit(n)
            total += log2a + gmpy2.log(abs(x))
            series.append((n, float(total / n)))
            x = am1 - a * x * x
    lo, hi = _window(n_max, window)
    proxy = min(v for n, v in series if lo <= n <= hi)
    return CEReport(n_max, tuple(series), proxy, tuple(window), ctx.bits)


def recurrence_exponent(fmap: QuadraticMap, n_max: int = 1000, alpha: float = 0.01,
                        window=(0.5, 1.0)) -> RecurrenceReport:
    """Polynomial recurrence exponent of the critical orbit.

    With ``m(n) = min_{2<=k<=n} |f^k(0)|`` (closest return so far) the proxy
    is the largest value over the tail window of
    ``ln(m(2)/m(n)) / ln(n/2)``, i.e. the log-log decay rate of close
    returns.  It is 0 for orbits that stay away from 0 and tends to the
    recurrence exponent when close returns follow ``|f^n(0)| ~ n^{-e}``.
    """
    if n_max < 10:
        raise ValueError("n_max must be >= 10")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    ctx = fmap.ctx
    margins = []
    ratios = {}
    with ctx.local():
        a, am1 = fmap.param, fmap.critical_value
        hit = _hit_threshold(fmap)
        x = am1 - a * am1 * am1  # f^2(0)
        if abs(am1) <= hit:
            raise CriticalHit(1)
        m2 = None
        m = None
        for n in range(2, n_max + 1):
            d = abs(x)
            if d <= hit:
                raise CriticalHit(n)
            m = d if m is None or d < m else m
            if m2 is None:
                m2 = m
            margins.append((n, float(d * gmpy2.exp(mpfr(alpha) * n))))
            if n > 2:
                ratios[n] = float(gmpy2.log(m2 / m)) / math.log(n / 2)
            x = am1 - a * x * x
    lo, hi = _window(n_max, window)
    tail = [v for n, v in ratios.items() if lo <= n <= hi]
    proxy = max(0.0, max(tail)) if tail else 0.0
    return RecurrenceReport(n_max, proxy, float(alpha), tuple(margins), tuple(window), ctx.bits)


def _float_orbit(fmap: QuadraticMap, x0, n: int) -> np.ndarray:
    a = float(fmap.param)
    am1 = float(fmap.critical_value)
    x = float(x0)
    if abs(x) > 1:
        raise ValueError("x0 must lie in [-1, 1]")
    out = array("d", bytes(8 * n))
    for k in range(n):
        out[k] = x
        x = am1 - a * x * x
    return np.frombuffer(out, dtype=float)


def birkhoff_average(fmap: QuadraticMap, x0, observable="identity", N: int = 10**6) -> float:
    """``(1/N) sum_{k<N} phi(f^k(x0))``.

    ``observable`` is ``"identity"`` or an interval (``RealInterval`` or a
    ``(lo, hi)`` pair) whose indicator is averaged.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    xs = _float_orbit(fmap, x0, N)
    if observable == "identity":
        return float(np.mean(xs))
    if isinstance(observable, RealInterval):
        lo, hi = float(observable.lo), float(observable.hi)
    else:
        lo, hi = (float(v) for v in observable)
    return float(np.mean((xs >= lo) & (xs <= hi)))


@dataclass(frozen=True)
class Autocorrelation:
    values: tuple  # (lag, rho)
    degenerate: bool = False
    flags: tuple = ()


def autocorrelation(fmap: QuadraticMap, x0, lags, N: int = 10**6, burn: int | None = None
                    ) -> Autocorrelation:
    """Normalized empirical autocorrelation of ``x`` along the orbit of ``x0``."""
    lags = sorted(set(int(k) for k in lags))
    if lags and lags[-1] >= N:
        raise ValueError("N must exceed the largest lag")
    burn = min(1000, N // 10) if burn is None else burn
    xs = _float_orbit(fmap, x0, N + burn)[burn:]
    xc = xs - xs.mean()
    var = float(np.dot(xc, xc)) / len(xc)
    if var <= 1e-24 * max(1.0, float(np.mean(xs * xs))):
        return Autocorrelation(tuple((k, 1.0 if k == 0 else math.nan) for k in lags),
                               True, ("DegenerateVariance",))
    vals = []
    for k in lags:
        if k == 0:
            vals.append((0, 1.0))
            continue
        c = float(np.dot(xc[:-k], xc[k:])) / (len(xc) - k)
        vals.append((k, c / var))
    return Autocorrelation(tuple(vals))


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)
    n: int = 0
    flags: tuple = ()

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.density * self.widths))


def acim_histogram(fmap: QuadraticMap, x0, bins: int = 100, N: int = 10**6,
                   burn: int = 0) -> Histogram:
    """Normalized histogram of the orbit of ``x0`` on ``[-1, 1]``."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    edges = np.linspace(-1.0, 1.0, bins + 1)
    if N <= 0:
        return Histogram(edges, np.zeros(bins), 0, ("EmptyOrbit",))
    xs = _float_orbit(fmap, x0, N + burn)[burn:]
    counts, _ = np.histogram(xs, bins=edges)
    density = counts / (N * np.diff(edges))
    return Histogram(edges, density, N)


def ulam_bin_density(edges) -> np.ndarray:
    """Bin averages of ``1/(pi sqrt(1-x^2))`` over the given edges."""
    edges = np.asarray(edges, dtype=float)
    mass = np.diff(np.arcsin(np.clip(edges, -1, 1))) / math.pi
    return mass / np.diff(edges)
