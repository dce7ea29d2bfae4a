"""Acceptance criteria, each at its stated tolerance.

Every test records a single PASS/FAIL line, listed again in the terminal
summary under "acceptance criteria".
"""
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from gmpy2 import mpfr

from nestlab.capacity import PowerFamily, capacity_lower_bound, tree_subadditivity_check
from nestlab.labcli import ExclusionModel, exclusion_simulation, main
from nestlab.maps import QuadraticMap
from nestlab.nest import NestError, build_nest, gape_interval, nest_statistics_check
from nestlab.numerics import PrecisionContext, RealInterval, bisect_root
from nestlab.orbitstats import (acim_histogram, autocorrelation, birkhoff_average, ce_exponent,
                                recurrence_exponent, ulam_bin_density)
from nestlab.parameter import (CombinatoricsMismatch, find_parameter_by_combinatorics, kneading,
                               mt_compare, signature, window, xi_sample)
from nestlab.capacity import MonotonePairs, qs_constant
from nestlab.renorm import classify, detect_renormalizations, periodic_points

GOLDEN = (1 + math.sqrt(5)) / 2


def test_1_chebyshev(capsys, verdict):
    t = time.perf_counter()
    code = main(["classify", "--a", "2"])
    tag = capsys.readouterr().out
    f = QuadraticMap(2)
    ce = ce_exponent(f, n_max=100)
    dev = max(abs(v - math.log(4)) for _, v in ce.series)
    rec = recurrence_exponent(f, n_max=100).exponent_proxy
    dt = time.perf_counter() - t
    ok = code == 0 and '"NonrecurrentCritical"' in tag and dev < 1e-12 and rec == 0 and dt < 1
    verdict(1, ok, f"max |CE - ln4| = {dev:.1e}, rec proxy = {rec}, {dt:.2f} s")


def test_2_sink_closed_forms(verdict):
    c = classify(QuadraticMap("0.75"))
    sink_err = abs(float(c.cycle[0]) + 1 / 3)
    mult_err = abs(c.multiplier - 0.5)

    def attracting_fixed_point(g):
        return any(abs(o.multiplier) < 1 for o in periodic_points(g, 1))

    a = find_parameter_by_combinatorics(attracting_fixed_point, ("1.2", "1.8"), tol=1e-12)
    pd_err = abs(float(a - mpfr("1.5")))
    ok = (c.tag == "RegularSink" and c.period == 1 and sink_err <= 1e-12 and mult_err <= 1e-12
          and pd_err <= 1e-10)
    verdict(2, ok, f"sink err {sink_err:.1e}, multiplier err {mult_err:.1e}, "
                   f"doubling at 1.5 +- {pd_err:.1e}")


def test_3_superstable_two(verdict):
    ctx = PrecisionContext()

    def second_iterate(a):
        return QuadraticMap(a, ctx).iterate(0, 2)

    a = bisect_root(second_iterate, RealInterval("1.55", "1.7"), tol=1e-30, ctx=ctx)
    err = abs(float(a) - GOLDEN)
    c = classify(QuadraticMap(a, ctx))
    ok = err <= 1e-10 and c.tag == "SuperstableCycle" and c.period == 2
    verdict(3, ok, f"|a - golden| = {err:.1e}, classify -> {c.describe()}")


def test_4_renormalization_window(verdict):
    f = QuadraticMap("1.6")
    chain = detect_renormalizations(f, m_max=8)
    worst = 0.0
    if chain:
        T = chain[0].T
        with f.ctx.local():
            for k in range(2001):
                x = T.lo + (T.hi - T.lo) * k / 2000
                y = f.iterate(x, 2)
                worst = max(worst, float(max(T.lo - y, y - T.hi, 0)))
    none = detect_renormalizations(QuadraticMap("1.95"), m_max=8)
    ok = [r.period for r in chain] == [2] and worst <= 1e-9 and none == []
    verdict(4, ok, f"periods at 1.6: {[r.period for r in chain]}, f^2(T) overshoot {worst:.1e}, "
                   f"at 1.95: {len(none)} found")


def _nest_audit(a):
    """Property failures and coverage shortfalls of a depth-2 nest at default budgets."""
    f = QuadraticMap(a)
    problems, shortfall, notes = [], [], []
    try:
        levels = build_nest(f, depth=2, coverage_target=(0.99, 0.9))
    except NestError as exc:
        levels = list(exc.levels)
        # an escape after both levels exist only leaves s_1 undetermined
        (notes if len(levels) == 2 else shortfall).append(type(exc).__name__)
    fm = levels[0].fmap if levels else f
    with fm.ctx.local():
        tol = 10 * mpfr(fm.ctx.tol)
        for lv in levels:
            if abs(lv.I.lo + lv.I.hi) > tol:
                problems.append(f"symmetry@{lv.n}")
            dom = sorted((b.domain for b in lv.branches), key=lambda d: d.lo)
            if any(d2.lo < d1.hi - tol for d1, d2 in zip(dom, dom[1:])):
                problems.append(f"disjoint@{lv.n}")
            for b in lv.noncentral():
                y1, y2 = fm.iterate(b.domain.lo, b.r), fm.iterate(b.domain.hi, b.r)
                want = (-lv.h, lv.h) if b.orientation > 0 else (lv.h, -lv.h)
                if abs(y1 - want[0]) > tol or abs(y2 - want[1]) > tol:
                    problems.append(f"onto@{lv.n}")
                    break
            if lv.coverage < (0.99, 0.9)[lv.n]:
                shortfall.append(f"L{lv.n}={lv.coverage:.3f}")
        for i in range(2, len(levels)):
            g = gape_interval(levels, i).interval
            if not levels[i].central.domain.hi <= g.hi + tol <= levels[i].h + 2 * tol:
                problems.append("sandwich")
            for b in levels[i].noncentral():
                d = b.domain
                if not (g.lo - tol <= d.lo and d.hi <= g.hi + tol
                        or d.hi <= g.lo + tol or d.lo >= g.hi - tol):
                    problems.append("contains-or-disjoint")
                    break
    st = nest_statistics_check(levels)
    if st.additivity_failures:
        problems.append("additivity")
    return problems, shortfall, notes


def test_5_nest_property_suite(verdict):
    rng = np.random.Generator(np.random.Philox(key=5))
    params = ["1.75", "1.8", "1.9", "1.97"] + [f"{x:.6f}" for x in rng.uniform(1.55, 2, 20)]
    t = time.perf_counter()
    bad, short, notes = {}, {}, {}
    for a in params:
        problems, shortfall, note = _nest_audit(a)
        for table, entry in ((bad, problems), (short, shortfall), (notes, note)):
            if entry:
                table[a] = entry
    dt = time.perf_counter() - t
    ok = not bad and not short and dt < 60
    verdict(5, ok, f"{len(params)} params, {dt:.1f} s; property failures {bad or 'none'}; "
                   f"coverage shortfalls {short or 'none'}; s_1 unresolved {notes or 'none'}")


def test_6_exclusion_random_model(verdict):
    lv, = exclusion_simulation(ExclusionModel((1e-6,), 10**5, seed=0), eps=0.1)
    ok = 0.95 <= lv.median_ratio <= 1.05 and lv.escape_prob <= lv.escape_bound + 3 * lv.escape_sigma
    verdict(6, ok, f"median ratio {lv.median_ratio:.4f}, escape {lv.escape_prob:.4f} "
                   f"<= {lv.escape_bound:.4f} + 3*{lv.escape_sigma:.4f}")


def test_7_kneading_monotonicity(verdict):
    rng = np.random.Generator(np.random.Philox(key=7))
    pairs = np.sort(rng.uniform(1.4, 2.0, size=(1000, 2)), axis=1)
    cache = {}

    def word(a):
        if a not in cache:
            cache[a] = kneading(QuadraticMap(repr(float(a))), 30)
        return cache[a]

    violations = sum(mt_compare(word(a), word(b)) == ">" for a, b in pairs if a < b)
    verdict(7, violations == 0, f"1000 ordered pairs, {violations} strict violations")


def test_8_phase_parameter_suite(verdict):
    anchor = QuadraticMap("1.75")
    tol = 1e-10
    w = window(anchor, 1, tol=tol)
    target = signature(anchor, 1, w.kappa)
    certified = True
    with anchor.ctx.local():
        for inner, outer in zip((w.interval.lo, w.interval.hi), w.outer):
            inside = signature(QuadraticMap(inner, anchor.ctx), 1, w.kappa) == target
            flips = outer is not None and signature(QuadraticMap(outer, anchor.ctx), 1,
                                                    w.kappa) != target
            certified &= inside and flips and abs(outer - inner) <= 2 * tol
    detail = (f"J_1 = [{float(w.interval.lo):.9f}, {float(w.interval.hi):.9f}] "
              f"(kappa={w.kappa}) certified={certified}")
    try:
        xs = xi_sample(anchor, 1, 8, kappa=w.kappa, tol=tol)
        k = qs_constant(MonotonePairs.oriented(xs.pairs))
        xi_ok = len(xs.pairs) == 8
        detail += f"; xi: 8 monotone pairs, qs constant {k:.3f}"
    except CombinatoricsMismatch as exc:
        xi_ok = False
        detail += f"; xi at 1.75 impossible: {exc}"
        # recorded, not asserted: the same procedure where level 1 has branches
        sub = xi_sample(QuadraticMap("1.9"), 1, 8, kappa=0, tol=tol)
        k = qs_constant(MonotonePairs.oriented(sub.pairs))
        detail += f"; at a=1.9 kappa=0: {len(sub.pairs)} monotone pairs, qs constant {k:.3f}"
    verdict(8, certified and xi_ok, detail)


def test_9_capacity_properties(verdict):
    rng = np.random.Generator(np.random.Philox(key=9))
    fam = PowerFamily()
    X = [(0.05, 0.1), (0.3, 0.32), (0.7, 0.9)]
    ident = sum(hi - lo for lo, hi in X)
    base = capacity_lower_bound(X, (0, 1), 20, fam).value
    moved = capacity_lower_bound([(-3 + 7 * lo, -3 + 7 * hi) for lo, hi in X], (-3, 4), 20,
                                 fam).value
    affine_err = abs(base - moved)
    artifacts = 0
    for _ in range(100):
        cuts = np.sort(rng.uniform(0, 1, 16))
        kids = [(cuts[i], cuts[i + 1]) for i in range(0, 16, 2)]
        pieces = [tuple(np.sort(rng.uniform(lo, hi, 2))) for lo, hi in kids]
        if "FamilyArtifact" in tree_subadditivity_check(kids, pieces, (0, 1), 20, fam).flags:
            artifacts += 1
    ok = base >= ident and affine_err <= 1e-12 and artifacts == 0
    verdict(9, ok, f"bound {base:.4f} >= identity {ident:.4f}, affine err {affine_err:.1e}, "
                   f"{artifacts}/100 FamilyArtifact")


def test_10_ulam_statistics(verdict):
    f = QuadraticMap(2)
    t = time.perf_counter()
    h = acim_histogram(f, 0.3, bins=100, N=10**7)
    ref = ulam_bin_density(h.edges)
    rel = float(np.max(np.abs(h.density[1:-1] / ref[1:-1] - 1)))
    ac = max(abs(v) for _, v in autocorrelation(f, 0.3, range(1, 6), N=10**7).values)
    mean = birkhoff_average(f, 0.3, "identity", 10**7)
    dt = time.perf_counter() - t
    ok = rel <= 0.05 and ac < 0.01 and abs(mean) <= 0.01 and dt < 30
    verdict(10, ok, f"worst interior bin {rel:.2%}, max |acf| {ac:.1e}, mean {mean:.1e}, "
                    f"{dt:.1f} s")


def test_11_scan_determinism(verdict):
    outs = []
    for workers in ("1", "8"):
        cmd = [sys.executable, "-m", "nestlab.labcli", "scan", "--range", "1.5:2", "--n", "200",
               "--workers", workers, "--seed", "7"]
        outs.append(subprocess.run(cmd, capture_output=True, check=True).stdout)
    ok = outs[0] == outs[1] and outs[0].count(b"\n") >= 202
    verdict(11, ok, f"{len(outs[0])} bytes, identical={outs[0] == outs[1]}")
