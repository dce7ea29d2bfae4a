import json

import numpy as np
import pytest
from gmpy2 import mpfr

from nestlab.maps import QuadraticMap
from nestlab.nest import (CriticalEscape, NestError, branch_hyperbolicity, build_nest,
                          expansion_outside, gape_interval, landing_components, nest_report,
                          nest_statistics_check, word_domain)
from nestlab.numerics import PrecisionContext


@pytest.fixture(scope="module")
def nest19():
    return build_nest(QuadraticMap("1.9"), kappa=0, depth=3, coverage_target=(0.99, 0.9, 0.5),
                      max_branches=3000)


def test_structure(nest19):
    f = nest19[0].fmap
    assert [lv.n for lv in nest19] == [0, 1, 2]
    with f.ctx.local():
        tol = 10 * mpfr(f.ctx.tol)
        for lv in nest19:
            assert abs(lv.I.lo + lv.I.hi) <= tol
            dom = sorted((b.domain for b in lv.branches), key=lambda d: d.lo)
            for d1, d2 in zip(dom, dom[1:]):
                assert d2.lo >= d1.hi - tol
            for b in lv.noncentral():
                y1, y2 = f.iterate(b.domain.lo, b.r), f.iterate(b.domain.hi, b.r)
                want = (-lv.h, lv.h) if b.orientation > 0 else (lv.h, -lv.h)
                assert abs(y1 - want[0]) <= tol and abs(y2 - want[1]) <= tol
            # the central domain is the next level's interval
        for lo, up in zip(nest19, nest19[1:]):
            assert up.I.hi == lo.central.domain.hi


def test_scaling_and_coverage(nest19):
    for lv, target in zip(nest19, (0.99, 0.9, 0.5)):
        assert lv.coverage >= target
        assert 0 < lv.c < 1
    assert [lv.v for lv in nest19] == [3, 3, 8]


def test_first_return_float_oracle(nest19):
    # independent double-precision first return to I_0 on a dense grid
    lv = nest19[0]
    a, h = 1.9, float(lv.h)
    checked = 0
    for x0 in np.linspace(-h, h, 2001)[1:-1]:
        b = lv.locate(mpfr(x0))
        if b is None:
            continue
        d = b.domain
        if min(abs(x0 - float(d.lo)), abs(x0 - float(d.hi))) < 1e-9:
            continue
        x, t = a - 1 - a * x0 * x0, 1
        while abs(x) >= h and t < 500:
            x, t = a - 1 - a * x * x, t + 1
        assert t == b.r
        checked += 1
    assert checked > 1500


def test_chebyshev_escapes():
    with pytest.raises(CriticalEscape) as e:
        build_nest(QuadraticMap(2), kappa=0, depth=2)
    assert e.value.n == 0
    assert build_nest(QuadraticMap(2), depth=0) == []


def test_restrictive_level_stops():
    lv, = build_nest(QuadraticMap("1.75"), kappa=0, depth=3)
    assert lv.restrictive and len(lv.branches) == 1 and lv.coverage == 1.0


def test_bad_arguments():
    with pytest.raises(ValueError):
        build_nest(QuadraticMap("1.9"), depth=-1)
    with pytest.raises(ValueError):
        build_nest(QuadraticMap("1.9"), coverage_target=1.0)


def test_precision_escalation():
    f = QuadraticMap("1.85", PrecisionContext(bits=256))
    levels = build_nest(f, kappa=0, depth=3, coverage_target=(0.9, 0.5, 0.0), max_branches=200)
    assert levels[-1].fmap.ctx.bits > 256
    assert levels[-1].fmap.param == f.param
    with pytest.raises(NestError):
        build_nest(f, kappa=0, depth=3, coverage_target=0.0, max_branches=0, max_bits=256)


def test_gape_sandwich(nest19):
    g = gape_interval(nest19, 2).interval
    lv = nest19[2]
    assert lv.central.domain.hi <= g.hi <= lv.h
    tol = mpfr("1e-30")
    for b in lv.noncentral():
        d = b.domain
        inside = g.lo - tol <= d.lo and d.hi <= g.hi + tol
        outside = d.hi <= g.lo + tol or d.lo >= g.hi - tol
        assert inside or outside
    with pytest.raises(ValueError):
        gape_interval(nest19, 1)


def test_landing_components(nest19):
    lv = nest19[0]
    comps = landing_components(lv, max_word_len=2, coverage_target=0.5)
    assert comps[0].word == ()
    f = lv.fmap
    nxt = lv.central.domain
    with f.ctx.local():
        for c in comps[1:4]:
            # C^d lands in I_{n+1} after total_time steps
            y = f.iterate(c.C.mid, c.total_time)
            assert nxt.contains(y)
            assert word_domain(lv, c.word).contains_interval(c.C)
    more = landing_components(lv, max_word_len=3, coverage_target=0.9)
    assert {c.word for c in comps} <= {c.word for c in more}


def test_hyperbolicity_and_expansion(nest19):
    hyp = branch_hyperbolicity(nest19[1])
    assert hyp.infimum > 0
    assert [v[0] for v in hyp.values] == sorted(v[0] for v in hyp.values)
    fmap = nest19[0].fmap
    fit = expansion_outside(fmap, (-0.1, 0.1), n_max=20, samples=2000)
    assert fit.lam > 1
    again = expansion_outside(fmap, (-0.1, 0.1), n_max=20, samples=2000)
    assert again == fit


def test_statistics(nest19):
    st = nest_statistics_check(nest19)
    assert st.additivity_checked > 0 and st.additivity_failures == ()
    assert all(ok for *_, ok in st.v_order)
    assert len(st.inverse_scales) == 3


def test_report_json_roundtrip(nest19):
    rep = nest_report(nest19)
    back = json.loads(json.dumps(rep))
    assert back["schema"] == "nestlab-nest-v1"
    assert len(back["levels"]) == 3
    lv = back["levels"][1]
    ctx = nest19[1].fmap.ctx
    assert ctx.real(lv["I"][1]) == nest19[1].h


def test_branch_budget_flag(nest19):
    assert all("BranchBudget" not in lv.flags for lv in nest19)
    short = build_nest(QuadraticMap("1.9"), kappa=0, depth=2, coverage_target=0.99,
                       max_branches=5)
    assert short[1].coverage < 0.99 and "BranchBudget" in short[1].flags
