import math

import pytest
from gmpy2 import mpfr
from hypothesis import given, settings
from hypothesis import strategies as st

from nestlab.maps import (DomainError, ParameterError, QuadraticMap, conjugate_parameter,
                          parameter_from_conjugate)


def test_parameter_range():
    with pytest.raises(ParameterError):
        QuadraticMap("0.4")
    with pytest.raises(ParameterError):
        QuadraticMap("2.01")
    QuadraticMap("1/2")
    QuadraticMap(2)


def test_chebyshev_values(qmap):
    f = qmap(2)
    assert f.eval(0) == 1 and f.eval(1) == -1 and f.eval(-1) == -1
    assert f.critical_value == 1
    assert f.deriv(-1) == 4
    with pytest.raises(DomainError):
        f.eval("1.5")


def test_boundary_maps_to_boundary(qmap):
    for a in ("0.5", "1.3", "1.9"):
        assert qmap(a).eval(1) == -1 and qmap(a).eval(-1) == -1


def test_fixed_point_closed_form(qmap):
    f = qmap("1.75")
    with f.ctx.local():
        p = (f.param - 1) / f.param
        assert abs(f.eval(p) - p) < 1e-70
        assert abs(f.deriv(p) - 2 * (1 - f.param)) < 1e-70


def test_conjugacy(qmap):
    # y = a x conjugates f_a to y -> a~ - y^2
    f = qmap("1.7")
    at = f.conjugate_parameter
    with f.ctx.local():
        for x in ("-0.9", "0.2", "0.77"):
            x = mpfr(x)
            lhs = f.param * f.eval(x)
            rhs = at - (f.param * x) ** 2
            assert abs(lhs - rhs) < 1e-70
        assert abs(parameter_from_conjugate(at, f.ctx) - f.param) < 1e-70
    assert conjugate_parameter(2) == 2


@given(st.floats(min_value=-1, max_value=1, allow_subnormal=False), st.integers(min_value=1, max_value=30))
@settings(max_examples=40, deadline=None)
def test_log_derivative_matches_product(x, n):
    f = QuadraticMap("1.9")
    orb = f.orbit(x, n)
    if any(p == 0 for p in orb.points):
        return
    log_d, sign = f.log_deriv_product(x, n)
    direct = sum(math.log(float(d)) for d in orb.derivs)
    assert abs(float(log_d) - direct) < 1e-9 * max(1.0, abs(direct))
    neg = sum(1 for p in orb.points if p > 0)
    assert sign == (-1) ** neg


def test_critical_point_derivative(qmap):
    f = qmap("1.8")
    assert f.log_deriv_product(0, 3) == (mpfr("-inf"), 0)
    assert f.deriv_product(0, 3) == 0


def test_equality_and_label(qmap):
    assert qmap("1.8") == qmap("1.8")
    assert qmap("1.8").label == "1.8"
    assert qmap("1.8").with_parameter("1.9").label == "1.9"
