import math

import numpy as np
import pytest

from nestlab.numerics import RealInterval
from nestlab.orbitstats import (CriticalHit, acim_histogram, autocorrelation, birkhoff_average,
                                ce_exponent, recurrence_exponent, ulam_bin_density)

GOLDEN = "1.6180339887498948482045868343656381177203091798057628621354486227"


def test_ce_chebyshev_constant(qmap):
    rep = ce_exponent(qmap(2), n_max=100)
    assert len(rep.series) == 100
    assert all(abs(v - math.log(4)) < 1e-12 for _, v in rep.series)
    assert abs(rep.liminf_proxy - math.log(4)) < 1e-12


def test_ce_sink_is_negative(qmap):
    rep = ce_exponent(qmap("0.75"), n_max=200)
    # sink multiplier 2(1 - a) = 0.5; the average converges slowly to ln 0.5
    assert rep.liminf_proxy < 0
    assert abs(rep.series[-1][1] - math.log(0.5)) < 0.05


def test_superstable_hits(qmap):
    with pytest.raises(CriticalHit) as e:
        ce_exponent(qmap(GOLDEN), n_max=10)
    assert e.value.n == 2
    with pytest.raises(CriticalHit) as e:
        recurrence_exponent(qmap(GOLDEN), n_max=10)
    assert e.value.n == 2


def test_recurrence_proxy_stationary_orbits(qmap):
    for a in (2, "0.75"):
        r1 = recurrence_exponent(qmap(a), n_max=100)
        r2 = recurrence_exponent(qmap(a), n_max=200)
        assert r1.exponent_proxy == 0 and r2.exponent_proxy == 0
    rep = recurrence_exponent(qmap(2), n_max=50, alpha=0.1)
    # |f^n(0)| = 1 so the margin is exactly e^{alpha n}
    assert all(abs(m - math.exp(0.1 * n)) < 1e-9 * math.exp(0.1 * n) for n, m in rep.subexp_margins)


def test_recurrence_input_checks(qmap):
    with pytest.raises(ValueError):
        recurrence_exponent(qmap(2), n_max=5)
    with pytest.raises(ValueError):
        recurrence_exponent(qmap(2), alpha=0)
    with pytest.raises(ValueError):
        ce_exponent(qmap(2), n_max=9)


def test_recurrent_parameter_has_positive_proxy(qmap):
    assert recurrence_exponent(qmap("1.9"), n_max=1000).exponent_proxy > 0


def test_birkhoff(qmap):
    assert abs(birkhoff_average(qmap(2), 0.3, "identity", 10**6)) < 0.01
    assert birkhoff_average(qmap("1.3"), 0.1, (-1, 1), 1000) == 1.0
    assert birkhoff_average(qmap("1.3"), 0.1, RealInterval(-1, 1), 1000) == 1.0
    assert abs(birkhoff_average(qmap("0.75"), 0.2, "identity", 10**4) + 1 / 3) < 1e-3


def test_autocorrelation(qmap):
    ac = autocorrelation(qmap(2), 0.3, range(0, 6), N=10**6)
    vals = dict(ac.values)
    assert vals[0] == 1.0
    assert all(abs(vals[k]) < 0.01 for k in range(1, 6))
    sink = autocorrelation(qmap("0.75"), 0.2, [1], N=10**4)
    assert sink.degenerate and "DegenerateVariance" in sink.flags


def test_histogram_normalized_and_sink(qmap):
    h = acim_histogram(qmap("1.9"), 0.1, bins=50, N=10**5)
    assert abs(h.total_mass - 1) < 1e-12
    s = acim_histogram(qmap("0.75"), 0.2, bins=100, N=10**4)
    k = int(np.argmax(s.density))
    assert s.edges[k] <= -1 / 3 <= s.edges[k + 1]
    assert s.density[k] * s.widths[k] > 0.99
    empty = acim_histogram(qmap(2), 0.1, N=0)
    assert empty.flags == ("EmptyOrbit",) and not empty.density.any()


def test_ulam_density_mass():
    edges = np.linspace(-1, 1, 11)
    assert abs(np.sum(ulam_bin_density(edges) * np.diff(edges)) - 1) < 1e-12
