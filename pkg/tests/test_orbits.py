import math

import numpy as np
import pytest

from dissiplab.errors import NumericalError, ParameterError
from dissiplab.maps import HenonMap, LinearMap, TrappingRegion
from dissiplab.orbits import (EmpiricalMeasure, OrbitSegment, birkhoff_measure,
                              classify_orbit, escape_cone_contains,
                              find_recurrent_return, iterate, lyapunov)


def henon_fixed_point(a, b, which=-1):
    r = math.sqrt((1 + b) ** 2 + 4 * a)
    x = (-(1 + b) + which * r) / (2 * a)
    return (x, -b * x)


def test_iterate_fixed_point_stays():
    m = HenonMap(1.4, 0.1)
    p = henon_fixed_point(1.4, 0.1, +1)
    seg = iterate(m, p, 100)
    d = np.hypot(seg.points[:, 0] - p[0], seg.points[:, 1] - p[1])
    assert d.max() < 1e-10


def test_iterate_zero_steps():
    seg = iterate(HenonMap(1.4, 0.1), (0.3, 0.4), 0)
    assert len(seg.points) == 1
    assert tuple(seg.points[0]) == (0.3, 0.4)


def test_iterate_escape_cone_overflows_early():
    m = HenonMap(1.4, 0.1)
    p = (10.0, 0.0)
    assert escape_cone_contains(p)
    seg = iterate(m, p, 10_000)
    assert seg.overflowed
    assert len(seg.points) < 100


def test_escape_cone_forward_invariant():
    m = HenonMap(1.4, 0.1)
    rng = np.random.default_rng(0)
    xs = rng.uniform(3.001, 50.0, 10_000) * rng.choice([-1.0, 1.0], 10_000)
    ys = xs * rng.uniform(-0.999, 0.999, 10_000)
    for x, y in zip(xs, ys):
        assert escape_cone_contains(m.eval((x, y)))


def test_lyapunov_at_saddle_matches_eigenvalues():
    a, b = 1.4, 0.3
    m = HenonMap(a, b)
    p = m.saddle_fixed_point()
    ev = np.sort(np.abs(np.linalg.eigvals(m.jacobian(p))))
    # frame alignment converges like 1/n at a fixed point
    est = lyapunov(m, p, 100_000)
    assert est.lambda_plus == pytest.approx(math.log(ev[1]), abs=1e-6)
    assert est.lambda_minus == pytest.approx(math.log(ev[0]), abs=1e-6)


def test_lyapunov_sum_equals_log_det():
    m = HenonMap(1.4, -0.1)
    est = lyapunov(m, (0.1, 0.0), 20_000, burn=1000)
    assert est.lambda_minus + est.lambda_plus == pytest.approx(
        math.log(0.1), abs=1e-3)
    assert est.lambda_minus <= est.lambda_plus


def test_lyapunov_sink_both_negative():
    # small a: attracting fixed point
    m = HenonMap(0.3, 0.2)
    est = lyapunov(m, (0.1, 0.0), 3000, burn=500)
    assert est.lambda_plus < 0 and est.lambda_minus < 0


def test_lyapunov_escape_raises():
    with pytest.raises(NumericalError):
        lyapunov(HenonMap(1.4, 0.1), (10.0, 0.0), 1000)


def test_birkhoff_fixed_point_dirac():
    m = HenonMap(1.4, 0.1)
    p = henon_fixed_point(1.4, 0.1, +1)
    mu = birkhoff_measure(m, p, 500, burn=10)
    assert mu.support_diameter() < 1e-9
    assert mu.weights.sum() == pytest.approx(1.0)


def test_birkhoff_period_two_atoms():
    # derived oracle: refine the period-2 cycle by a 2-point Newton solve
    from dissiplab.closing import newton_multiple_shooting
    m = HenonMap(1.4, 0.1)  # the attractor here is the period-2 sink
    seg = iterate(m, (0.1, 0.0), 3000)
    seed = seg.points[-2:]
    Z = newton_multiple_shooting(m, seed)
    assert Z is not None
    mu = birkhoff_measure(m, tuple(Z[0]), 1001, burn=0)
    d0 = np.hypot(mu.points[:, 0] - Z[0, 0], mu.points[:, 1] - Z[0, 1])
    d1 = np.hypot(mu.points[:, 0] - Z[1, 0], mu.points[:, 1] - Z[1, 1])
    atom0 = (d0 < 1e-8).mean()
    atom1 = (d1 < 1e-8).mean()
    assert atom0 == pytest.approx(0.5, abs=1e-3)
    assert atom1 == pytest.approx(0.5, abs=1e-3)


def test_birkhoff_support_in_trapping_region():
    m = HenonMap(1.4, -0.1)
    S = TrappingRegion.henon_standard(1.4)
    mu = birkhoff_measure(m, (0.1, 0.0), 100_000, burn=1000)
    assert S.contains_array(mu.points).all()


def test_recurrent_return_fixed_point():
    m = HenonMap(1.4, 0.1)
    seg = iterate(m, henon_fixed_point(1.4, 0.1, +1), 50)
    assert find_recurrent_return(seg, 1e-6) == (0, 1)


def test_recurrent_return_period_three():
    # rotation by 2pi/3: exact period-3 orbit
    ang = 2 * math.pi / 3
    rot = LinearMap(math.cos(ang), -math.sin(ang), math.sin(ang), math.cos(ang))
    seg = iterate(rot, (1.0, 0.0), 30)
    i, n = find_recurrent_return(seg, 1e-9)
    assert (i, n) == (0, 3)


def test_recurrent_return_divides_true_period():
    ang = 2 * math.pi / 5
    rot = LinearMap(math.cos(ang), -math.sin(ang), math.sin(ang), math.cos(ang))
    seg = iterate(rot, (1.0, 0.0), 40)
    i, n = find_recurrent_return(seg, 0.3)
    assert n == 5 or 5 % n == 0


def test_recurrent_return_escape_none():
    seg = iterate(HenonMap(1.4, 0.1), (10.0, 0.0), 100)
    assert find_recurrent_return(seg, 1e-3) is None


def test_recurrent_return_hash_matches_naive():
    m = HenonMap(1.4, -0.1)
    seg = iterate(m, (0.1, 0.0), 12_000)
    # > 10^4 points triggers the grid hash; the truncated naive scan must
    # agree when its answer is within the truncation
    res_hash = find_recurrent_return(seg, 0.01)
    short = OrbitSegment(seg.points[:10_000], 9_999)
    res_naive = find_recurrent_return(short, 0.01)
    assert res_hash == res_naive


def test_classify_orbit_trichotomy():
    m = HenonMap(1.4, 0.1)
    assert classify_orbit(m, (10.0, 0.0)).tag == "Escapes"
    p = henon_fixed_point(1.4, 0.1, -1)
    assert -3 < p[0] < -(0.5 + 1 / 1.4)
    assert classify_orbit(m, p).tag == "ConvergesToFixedPoint"
    assert classify_orbit(m, (0.0, 0.0)).tag == "EntersTrappingRegion"


def test_classify_orbit_parameter_checks():
    with pytest.raises(ParameterError):
        classify_orbit(HenonMap(2.5, 0.1), (0.0, 0.0))
    with pytest.raises(ParameterError):
        classify_orbit(HenonMap(1.4, 0.0), (0.0, 0.0))
