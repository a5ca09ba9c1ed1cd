import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dissiplab.errors import ParameterError
from dissiplab.maps import HenonMap, LinearMap, TrappingRegion
from dissiplab.orbits import birkhoff_measure, iterate
from dissiplab.pliss import (CriticalReport, MinSlopeResult, PlissParams,
                             RateConstants, VERTICAL_SLOPE_SENTINEL,
                             block_fraction, block_measure_bound, certify,
                             constants_from_exponents, critical_fraction,
                             estimate_E, min_slope, p1_constants, pliss_times,
                             verify_p1_chain)
from dissiplab.dissipation import jacobian_extremes


def brute_force_pliss(values, alpha3):
    """All-window oracle: m is a time iff every forward window mean <= a3."""
    a = np.asarray(values, float)
    L = len(a)
    out = []
    for m in range(L):
        ok = True
        for n in range(m + 1, L + 1):
            if np.sum(a[m:n]) > (n - m) * alpha3:
                ok = False
                break
        if ok:
            out.append(m)
    return np.asarray(out, dtype=int)


def test_constant_sequence_every_index():
    params = PlissParams(-1.0, 0.0, 0.5)
    res = pliss_times(np.zeros(100), params)
    assert list(res.indices) == list(range(100))
    assert res.realized_density == pytest.approx(100 / 99)


def test_handcrafted_matches_brute_force():
    a = np.array([0.5, -1.0, 0.25, 0.25, -2.0, 0.5, -0.5, 0.0, -0.125, -0.75])
    params = PlissParams(-3.0, -0.2, 0.0)
    res = pliss_times(a, params)
    assert np.array_equal(res.indices, brute_force_pliss(a, 0.0))


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(min_value=-12, max_value=6), min_size=1, max_size=200))
def test_pliss_property_matches_oracle(ints):
    # eighths are exact in binary: ties are decided identically by both paths
    a = np.asarray(ints, float) / 8.0
    alpha3 = 0.25
    alpha1 = a.min() - 0.125
    alpha2 = max(a.mean(), alpha1 + 0.0625)
    if not alpha2 < alpha3:
        alpha2 = (alpha1 + alpha3) / 2 if alpha1 + 0.0625 < alpha3 else alpha3 - 0.03125
        if a.mean() > alpha2:
            return  # precondition cannot be met for this draw
    params = PlissParams(alpha1, alpha2, alpha3)
    res = pliss_times(a, params)
    assert np.array_equal(res.indices, brute_force_pliss(a, alpha3))


def test_pliss_window_inequality_holds_exactly():
    rng = np.random.default_rng(0)
    a = rng.uniform(-0.9, 0.5, 5000)
    params = PlissParams(-1.0, -0.1, 0.0)
    res = pliss_times(a, params)
    S = np.concatenate([[0.0], np.cumsum(a - params.alpha3)])
    for m in res.indices[:200]:
        assert (S[m + 1:] <= S[m] + 1e-9).all()


def test_pliss_density_bound_iid():
    rng = np.random.default_rng(1)
    a = rng.uniform(-0.9, 0.5, 100_000)  # mean -0.2
    params = PlissParams(-1.0, -0.19, 0.0)
    res = pliss_times(a, params)
    assert res.realized_density >= params.density_bound - 0.02


def test_pliss_preconditions():
    params = PlissParams(-1.0, 0.0, 1.0)
    with pytest.raises(ParameterError):
        pliss_times(np.array([-2.0, 0.0]), params)  # value <= alpha1
    with pytest.raises(ParameterError):
        pliss_times(np.array([0.9, 0.9]), params)  # mean > alpha2
    assert len(pliss_times(np.array([]), params)) == 0
    with pytest.raises(ParameterError):
        PlissParams(0.0, 0.0, 1.0)


def test_p1_constants_valid_case():
    c = p1_constants(0.01, 0.02)
    assert c.valid  # 0.02^0.9 ~ 0.0296 > 0.01
    assert c.sigma == pytest.approx(0.01 ** 0.8)
    assert c.sigma_tilde == 0.02
    assert c.rho == pytest.approx(0.01 ** 0.75)
    assert c.rho_tilde == pytest.approx(0.02 ** 2 / 0.01)
    assert c.pinching_ok
    # extended-precision chain
    assert verify_p1_chain(0.01, 0.02)


def test_p1_constants_boundary_invalid():
    m = 0.02
    D = m ** 0.9
    assert not p1_constants(D, m).valid


def test_p1_constants_parameter_errors():
    with pytest.raises(ParameterError):
        p1_constants(-0.1, 0.1)
    with pytest.raises(ParameterError):
        p1_constants(1.2, 0.1)


def test_block_measure_bound_rationals():
    b = block_measure_bound()
    assert b == Fraction(41, 238)
    assert b > Fraction(1, 6)
    assert Fraction(9, 14) + Fraction(9, 17) - 1 == Fraction(41, 238)


def test_certify_linear_pass_and_fail():
    s, u = 0.5, 2.0
    m = LinearMap.diagonal(s, u)
    cons = RateConstants(sigma=0.51, sigma_tilde=0.49, rho=0.26, rho_tilde=0.24)
    pts = iterate(m, (1.0, 0.0), 60).points
    cert = certify(m, pts, np.array([1.0, 0.0]), cons, 50)
    assert cert.passed and cert.first_fail_n is None
    cert_bad = certify(m, pts, np.array([0.0, 1.0]), cons, 50)
    assert not cert_bad.passed and cert_bad.first_fail_n == 1


def test_certify_saddle_matches_eigen_comparison():
    m = HenonMap(1.4, 0.3)
    p = m.saddle_fixed_point()
    ev, V = np.linalg.eig(m.jacobian(p))
    i_s = int(np.argmin(np.abs(ev)))
    E = V[:, i_s].real
    mu_s = abs(ev[i_s])
    mu_u = abs(ev[1 - i_s])
    # the fixed-point orbit is constant (iterating amplifies the rounding
    # of p along the unstable direction)
    pts = np.tile(p, (61, 1))
    rr = mu_s * mu_s / (mu_s * mu_u)
    good = RateConstants(sigma=mu_s * 1.1, sigma_tilde=mu_s * 0.9,
                         rho=rr * 1.1, rho_tilde=rr * 0.9)
    assert certify(m, pts, E, good, 40).passed
    # sigma below the true rate: eigen-comparison predicts failure
    bad = RateConstants(sigma=mu_s * 0.99, sigma_tilde=mu_s * 0.5,
                        rho=rr * 1.1, rho_tilde=rr * 0.9)
    assert not certify(m, pts, E, bad, 40).passed


def test_certify_monotone_in_constants():
    m = HenonMap(1.4, -0.1)
    seg = iterate(m, (0.53, -0.06), 30)
    E, _ = estimate_E(m, seg.points, 20)
    base = constants_from_exponents(-2.62, 0.317, up=0.45, down=0.62)
    wide = RateConstants(sigma=base.sigma * 1.2, sigma_tilde=base.sigma_tilde * 0.8,
                         rho=base.rho * 1.2, rho_tilde=base.rho_tilde * 0.8)
    for N in (3, 6, 10):
        if certify(m, seg.points, E, base, N).passed:
            assert certify(m, seg.points, E, wide, N).passed


def test_estimate_E_diagonal_exact():
    m = LinearMap.diagonal(0.5, 2.0)
    pts = iterate(m, (0.3, 0.4), 20).points
    E, degen = estimate_E(m, pts, 10)
    assert not degen
    assert abs(E[1]) < 1e-12 and abs(abs(E[0]) - 1.0) < 1e-12


def test_estimate_E_saddle_matches_eigenvector():
    m = HenonMap(1.4, 0.3)
    p = m.saddle_fixed_point()
    ev, V = np.linalg.eig(m.jacobian(p))
    vs = V[:, int(np.argmin(np.abs(ev)))].real
    vs = vs / np.hypot(*vs)
    pts = iterate(m, p, 80).points
    E, degen = estimate_E(m, pts, 40)
    assert not degen
    ang = math.acos(min(1.0, abs(float(E @ vs))))
    assert ang < 1e-6


def test_estimate_E_converges_with_window():
    m = HenonMap(1.4, 0.3)
    pts = iterate(m, m.saddle_fixed_point(), 100).points
    E1, _ = estimate_E(m, pts, 20)
    E2, _ = estimate_E(m, pts, 40)
    ang = math.acos(min(1.0, abs(float(E1 @ E2))))
    assert ang < 1e-4


def test_estimate_E_rotation_degenerate():
    ang = 0.7
    rot = LinearMap(math.cos(ang), -math.sin(ang), math.sin(ang), math.cos(ang))
    pts = iterate(rot, (1.0, 0.0), 20).points
    _, degen = estimate_E(rot, pts, 10)
    assert degen


def test_block_fraction_dirac_saddle():
    from dissiplab.orbits import EmpiricalMeasure
    m = HenonMap(1.4, 0.3)
    p = m.saddle_fixed_point()
    ev = np.sort(np.abs(np.linalg.eigvals(m.jacobian(p))))
    mu_s, mu_u = ev
    rr = mu_s / mu_u
    cons = RateConstants(sigma=mu_s * 1.1, sigma_tilde=mu_s * 0.9,
                         rho=rr * 1.1, rho_tilde=rr * 0.9)
    measure = EmpiricalMeasure(np.tile(p, (50, 1)), 0)
    # windows short enough that the unstable drift of the rounded fixed
    # point (~1e-16 * mu_u^n) stays far below the certificate bands
    assert block_fraction(m, measure, cons, N=8, n_back=14) == 1.0


def test_block_fraction_sink_zero_for_exacting_constants():
    m = HenonMap(0.3, 0.2)  # attracting fixed point
    measure = birkhoff_measure(m, (0.1, 0.0), 50, burn=500)
    # constants demanding strong pinching the sink does not have
    cons = RateConstants(sigma=0.05, sigma_tilde=0.01, rho=0.05, rho_tilde=0.01)
    assert block_fraction(m, measure, cons, N=10, n_back=20) == 0.0


@pytest.mark.slow
def test_block_fraction_exceeds_one_sixth_with_derived_constants():
    # the derived constants are not pinched at this Jacobian, but both
    # certificate chains hold on a large fraction of the attractor
    m = HenonMap(1.4, -0.05)
    S = TrappingRegion.henon_standard(1.4)
    D, m_co, _, _ = jacobian_extremes(m, S, grid_n=256)
    cons = p1_constants(D, m_co)
    assert not cons.valid  # pinching needs far smaller |b|
    measure = birkhoff_measure(m, (0.1, 0.0), 20_000, burn=2000)
    frac = block_fraction(m, measure, cons, N=10, n_back=20, sample_k=300,
                          rng=np.random.default_rng(0))
    assert frac > 1.0 / 6.0


def test_critical_fraction_no_critical_points():
    from dissiplab.maps import ArnoldMap, Extension2D
    ext = Extension2D(ArnoldMap(0.05, 0.3), 0.01, 0.05)
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(0, 1, 200), rng.uniform(-0.04, 0.04, 200)])
    from dissiplab.orbits import EmpiricalMeasure
    mu = EmpiricalMeasure(pts, 0)
    rep = critical_fraction(ext, 0.3, mu)
    assert rep.fraction == 0.0  # |Dh| >= 1 - 2*pi*0.05 > 0.3 everywhere


def test_critical_fraction_strip_count():
    from dissiplab.maps import Extension2D, QuadraticMap
    ext = Extension2D(QuadraticMap(-1.5), 0.01, 0.05)
    m = birkhoff_measure(ext, (0.3, 0.0), 5000, burn=100)
    delta = 0.3
    rep = critical_fraction(ext, delta, m)
    direct = float(np.mean(np.abs(2.0 * m.points[:, 0]) <= delta))
    assert rep.fraction == pytest.approx(direct, abs=1e-12)
    assert rep.choice_lhs > 0


def test_critical_fraction_sink_inside_strip():
    from dissiplab.maps import Extension2D, QuadraticMap
    from dissiplab.orbits import EmpiricalMeasure, lyapunov
    # c = -0.5: attracting fixed point near the critical line
    ext = Extension2D(QuadraticMap(-0.5), 0.01, 0.2)
    fp = (1 - math.sqrt(3)) / 2  # x^2 - 0.5 = x, attracting root
    mu = EmpiricalMeasure(np.tile([fp, 0.0], (10, 1)), 0)
    rep = critical_fraction(ext, 2.1 * abs(fp), mu)
    assert rep.fraction == 1.0
    est = lyapunov(ext, (fp + 1e-3, 0.0), 2000, burn=100)
    assert est.lambda_plus < 0  # the lemma's exponent hypothesis fails here


def test_critical_fraction_delta_validation():
    from dissiplab.maps import Extension2D, QuadraticMap
    from dissiplab.orbits import EmpiricalMeasure
    ext = Extension2D(QuadraticMap(-1.5), 0.01, 0.05)
    mu = EmpiricalMeasure(np.zeros((5, 2)), 0)
    with pytest.raises(ParameterError):
        critical_fraction(ext, -1.0, mu)


def test_min_slope_cases():
    assert min_slope([]) is None
    r = min_slope([np.array([1.0, 1.0])])
    assert r.value == pytest.approx(1.0)
    r = min_slope([np.array([0.0, 1.0]), np.array([1.0, 2.0])])
    assert r.any_vertical and r.value == pytest.approx(2.0)
    only_vert = min_slope([np.array([0.0, -3.0])])
    assert only_vert.value == VERTICAL_SLOPE_SENTINEL


def test_constants_from_exponents_budget():
    with pytest.raises(ParameterError):
        constants_from_exponents(-1.0, 0.3, up=0.4, down=0.4)  # budget blown
    c = constants_from_exponents(-2.6, 0.3, up=0.45, down=0.62)
    assert c.pinching_ok
