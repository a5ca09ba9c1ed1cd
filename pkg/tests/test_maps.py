import math

import numpy as np
import pytest

from dissiplab.errors import DomainError, NotInvertibleError, ParameterError
from dissiplab.maps import (ArnoldMap, Extension2D, HenonMap, LinearMap,
                            QuadraticMap, TrappingRegion, conjugacy_check,
                            det2, henon_conjugate_parameter, trapping_check)


def test_henon_eval_origin():
    m = HenonMap(1.4, 0.1)
    assert m.eval((0.0, 0.0)) == (1.0, 0.0)


def test_henon_fixed_point_quadratic_formula():
    # oracle: roots of a x^2 + (1+b) x - 1 = 0
    a, b = 1.4, 0.1
    m = HenonMap(a, b)
    roots = np.roots([a, 1.0 + b, -1.0])
    for x in roots:
        p = (float(x), -b * float(x))
        q = m.eval(p)
        assert math.hypot(q[0] - p[0], q[1] - p[1]) < 1e-12
    listed = sorted(x for x, _ in m.fixed_points())
    assert np.allclose(listed, sorted(roots.real), atol=1e-12)


def test_henon_det_jacobian_is_b():
    m = HenonMap(1.4, 0.1)
    rng = np.random.default_rng(0)
    for p in rng.uniform(-2, 2, size=(200, 2)):
        assert det2(m.jacobian(p)) == pytest.approx(m.b, abs=1e-14)


def test_henon_jacobian_at_origin():
    m = HenonMap(1.4, 0.25)
    J = m.jacobian((0.0, 0.0))
    assert np.array_equal(J, np.array([[0.0, 1.0], [-0.25, 0.0]]))


def test_henon_inverse_round_trip():
    m = HenonMap(1.4, 0.1)
    assert np.allclose(m.inverse((1.0, 0.0)), (0.0, 0.0), atol=1e-15)
    S = TrappingRegion.henon_standard(1.4)
    rng = np.random.default_rng(1)
    P = np.column_stack([rng.uniform(S.xmin, S.xmax, 10_000),
                         rng.uniform(S.ymin, S.ymax, 10_000)])
    back = m.inverse_array(m.eval_array(P))
    err = np.hypot(*(back - P).T)
    scale = np.maximum(1.0, np.hypot(*P.T))
    assert (err / scale).max() < 1e-12


def test_henon_b_zero_not_invertible():
    with pytest.raises(NotInvertibleError):
        HenonMap(1.4, 0.0).inverse((1.0, 0.0))


def test_non_finite_input_rejected():
    m = HenonMap(1.4, 0.1)
    with pytest.raises(DomainError):
        m.eval((float("nan"), 0.0))
    with pytest.raises(DomainError):
        m.eval((0.0, float("inf")))


def test_finite_difference_jacobians():
    # central differences, step 1e-6, relative 1e-5
    maps = [HenonMap(1.4, 0.1),
            Extension2D(QuadraticMap(-1.5), 0.05, 0.5),
            LinearMap(0.3, 0.1, -0.2, 0.8)]
    rng = np.random.default_rng(2)
    h = 1e-6
    for m in maps:
        for p in rng.uniform(-0.8, 0.8, size=(333, 2)):
            J = m.jacobian(p)
            fd = np.empty((2, 2))
            for j, e in enumerate(np.eye(2)):
                plus = np.asarray(m.eval(p + h * e, **(
                    {"check": False} if isinstance(m, Extension2D) else {})))
                minus = np.asarray(m.eval(p - h * e, **(
                    {"check": False} if isinstance(m, Extension2D) else {})))
                fd[:, j] = (plus - minus) / (2 * h)
            assert np.abs(J - fd).max() <= 1e-5 * max(1.0, np.abs(J).max())


def test_quadratic_domain_maps_into_interior():
    for c in (-1.99, -1.5, -1.01):
        h = QuadraticMap(c)
        lo, hi = h.domain
        xs = np.linspace(lo, hi, 1001)
        vals = xs ** 2 + c
        assert vals.min() > lo and vals.max() < hi


def test_map1d_derivative_fd():
    rng = np.random.default_rng(3)
    for h in (QuadraticMap(-1.7), ArnoldMap(0.12, 0.3)):
        xs = rng.uniform(-0.9, 0.9, 200)
        step = 1e-6
        for x in xs:
            fd = (h.eval(x + step) - h.eval(x - step)) / (2 * step)
            assert abs(h.deriv(x) - fd) <= 1e-6 * max(1.0, abs(fd))


def test_arnold_lift_commutes_with_deck():
    h = ArnoldMap(0.2, 0.35)
    for x in np.linspace(-1, 2, 50):
        assert h.eval(x + 1.0) == pytest.approx(h.eval(x) + 1.0, abs=1e-12)


def test_extension_b_zero_flattens():
    ext = Extension2D(QuadraticMap(-1.5), 0.0, 0.3)
    rng = np.random.default_rng(4)
    lo, hi = ext.h.domain
    for _ in range(100):
        x = rng.uniform(lo, hi)
        y = rng.uniform(-0.3, 0.3)
        assert ext.eval((x, y))[1] == 0.0


def test_extension_det_jacobian_grid():
    ext = Extension2D(QuadraticMap(-1.5), 0.05, 0.3)
    lo, hi = ext.h.domain
    xs = np.linspace(lo, hi, 100)
    ys = np.linspace(-0.29, 0.29, 100)
    for x in xs:
        for y in (ys[0], ys[50], ys[-1]):
            assert abs(det2(ext.jacobian((x, y))) - ext.b) <= 1e-14
    # full 100x100 via entries
    X, Y = np.meshgrid(xs, ys)
    j11, j12, j21, j22 = ext.jacobian_entries_array(
        np.column_stack([X.ravel(), Y.ravel()]))
    dets = j11 * j22 - j12 * j21
    assert np.abs(dets - ext.b).max() <= 1e-14


def test_extension_matches_reference_formula():
    # second implementation: textbook formula written out independently
    c, b, eps = -1.5, 0.05, 0.4
    ext = Extension2D(QuadraticMap(c), b, eps)
    rng = np.random.default_rng(5)
    lo, hi = ext.h.domain
    for _ in range(200):
        x = rng.uniform(lo, hi)
        y = rng.uniform(-eps, eps)
        hx = x * x + c
        ref = (hx + y, b * hx - b * x + b * y)
        got = ext.eval((x, y))
        assert math.hypot(got[0] - ref[0], got[1] - ref[1]) < 1e-14


def test_extension_inverse_round_trip():
    ext = Extension2D(QuadraticMap(-1.5), 0.05, 0.4)
    rng = np.random.default_rng(6)
    lo, hi = ext.h.domain
    P = np.column_stack([rng.uniform(lo, hi, 1000), rng.uniform(-0.4, 0.4, 1000)])
    F = ext.eval_array(P)
    back = ext.inverse_array(F)
    assert np.hypot(*(back - P).T).max() < 1e-11


def test_extension_domain_errors():
    ext = Extension2D(QuadraticMap(-1.5), 0.05, 0.1)
    with pytest.raises(DomainError):
        ext.eval((5.0, 0.0))
    with pytest.raises(DomainError):
        ext.eval((0.0, 0.5))
    with pytest.raises(ParameterError):
        Extension2D(QuadraticMap(-1.5), 1.5, 0.1)


def test_conjugacy_identity_symbolic():
    # sympy oracle: phi o H_{a,b} = f_b o phi as polynomials
    import sympy as sp
    x, y, b, c = sp.symbols("x y b c")
    a = -b ** 2 / 4 - c - b / 2
    H = (1 - a * x ** 2 + y, -b * x)
    phi = lambda u, v: (-a * u - b / 2, -a * v - a * b * u)
    lhs = phi(*H)
    u, v = phi(x, y)
    h_of_u = u ** 2 + c
    rhs = (h_of_u + v, b * (h_of_u - u + v))
    assert sp.simplify(lhs[0] - rhs[0]) == 0
    assert sp.simplify(lhs[1] - rhs[1]) == 0


@pytest.mark.parametrize("c,b", [(-1.5, 0.1), (-1.2, -0.05)])
def test_conjugacy_check_small_error(c, b):
    assert conjugacy_check(c, b) < 1e-10


def test_conjugacy_check_b_zero_finite():
    err = conjugacy_check(-1.5, 0.0)
    assert math.isfinite(err) and err < 1e-10


def test_conjugacy_parameter_error():
    with pytest.raises(ParameterError):
        conjugacy_check(0.5, 0.1)  # a = -b^2/4 - c - b/2 < 0


def test_trapping_standard_region_corner_tangency():
    # two corners of the exact standard rectangle map onto its boundary,
    # so the exact margin is 0 (up to rounding); any inward shrink makes
    # it strictly positive
    m = HenonMap(1.4, 0.1)
    exact = trapping_check(m, TrappingRegion.henon_standard(1.4), 256)
    assert abs(exact) <= 1e-12
    shrunk = trapping_check(m, TrappingRegion.henon_standard(1.4, shrink=1e-6), 256)
    assert shrunk > 0.0
    # non-corner boundary samples map strictly inside
    reg = TrappingRegion.henon_standard(1.4)
    pts = reg.boundary_samples(64)[:-4]
    img = m.eval_array(pts)
    margins = [reg.signed_distance(q) for q in img]
    assert min(margins) > 1e-3


def test_trapping_identity_map_margin_zero():
    class Identity:
        def eval_array(self, P):
            return np.asarray(P, float)
    reg = TrappingRegion(-1, 1, -1, 1)
    assert trapping_check(Identity(), reg, 64) <= 0.0


def test_trapping_far_square_negative():
    m = HenonMap(1.4, 0.1)
    reg = TrappingRegion(9.5, 10.5, 9.5, 10.5)
    assert trapping_check(m, reg, 64) < 0.0


def test_henon_conjugate_parameter_value():
    assert henon_conjugate_parameter(-1.5, 0.1) == pytest.approx(
        -0.01 / 4 + 1.5 - 0.05, abs=1e-15)
