import math

import numpy as np
import pytest

from dissiplab.errors import ConstructionError
from dissiplab.geometry import (clip_polyline_to_polygon, displacement_degree,
                                ensure_ccw, point_in_polygon, points_in_polygon,
                                polygon_area, polygon_diameter, polyline_length,
                                polyline_min_distance, polyline_self_intersects,
                                resample_polyline, sample_polygon_interior,
                                segment_intersection, split_polygon_by_arc)

SQUARE = np.array([(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)])


def test_point_in_polygon_basics():
    assert point_in_polygon((0.0, 0.0), SQUARE)
    assert not point_in_polygon((2.0, 0.0), SQUARE)
    pts = np.array([(0.5, 0.5), (1.5, 0.0), (-0.99, -0.99), (0.0, 1.5)])
    assert list(points_in_polygon(pts, SQUARE)) == [True, False, True, False]


def test_polygon_area_and_orientation():
    assert polygon_area(SQUARE) == pytest.approx(4.0)
    assert polygon_area(ensure_ccw(SQUARE[::-1])) == pytest.approx(4.0)


def test_segment_intersection():
    t, u, p = segment_intersection((-1, 0), (1, 0), (0, -1), (0, 1))
    assert t == pytest.approx(0.5) and u == pytest.approx(0.5)
    assert np.allclose(p, (0, 0))
    assert segment_intersection((-1, 0), (1, 0), (-1, 1), (1, 1)) is None


def test_split_square_by_vertical_arc():
    arc = np.array([(0.25, -1.0), (0.25, 0.0), (0.25, 1.0)])
    a, b = split_polygon_by_arc(SQUARE, arc)
    areas = sorted([abs(polygon_area(a)), abs(polygon_area(b))])
    assert areas[0] == pytest.approx(1.5, abs=1e-12)
    assert areas[1] == pytest.approx(2.5, abs=1e-12)
    # the two sides partition the square
    assert areas[0] + areas[1] == pytest.approx(4.0, abs=1e-12)


def test_split_by_curved_arc():
    xs = np.linspace(-1, 1, 41)
    arc = np.column_stack([xs, 0.3 * np.sin(math.pi * xs)])
    a, b = split_polygon_by_arc(SQUARE, arc)
    assert abs(abs(polygon_area(a)) + abs(polygon_area(b)) - 4.0) < 1e-9
    # point membership is consistent with the cut
    assert point_in_polygon((0.0, 0.9), a) != point_in_polygon((0.0, 0.9), b)
    assert point_in_polygon((0.0, -0.9), a) != point_in_polygon((0.0, -0.9), b)


def test_clip_polyline_components():
    line = np.array([(-2.0, 0.0), (-0.5, 0.0), (0.5, 0.0), (2.0, 0.0)])
    comps = clip_polyline_to_polygon(line, SQUARE)
    assert len(comps) == 1
    comp = comps[0]
    assert comp[0] == pytest.approx([-1.0, 0.0])
    assert comp[-1] == pytest.approx([1.0, 0.0])
    # a polyline weaving in and out gives several components
    ys = np.array([0.0, 1.5, 0.0, 1.5, 0.0])
    xs = np.linspace(-0.8, 0.8, 5)
    comps = clip_polyline_to_polygon(np.column_stack([xs, ys]), SQUARE)
    assert len(comps) == 3


def test_polyline_min_distance():
    a = np.array([(0.0, 0.0), (1.0, 0.0)])
    b = np.array([(0.0, 0.5), (1.0, 0.5)])
    assert polyline_min_distance(a, b) == pytest.approx(0.5)
    c = np.array([(0.5, -1.0), (0.5, 1.0)])
    assert polyline_min_distance(a, c) == pytest.approx(0.0)


def test_polyline_self_intersection():
    bow = np.array([(0, 0), (1, 1), (1, 0), (0, 1)], dtype=float)
    assert polyline_self_intersects(bow)
    arc = np.column_stack([np.linspace(0, 1, 20), np.linspace(0, 1, 20) ** 2])
    assert not polyline_self_intersects(arc)


def test_displacement_degree_linear_fields():
    loop = np.vstack([SQUARE, SQUARE[:1]])
    # f(p) = 2p: displacement p has degree 1 around the origin
    assert displacement_degree(lambda P: P.copy(), loop) == 1
    # constant field: degree 0
    assert displacement_degree(lambda P: np.tile([1.0, 0.3], (len(P), 1)), loop) == 0
    # hyperbolic displacement (x, -y): degree -1
    assert displacement_degree(lambda P: np.column_stack([P[:, 0], -P[:, 1]]), loop) == -1


def test_displacement_degree_refines_coarse_loops():
    loop = np.vstack([SQUARE, SQUARE[:1]])
    # rapidly rotating field still counted right thanks to refinement
    def field(P):
        ang = 3.0 * np.arctan2(P[:, 1], P[:, 0])
        return np.column_stack([np.cos(ang), np.sin(ang)])
    assert displacement_degree(field, loop) == 3


def test_displacement_degree_zero_on_loop_rejected():
    loop = np.vstack([SQUARE, SQUARE[:1]])
    with pytest.raises(ConstructionError):
        displacement_degree(lambda P: np.zeros_like(P), loop)


def test_resample_and_length():
    line = np.array([(0.0, 0.0), (1.0, 0.0)])
    out = resample_polyline(line, 0.1)
    assert polyline_length(out) == pytest.approx(1.0)
    assert np.hypot(*np.diff(out, axis=0).T).max() <= 0.1 + 1e-12


def test_sample_polygon_interior():
    rng = np.random.default_rng(0)
    pts = sample_polygon_interior(SQUARE, 50, rng)
    assert len(pts) == 50
    assert points_in_polygon(pts, SQUARE).all()


def test_polygon_diameter():
    assert polygon_diameter(SQUARE) == pytest.approx(2 * math.sqrt(2))
