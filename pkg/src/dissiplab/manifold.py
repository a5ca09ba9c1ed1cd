"""Local stable curves by a backward graph transform through the scaled
charts, and global stable branches grown by inverse iteration.

The local curve at the window base is computed by pulling a horizontal
graph back through the chart maps h_n (Newton on the graph ordinate with
the analytic chart Jacobian, bisection fallback), re-graphing over the
horizontal axis at each step.  Branches are then grown with
W^s(x) = union over n of f^{-n}(local curve at f^n(x)), refined adaptively
and clipped to the region of interest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .charts import ChartSequence
from .errors import ConstructionError, NumericalError
from .geometry import polyline_length, polyline_self_intersects

__all__ = [
    "StableCurve",
    "StableBranchPair",
    "local_stable_curve",
    "grow_branches",
    "f_of_S_membership",
]


@dataclass
class StableCurve:
    base: tuple
    E: np.ndarray
    polyline: np.ndarray          # plane points, center at index `center`
    center: int
    r0: float                     # min plane arclength of the two halves
    C: float                      # forward decay constants: len(f^n) <= C e^{-lam n}
    lam: float
    charts: ChartSequence
    chart_graphs: list            # (T, Y, width) per chart index 0..N
    tangent: np.ndarray

    @property
    def tangent_angle_to_E(self) -> float:
        d = abs(float(self.tangent @ self.E))
        return math.acos(min(1.0, d))

    def arclength_samples(self):
        seg = np.hypot(*(np.diff(self.polyline, axis=0).T))
        s = np.concatenate([[0.0], np.cumsum(seg)])
        return s - s[self.center]


@dataclass
class StableBranchPair:
    base: tuple
    plus: np.ndarray
    minus: np.ndarray
    exit_plus: bool
    exit_minus: bool
    pullbacks: int

    @property
    def length_plus(self):
        return polyline_length(self.plus)

    @property
    def length_minus(self):
        return polyline_length(self.minus)

    def full_arc(self):
        """Single polyline minus-branch (reversed) + base + plus-branch."""
        return np.vstack([self.minus[::-1], self.plus[1:]])

    def as_dict(self):
        return {"x": self.base[0], "y": self.base[1],
                "exit_plus": self.exit_plus, "exit_minus": self.exit_minus,
                "length_plus": self.length_plus, "length_minus": self.length_minus,
                "pullbacks": self.pullbacks}


def _pullback_graph(m_map, charts, n, graph_next, width, grid, slope_cap):
    """Solve for the chart-n graph whose h_n-image lies on graph_{n+1}.

    Newton on the ordinate s per grid point t (vectorized), tolerance
    1e-12 relative to the chart width, bisection fallback.  Returns
    (T, Y) or None when the solve leaves the next chart's domain.
    """
    Tn1, Yn1, wn1 = graph_next
    T = np.linspace(-width, width, grid)
    S = np.zeros_like(T)
    phi_slope = np.gradient(Yn1, Tn1) if len(Tn1) > 1 else np.zeros_like(Tn1)
    tol = 1e-12 * max(width, 1e-300)

    def F(Svec):
        Z = np.column_stack([T, Svec])
        Znext = charts.chart_map(m_map, n, Z)
        u, v = Znext[:, 0], Znext[:, 1]
        G = v - np.interp(u, Tn1, Yn1)
        DH = charts.chart_map_jacobian(m_map, n, Z)
        dslope = np.interp(u, Tn1, phi_slope)
        dG = DH[:, 1, 1] - dslope * DH[:, 0, 1]
        return G, dG, u

    converged = np.zeros(len(T), dtype=bool)
    for _ in range(20):
        G, dG, u = F(S)
        bad = np.abs(dG) < 1e-300
        if bad.any():
            return None
        step = G / dG
        S_new = np.clip(S - step, -width, width)
        converged = np.abs(S_new - S) <= tol
        S = S_new
        if converged.all():
            break
    if not converged.all():
        # bisection fallback on the unconverged ordinates (G monotone in s:
        # the vertical chart multiplier dominates)
        for i in np.nonzero(~converged)[0]:
            lo, hi = -width, width
            glo = _scalar_G(m_map, charts, n, T[i], lo, Tn1, Yn1)
            ghi = _scalar_G(m_map, charts, n, T[i], hi, Tn1, Yn1)
            if glo == ghi or (glo < 0) == (ghi < 0):
                return None
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                gm = _scalar_G(m_map, charts, n, T[i], mid, Tn1, Yn1)
                if (gm < 0) == (glo < 0):
                    lo, glo = mid, gm
                else:
                    hi = mid
                if hi - lo <= tol:
                    break
            S[i] = 0.5 * (lo + hi)
    # validity: image abscissa must stay inside the next chart's graph domain
    G, dG, u = F(S)
    if np.abs(u).max() > wn1 * (1 + 1e-9):
        return None
    if len(T) > 1:
        slopes = np.gradient(S, T)
        if np.abs(slopes).max() > slope_cap:
            return None
    return T, S


def _scalar_G(m_map, charts, n, t, s, Tn1, Yn1):
    Z = np.array([[t, s]])
    Znext = charts.chart_map(m_map, n, Z)
    return float(Znext[0, 1] - np.interp(Znext[0, 0], Tn1, Yn1))


def local_stable_curve(m_map, charts: ChartSequence, eta: float = 0.1,
                       grid: int = 129, slope_cap: float = 1.0,
                       min_width_factor: float = 1e-6) -> StableCurve:
    """Backward graph transform over the certified window.  Starts from the
    horizontal axis segment in the final chart and pulls back step by step;
    shrinks the chart width and retries when the graph leaves the chart or
    the slope cap; fails below min_width_factor of the chart radius."""
    N = charts.N
    w = charts.r[N] / math.sqrt(2.0)
    graphs = [None] * (N + 1)
    T = np.linspace(-w, w, grid)
    graphs[N] = (T, np.zeros_like(T), w)
    for n in range(N - 1, -1, -1):
        width = charts.r[n] / math.sqrt(2.0)
        attempt = 0
        while True:
            res = _pullback_graph(m_map, charts, n, graphs[n + 1], width, grid,
                                  slope_cap)
            if res is not None:
                graphs[n] = (res[0], res[1], width)
                break
            width *= 0.5
            attempt += 1
            if width < min_width_factor * charts.r[n] or attempt > 60:
                raise NumericalError(
                    f"graph transform lost the cone at chart {n}; "
                    f"residual width {width:.3g} of radius {charts.r[n]:.3g}")

    T0, Y0, w0 = graphs[0]
    poly = charts.chart_to_plane(0, np.column_stack([T0, Y0]))
    center = len(T0) // 2
    poly[center] = charts.points[0]  # t = 0 is the base point exactly
    slope0 = float(np.gradient(Y0, T0)[center]) if len(T0) > 1 else 0.0
    tangent = charts.frames[0] @ np.array([1.0 / charts.A[0],
                                           slope0 / (charts.A[0] * charts.B[0])])
    tangent /= math.hypot(*tangent)
    E = charts.frames[0][:, 0]
    ang = math.acos(min(1.0, abs(float(tangent @ E))))
    if ang > eta:
        raise NumericalError(f"curve tangent {ang:.3g} rad from E exceeds eta={eta}")

    r0 = min(polyline_length(poly[:center + 1]), polyline_length(poly[center:]))

    # forward decay constants measured on the computed curve
    lam = -math.log(charts.lam1)
    lengths = []
    cur = poly.copy()
    for n in range(N + 1):
        lengths.append(polyline_length(cur))
        cur = m_map.eval_array(cur)
    C = max(l * math.exp(lam * n) for n, l in enumerate(lengths)) * (1 + 1e-9)

    return StableCurve(base=(float(charts.points[0, 0]), float(charts.points[0, 1])),
                       E=E.copy(), polyline=poly, center=center, r0=r0,
                       C=C, lam=lam, charts=charts, chart_graphs=graphs,
                       tangent=tangent)


def forward_lengths(m_map, curve: StableCurve, n: int):
    out = []
    cur = curve.polyline.copy()
    for _ in range(n + 1):
        out.append(polyline_length(cur))
        cur = m_map.eval_array(cur)
    return out


def _half_polylines(charts, graphs, k):
    """Plane polylines of the chart-k graph halves (t >= 0 and t <= 0),
    both starting at the orbit point x_k."""
    T, Y, _ = graphs[k]
    c = len(T) // 2
    Z = np.column_stack([T, Y])
    plane = charts.chart_to_plane(k, Z)
    plane[c] = charts.points[k]
    plus = plane[c:]
    minus = plane[c::-1]
    return plus.copy(), minus.copy()


def _refine_pullback(m_map, source, box, h_max, turn_max=0.05, budget=20000,
                     max_sweeps=48):
    """Image of `source` under f^{-1} with source-midpoint refinement until
    segment lengths stay below h_max and turning angles below turn_max.
    The image polyline is truncated at its first exit from the safety
    `box` (xmin, xmax, ymin, ymax)."""
    src = np.asarray(source, float)
    img = m_map.inverse_array(src)
    for _ in range(max_sweeps):
        if len(src) >= budget:
            break
        d = np.hypot(*(np.diff(img, axis=0).T))
        need = d > h_max
        if turn_max is not None and len(img) > 2:
            u = np.diff(img, axis=0)
            nu = np.hypot(u[:, 0], u[:, 1])
            cosang = np.einsum("ij,ij->i", u[:-1], u[1:]) / np.maximum(nu[:-1] * nu[1:], 1e-300)
            big = np.arccos(np.clip(cosang, -1.0, 1.0)) > turn_max
            sig = d > 1e-3 * h_max
            need[:-1] |= big & sig[:-1]
            need[1:] |= big & sig[1:]
        sd = np.hypot(*(np.diff(src, axis=0).T))
        need &= sd > 1e-13
        if not need.any():
            break
        ins = np.nonzero(need)[0]
        mid_src = 0.5 * (src[ins] + src[ins + 1])
        mid_img = m_map.inverse_array(mid_src)
        src = np.insert(src, ins + 1, mid_src, axis=0)
        img = np.insert(img, ins + 1, mid_img, axis=0)
    xmin, xmax, ymin, ymax = box
    outside = ~((img[:, 0] >= xmin) & (img[:, 0] <= xmax)
                & (img[:, 1] >= ymin) & (img[:, 1] <= ymax))
    if outside.any():
        stop = max(int(np.argmax(outside)), 1)
        src, img = src[:stop + 1], img[:stop + 1]
    return src, img


def grow_branches(m_map, curve: StableCurve, region, max_pullbacks: int = 8,
                  h_max: float | None = None, check_self_intersection: bool = True
                  ) -> StableBranchPair:
    """Grow both stable branches of the curve's base point inside `region`
    by pulling the local curve at the k-th forward orbit point back k times
    (k = min(max_pullbacks, window)).  Exit flags record whether a branch
    meets region \\ f(region), tested by inverse membership, or leaves the
    region altogether."""
    charts = curve.charts
    k = min(max_pullbacks, charts.N)
    if h_max is None:
        h_max = max(region.diameter() / 1024.0, 1e-6)
    margin = 2.0 * region.diameter()
    box = (region.xmin - margin, region.xmax + margin,
           region.ymin - margin, region.ymax + margin)

    halves = _half_polylines(charts, curve.chart_graphs, k)
    out = []
    flags = []
    for half in halves:
        cur = half
        for _ in range(k):
            if len(cur) < 2:
                break
            _, cur = _refine_pullback(m_map, cur, box, h_max)
        # base point is the first sample (exact by construction)
        cur[0] = np.asarray(curve.base)
        clipped, crossed = _clip_from_center(cur, region)
        exited = crossed or _meets_exit_collar(m_map, clipped, region)
        if check_self_intersection and len(clipped) > 3:
            if polyline_self_intersects(clipped):
                raise ConstructionError("stable branch self-intersects: "
                                        "numerical breakdown")
        out.append(clipped)
        flags.append(exited)

    return StableBranchPair(base=curve.base, plus=out[0], minus=out[1],
                            exit_plus=flags[0], exit_minus=flags[1],
                            pullbacks=k)


def _clip_from_center(poly, region):
    """Walk from the first point outward, cut at the first boundary
    crossing (inserting the crossing point).  Returns (polyline, crossed)."""
    pts = [np.asarray(poly[0], float)]
    crossed = False
    for q in poly[1:]:
        q = np.asarray(q, float)
        if region.contains(q):
            pts.append(q)
            continue
        p = pts[-1]
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if region.contains(p + mid * (q - p)):
                lo = mid
            else:
                hi = mid
        pts.append(p + lo * (q - p))
        crossed = True
        break
    return np.asarray(pts), crossed


def _meets_exit_collar(m_map, poly, region) -> bool:
    """True when a sampled point lies in region minus f(region):
    inside the region but with inverse image outside it."""
    try:
        inv = m_map.inverse_array(poly)
    except Exception:
        return False
    inside = region.contains_array(poly)
    pre_out = ~region.contains_array(inv)
    return bool(np.any(inside & pre_out))


def f_of_S_membership(m_map, region, p) -> bool:
    """p belongs to f(region) iff f^{-1}(p) belongs to the region."""
    return region.contains(m_map.inverse(p))
