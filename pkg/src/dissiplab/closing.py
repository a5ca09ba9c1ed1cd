"""Periodic-point closing: the 1D diagonal-crossing argument, the planar
region construction between two stable arcs, first-exit times, retraction
fixed points, and close-returns Newton refinement (multiple shooting).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConstructionError, NumericalError, ParameterError
from .geometry import (clip_polyline_to_polygon, displacement_degree,
                       point_in_polygon, points_in_polygon, polygon_diameter,
                       polyline_min_distance, split_polygon_by_arc,
                       _point_seg_distance)

__all__ = [
    "Periodic1D",
    "PeriodicOrbit",
    "PeriodicOrbitRegistry",
    "interval_periodic_near",
    "newton_multiple_shooting",
    "minimal_period",
    "close_orbit_near",
    "ClosingRegion",
    "build_region",
    "first_exit_k",
    "retract_fixed_point",
    "DensityReport",
    "periodic_density_report",
]


# ---------------------------------------------------------------------------
# 1D closing

@dataclass(frozen=True)
class Periodic1D:
    point: float
    period: int
    residual: float


def interval_periodic_near(h_map, x0: float, delta: float,
                           max_n: int = 20000, max_k: int = 20000,
                           bisect_tol: float = 1e-12) -> Periodic1D | None:
    """Locate a periodic point within the recurrence interval of x0.

    Finds the first return x1 = h^n(x0) with |x1 - x0| < delta, then the
    first k >= 1 for which g^k(x1) falls back past x1 (g = h^n); the graph
    of g^k then crosses the diagonal between x0 and x1 and the crossing is
    found by bisection.  Returns None when the orbit never delta-returns
    (e.g. it escapes the interval)."""
    if delta <= 0:
        raise ParameterError("delta must be positive")
    xs = [float(x0)]
    for _ in range(max_n):
        nxt = h_map.eval(xs[-1])
        if not math.isfinite(nxt) or abs(nxt) > 1e9:
            break
        xs.append(nxt)
    ret = None
    for n in range(1, len(xs)):
        if abs(xs[n] - x0) < delta:
            ret = n
            break
    if ret is None:
        return None
    x1 = xs[ret]
    if x1 == x0:
        return Periodic1D(float(x0), _minimal_period_1d(h_map, x0, ret), 0.0)

    def g(t, reps=1):
        for _ in range(ret * reps):
            t = h_map.eval(t)
            if not math.isfinite(t) or abs(t) > 1e9:
                raise NumericalError("iterate left the interval during closing")
        return t

    lo_is_x0 = x0 < x1
    k = None
    t = x1
    for j in range(1, max_k + 1):
        t = g(t)
        if (t < x1) if lo_is_x0 else (t > x1):
            k = j
            break
    if k is None:
        return None

    def G(t):
        return g(t, k) - t

    a, b = (x0, x1) if lo_is_x0 else (x1, x0)
    ga, gb = G(a), G(b)
    if ga == 0.0:
        root = a
    elif gb == 0.0:
        root = b
    elif (ga < 0) == (gb < 0):
        return None  # crossing lost to numerics
    else:
        for _ in range(200):
            mid = 0.5 * (a + b)
            gm = G(mid)
            if gm == 0.0 or (b - a) < bisect_tol:
                a = b = mid
                break
            if (gm < 0) == (ga < 0):
                a, ga = mid, gm
            else:
                b = mid
        root = 0.5 * (a + b)
    period = ret * k
    q = _minimal_period_1d(h_map, root, period)
    res = abs(g(root, k) - root)
    return Periodic1D(float(root), q, float(res))


def _minimal_period_1d(h_map, t, period, tol=1e-6):
    orbit = [t]
    for _ in range(period):
        orbit.append(h_map.eval(orbit[-1]))
    for q in sorted(d for d in range(1, period) if period % d == 0):
        if all(abs(orbit[i + q] - orbit[i]) < tol for i in range(period - q)) \
                and abs(orbit[q] - orbit[0]) < tol:
            return q
    return period


# ---------------------------------------------------------------------------
# Multiple-shooting Newton for planar periodic orbits

@dataclass
class PeriodicOrbit:
    points: np.ndarray        # (q, 2) the minimal cycle
    period: int
    residual: float           # max ||f(p_i) - p_{i+1 mod q}||
    multipliers: tuple        # complex pair, eigenvalues of Df^q

    @property
    def point(self):
        return (float(self.points[0, 0]), float(self.points[0, 1]))

    def csv_row(self):
        m1, m2 = self.multipliers
        return (self.period, self.points[0, 0], self.points[0, 1], self.residual,
                m1.real, m1.imag, m2.real, m2.imag)


def newton_multiple_shooting(m_map, seed_points, maxit: int = 120,
                             tol: float = 1e-12, bound: float = 1e6):
    """Solve f(p_i) = p_{i+1 (mod m)} by Newton on the cyclic system with
    sparse LU, damped by a backtracking line search and a Levenberg
    fallback.  Returns the refined (m, 2) orbit array or None."""
    Z = np.array(seed_points, dtype=float)
    m = len(Z)
    if m < 1:
        return None
    i_idx = np.arange(m)
    j_idx = (i_idx + 1) % m
    rows = np.concatenate([2 * i_idx, 2 * i_idx + 1,
                           2 * i_idx, 2 * i_idx, 2 * i_idx + 1, 2 * i_idx + 1])
    cols = np.concatenate([2 * j_idx, 2 * j_idx + 1,
                           2 * i_idx, 2 * i_idx + 1, 2 * i_idx, 2 * i_idx + 1])

    def residual(Z):
        F = m_map.eval_array(Z)
        R = np.empty_like(Z)
        R[:, 0] = Z[j_idx, 0] - F[:, 0]
        R[:, 1] = Z[j_idx, 1] - F[:, 1]
        return R

    R0 = residual(Z)
    rn = np.abs(R0).max()
    lam = 0.0
    for _ in range(maxit):
        if rn < tol:
            return Z
        j11, j12, j21, j22 = m_map.jacobian_entries_array(Z)
        vals = np.concatenate([np.ones(m), np.ones(m),
                               -j11, -j12, -j21, -j22])
        J = sp.csc_matrix((vals, (rows, cols)), shape=(2 * m, 2 * m))
        try:
            if lam > 0.0:
                H = (J.T @ J + lam * sp.identity(2 * m, format="csc")).tocsc()
                dz = spla.splu(H).solve(-(J.T @ R0.ravel()))
            else:
                dz = spla.splu(J).solve(-R0.ravel())
        except Exception:
            return None
        if not np.all(np.isfinite(dz)):
            return None
        t = 1.0
        ok = False
        for _ in range(30):
            Z1 = Z + t * dz.reshape(m, 2)
            R1 = residual(Z1)
            rn1 = np.abs(R1).max()
            if rn1 < rn or rn1 < tol:
                ok = True
                break
            t *= 0.5
        if not ok:
            lam = 1e-6 if lam == 0.0 else lam * 10.0
            if lam > 1.0:
                return None
            continue
        lam = 0.0 if lam < 1e-10 else lam / 10.0
        Z, R0, rn = Z1, R1, rn1
        if np.abs(Z).max() > bound:
            return None
    return None


def minimal_period(cycle, tol: float = 1e-6) -> int:
    Z = np.asarray(cycle, float)
    m = len(Z)
    for q in sorted(d for d in range(1, m) if m % d == 0):
        shifted = np.roll(Z, -q, axis=0)
        if np.hypot(*(shifted - Z).T).max() < tol:
            return q
    return m


def _multipliers(m_map, cycle):
    M = np.eye(2)
    log_scale = 0.0
    for p in cycle:
        J = np.asarray(m_map.jacobian_entries(p), float).reshape(2, 2)
        M = J @ M
        s = np.abs(M).max()
        if s == 0.0:
            return (complex(0.0), complex(0.0))
        M /= s
        log_scale += math.log(s)
    w = np.linalg.eigvals(M)
    out = []
    for wi in w:
        lw = log_scale + (math.log(abs(wi)) if wi != 0 else -math.inf)
        if lw > 700:
            out.append(complex(math.inf if wi.real >= 0 else -math.inf, 0.0))
        else:
            out.append(complex(wi * math.exp(log_scale)))
    return tuple(out)


def _verified_orbit(m_map, cycle, residual_tol=1e-8):
    """Re-verify a candidate cycle by plain iteration; None if it fails."""
    Z = np.asarray(cycle, float)
    q = minimal_period(Z)
    Zq = Z[:q]
    F = m_map.eval_array(Zq)
    res = float(np.hypot(*(np.roll(Zq, -1, axis=0) - F).T).max())
    if res >= residual_tol:
        return None
    return PeriodicOrbit(points=Zq.copy(), period=q, residual=res,
                         multipliers=_multipliers(m_map, Zq))


def close_orbit_near(m_map, orbit_points, sample_index: int, delta: float,
                     window: int = 7000, max_candidates: int = 25,
                     max_len: int = 3000, residual_tol: float = 1e-8
                     ) -> PeriodicOrbit | None:
    """Confirmed periodic orbit within delta of orbit_points[sample_index].

    Candidate loops are recurrence pairs among the orbit's passages through
    the delta/2-ball of the sample (closure gap < delta/2), tried shortest
    first with multiple-shooting Newton; the first verified orbit passing
    within delta of the sample wins."""
    P = np.asarray(orbit_points, float)
    p0 = P[sample_index]
    lo = max(0, sample_index - window)
    hi = min(len(P), sample_index + window)
    d0 = np.hypot(P[lo:hi, 0] - p0[0], P[lo:hi, 1] - p0[1])
    T = lo + np.nonzero(d0 < delta / 2.0)[0]
    if len(T) > 140:
        T = T[np.argsort(np.abs(T - sample_index))[:140]]
        T.sort()
    cands = []
    for ii in range(len(T)):
        for jj in range(ii + 1, len(T)):
            m = int(T[jj] - T[ii])
            if m < 1 or m > max_len:
                continue
            gap = math.hypot(*(P[T[jj]] - P[T[ii]]))
            if gap < delta / 2.0:
                cands.append((m, int(T[ii])))
    cands.sort()
    seen = set()
    tried = 0
    for m, s in cands:
        if m in seen:
            continue
        seen.add(m)
        tried += 1
        if tried > max_candidates:
            break
        Z = newton_multiple_shooting(m_map, P[s:s + m])
        if Z is None:
            continue
        orb = _verified_orbit(m_map, Z, residual_tol)
        if orb is None:
            continue
        dist = float(np.hypot(orb.points[:, 0] - p0[0], orb.points[:, 1] - p0[1]).min())
        if dist < delta:
            return orb
    return None


# ---------------------------------------------------------------------------
# Region construction between two stable arcs

def forward_image_disc(m_map, region, k: int = 2, samples: int = 512,
                       h_max: float | None = None):
    """Polygon bounding f^k(region): the rectangle boundary pushed forward
    k times with midpoint refinement (a diffeomorphism maps the boundary
    loop onto the image boundary)."""
    if h_max is None:
        h_max = region.diameter() / 512.0
    poly = region.polygon()
    loop = np.vstack([poly, poly[:1]])
    # densify the initial loop
    out = [loop[0]]
    for q in loop[1:]:
        p = out[-1]
        d = math.hypot(*(q - p))
        steps = max(1, int(d / (region.diameter() / samples)))
        for j in range(1, steps + 1):
            out.append(p + (q - p) * (j / steps))
    cur = np.asarray(out)
    for _ in range(k):
        src = cur
        img = m_map.eval_array(src)
        for _ in range(40):
            d = np.hypot(*(np.diff(img, axis=0).T))
            need = d > h_max
            sd = np.hypot(*(np.diff(src, axis=0).T))
            need &= sd > 1e-13
            if not need.any() or len(src) > 60000:
                break
            ins = np.nonzero(need)[0]
            mid = 0.5 * (src[ins] + src[ins + 1])
            src = np.insert(src, ins + 1, mid, axis=0)
            img = np.insert(img, ins + 1, m_map.eval_array(mid), axis=0)
        cur = img
    if math.hypot(*(cur[0] - cur[-1])) > 1e-12:
        cur = np.vstack([cur, cur[:1]])
    return cur[:-1]


@dataclass
class ClosingRegion:
    D: np.ndarray             # trapped disc polygon
    arc0: np.ndarray          # stable arc through x0, clipped to D
    arc1: np.ndarray          # stable arc through x1 = f^n(x0)
    R: np.ndarray             # region between the arcs
    D_minus: np.ndarray       # component containing x0's side
    D_plus: np.ndarray        # component containing x1's side
    x0: tuple
    x1: tuple
    n: int

    def diameter(self):
        return polygon_diameter(self.R)

    def retract(self, p):
        """Projection retraction D -> R: identity on R, nearest point on
        the shared stable-arc boundary otherwise."""
        p = np.asarray(p, float)
        if point_in_polygon(p, self.R):
            return p
        arc = self.arc0 if point_in_polygon(p, self.D_minus) else self.arc1
        best, bd = None, math.inf
        for i in range(len(arc) - 1):
            a, b = arc[i], arc[i + 1]
            ab = b - a
            den = float(ab @ ab)
            t = 0.0 if den == 0 else float(np.clip((p - a) @ ab / den, 0.0, 1.0))
            q = a + t * ab
            d = math.hypot(*(q - p))
            if d < bd:
                bd, best = d, q
        return best


def _arc_component_through(arc, poly, point, tol):
    comps = clip_polyline_to_polygon(arc, poly)
    best, bd = None, math.inf
    for c in comps:
        d = min(_point_seg_distance(point, c[i], c[i + 1])
                for i in range(len(c) - 1)) if len(c) > 1 else math.inf
        if d < bd:
            bd, best = d, c
    if best is None or bd > tol:
        raise ConstructionError(f"no arc component passes through {point} "
                                f"(closest {bd:.3g})")
    return best


def _crossing_angles(arc, poly):
    """Angles between the arc's end segments and the polygon edges they
    cross (endpoints of a clipped component lie on the boundary)."""
    P = np.asarray(poly, float)
    out = []
    for end, seg in ((arc[0], arc[1] - arc[0]), (arc[-1], arc[-1] - arc[-2])):
        best, bedge = math.inf, None
        for j in range(len(P)):
            d = _point_seg_distance(end, P[j], P[(j + 1) % len(P)])
            if d < best:
                best, bedge = d, P[(j + 1) % len(P)] - P[j]
        su = seg / max(np.hypot(*seg), 1e-300)
        eu = bedge / max(np.hypot(*bedge), 1e-300)
        out.append(math.asin(min(1.0, abs(su[0] * eu[1] - su[1] * eu[0]))))
    return out


def build_region(m_map, x0, n: int, arc0, arc1, D_poly, delta: float,
                 min_cross_angle: float = 0.1) -> ClosingRegion:
    """Cut the trapped disc D along the stable arcs through x0 and through
    x1 = f^n(x0) into D_minus | R | D_plus, with R between the arcs and of
    diameter below delta."""
    x0 = np.asarray(x0, float)
    x1 = np.asarray(m_map.eval_array(x0[None, :])[0] if n == 1 else _fwd(m_map, x0, n))
    tol = 1e-6 * max(1.0, polygon_diameter(D_poly))
    a0 = _arc_component_through(arc0, D_poly, x0, tol=max(tol, 1e-5))
    a1 = _arc_component_through(arc1, D_poly, x1, tol=max(tol, 1e-5))
    d01 = min(_point_seg_distance(x1, a0[i], a0[i + 1]) for i in range(len(a0) - 1))
    if d01 < 1e-9:
        raise ConstructionError("x1 lies on x0's stable arc; degenerate cut")
    if polyline_min_distance(a0, a1) < 1e-12:
        raise ConstructionError("stable arcs intersect; numerical breakdown")
    for arc in (a0, a1):
        angs = _crossing_angles(arc, D_poly)
        if min(angs) < min_cross_angle:
            raise ConstructionError(
                f"arc crosses the disc boundary at {min(angs):.3g} rad "
                f"(tangential, below {min_cross_angle})")
    side_a, side_b = split_polygon_by_arc(D_poly, a0)
    if point_in_polygon(x1, side_a):
        rest, d_minus = side_a, side_b
    elif point_in_polygon(x1, side_b):
        rest, d_minus = side_b, side_a
    else:
        raise ConstructionError("x1 not inside either side after first cut")
    part_a, part_b = split_polygon_by_arc(rest, a1)
    # R is the part whose boundary still touches x0's arc
    da = polyline_min_distance(a0, np.vstack([part_a, part_a[:1]]))
    db = polyline_min_distance(a0, np.vstack([part_b, part_b[:1]]))
    tol_touch = 1e-9 * max(1.0, polygon_diameter(D_poly))
    if da <= tol_touch and db > tol_touch:
        R, d_plus = part_a, part_b
    elif db <= tol_touch and da > tol_touch:
        R, d_plus = part_b, part_a
    else:
        raise ConstructionError(
            f"cannot identify the between-arcs region (arc distances "
            f"{da:.2e}, {db:.2e})")
    reg = ClosingRegion(D=np.asarray(D_poly, float), arc0=a0, arc1=a1, R=R,
                        D_minus=d_minus, D_plus=d_plus,
                        x0=(float(x0[0]), float(x0[1])),
                        x1=(float(x1[0]), float(x1[1])), n=n)
    diam = reg.diameter()
    if diam >= delta:
        raise ConstructionError(f"region diameter {diam:.4g} >= delta {delta}")
    return reg


def _fwd(m_map, p, n):
    q = tuple(p)
    for _ in range(n):
        q = m_map.eval(q)
    return np.asarray(q, float)


def first_exit_k(m_map, region: ClosingRegion, n: int, max_k: int = 100000) -> int:
    """Smallest k >= 1 with g^k(x0) in D_plus and g^{k+1}(x0) not in D_plus,
    g = f^n.  g(x0) = x1 lies on the cut arc itself and counts as inside
    (that is how the region was built)."""
    p = np.asarray(region.x0, float)
    cur = _fwd(m_map, p, n)
    inside = True  # x1 bounds D_plus by construction
    for k in range(1, max_k + 1):
        nxt = _fwd(m_map, cur, n)
        nxt_in = point_in_polygon(nxt, region.D_plus)
        if inside and not nxt_in:
            return k
        cur, inside = nxt, nxt_in
    raise NumericalError(f"no exit from D_plus within {max_k} returns")


def retract_fixed_point(m_map, region: ClosingRegion, n: int, k: int,
                        residual_tol: float = 1e-8,
                        subdivision_depth: int = 5) -> PeriodicOrbit:
    """Fixed point of f^{nk} inside R: topological degree of the
    displacement on the boundary, sign-structure subdivision for seeds
    (improved by a few retraction iterations), multiple-shooting Newton
    refinement, and verification that the point avoids the cut arcs."""
    m_total = n * k

    def disp(P):
        Q = np.asarray(P, float).copy()
        for _ in range(m_total):
            Q = m_map.eval_array(Q)
        return Q - P

    try:
        deg = displacement_degree(disp, region.R)
    except ConstructionError:
        deg = None

    seeds = [np.asarray(region.x0, float), 0.5 * (np.asarray(region.x0) + np.asarray(region.x1))]
    seeds += _subdivision_seeds(disp, region, subdivision_depth)
    if deg == 0:
        # no boundary certificate; subdivision still attempted
        pass

    best = None
    for seed in seeds:
        q = seed.copy()
        for _ in range(3):
            q = region.retract(_fwd(m_map, q, m_total))
        orbit_seed = [tuple(q)]
        for _ in range(m_total - 1):
            orbit_seed.append(m_map.eval(orbit_seed[-1]))
        Z = newton_multiple_shooting(m_map, np.asarray(orbit_seed))
        if Z is None:
            continue
        orb = _verified_orbit(m_map, Z, residual_tol)
        if orb is None:
            continue
        dists = np.hypot(orb.points[:, 0] - region.x0[0],
                         orb.points[:, 1] - region.x0[1])
        p_idx = int(np.argmin(dists))
        p = orb.points[p_idx]
        if not point_in_polygon(p, region.R):
            if best is None:
                best = orb
            continue
        on_cut = min(polyline_min_distance(p[None, :], region.arc0),
                     polyline_min_distance(p[None, :], region.arc1))
        if on_cut < 1e-9:
            continue
        orb.points = np.roll(orb.points, -p_idx, axis=0)
        return orb
    msg = f"degree {deg} on the region boundary" if deg is not None else \
        "degree undefined on the region boundary"
    if best is not None:
        raise NumericalError(
            f"refinement landed outside the region ({msg}); best residual "
            f"{best.residual:.2e} at period {best.period}")
    raise NumericalError(f"no fixed point of the {m_total}-step map found in "
                         f"the region ({msg})")


def _subdivision_seeds(disp, region, depth, per_level=4):
    lo = region.R.min(axis=0)
    hi = region.R.max(axis=0)
    boxes = [(lo, hi)]
    seeds = []
    for _ in range(depth):
        new_boxes = []
        for blo, bhi in boxes:
            gx = np.linspace(blo[0], bhi[0], 3)
            gy = np.linspace(blo[1], bhi[1], 3)
            X, Y = np.meshgrid(gx, gy)
            pts = np.column_stack([X.ravel(), Y.ravel()])
            D = disp(pts)
            sx, sy = np.sign(D[:, 0]), np.sign(D[:, 1])
            if (sx.min() < sx.max()) and (sy.min() < sy.max()):
                mid = 0.5 * (blo + bhi)
                inside = points_in_polygon(mid[None, :], region.R)[0]
                if inside:
                    seeds.append(mid)
                for qx in range(2):
                    for qy in range(2):
                        nlo = np.array([gx[qx], gy[qy]])
                        nhi = np.array([gx[qx + 1], gy[qy + 1]])
                        new_boxes.append((nlo, nhi))
        boxes = new_boxes[:4 ** 3]
        if not boxes:
            break
    return seeds[: per_level * depth]


# ---------------------------------------------------------------------------
# Registry and density report

class PeriodicOrbitRegistry:
    """Append-only collection of confirmed orbits, deduplicated up to cyclic
    rotation at 1e-6 resolution, reported sorted by (period, x, y)."""

    def __init__(self):
        self._orbits: list[PeriodicOrbit] = []

    def add(self, orb: PeriodicOrbit) -> bool:
        for other in self._orbits:
            if other.period != orb.period:
                continue
            d = np.hypot(other.points[:, 0] - orb.points[0, 0],
                         other.points[:, 1] - orb.points[0, 1]).min()
            if d < 1e-6:
                return False
        self._orbits.append(orb)
        return True

    def __len__(self):
        return len(self._orbits)

    def __iter__(self):
        return iter(self.sorted())

    def sorted(self):
        return sorted(self._orbits,
                      key=lambda o: (o.period, o.points[0, 0], o.points[0, 1]))

    def max_period(self):
        return max((o.period for o in self._orbits), default=0)


@dataclass
class DensityReport:
    delta: float
    budget: int
    successes: int
    fraction: float
    periods: list
    failures: dict
    orbits: list

    def as_dict(self):
        return {"delta": self.delta, "budget": self.budget,
                "successes": self.successes, "fraction": self.fraction,
                "max_period": max(self.periods) if self.periods else 0,
                "median_period": float(np.median(self.periods)) if self.periods else 0.0,
                "failures": self.failures}


def periodic_density_report(m_map, measure, delta: float, budget: int,
                            rng=None, registry: PeriodicOrbitRegistry | None = None,
                            **close_kw) -> DensityReport:
    """For `budget` samples of the measure, attempt to close a confirmed
    periodic orbit within delta (close-returns candidates + multiple
    shooting).  Per-sample failures are itemized, not raised."""
    if rng is None:
        rng = np.random.default_rng(0)
    P = measure.points
    if len(P) < 10:
        raise ParameterError("measure too small for closing")
    guard = min(7000, len(P) // 3)
    idx = rng.integers(guard, len(P) - guard, size=budget)
    successes = 0
    periods = []
    failures: dict = {}
    found = []
    for i in idx:
        orb = close_orbit_near(m_map, P, int(i), delta, **close_kw)
        if orb is None:
            failures["no_confirmed_orbit"] = failures.get("no_confirmed_orbit", 0) + 1
            continue
        successes += 1
        periods.append(orb.period)
        found.append(orb)
        if registry is not None:
            registry.add(orb)
    return DensityReport(delta=delta, budget=budget, successes=successes,
                         fraction=successes / budget, periods=periods,
                         failures=failures, orbits=found)
