"""Planar geometry helpers: point-in-polygon, polyline clipping, polygon
splitting along crossing arcs, winding-number degree counts, distances.

Polygons are (n, 2) float arrays of vertices (implicitly closed); polylines
are (n, 2) arrays of consecutive points.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConstructionError, ParameterError

__all__ = [
    "polygon_area",
    "ensure_ccw",
    "point_in_polygon",
    "points_in_polygon",
    "polygon_diameter",
    "polyline_length",
    "segment_intersection",
    "clip_polyline_to_polygon",
    "split_polygon_by_arc",
    "polyline_min_distance",
    "polyline_self_intersects",
    "displacement_degree",
    "resample_polyline",
    "sample_polygon_interior",
]


def polygon_area(poly) -> float:
    P = np.asarray(poly, dtype=float)
    x, y = P[:, 0], P[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def ensure_ccw(poly):
    P = np.asarray(poly, dtype=float)
    return P if polygon_area(P) >= 0 else P[::-1].copy()


def points_in_polygon(pts, poly):
    """Even-odd crossing-number test, vectorized over pts (m, 2)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    P = np.asarray(poly, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    x0, y0 = P[:, 0], P[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for j in range(len(P)):
        a, b, c, d = x0[j], y0[j], x1[j], y1[j]
        crosses = ((b <= y) & (d > y)) | ((b > y) & (d <= y))
        if not crosses.any():
            continue
        t = (y - b) / (d - b)
        xi = a + t * (c - a)
        inside ^= crosses & (x < xi)
    return inside


def point_in_polygon(p, poly) -> bool:
    return bool(points_in_polygon(np.asarray(p, dtype=float)[None, :], poly)[0])


def polygon_diameter(poly) -> float:
    P = np.asarray(poly, dtype=float)
    if len(P) > 400:
        # hull vertices realize the diameter
        from scipy.spatial import ConvexHull
        P = P[ConvexHull(P).vertices]
    d2 = ((P[:, None, :] - P[None, :, :]) ** 2).sum(-1)
    return float(np.sqrt(d2.max()))


def polyline_length(line) -> float:
    L = np.asarray(line, dtype=float)
    if len(L) < 2:
        return 0.0
    return float(np.hypot(*(np.diff(L, axis=0).T)).sum())


def segment_intersection(p0, p1, q0, q1, eps=1e-14):
    """Intersection of segments p0p1 and q0q1.  Returns (t, u, point) with
    t, u in [0, 1] the parameters along each segment, or None."""
    p0 = np.asarray(p0, float); p1 = np.asarray(p1, float)
    q0 = np.asarray(q0, float); q1 = np.asarray(q1, float)
    r = p1 - p0
    s = q1 - q0
    denom = r[0] * s[1] - r[1] * s[0]
    if abs(denom) < eps * max(1.0, abs(r[0]) + abs(r[1])) * max(1.0, abs(s[0]) + abs(s[1])):
        return None  # parallel or degenerate
    qp = q0 - p0
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = (qp[0] * r[1] - qp[1] * r[0]) / denom
    if -1e-12 <= t <= 1 + 1e-12 and -1e-12 <= u <= 1 + 1e-12:
        t = min(max(t, 0.0), 1.0)
        u = min(max(u, 0.0), 1.0)
        return t, u, p0 + t * r
    return None


def _boundary_crossings(line, poly):
    """All crossings of a polyline with a polygon boundary, as tuples
    (seg_index, t_on_segment, edge_index, u_on_edge, point), ordered along
    the polyline."""
    L = np.asarray(line, float)
    P = np.asarray(poly, float)
    m = len(P)
    out = []
    for i in range(len(L) - 1):
        hits = []
        for j in range(m):
            r = segment_intersection(L[i], L[i + 1], P[j], P[(j + 1) % m])
            if r is not None:
                t, u, pt = r
                hits.append((t, j, u, pt))
        hits.sort(key=lambda h: h[0])
        for t, j, u, pt in hits:
            out.append((i, t, j, u, pt))
    return out


def clip_polyline_to_polygon(line, poly, keep_tol=1e-12):
    """Split a polyline into components inside the polygon.  Component
    endpoints lie on the polygon boundary (inserted crossing points) unless
    the polyline starts or ends inside.  Returns a list of (k, 2) arrays."""
    L = np.asarray(line, float)
    if len(L) < 2:
        return []
    inside = points_in_polygon(L, poly)
    crossings = _boundary_crossings(L, poly)
    comps = []
    cur = [L[0]] if inside[0] else None
    ci = 0
    for i in range(len(L) - 1):
        seg_cross = []
        while ci < len(crossings) and crossings[ci][0] == i:
            seg_cross.append(crossings[ci])
            ci += 1
        state = cur is not None
        for _, t, _, _, pt in seg_cross:
            if state:
                cur.append(pt)
                if polyline_length(np.asarray(cur)) > keep_tol:
                    comps.append(np.asarray(cur))
                cur = None
                state = False
            else:
                cur = [pt]
                state = True
        if state:
            cur.append(L[i + 1])
    if cur is not None and polyline_length(np.asarray(cur)) > keep_tol:
        comps.append(np.asarray(cur))
    return comps


def split_polygon_by_arc(poly, arc, eps=1e-12):
    """Split a simple polygon along an arc whose endpoints lie on the
    polygon boundary and whose interior lies inside the polygon.

    Returns (side_a, side_b): the two resulting polygons (vertex arrays);
    both contain the full arc as part of their boundary.  Callers identify
    the sides by membership tests.  Raises ConstructionError when the arc
    does not cross cleanly.
    """
    P = ensure_ccw(np.asarray(poly, float))
    A = np.asarray(arc, float)
    m = len(P)

    def locate(pt):
        # (edge index, parameter) of a point on the polygon boundary
        best = None
        for j in range(m):
            a, b = P[j], P[(j + 1) % m]
            ab = b - a
            denom = float(ab @ ab)
            t = 0.0 if denom == 0 else float(np.clip((pt - a) @ ab / denom, 0.0, 1.0))
            d = float(np.hypot(*(a + t * ab - pt)))
            if best is None or d < best[0]:
                best = (d, j, t)
        d, j, t = best
        if d > 1e-7 * max(1.0, polygon_diameter(P)):
            raise ConstructionError(f"arc endpoint {pt} not on polygon boundary (d={d:.2e})")
        return j, t

    j0, t0 = locate(A[0])
    j1, t1 = locate(A[-1])
    if j0 == j1 and abs(t0 - t1) < eps:
        raise ConstructionError("arc endpoints coincide on the boundary")

    def walk(js, ts, je, te):
        # polygon vertices passed when walking CCW from (js, ts) to (je, te)
        if js == je and ts <= te + eps:
            return []
        out = []
        j = (js + 1) % m
        while True:
            out.append(P[j])
            if j == je:
                break
            j = (j + 1) % m
            if len(out) > m:
                raise ConstructionError("polygon walk failed to terminate")
        return out

    # side A: arc end -> CCW boundary -> arc start -> arc (forward)
    side_a = [A[-1]] + walk(j1, t1, j0, t0) + [A[0]] + list(A[1:-1])
    # side B: arc start -> CCW boundary -> arc end -> arc (reversed)
    side_b = [A[0]] + walk(j0, t0, j1, t1) + [A[-1]] + list(A[-2:0:-1])

    pa = np.asarray(side_a)
    pb = np.asarray(side_b)
    # drop consecutive duplicates
    pa = pa[np.r_[True, np.hypot(*(np.diff(pa, axis=0).T)) > eps]]
    pb = pb[np.r_[True, np.hypot(*(np.diff(pb, axis=0).T)) > eps]]
    if len(pa) < 3 or len(pb) < 3:
        raise ConstructionError("degenerate split")
    return pa, pb


def polyline_min_distance(a, b, exact_below=None):
    """Minimum distance between two polylines.  Uses a point k-d tree as a
    prefilter, then exact segment-segment distances near candidate pairs."""
    A = np.asarray(a, float)
    B = np.asarray(b, float)
    tree = cKDTree(B)
    dmin, jmin = tree.query(A)
    i0 = int(np.argmin(dmin))
    coarse = float(dmin[i0])
    la = np.hypot(*(np.diff(A, axis=0).T)).max() if len(A) > 1 else 0.0
    lb = np.hypot(*(np.diff(B, axis=0).T)).max() if len(B) > 1 else 0.0
    if exact_below is not None and coarse - la - lb > exact_below:
        return coarse  # lower bound far above threshold
    # exact refinement near the coarse minimum
    cand_a = np.unique(np.clip(np.arange(i0 - 2, i0 + 2), 0, max(len(A) - 2, 0)))
    j0 = int(jmin[i0])
    cand_b = np.unique(np.clip(np.arange(j0 - 2, j0 + 2), 0, max(len(B) - 2, 0)))
    best = coarse
    for i in cand_a:
        for j in cand_b:
            best = min(best, _seg_seg_distance(A[i], A[min(i + 1, len(A) - 1)],
                                               B[j], B[min(j + 1, len(B) - 1)]))
    return float(best)


def _seg_seg_distance(p0, p1, q0, q1):
    r = segment_intersection(p0, p1, q0, q1)
    if r is not None:
        return 0.0
    return min(_point_seg_distance(p0, q0, q1), _point_seg_distance(p1, q0, q1),
               _point_seg_distance(q0, p0, p1), _point_seg_distance(q1, p0, p1))


def _point_seg_distance(p, a, b):
    p = np.asarray(p, float); a = np.asarray(a, float); b = np.asarray(b, float)
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.hypot(*(a + t * ab - p)))


def polyline_self_intersects(line, tol=0.0) -> bool:
    """True when two non-adjacent segments of the polyline intersect."""
    L = np.asarray(line, float)
    n = len(L) - 1
    if n < 3:
        return False
    # sweep by bounding boxes on a coarse grid
    mins = np.minimum(L[:-1], L[1:])
    maxs = np.maximum(L[:-1], L[1:])
    order = np.argsort(mins[:, 0], kind="stable")
    for ii in range(n):
        i = order[ii]
        for jj in range(ii + 1, n):
            j = order[jj]
            if mins[j, 0] > maxs[i, 0]:
                break
            if abs(int(i) - int(j)) <= 1:
                continue
            if mins[j, 1] > maxs[i, 1] or maxs[j, 1] < mins[i, 1]:
                continue
            r = segment_intersection(L[i], L[i + 1], L[j], L[j + 1])
            if r is not None:
                t, u, _ = r
                # endpoint contact of consecutive-ish pieces doesn't count
                if (abs(int(i) - int(j)) == n - 1) and ((t < 1e-9 and u > 1 - 1e-9) or (u < 1e-9 and t > 1 - 1e-9)):
                    continue
                return True
    return False


def displacement_degree(disp_fn, loop, max_pts=8192):
    """Topological degree (winding number) of the displacement field
    p -> disp_fn(p) around a closed polygonal loop.

    disp_fn maps an (n, 2) array to an (n, 2) array of displacements.
    Segments whose angle increment exceeds pi/4 are refined by inserting
    chord midpoints (the loop is polygonal, so midpoints stay on it).
    """
    pts = np.asarray(loop, float)
    if np.hypot(*(pts[0] - pts[-1])) > 1e-12:
        pts = np.vstack([pts, pts[0]])
    for _ in range(32):
        D = disp_fn(pts)
        mag = np.hypot(D[:, 0], D[:, 1])
        if mag.min() < 1e-13:
            raise ConstructionError("displacement vanishes on the loop; degree undefined")
        ang = np.arctan2(D[:, 1], D[:, 0])
        inc = np.diff(ang)
        inc = (inc + math.pi) % (2 * math.pi) - math.pi
        bad = np.abs(inc) > math.pi / 4
        if not bad.any():
            total = inc.sum()
            return int(round(total / (2 * math.pi)))
        if len(pts) >= max_pts:
            raise ConstructionError("degree refinement budget exhausted")
        ins = np.nonzero(bad)[0]
        mids = 0.5 * (pts[ins] + pts[ins + 1])
        pts = np.insert(pts, ins + 1, mids, axis=0)
    raise ConstructionError("degree computation did not stabilize")


def resample_polyline(line, max_seg, max_turn=None):
    """Insert chord midpoints until all segments are shorter than max_seg
    (and optionally all turning angles below max_turn).  Pure chord
    refinement; use map-aware refinement for dynamical curves."""
    L = list(np.asarray(line, float))
    out = [L[0]]
    for p in L[1:]:
        prev = out[-1]
        d = math.hypot(p[0] - prev[0], p[1] - prev[1])
        k = max(1, int(math.ceil(d / max_seg)))
        for j in range(1, k + 1):
            out.append(prev + (p - prev) * (j / k))
    return np.asarray(out)


def sample_polygon_interior(poly, k, rng, max_tries=200):
    """k points uniformly distributed in a polygon, by rejection in its
    bounding box."""
    P = np.asarray(poly, float)
    lo = P.min(axis=0)
    hi = P.max(axis=0)
    out = []
    for _ in range(max_tries):
        need = k - len(out)
        if need <= 0:
            break
        cand = lo + (hi - lo) * rng.random((max(2 * need, 16), 2))
        good = cand[points_in_polygon(cand, P)]
        out.extend(good[:need])
    if len(out) < k:
        # thin polygons: fall back to jittered boundary-midpoint samples
        c = P.mean(axis=0)
        while len(out) < k:
            j = rng.integers(0, len(P))
            q = 0.5 * (P[j] + c)
            if point_in_polygon(q, P):
                out.append(q)
            else:
                out.append(c)
    return np.asarray(out[:k])
