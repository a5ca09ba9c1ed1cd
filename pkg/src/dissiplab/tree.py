"""Finite-approximation quotient of the disc along disjoint stable arcs:
the component/arc incidence tree, the projection, the induced vertex map,
and entropy/periodicity experiments on itineraries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstructionError, DomainError, ParameterError
from .geometry import (clip_polyline_to_polygon, point_in_polygon,
                       points_in_polygon, polyline_min_distance,
                       sample_polygon_interior, split_polygon_by_arc,
                       _point_seg_distance)

__all__ = [
    "ArcFamily",
    "collect_arcs",
    "quadratic_fiber_arcs",
    "RealTree",
    "build_tree",
    "TreeMap",
    "induced_map",
    "tree_periodic_points",
    "itineraries",
    "block_count_entropy",
    "plane_entropy",
    "tree_entropy",
]

ARC_COLLISION_TOL = 1e-9


@dataclass
class ArcFamily:
    """Pairwise-disjoint full crossing arcs of a disc D (each a polyline
    whose endpoints lie on the boundary of D)."""

    arcs: list
    D: np.ndarray

    def __len__(self):
        return len(self.arcs)

    def disjointness_matrix(self):
        n = len(self.arcs)
        M = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                M[i, j] = M[j, i] = polyline_min_distance(
                    self.arcs[i], self.arcs[j], exact_below=10 * ARC_COLLISION_TOL)
        return M

    def verify_disjoint(self, tol=ARC_COLLISION_TOL):
        M = self.disjointness_matrix()
        n = len(self.arcs)
        bad = [(i, j) for i in range(n) for j in range(i + 1, n) if M[i, j] <= tol]
        if bad:
            raise ConstructionError(f"arc pairs too close: {bad[:4]}")
        return True


def _try_add_arc(arcs, cand, tol=ARC_COLLISION_TOL):
    if len(cand) < 2:
        return False
    for a in arcs:
        if polyline_min_distance(a, cand, exact_below=10 * tol) <= tol:
            return False
    arcs.append(cand)
    return True


def collect_arcs(m_map, region, D_poly, n_arcs: int, constants, measure,
                 N: int = 10, n_back: int = 20, max_pullbacks: int = 10,
                 rng=None, preimage_rounds: int = 1,
                 max_samples: int = 400) -> ArcFamily:
    """Seed full crossing arcs from certified points' grown stable branches,
    then close the family under preimage-component insertion (components of
    f^{-1}(arc) inside D that meet f(D)), discarding colliding arcs."""
    from . import pliss
    from .charts import chart_sequence
    from .manifold import grow_branches, local_stable_curve, _refine_pullback
    from .orbits import iterate

    if rng is None:
        rng = np.random.default_rng(0)
    D = np.asarray(D_poly, float)
    arcs: list = []
    idx = rng.permutation(len(measure.points))[:max_samples]
    horizon = max(N, n_back)
    for i in idx:
        if len(arcs) >= n_arcs:
            break
        p = measure.points[i]
        seg = iterate(m_map, p, horizon)
        if seg.overflowed:
            continue
        try:
            E, degen = pliss.estimate_E(m_map, seg.points, n_back)
            if degen:
                continue
            if not pliss.certify(m_map, seg.points, E, constants, N).passed:
                continue
            charts = chart_sequence(m_map, seg, E, constants, N=N)
            curve = local_stable_curve(m_map, charts)
            pair = grow_branches(m_map, curve, region,
                                 max_pullbacks=max_pullbacks)
        except Exception:
            continue
        if not (pair.exit_plus and pair.exit_minus):
            continue
        full = pair.full_arc()
        comps = clip_polyline_to_polygon(full, D)
        comp = _component_through(comps, np.asarray(p, float))
        if comp is None:
            continue
        _try_add_arc(arcs, comp)

    if len(arcs) < 2:
        raise ConstructionError(
            f"only {len(arcs)} disjoint crossing arcs found (need 2+)")

    lo = D.min(axis=0)
    hi = D.max(axis=0)
    margin = 0.5 * float(np.hypot(*(hi - lo)))
    box = (lo[0] - margin, hi[0] + margin, lo[1] - margin, hi[1] + margin)
    base = list(arcs)
    for _ in range(preimage_rounds):
        new = []
        for a in base:
            try:
                _, pre = _refine_pullback(
                    m_map, a, box, h_max=max(np.hypot(*(hi - lo)) / 512, 1e-6))
            except Exception:
                continue
            for comp in clip_polyline_to_polygon(pre, D):
                if _meets_image(m_map, comp, D):
                    if _try_add_arc(arcs, comp):
                        new.append(comp)
        base = new
        if not base:
            break
    return ArcFamily(arcs=arcs, D=D)


def _component_through(comps, point, tol=1e-7):
    best, bd = None, math.inf
    for c in comps:
        if len(c) < 2:
            continue
        d = min(_point_seg_distance(point, c[i], c[i + 1])
                for i in range(len(c) - 1))
        if d < bd:
            bd, best = d, c
    if best is None or bd > tol:
        return None
    return best


def _meets_image(m_map, comp, D) -> bool:
    try:
        pre = m_map.inverse_array(comp)
    except Exception:
        return False
    return bool(points_in_polygon(pre, D).any())


def quadratic_fiber_arcs(ext, ts, samples: int = 64) -> ArcFamily:
    """Arc family for the 2D extension of a quadratic map from the fibers
    h(x) + y = t: the curves contracted to points at b = 0.  Only fiber
    pieces crossing the strip top-to-bottom are kept."""
    h = ext.h
    lo, hi = h.domain
    eps = ext.eps
    D = np.array([(lo, -eps), (hi, -eps), (hi, eps), (lo, eps)])
    arcs = []
    for t in ts:
        # x-branches of h(x) = t -+ eps: x = +-sqrt(t - c -+ eps)
        for sgn in (1.0, -1.0):
            lo_r = t - h.c - eps
            hi_r = t - h.c + eps
            if lo_r <= 0:
                continue  # fiber does not cross the strip on this side
            xs = sgn * np.sqrt(np.linspace(lo_r, hi_r, samples))
            ys = t - (xs ** 2 + h.c)
            arc = np.column_stack([xs, ys])
            if lo < arc[:, 0].min() and arc[:, 0].max() < hi:
                _try_add_arc(arcs, arc)
    if len(arcs) < 1:
        raise ConstructionError("no crossing fibers for the given levels")
    return ArcFamily(arcs=arcs, D=D)


# ---------------------------------------------------------------------------
# Tree construction

@dataclass
class RealTree:
    comp_polygons: list        # component polygons, vertex ids 0..K-1
    arc_count: int             # arc vertex i has id K + i
    edges: list                # (component_id, arc_id) pairs
    arcs: ArcFamily

    @property
    def n_components(self):
        return len(self.comp_polygons)

    @property
    def n_vertices(self):
        return len(self.comp_polygons) + self.arc_count

    def vertex_kind(self, v):
        return "component" if v < self.n_components else "arc"

    def arc_vertex(self, i):
        return self.n_components + i

    def adjacency(self):
        adj = {v: set() for v in range(self.n_vertices)}
        for c, a in self.edges:
            adj[c].add(a)
            adj[a].add(c)
        return adj

    def is_tree(self):
        V = self.n_vertices
        E = len(self.edges)
        if V - E != 1:
            return False
        adj = self.adjacency()
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == V

    def project(self, p, arc_tol=1e-9):
        """Vertex containing p: the arc vertex when p lies within arc_tol
        of an arc, else the component vertex."""
        p = np.asarray(p, float)
        if not point_in_polygon(p, self.arcs.D):
            raise DomainError(f"point {tuple(p)} outside the disc")
        for i, a in enumerate(self.arcs.arcs):
            if polyline_min_distance(p[None, :], a, exact_below=10 * arc_tol) <= arc_tol:
                return self.arc_vertex(i)
        for ci, poly in enumerate(self.comp_polygons):
            if point_in_polygon(p, poly):
                return ci
        # on an internal boundary at rounding level: snap to the nearest arc
        best, bd = None, math.inf
        for i, a in enumerate(self.arcs.arcs):
            d = polyline_min_distance(p[None, :], a)
            if d < bd:
                bd, best = d, i
        if best is not None and bd < 1e-6:
            return self.arc_vertex(best)
        raise DomainError(f"point {tuple(p)} not located in any component")

    def project_many(self, pts, arc_tol=1e-9):
        pts = np.asarray(pts, float)
        out = np.full(len(pts), -1, dtype=int)
        for ci, poly in enumerate(self.comp_polygons):
            mask = (out < 0) & points_in_polygon(pts, poly)
            out[mask] = ci
        for j in np.nonzero(out < 0)[0]:
            out[j] = self.project(pts[j], arc_tol)
        return out


def build_tree(arcs: ArcFamily, D=None) -> RealTree:
    """Planar subdivision of the disc by the arcs; incidence of components
    and arcs; verified acyclic and connected (cycles signal a disjointness
    violation upstream)."""
    if len(arcs) < 1:
        raise ParameterError("need at least one arc")
    D = arcs.D if D is None else np.asarray(D, float)
    comps = [np.asarray(D, float)]
    for a in arcs.arcs:
        mid = a[len(a) // 2]
        host = None
        for i, c in enumerate(comps):
            if point_in_polygon(mid, c):
                host = i
                break
        if host is None:
            raise ConstructionError("arc interior not inside any component")
        pa, pb = split_polygon_by_arc(comps[host], a)
        comps[host] = pa
        comps.append(pb)

    edges = []
    for i, a in enumerate(arcs.arcs):
        mid_idx = len(a) // 2
        mid = a[mid_idx]
        tang = a[min(mid_idx + 1, len(a) - 1)] - a[max(mid_idx - 1, 0)]
        nt = math.hypot(*tang)
        if nt == 0:
            raise ConstructionError("degenerate arc tangent")
        nrm = np.array([-tang[1], tang[0]]) / nt
        sep = min((polyline_min_distance(mid[None, :], other)
                   for j, other in enumerate(arcs.arcs) if j != i),
                  default=1.0)
        eps = min(1e-7, 0.25 * sep) if sep > 0 else 1e-9
        for sgn in (1.0, -1.0):
            probe = mid + sgn * eps * nrm
            found = None
            for ci, c in enumerate(comps):
                if point_in_polygon(probe, c):
                    found = ci
                    break
            if found is None:
                raise ConstructionError(
                    f"side probe of arc {i} not in any component "
                    "(disjointness violation upstream?)")
            edges.append((found, len(comps) + i))
    edges = sorted(set(edges))
    tree = RealTree(comp_polygons=comps, arc_count=len(arcs), edges=edges,
                    arcs=arcs)
    if not tree.is_tree():
        raise ConstructionError(
            f"incidence graph is not a tree (V={tree.n_vertices}, "
            f"E={len(edges)}): disjointness violation upstream")
    return tree


# ---------------------------------------------------------------------------
# Induced vertex map

@dataclass
class TreeMap:
    h: np.ndarray              # vertex -> vertex (-1 where unresolved)
    well_defined: np.ndarray   # per-vertex agreement flag
    samples_used: int

    def disagreements(self):
        return int((~self.well_defined).sum())


def induced_map(tree: RealTree, m_map, samples: int = 100, rng=None) -> TreeMap:
    """h(v) = projection of f(sample of v), with well-definedness checked by
    projecting f at `samples` points of v and flagging disagreement."""
    if rng is None:
        rng = np.random.default_rng(0)
    V = tree.n_vertices
    h = np.full(V, -1, dtype=int)
    ok = np.zeros(V, dtype=bool)
    for v in range(V):
        if tree.vertex_kind(v) == "component":
            pts = sample_polygon_interior(tree.comp_polygons[v], samples, rng)
        else:
            a = tree.arcs.arcs[v - tree.n_components]
            sel = np.linspace(0, len(a) - 1, min(samples, len(a))).astype(int)
            pts = a[sel]
        imgs = m_map.eval_array(pts)
        votes = {}
        failed = 0
        for q in imgs:
            try:
                w = tree.project(q)
            except DomainError:
                failed += 1
                continue
            votes[w] = votes.get(w, 0) + 1
        if not votes:
            h[v] = -1
            ok[v] = False
            continue
        w_best = max(votes, key=votes.get)
        h[v] = w_best
        ok[v] = (failed == 0 and len(votes) == 1)
    return TreeMap(h=h, well_defined=ok, samples_used=samples)


def tree_periodic_points(tm: TreeMap, max_q: int):
    """(vertex, minimal period) pairs with h^q(v) = v for some q <= max_q,
    following only well-defined vertices."""
    out = []
    V = len(tm.h)
    for v in range(V):
        cur = v
        trail = [v]
        period = None
        for q in range(1, max_q + 1):
            if cur < 0 or not tm.well_defined[cur]:
                break
            cur = tm.h[cur]
            if cur == v:
                period = q
                break
            trail.append(cur)
        if period is not None:
            out.append((v, period))
    return out


# ---------------------------------------------------------------------------
# Entropy estimates

def itineraries(tree: RealTree, orbit_points, n: int):
    """Vertex itineraries of length n for every window of the orbit:
    (len(orbit)-n+1, n) integer array."""
    ids = tree.project_many(np.asarray(orbit_points, float))
    L = len(ids) - n + 1
    if L <= 0:
        raise ParameterError("orbit shorter than the itinerary length")
    return np.lib.stride_tricks.sliding_window_view(ids, n)[:L]


def block_count_entropy(ids, n_lo: int, n_hi: int):
    """Entropy slope estimate log N(n_hi)/N(n_lo) per step, from distinct
    itinerary blocks of a symbol sequence."""
    ids = np.asarray(ids, dtype=np.int64)
    counts = {}
    base = int(ids.max()) + 2
    for n in (n_lo, n_hi):
        W = np.lib.stride_tricks.sliding_window_view(ids, n)
        # hash windows as tuples via bytes view
        uniq = np.unique(np.ascontiguousarray(W).view(
            np.dtype((np.void, W.dtype.itemsize * n))))
        counts[n] = len(uniq)
    return (math.log(counts[n_hi]) - math.log(counts[n_lo])) / (n_hi - n_lo), counts


def plane_entropy(m_map, points, n_lo: int, n_hi: int, eps: float):
    """(n, eps)-separated greedy count slope on plane orbit samples:
    log S(n_hi)/S(n_lo) per step."""
    P = np.asarray(points, float)
    counts = {}
    for n in (n_lo, n_hi):
        # d_n-distance: max over the forward window; windows precomputed
        horizon = len(P) - n
        if horizon <= 1:
            raise ParameterError("orbit too short for the requested window")
        kept: list = []
        kept_windows = []
        for i in range(horizon):
            w = P[i:i + n]
            separated = True
            for kw in kept_windows:
                if np.abs(w - kw).max() < eps:
                    separated = False
                    break
            if separated:
                kept.append(i)
                kept_windows.append(w)
        counts[n] = len(kept)
    return (math.log(counts[n_hi]) - math.log(counts[n_lo])) / (n_hi - n_lo), counts


def tree_entropy(tree: RealTree, m_map, orbit_points, n_lo: int = 4,
                 n_hi: int = 10, eps: float | None = None):
    """Paired entropy estimates: itinerary block-count slope on the tree
    side, (n, eps)-separated slope on the plane side (eps defaults to the
    median component diameter)."""
    P = np.asarray(orbit_points, float)
    ids = tree.project_many(P)
    h_tree, tree_counts = block_count_entropy(ids, n_lo, n_hi)
    if eps is None:
        from .geometry import polygon_diameter
        eps = float(np.median([polygon_diameter(c) for c in tree.comp_polygons]))
    h_plane, plane_counts = plane_entropy(m_map, P, n_lo, n_hi, eps)
    return {"tree": h_tree, "plane": h_plane, "eps": eps,
            "tree_counts": tree_counts, "plane_counts": plane_counts}
