"""Orbit iteration, Lyapunov exponents, empirical measures, recurrence and
the Henon escape trichotomy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ParameterError
from .maps import HenonMap, TrappingRegion

__all__ = [
    "OrbitSegment",
    "LyapunovEstimate",
    "EmpiricalMeasure",
    "OrbitClass",
    "ESCAPE_RADIUS",
    "iterate",
    "lyapunov",
    "birkhoff_measure",
    "find_recurrent_return",
    "classify_orbit",
    "escape_cone_contains",
]

ESCAPE_RADIUS = 1.0e6


@dataclass
class OrbitSegment:
    """Forward orbit p_0 .. p_k (k = requested n unless the orbit left the
    ||p|| < 1e6 box earlier, in which case overflowed is set)."""

    points: np.ndarray
    requested: int
    overflowed: bool = False

    @property
    def base(self):
        return (float(self.points[0, 0]), float(self.points[0, 1]))

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class LyapunovEstimate:
    lambda_minus: float
    lambda_plus: float
    n: int
    burn: int

    def as_dict(self):
        return {"lambda_minus": self.lambda_minus, "lambda_plus": self.lambda_plus,
                "n": self.n, "burn": self.burn}


@dataclass
class EmpiricalMeasure:
    """Equal-weight samples p_burn .. p_burn+n of a Birkhoff orbit segment."""

    points: np.ndarray
    burn: int

    @property
    def weights(self):
        return np.full(len(self.points), 1.0 / len(self.points))

    def support_diameter(self):
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        return float(np.hypot(*(hi - lo)))


@dataclass(frozen=True)
class OrbitClass:
    tag: str  # Escapes | ConvergesToFixedPoint | EntersTrappingRegion | Undecided
    hitting_time: int


def iterate(m, p, n: int) -> OrbitSegment:
    """Forward orbit of length n (n+1 points).  Aborts early with the
    overflow flag set once ||p_i|| exceeds 1e6 or the orbit leaves the
    map's domain."""
    if n < 0:
        raise ParameterError("orbit length must be nonnegative")
    from .errors import DomainError
    x, y = float(p[0]), float(p[1])
    pts = [(x, y)]
    ev = m.eval
    overflow = False
    for _ in range(n):
        try:
            x, y = ev((x, y))
        except DomainError:
            overflow = True
            break
        pts.append((x, y))
        if x * x + y * y > ESCAPE_RADIUS * ESCAPE_RADIUS:
            overflow = True
            break
    return OrbitSegment(np.asarray(pts, dtype=float), n, overflow)


def lyapunov(m, p, n: int, burn: int = 0) -> LyapunovEstimate:
    """Both Lyapunov exponents by tangent-frame iteration with per-step
    Gram-Schmidt orthonormalization.  The per-step log norms of the two
    frame vectors average to lambda_plus and lambda_minus."""
    if n <= 0:
        raise ParameterError("need n > 0 iterates")
    x, y = float(p[0]), float(p[1])
    ev = m.eval
    jac = m.jacobian_entries
    for _ in range(burn):
        x, y = ev((x, y))
        if x * x + y * y > ESCAPE_RADIUS * ESCAPE_RADIUS:
            raise NumericalError("orbit escaped during burn-in")
    v1x, v1y = 1.0, 0.0
    v2x, v2y = 0.0, 1.0
    s1 = s2 = 0.0
    for _ in range(n):
        j11, j12, j21, j22 = jac((x, y))
        x, y = ev((x, y))
        if x * x + y * y > ESCAPE_RADIUS * ESCAPE_RADIUS:
            raise NumericalError("orbit escaped; Lyapunov average undefined")
        w1x = j11 * v1x + j12 * v1y
        w1y = j21 * v1x + j22 * v1y
        n1 = math.hypot(w1x, w1y)
        v1x, v1y = w1x / n1, w1y / n1
        w2x = j11 * v2x + j12 * v2y
        w2y = j21 * v2x + j22 * v2y
        dot = w2x * v1x + w2y * v1y
        w2x -= dot * v1x
        w2y -= dot * v1y
        n2 = math.hypot(w2x, w2y)
        v2x, v2y = w2x / n2, w2y / n2
        s1 += math.log(n1)
        s2 += math.log(n2)
    lp, lm = s1 / n, s2 / n
    if lp < lm:
        lp, lm = lm, lp
    return LyapunovEstimate(lm, lp, n, burn)


def birkhoff_measure(m, p, n: int, burn: int = 0) -> EmpiricalMeasure:
    seg = iterate(m, p, burn + n)
    if seg.overflowed:
        raise NumericalError("orbit escaped; no bounded Birkhoff segment")
    return EmpiricalMeasure(seg.points[burn:], burn)


def find_recurrent_return(seg: OrbitSegment, delta: float):
    """Smallest (i, then n >= 1) with ||p_{i+n} - p_i|| < delta, or None.

    The naive scan and the grid-hash path (used for long segments) return
    identical results.
    """
    if delta <= 0:
        raise ParameterError("delta must be positive")
    P = seg.points
    N = len(P)
    if N < 2:
        return None
    if N <= 10_000:
        for i in range(N - 1):
            d = np.hypot(P[i + 1:, 0] - P[i, 0], P[i + 1:, 1] - P[i, 1])
            hits = np.nonzero(d < delta)[0]
            if len(hits):
                return i, int(hits[0]) + 1
        return None
    # uniform-grid spatial hash, cell size delta
    cells: dict = {}
    keys = np.floor(P / delta).astype(np.int64)
    for j in range(N):
        cells.setdefault((keys[j, 0], keys[j, 1]), []).append(j)
    for i in range(N - 1):
        kx, ky = keys[i]
        best = None
        for cx in (kx - 1, kx, kx + 1):
            for cy in (ky - 1, ky, ky + 1):
                for j in cells.get((cx, cy), ()):
                    if j > i and (best is None or j < best):
                        if math.hypot(P[j, 0] - P[i, 0], P[j, 1] - P[i, 1]) < delta:
                            best = j
        if best is not None:
            return i, best - i
    return None


def escape_cone_contains(p) -> bool:
    """The forward-invariant escape cone C = {|x| > |y| and |x| > 3}."""
    x, y = p
    return abs(x) > abs(y) and abs(x) > 3.0


def classify_orbit(m: HenonMap, p, maxiter: int = 10_000,
                   region: TrappingRegion | None = None) -> OrbitClass:
    """Henon escape trichotomy: the orbit either enters the escape cone C
    (or overflows), converges to the fixed point in (-3, -1/2-1/a) x (-1, 1),
    or enters the trapping rectangle.  Undecided when maxiter is exhausted."""
    if not (1.0 < m.a < 2.0):
        raise ParameterError("trichotomy verified for a in (1, 2) only")
    if m.b == 0.0:
        raise ParameterError("trichotomy needs b != 0")
    if region is None:
        region = TrappingRegion.henon_standard(m.a)
    fps = [q for q in m.fixed_points()
           if -3.0 < q[0] < -(0.5 + 1.0 / m.a) and -1.0 < q[1] < 1.0]
    fp = fps[0] if fps else None
    x, y = float(p[0]), float(p[1])
    near_fp_streak = 0
    for i in range(maxiter + 1):
        if escape_cone_contains((x, y)):
            return OrbitClass("Escapes", i)
        if x * x + y * y > ESCAPE_RADIUS * ESCAPE_RADIUS:
            return OrbitClass("Escapes", i)
        if fp is not None and math.hypot(x - fp[0], y - fp[1]) < 1e-8:
            near_fp_streak += 1
            if near_fp_streak >= 2:
                return OrbitClass("ConvergesToFixedPoint", i)
        else:
            near_fp_streak = 0
        if region.contains((x, y)):
            return OrbitClass("EntersTrappingRegion", i)
        x, y = m.eval((x, y))
    return OrbitClass("Undecided", maxiter)
