"""Planar map families: Henon maps, 1D interval/circle maps and their
two-dimensional extensions, plus trapping-region checks.

All maps expose the same small surface:

    eval(p)             one step, p = (x, y)
    eval_array(P)       vectorized over an (n, 2) array
    jacobian(p)         2x2 numpy array, analytic
    inverse(p)          where it exists

Points are plain (x, y) pairs; orbit-sized data lives in numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NotInvertibleError, ParameterError

__all__ = [
    "HenonMap",
    "LinearMap",
    "QuadraticMap",
    "ArnoldMap",
    "Extension2D",
    "TrappingRegion",
    "det2",
    "jacobian",
    "conjugacy_check",
    "trapping_check",
    "henon_conjugate_parameter",
]


def _require_finite(p):
    x, y = p
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DomainError(f"non-finite point {p!r}")
    return float(x), float(y)


def det2(m) -> float:
    """Determinant of a 2x2 matrix, computed as a11*a22 - a12*a21 in exactly
    that order (the cancellation pattern matters for the constant-Jacobian
    identities)."""
    return m[0][0] * m[1][1] - m[0][1] * m[1][0]


@dataclass(frozen=True)
class HenonMap:
    """(x, y) -> (1 - a x^2 + y, -b x).  det Df = b everywhere."""

    a: float
    b: float

    def eval(self, p):
        x, y = _require_finite(p)
        return (1.0 - self.a * x * x + y, -self.b * x)

    __call__ = eval

    def eval_array(self, P):
        P = np.asarray(P, dtype=float)
        return np.column_stack([1.0 - self.a * P[..., 0] ** 2 + P[..., 1],
                                -self.b * P[..., 0]])

    def jacobian_entries(self, p):
        x, _ = p
        return (-2.0 * self.a * x, 1.0, -self.b, 0.0)

    def jacobian_entries_array(self, P):
        P = np.asarray(P, dtype=float)
        x = P[..., 0]
        one = np.ones_like(x)
        return (-2.0 * self.a * x, one, -self.b * one, 0.0 * one)

    def jacobian(self, p):
        _require_finite(p)
        return np.array([[-2.0 * self.a * p[0], 1.0], [-self.b, 0.0]])

    @property
    def det_jacobian(self) -> float:
        return self.b

    def inverse(self, p):
        if self.b == 0.0:
            raise NotInvertibleError("Henon map with b = 0 is not invertible")
        X, Y = _require_finite(p)
        x = -Y / self.b
        return (x, X - 1.0 + self.a * x * x)

    def inverse_array(self, P):
        if self.b == 0.0:
            raise NotInvertibleError("Henon map with b = 0 is not invertible")
        P = np.asarray(P, dtype=float)
        x = -P[..., 1] / self.b
        return np.column_stack([x, P[..., 0] - 1.0 + self.a * x * x])

    def fixed_points(self):
        """The two fixed points, solving a x^2 + (1+b) x - 1 = 0, y = -b x.
        Returned sorted by x (negative root first)."""
        disc = (1.0 + self.b) ** 2 + 4.0 * self.a
        if disc < 0:
            return []
        r = math.sqrt(disc)
        xs = [(-(1.0 + self.b) - r) / (2.0 * self.a),
              (-(1.0 + self.b) + r) / (2.0 * self.a)]
        return [(x, -self.b * x) for x in xs]

    def saddle_fixed_point(self):
        """The fixed point with real eigenvalues on both sides of the unit
        circle; for a in (1,2) and small |b| this is the one with x > 0."""
        for p in self.fixed_points():
            ev = np.linalg.eigvals(self.jacobian(p))
            if np.all(np.isreal(ev)):
                mags = np.sort(np.abs(ev))
                if mags[0] < 1.0 < mags[1]:
                    return p
        return None

    # Lipschitz data of Df: ||Df(p) - Df(q)|| <= 2a ||p - q|| exactly,
    # since only the (1,1) entry varies and it is linear in x.
    def holder_data(self):
        return 1.0, 2.0 * abs(self.a)


@dataclass(frozen=True)
class LinearMap:
    """Affine model map p -> M p + c; used by tests and toy geometry."""

    m11: float
    m12: float
    m21: float
    m22: float
    cx: float = 0.0
    cy: float = 0.0

    @classmethod
    def diagonal(cls, s, u):
        return cls(s, 0.0, 0.0, u)

    @classmethod
    def from_matrix(cls, M, c=(0.0, 0.0)):
        return cls(M[0][0], M[0][1], M[1][0], M[1][1], c[0], c[1])

    def eval(self, p):
        x, y = _require_finite(p)
        return (self.m11 * x + self.m12 * y + self.cx,
                self.m21 * x + self.m22 * y + self.cy)

    __call__ = eval

    def eval_array(self, P):
        P = np.asarray(P, dtype=float)
        return np.column_stack([self.m11 * P[..., 0] + self.m12 * P[..., 1] + self.cx,
                                self.m21 * P[..., 0] + self.m22 * P[..., 1] + self.cy])

    def jacobian_entries(self, p):
        return (self.m11, self.m12, self.m21, self.m22)

    def jacobian_entries_array(self, P):
        P = np.asarray(P, dtype=float)
        one = np.ones(P.shape[:-1])
        return (self.m11 * one, self.m12 * one, self.m21 * one, self.m22 * one)

    def jacobian(self, p=None):
        return np.array([[self.m11, self.m12], [self.m21, self.m22]])

    @property
    def det_jacobian(self):
        return self.m11 * self.m22 - self.m12 * self.m21

    def inverse(self, p):
        d = self.det_jacobian
        if d == 0.0:
            raise NotInvertibleError("singular linear map")
        X, Y = _require_finite(p)
        X -= self.cx
        Y -= self.cy
        return ((self.m22 * X - self.m12 * Y) / d,
                (-self.m21 * X + self.m11 * Y) / d)

    def inverse_array(self, P):
        P = np.asarray(P, dtype=float)
        d = self.det_jacobian
        if d == 0.0:
            raise NotInvertibleError("singular linear map")
        X = P[..., 0] - self.cx
        Y = P[..., 1] - self.cy
        return np.column_stack([(self.m22 * X - self.m12 * Y) / d,
                                (-self.m21 * X + self.m11 * Y) / d])

    def holder_data(self):
        return 1.0, 0.0


@dataclass(frozen=True)
class QuadraticMap:
    """h(x) = x^2 + c on the interval I = (c/2 - 1, 1 - c/2).

    For c in (-2, -1) the closed interval maps into the interior; c = -2 is
    the boundary (full) case where h maps I onto itself.
    """

    c: float

    kind = "interval"

    def __post_init__(self):
        if not (-2.0 <= self.c < 0.0):
            raise ParameterError(f"quadratic parameter c={self.c} outside [-2, 0)")

    @property
    def domain(self):
        return (self.c / 2.0 - 1.0, 1.0 - self.c / 2.0)

    def eval(self, x):
        return x * x + self.c

    __call__ = eval

    def deriv(self, x):
        return 2.0 * x

    def second_deriv_bound(self):
        return 2.0

    def deriv_sup(self):
        lo, hi = self.domain
        return 2.0 * max(abs(lo), abs(hi))


@dataclass(frozen=True)
class ArnoldMap:
    """Circle map lift h(x) = x + a sin(2 pi x) + omega, h(x+1) = h(x) + 1.

    All formulas operate on the lift, so h(x) - x is well defined.
    """

    a: float
    omega: float

    kind = "circle"
    domain = None

    def eval(self, x):
        return x + self.a * math.sin(2.0 * math.pi * x) + self.omega

    __call__ = eval

    def deriv(self, x):
        return 1.0 + 2.0 * math.pi * self.a * math.cos(2.0 * math.pi * x)

    def second_deriv_bound(self):
        return 4.0 * math.pi ** 2 * abs(self.a)

    def deriv_sup(self):
        return 1.0 + 2.0 * math.pi * abs(self.a)


@dataclass(frozen=True)
class Extension2D:
    """Two-dimensional extension of a 1D map h:

        (x, y) -> (h(x) + y, b (h(x) - x + y))

    on the strip S = I x (-eps, eps).  det Df = b everywhere.
    """

    h: object
    b: float
    eps: float

    def __post_init__(self):
        if not abs(self.b) < 1.0:
            raise ParameterError(f"extension needs |b| < 1, got b={self.b}")
        if self.eps <= 0:
            raise ParameterError("strip half-height eps must be positive")

    def _check_domain(self, x, y):
        if self.h.kind == "interval":
            lo, hi = self.h.domain
            if not (lo <= x <= hi):
                raise DomainError(f"x={x} outside interval domain ({lo}, {hi})")
        if abs(y) > self.eps:
            raise DomainError(f"|y|={abs(y)} exceeds strip half-height {self.eps}")

    def eval(self, p, check=True):
        x, y = _require_finite(p)
        if check:
            self._check_domain(x, y)
        hx = self.h.eval(x)
        return (hx + y, self.b * (hx - x + y))

    __call__ = eval

    def eval_array(self, P):
        P = np.asarray(P, dtype=float)
        hx = P[..., 0] ** 2 + self.h.c if isinstance(self.h, QuadraticMap) else \
            np.vectorize(self.h.eval)(P[..., 0])
        return np.column_stack([hx + P[..., 1],
                                self.b * (hx - P[..., 0] + P[..., 1])])

    def jacobian_entries(self, p):
        dh = self.h.deriv(p[0])
        return (dh, 1.0, self.b * (dh - 1.0), self.b)

    def jacobian_entries_array(self, P):
        P = np.asarray(P, dtype=float)
        x = P[..., 0]
        dh = 2.0 * x if isinstance(self.h, QuadraticMap) else \
            np.vectorize(self.h.deriv)(x)
        one = np.ones_like(x)
        return (dh, one, self.b * (dh - 1.0), self.b * one)

    def jacobian(self, p):
        _require_finite(p)
        dh = self.h.deriv(p[0])
        return np.array([[dh, 1.0], [self.b * (dh - 1.0), self.b]])

    @property
    def det_jacobian(self):
        return self.b

    def inverse(self, p):
        # From (X, Y) = (h(x)+y, b(h(x)-x+y)):  Y/b = X - x, so x = X - Y/b.
        if self.b == 0.0:
            raise NotInvertibleError("extension with b = 0 is not invertible")
        X, Y = _require_finite(p)
        x = X - Y / self.b
        return (x, X - self.h.eval(x))

    def inverse_array(self, P):
        if self.b == 0.0:
            raise NotInvertibleError("extension with b = 0 is not invertible")
        P = np.asarray(P, dtype=float)
        x = P[..., 0] - P[..., 1] / self.b
        hx = x ** 2 + self.h.c if isinstance(self.h, QuadraticMap) else \
            np.vectorize(self.h.eval)(x)
        return np.column_stack([x, P[..., 0] - hx])

    def holder_data(self):
        # ||Df(p)-Df(q)|| <= C_f ||p-q|| with C_f from a bound on h''
        # (exact for the quadratic, analytic bound for Arnold).
        c2 = self.h.second_deriv_bound()
        return 1.0, c2 * math.hypot(1.0, self.b)

    def standard_region(self):
        lo, hi = self.h.domain if self.h.kind == "interval" else (0.0, 1.0)
        return TrappingRegion(lo, hi, -self.eps, self.eps)


@dataclass(frozen=True)
class TrappingRegion:
    """Axis-aligned open rectangle used as candidate trapping region."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ParameterError("degenerate rectangle")

    @classmethod
    def henon_standard(cls, a, shrink=0.0):
        """{|x| < 1/2 + 1/a, |y| < 1/2 - a/4}, the standard Henon trapping
        rectangle for a in (1, 2).  `shrink` moves every side inward; the
        exact rectangle has two corners mapping onto its boundary, so a
        strictly positive trapping margin needs shrink > 0."""
        if not (1.0 < a < 2.0):
            raise ParameterError("standard region needs a in (1, 2)")
        xm = 0.5 + 1.0 / a - shrink
        ym = 0.5 - a / 4.0 - shrink
        return cls(-xm, xm, -ym, ym)

    def contains(self, p) -> bool:
        x, y = p
        return self.xmin < x < self.xmax and self.ymin < y < self.ymax

    def contains_array(self, P):
        P = np.asarray(P, dtype=float)
        return ((P[..., 0] > self.xmin) & (P[..., 0] < self.xmax)
                & (P[..., 1] > self.ymin) & (P[..., 1] < self.ymax))

    def signed_distance(self, p) -> float:
        """Positive inside (distance to the boundary), negative outside
        (minus the distance to the rectangle)."""
        x, y = p
        dx_in = min(x - self.xmin, self.xmax - x)
        dy_in = min(y - self.ymin, self.ymax - y)
        if dx_in >= 0.0 and dy_in >= 0.0:
            return min(dx_in, dy_in)
        dx_out = max(self.xmin - x, x - self.xmax, 0.0)
        dy_out = max(self.ymin - y, y - self.ymax, 0.0)
        return -math.hypot(dx_out, dy_out)

    def boundary_samples(self, n: int):
        """n points spread uniformly by arclength along the boundary, plus
        the 4 corners."""
        if n < 4:
            raise ParameterError("need at least 4 boundary samples")
        w = self.xmax - self.xmin
        h = self.ymax - self.ymin
        per = 2.0 * (w + h)
        # half-step offset so the explicit corner set is not duplicated
        ts = (np.arange(n) + 0.5) * (per / n)
        pts = np.empty((n, 2))
        for i, t in enumerate(ts):
            if t < w:
                pts[i] = (self.xmin + t, self.ymin)
            elif t < w + h:
                pts[i] = (self.xmax, self.ymin + (t - w))
            elif t < 2 * w + h:
                pts[i] = (self.xmax - (t - w - h), self.ymax)
            else:
                pts[i] = (self.xmin, self.ymax - (t - 2 * w - h))
        corners = np.array([(self.xmin, self.ymin), (self.xmax, self.ymin),
                            (self.xmax, self.ymax), (self.xmin, self.ymax)])
        return np.vstack([pts, corners])

    def polygon(self):
        return np.array([(self.xmin, self.ymin), (self.xmax, self.ymin),
                         (self.xmax, self.ymax), (self.xmin, self.ymax)])

    def sample_grid(self, n):
        xs = np.linspace(self.xmin, self.xmax, n)
        ys = np.linspace(self.ymin, self.ymax, n)
        X, Y = np.meshgrid(xs, ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    @property
    def center(self):
        return (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))

    def diameter(self):
        return math.hypot(self.xmax - self.xmin, self.ymax - self.ymin)


def jacobian(m, p):
    """Analytic Jacobian of any map in this module at p."""
    return m.jacobian(p)


def trapping_check(m, region: TrappingRegion, n: int = 256) -> float:
    """Min over sampled boundary points (uniform arclength + corners) of the
    signed distance from f(p) to the complement of the region.  A positive
    value certifies f(boundary) inside the region at sample resolution."""
    pts = region.boundary_samples(n)
    img = m.eval_array(pts)
    return float(min(region.signed_distance(q) for q in img))


def henon_conjugate_parameter(c: float, b: float) -> float:
    """Henon parameter a = -b^2/4 - c - b/2 matched to the quadratic
    extension with parameters (c, b)."""
    return -b * b / 4.0 - c - b / 2.0


def conjugacy_check(c: float, b: float, grid_n: int = 64) -> float:
    """Max error of the affine conjugacy between the Henon map H_{a,b} and
    the quadratic extension f_b, max over a grid of ||phi(H(p)) - f_b(phi(p))||
    with phi(x, y) = (-a x - b/2, -a y - a b x) and a = -b^2/4 - c - b/2.

    phi maps H-orbits to f_b-orbits; the identity is polynomial, so the
    result should be at rounding level for valid parameters.
    """
    a = henon_conjugate_parameter(c, b)
    if not a > 0.0:
        raise ParameterError(f"conjugate Henon parameter a={a} not positive")
    h = QuadraticMap(c)
    H = HenonMap(a, b)

    # Grid in the image coordinates: pick phi(p) inside the quadratic strip,
    # pull back through phi^{-1} (affine, invertible for a != 0).
    lo, hi = h.domain
    xs = np.linspace(0.8 * lo, 0.8 * hi, grid_n)
    ys = np.linspace(-0.4, 0.4, grid_n)
    U, V = np.meshgrid(xs, ys)
    # phi^{-1}: x = -(u + b/2)/a,  y = -v/a - b x
    X = -(U + b / 2.0) / a
    Y = -V / a - b * X

    # H(p)
    HX = 1.0 - a * X * X + Y
    HY = -b * X
    # phi(H(p))
    L1 = -a * HX - b / 2.0
    L2 = -a * HY - a * b * HX
    # f_b(phi(p)), raw formula (the identity is algebraic)
    hx = U * U + c
    R1 = hx + V
    R2 = b * (hx - U + V)
    return float(np.hypot(L1 - R1, L2 - R2).max())
