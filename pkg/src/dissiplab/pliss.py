"""Pliss-time extraction and two-sided hyperbolicity certificates.

A certificate at (x, E) over a window N checks, for all 1 <= n <= N,

    sigma_tilde^n <= ||Df^n(x)|E|| <= sigma^n
    rho_tilde^n   <= ||Df^n(x)|E||^2 / |det Df^n(x)| <= rho^n

with all four constants in (0, 1).  The chart construction additionally
needs the pinching sigma_tilde*rho_tilde/(sigma*rho) > sigma.

Precision note: on a chaotic orbit the direction E can only be represented
to ~1e-16, so products along E track the contraction rate for roughly
log(1e16)/(lambda_plus - lambda_minus) steps; windows beyond that fail to
certify (conservatively).  At periodic points E is exactly invariant and
arbitrary windows work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import NumericalError, ParameterError

__all__ = [
    "PlissParams",
    "PlissResult",
    "pliss_times",
    "RateConstants",
    "P1Constants",
    "p1_constants",
    "verify_p1_chain",
    "block_measure_bound",
    "constants_from_exponents",
    "HyperbolicityCertificate",
    "certify",
    "estimate_E",
    "block_fraction",
    "CriticalReport",
    "critical_fraction",
    "MinSlopeResult",
    "min_slope",
    "VERTICAL_SLOPE_SENTINEL",
]


# ---------------------------------------------------------------------------
# Pliss times

@dataclass(frozen=True)
class PlissParams:
    alpha1: float
    alpha2: float
    alpha3: float

    def __post_init__(self):
        if not (self.alpha1 < self.alpha2 < self.alpha3):
            raise ParameterError("need alpha1 < alpha2 < alpha3")

    @property
    def density_bound(self) -> float:
        return (self.alpha3 - self.alpha2) / (self.alpha3 - self.alpha1)


@dataclass
class PlissResult:
    indices: np.ndarray
    realized_density: float

    def __len__(self):
        return len(self.indices)


def pliss_times(values, params: PlissParams) -> PlissResult:
    """Indices m such that every forward window starting at m has mean at
    most alpha3:  (a_m + ... + a_{n-1})/(n - m) <= alpha3 for all m < n <= L.

    Built by the inductive argmax construction on the shifted partial sums
    S_n = sum_{i<n} (a_i - alpha3): the first index realizes the maximum of
    {S_n}, each next one is the smallest later argmax.  That set equals
    {m : S_m >= S_n for all n > m}, computed here with one suffix-maximum
    sweep.  Ties resolve to the smallest index either way.
    """
    a = np.asarray(values, dtype=float)
    L = len(a)
    if L == 0:
        return PlissResult(np.empty(0, dtype=int), 0.0)
    if not np.all(a > params.alpha1):
        raise ParameterError("sequence values must exceed alpha1")
    if a.mean() > params.alpha2 + 1e-12:
        raise ParameterError("sequence mean exceeds alpha2")
    S = np.concatenate([[0.0], np.cumsum(a - params.alpha3)])
    # suffix maximum of S over indices m+1 .. L
    suf = np.empty(L + 1)
    suf[L] = -np.inf
    for m in range(L - 1, -1, -1):
        suf[m] = max(suf[m + 1], S[m + 1])
    idx = np.nonzero(S[:L] >= suf[:L])[0]
    if len(idx) == 0:
        return PlissResult(idx, 0.0)
    density = len(idx) / max(int(idx[-1]), 1)
    return PlissResult(idx, float(density))


# ---------------------------------------------------------------------------
# Rate constants

@dataclass(frozen=True)
class RateConstants:
    sigma: float
    sigma_tilde: float
    rho: float
    rho_tilde: float

    def __post_init__(self):
        for name in ("sigma", "sigma_tilde", "rho", "rho_tilde"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ParameterError(f"{name}={v} must lie in (0, 1)")
        if self.sigma_tilde > self.sigma or self.rho_tilde > self.rho:
            raise ParameterError("lower constants must not exceed upper ones")

    @property
    def pinching_ratio(self) -> float:
        return (self.sigma_tilde * self.rho_tilde) / (self.sigma * self.rho)

    @property
    def pinching_ok(self) -> bool:
        return self.pinching_ratio > self.sigma


@dataclass(frozen=True)
class P1Constants:
    """Constants derived from D = sup |det Df| and m = inf conorm(Df):
    sigma_tilde = m, rho_tilde = m^2/D, sigma = D^{4/5}, rho = D^{3/4}.
    Valid (pinching guaranteed) iff D < m^{9/10} strictly."""

    D: float
    m: float
    sigma: float
    sigma_tilde: float
    rho: float
    rho_tilde: float
    valid: bool

    @property
    def pinching_ratio(self) -> float:
        return (self.sigma_tilde * self.rho_tilde) / (self.sigma * self.rho)

    @property
    def pinching_ok(self) -> bool:
        return self.pinching_ratio > self.sigma


def p1_constants(D: float, m: float) -> P1Constants:
    if not (D > 0.0 and m > 0.0):
        raise ParameterError("D and m must be positive")
    if not D < 1.0:
        raise ParameterError("need D < 1 (dissipative)")
    valid = D < m ** 0.9
    c = P1Constants(D=D, m=m,
                    sigma=D ** 0.8, sigma_tilde=m,
                    rho=D ** 0.75, rho_tilde=m * m / D,
                    valid=valid)
    if valid and not verify_p1_chain(D, m):
        raise NumericalError("pinching chain failed in extended precision "
                             f"for D={D}, m={m}")
    return c


def verify_p1_chain(D: float, m: float, dps: int = 50) -> bool:
    """Extended-precision check of  m^3 D^{-51/20} > D^{47/60} > D^{4/5}
    (the pinching chain for the derived constants)."""
    import mpmath
    with mpmath.workdps(dps):
        Dm = mpmath.mpf(D)
        mm = mpmath.mpf(m)
        lhs = mm ** 3 * Dm ** (mpmath.mpf(-51) / 20)
        mid = Dm ** (mpmath.mpf(47) / 60)
        sig = Dm ** (mpmath.mpf(4) / 5)
        return bool(lhs > mid and mid > sig)


def block_measure_bound() -> Fraction:
    """Rational lower bound for the measure of the certified block under
    the derived constants: the two chain densities 9/14 and 9/17 combine to
    9/14 + 9/17 - 1 = 41/238 > 1/6."""
    return Fraction(9, 14) + Fraction(9, 17) - 1


def constants_from_exponents(lambda_minus: float, lambda_plus: float,
                             up: float = 0.45, down: float = 0.62,
                             up2: float | None = None,
                             down2: float | None = None) -> RateConstants:
    """Rate constants banded around measured Lyapunov exponents:
    sigma in exp(lambda_minus -down/+up), rho around the pinching rate
    lambda_minus - lambda_plus.  The slack budget must satisfy
    2*up + up2 + down + down2 < |lambda_minus| or pinching fails."""
    if up2 is None:
        up2 = up
    if down2 is None:
        down2 = down
    if lambda_minus >= 0:
        raise ParameterError("lambda_minus must be negative")
    r = lambda_minus - lambda_plus
    if r >= 0:
        raise ParameterError("need lambda_minus < lambda_plus")
    c = RateConstants(sigma=math.exp(lambda_minus + up),
                      sigma_tilde=math.exp(lambda_minus - down),
                      rho=math.exp(r + up2),
                      rho_tilde=math.exp(r - down2))
    if not c.pinching_ok:
        raise ParameterError(
            f"slack budget too large: pinching ratio {c.pinching_ratio:.4g} "
            f"<= sigma {c.sigma:.4g}")
    return c


# ---------------------------------------------------------------------------
# Certificates

@dataclass
class HyperbolicityCertificate:
    x: tuple
    E: np.ndarray
    sigma: float
    sigma_tilde: float
    rho: float
    rho_tilde: float
    N: int
    passed: bool
    first_fail_n: int | None

    @property
    def E_angle(self) -> float:
        return math.atan2(self.E[1], self.E[0])

    def as_dict(self):
        return {"x": self.x[0], "y": self.x[1], "E_angle": self.E_angle,
                "sigma": self.sigma, "sigma_tilde": self.sigma_tilde,
                "rho": self.rho, "rho_tilde": self.rho_tilde, "N": self.N,
                "pass": self.passed, "first_fail_n": self.first_fail_n}


def certify(m_map, points, E, constants, N: int) -> HyperbolicityCertificate:
    """Check both certificate chains for 0 <= n <= N along the orbit points
    (points[i] must be the i-th forward image of points[0]).  Products are
    accumulated in log space.  Fails fast at the first violated index."""
    P = np.asarray(points, dtype=float)
    if len(P) < N + 1:
        raise ParameterError(f"orbit provides {len(P)-1} steps, window needs {N}")
    e = np.asarray(E, dtype=float)
    nrm = math.hypot(e[0], e[1])
    if nrm == 0.0:
        raise ParameterError("zero direction")
    e = e / nrm
    ls, lst = math.log(constants.sigma), math.log(constants.sigma_tilde)
    lr, lrt = math.log(constants.rho), math.log(constants.rho_tilde)
    log_m = 0.0
    log_det = 0.0
    passed = True
    first_fail = None
    for n in range(1, N + 1):
        j11, j12, j21, j22 = m_map.jacobian_entries(P[n - 1])
        vx = j11 * e[0] + j12 * e[1]
        vy = j21 * e[0] + j22 * e[1]
        s = math.hypot(vx, vy)
        if s == 0.0:
            passed, first_fail = False, n
            break
        e = np.array([vx / s, vy / s])
        log_m += math.log(s)
        log_det += math.log(abs(j11 * j22 - j12 * j21))
        ok = (n * lst <= log_m <= n * ls) and (n * lrt <= 2.0 * log_m - log_det <= n * lr)
        if not ok:
            passed, first_fail = False, n
            break
    return HyperbolicityCertificate(
        x=(float(P[0, 0]), float(P[0, 1])), E=np.asarray(E, float) / nrm,
        sigma=constants.sigma, sigma_tilde=constants.sigma_tilde,
        rho=constants.rho, rho_tilde=constants.rho_tilde,
        N=N, passed=passed, first_fail_n=first_fail)


def estimate_E(m_map, points, n_back: int):
    """Most-contracted (right singular) direction of Df^{n_back} at
    points[0], accumulated forward with rescaling.  Returns (E, degenerate);
    when the singular values stay within 1e-9 of each other the previous
    step's direction is returned with the flag set."""
    P = np.asarray(points, dtype=float)
    if len(P) < n_back + 1:
        raise ParameterError("orbit too short for requested n_back")
    M = np.eye(2)
    prev = np.array([1.0, 0.0])
    degenerate = True
    for j in range(n_back):
        J = np.asarray(m_map.jacobian_entries(P[j]), dtype=float).reshape(2, 2)
        M = J @ M
        s = np.abs(M).max()
        if s == 0.0 or not np.isfinite(s):
            raise NumericalError("tangent product degenerated")
        M /= s
        _, sv, Vt = np.linalg.svd(M)
        if sv[0] - sv[1] > 1e-9 * sv[0]:
            prev = Vt[-1]
            degenerate = False
        elif not degenerate:
            # keep the previous direction through a momentarily degenerate step
            pass
    return prev.copy(), degenerate


def block_fraction(m_map, measure, constants, N: int, n_back: int | None = None,
                   sample_k: int | None = None, rng=None) -> float:
    """Fraction of measure samples whose certificate passes at window N,
    with E estimated over n_back forward steps (default N)."""
    from .orbits import iterate
    if n_back is None:
        n_back = N
    pts = measure.points
    if sample_k is not None and sample_k < len(pts):
        if rng is None:
            rng = np.random.default_rng(0)
        pts = pts[rng.choice(len(pts), size=sample_k, replace=False)]
    horizon = max(N, n_back)
    npass = 0
    for p in pts:
        seg = iterate(m_map, p, horizon)
        if seg.overflowed:
            continue
        E, degen = estimate_E(m_map, seg.points, n_back)
        if degen:
            continue
        if certify(m_map, seg.points, E, constants, N).passed:
            npass += 1
    return npass / len(pts)


# ---------------------------------------------------------------------------
# Critical region and slopes (2D extensions)

@dataclass(frozen=True)
class CriticalReport:
    fraction: float
    delta: float
    K: float
    choice_lhs: float
    choice_ok: bool


def critical_fraction(ext, delta: float, measure) -> CriticalReport:
    """Fraction of measure samples inside the critical strip
    {x : |Dh(x)| <= delta} x (-eps, eps), together with the smallness
    ratio 2 log K / (2 log K + |log delta|/2) that must stay below 1/15."""
    if delta <= 0:
        raise ParameterError("delta must be positive")
    h = ext.h
    if h.kind == "interval":
        lo, hi = h.domain
        xs = np.linspace(lo, hi, 1024)
    else:
        xs = np.linspace(0.0, 1.0, 1024)
    sup_dh = max(abs(h.deriv(x)) for x in xs)
    sup_df = max(_opnorm2(ext.jacobian_entries((x, 0.0))) for x in xs)
    K = max(sup_dh, sup_df, 1.0 + 1e-9)
    lhs = 2.0 * math.log(K) / (2.0 * math.log(K) + 0.5 * abs(math.log(delta)))
    frac = float(np.mean([abs(h.deriv(p[0])) <= delta for p in measure.points]))
    return CriticalReport(fraction=frac, delta=delta, K=K,
                          choice_lhs=lhs, choice_ok=lhs < 1.0 / 15.0)


def _opnorm2(entries) -> float:
    a, b, c, d = entries
    f = a * a + b * b + c * c + d * d
    det = abs(a * d - b * c)
    g1 = math.sqrt(max(f + 2 * det, 0.0))
    g2 = math.sqrt(max(f - 2 * det, 0.0))
    return 0.5 * (g1 + g2)


VERTICAL_SLOPE_SENTINEL = 1.0e18


@dataclass(frozen=True)
class MinSlopeResult:
    value: float
    any_vertical: bool
    count: int


def min_slope(directions) -> MinSlopeResult | None:
    """Minimum |dy/dx| over a family of directions; vertical directions
    contribute a large sentinel and set a flag.  None for an empty family."""
    dirs = [np.asarray(d, float) for d in directions]
    if not dirs:
        return None
    vals = []
    any_vert = False
    for d in dirs:
        if abs(d[0]) < 1e-15 * abs(d[1]):
            vals.append(VERTICAL_SLOPE_SENTINEL)
            any_vert = True
        else:
            vals.append(abs(d[1] / d[0]))
    return MinSlopeResult(value=float(min(vals)), any_vertical=any_vert,
                          count=len(vals))
