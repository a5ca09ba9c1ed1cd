"""Scaled chart sequences along a certified orbit window.

Along the orbit x_n = f^n(x) with certified direction E, orthogonal frames
(e_n, f_n) follow the pushed direction; in those frames Df(x_n) is upper
triangular.  The diagonal rescaling Delta_n = Diag(A_n, A_n B_n) with

    A_n = sum_{k>=0} lam1^{-k} m_{n+k}/m_n        (truncated geometric tail)
    B_n = sum_{k=0}^{n} lam2^{k-n} (M_k/M_n)/(m_k/m_n)

turns the chart maps into uniformly hyperbolic triangular maps
H_n = [[a, d], [0, c]] with |a| < lam1 and |c| > |a|/lam2.  The chart
validity radius is r_n = (eps / (C_f A_{n+1} B_{n+1}))^{1/alpha} with
(alpha, C_f) the Holder data of Df.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ParameterError

__all__ = ["ChartSequence", "chart_sequence", "choose_lambdas"]

_MAX_TAIL = 6000


def choose_lambdas(constants):
    """A valid (lam1, lam2) pair for the given pinched constants:
    lam1 in (sigma, sqrt(st*rt/rho)), lam2 in (lam1^2 rho / st, rt),
    both chosen as geometric midpoints."""
    if not constants.pinching_ok:
        raise ParameterError("constants are not pinched; no valid lambdas")
    st, s = constants.sigma_tilde, constants.sigma
    rt, r = constants.rho_tilde, constants.rho
    hi1 = math.sqrt(st * rt / r)
    lam1 = math.sqrt(s * hi1)
    lo2 = lam1 * lam1 * r / st
    if not lo2 < rt:
        raise NumericalError("lambda window empty despite pinching")
    lam2 = math.sqrt(lo2 * rt)
    return lam1, lam2


@dataclass
class ChartSequence:
    """Per-index data of the scaled charts for n = 0..N (+1 lookahead)."""

    points: np.ndarray        # (H, 2) orbit points, H >= N+2
    frames: np.ndarray        # (N+2, 2, 2) columns (e_n, f_n)
    log_m: np.ndarray         # (N+2,) log ||Df^n|E||
    log_det: np.ndarray       # (N+2,) log |det Df^n|
    A: np.ndarray             # (N+2,)
    B: np.ndarray             # (N+2,)
    alpha: np.ndarray         # (N+1,) frame-triangular entries of Df(x_n)
    beta: np.ndarray
    gamma: np.ndarray
    a: np.ndarray             # (N+1,) entries of H_n
    c: np.ndarray
    d: np.ndarray
    r: np.ndarray             # (N+1,) chart validity radii
    lam1: float
    lam2: float
    C0: float
    Cf: float
    alpha_holder: float
    eps_chart: float
    N: int

    @property
    def m(self):
        return np.exp(self.log_m)

    @property
    def M(self):
        return np.exp(self.log_det - self.log_m)

    def delta_norm(self, n):
        return self.A[n] * self.B[n]

    def chart_to_plane(self, n, Z):
        """Chart coordinates (k, 2) at index n -> plane points."""
        Z = np.atleast_2d(np.asarray(Z, float))
        V = np.column_stack([Z[:, 0] / self.A[n], Z[:, 1] / (self.A[n] * self.B[n])])
        return self.points[n] + V @ self.frames[n].T

    def plane_to_chart(self, n, P):
        P = np.atleast_2d(np.asarray(P, float))
        V = (P - self.points[n]) @ self.frames[n]
        return np.column_stack([V[:, 0] * self.A[n], V[:, 1] * (self.A[n] * self.B[n])])

    def chart_map(self, m_map, n, Z):
        """h_n = Delta_{n+1} R_{n+1}^T (f(.) - x_{n+1}) composed with the
        chart-n parameterization, vectorized over chart points."""
        p = self.chart_to_plane(n, Z)
        fp = m_map.eval_array(p)
        return self.plane_to_chart(n + 1, fp)

    def chart_map_jacobian(self, m_map, n, Z):
        """Analytic Jacobian of h_n at chart points; (k, 2, 2)."""
        Z = np.atleast_2d(np.asarray(Z, float))
        p = self.chart_to_plane(n, Z)
        Dn = np.diag([1.0 / self.A[n], 1.0 / (self.A[n] * self.B[n])])
        Dn1 = np.diag([self.A[n + 1], self.A[n + 1] * self.B[n + 1]])
        L = Dn1 @ self.frames[n + 1].T
        R = self.frames[n] @ Dn
        if hasattr(m_map, "jacobian_entries_array"):
            j11, j12, j21, j22 = m_map.jacobian_entries_array(p)
            J = np.empty((len(p), 2, 2))
            J[:, 0, 0] = j11
            J[:, 0, 1] = j12
            J[:, 1, 0] = j21
            J[:, 1, 1] = j22
        else:
            J = np.array([np.asarray(m_map.jacobian_entries(q), float).reshape(2, 2)
                          for q in p])
        return np.einsum("ab,kbc,cd->kad", L, J, R)

    def residual_A(self, n):
        """Relative defect of A_{n+1} (m_{n+1}/m_n) A_n^{-1} = lam1 (1 - 1/A_n)."""
        lhs = self.A[n + 1] * math.exp(self.log_m[n + 1] - self.log_m[n]) / self.A[n]
        rhs = self.lam1 * (1.0 - 1.0 / self.A[n])
        return abs(lhs - rhs) / abs(rhs)

    def residual_B(self, n):
        """Relative defect of B_{n+1}(M_{n+1}/M_n)/B_n = (m_{n+1}/m_n)/lam2
        + (M_{n+1}/M_n)/B_n."""
        dM = math.exp((self.log_det[n + 1] - self.log_m[n + 1])
                      - (self.log_det[n] - self.log_m[n]))
        dm = math.exp(self.log_m[n + 1] - self.log_m[n])
        lhs = self.B[n + 1] * dM / self.B[n]
        rhs = dm / self.lam2 + dM / self.B[n]
        return abs(lhs - rhs) / abs(rhs)


def chart_sequence(m_map, orbit, E, constants, lam1=None, lam2=None, N=None,
                   eps_chart: float = 1e-3) -> ChartSequence:
    """Build the chart data over a window N along the orbit.

    `orbit` is an OrbitSegment or point array starting at the base point;
    it is extended through the map as needed for the A-series tails.
    Refuses when the constants are not pinched or the lambda conditions
    fail, and when the A-series terms do not decay (certificate mismatch).
    """
    pts = np.asarray(getattr(orbit, "points", orbit), dtype=float)
    if N is None:
        N = len(pts) - 2
    if N < 1:
        raise ParameterError("window must contain at least one step")
    if not constants.pinching_ok:
        raise NumericalError(
            f"pinching violated: ratio {constants.pinching_ratio:.4g} "
            f"<= sigma {constants.sigma:.4g}")
    if lam1 is None or lam2 is None:
        lam1, lam2 = choose_lambdas(constants)
    s, st = constants.sigma, constants.sigma_tilde
    r_up, rt = constants.rho, constants.rho_tilde
    if not (s < lam1 < 1.0):
        raise ParameterError(f"lam1={lam1} must lie in (sigma, 1)")
    if not (0.0 < lam2 < rt):
        raise ParameterError(f"lam2={lam2} must lie in (0, rho_tilde)")
    if not (st * lam2) / (lam1 * r_up) > lam1:
        raise NumericalError("lambda condition st*lam2/(lam1*rho) > lam1 fails")
    C0 = 1.01 * max(1.0 / (1.0 - s / lam1), 1.0 / (1.0 - lam2 / rt))

    pts = list(map(tuple, pts))

    def ensure(i):
        while len(pts) <= i:
            pts.append(m_map.eval(pts[-1]))
            if len(pts) > N + _MAX_TAIL:
                raise NumericalError("orbit extension budget exhausted")

    # frames and triangular entries, grown lazily alongside the tail
    e0 = np.asarray(E, float)
    e0 = e0 / math.hypot(*e0)
    frames = [np.column_stack([e0, [-e0[1], e0[0]]])]
    log_m = [0.0]
    log_det = [0.0]
    alpha, beta, gamma = [], [], []

    def extend_chain(i):
        # data up to index i (log_m[i] known)
        while len(log_m) <= i:
            n = len(log_m) - 1
            ensure(n + 1)
            J = np.asarray(m_map.jacobian_entries(pts[n]), float).reshape(2, 2)
            e = frames[n][:, 0]
            v = J @ e
            nv = math.hypot(*v)
            if nv == 0.0:
                raise NumericalError("direction annihilated by Df")
            e1 = v / nv
            f1 = np.array([-e1[1], e1[0]])
            T = np.column_stack([e1, f1]).T @ J @ frames[n]
            frames.append(np.column_stack([e1, f1]))
            alpha.append(T[0, 0])
            beta.append(T[0, 1])
            gamma.append(T[1, 1])
            log_m.append(log_m[-1] + math.log(nv))
            dj = abs(J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0])
            if dj == 0.0:
                raise NumericalError("singular Jacobian on the window")
            log_det.append(log_det[-1] + math.log(dj))

    llam1 = math.log(lam1)
    lsig = math.log(s)

    # Trust horizon: on a chaotic orbit the numerically-represented direction
    # tracks the certified contraction only while the running rate stays
    # near log(sigma); beyond the first sustained departure the products are
    # dominated by representation error and must not enter the series.
    extra = min(_MAX_TAIL, max(96, 4 * N))
    extend_chain(N + 1 + extra)
    H = N + 1 + extra
    for j in range(N + 2, N + 1 + extra):
        if log_m[j] - log_m[N + 1] > (j - (N + 1)) * (lsig + 0.35):
            H = j
            break
    H = max(H, N + 2)

    def a_series(n):
        # consistent truncation at the common horizon keeps the recursion
        # identity A_{n+1}(m_{n+1}/m_n) = lam1 (A_n - 1) exact
        acc = 1.0
        for k in range(1, H - n + 1):
            term = math.exp(log_m[n + k] - log_m[n] - k * llam1)
            acc += term
            if term < 1e-13 * acc and k >= 8:
                break
        return acc

    A = np.array([a_series(n) for n in range(N + 2)])
    llam2 = math.log(lam2)
    B = np.empty(N + 2)
    for n in range(N + 2):
        terms = [math.exp((k - n) * llam2 + (log_det[k] - log_det[n])
                          + 2.0 * (log_m[n] - log_m[k]))
                 for k in range(n + 1)]
        B[n] = math.fsum(terms)

    alpha_a = np.asarray(alpha[:N + 1])
    beta_a = np.asarray(beta[:N + 1])
    gamma_a = np.asarray(gamma[:N + 1])
    a_e = A[1:N + 2] * alpha_a / A[:N + 1]
    c_e = A[1:N + 2] * B[1:N + 2] * gamma_a / (A[:N + 1] * B[:N + 1])
    d_e = A[1:N + 2] * beta_a / (A[:N + 1] * B[:N + 1])

    alpha_h, Cf = m_map.holder_data()
    if Cf == 0.0:
        Cf = 1e-12  # affine maps: charts are globally valid, keep radii finite
    r = (eps_chart / (Cf * A[1:N + 2] * B[1:N + 2])) ** (1.0 / alpha_h)

    H = len(log_m)
    return ChartSequence(
        points=np.asarray(pts[:H], dtype=float),
        frames=np.asarray(frames[:N + 2]),
        log_m=np.asarray(log_m[:N + 2]),
        log_det=np.asarray(log_det[:N + 2]),
        A=A, B=B, alpha=alpha_a, beta=beta_a, gamma=gamma_a,
        a=a_e, c=c_e, d=d_e, r=np.asarray(r),
        lam1=lam1, lam2=lam2, C0=C0, Cf=Cf, alpha_holder=alpha_h,
        eps_chart=eps_chart, N=N)
