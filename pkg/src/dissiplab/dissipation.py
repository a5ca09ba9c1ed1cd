"""Strong-dissipation verification: the determinant-vs-contraction margin
check and the per-sample certificate -> local curve -> branch-exit pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import pliss
from .charts import chart_sequence, choose_lambdas
from .errors import NumericalError, ParameterError
from .manifold import grow_branches, local_stable_curve
from .maps import TrappingRegion
from .orbits import EmpiricalMeasure, iterate, lyapunov

__all__ = [
    "DissipationReport",
    "check_dissipation2",
    "SampleRecord",
    "SDVerdict",
    "verify_strong_dissipation",
    "estimate_Xg",
    "measure_is_sink_supported",
    "jacobian_extremes",
]


@dataclass(frozen=True)
class DissipationReport:
    sup_det: float
    inf_conorm: float          # inf over points of the minimal singular value
    inf_conorm_pow: float      # inf_conorm ** 0.9
    margin: float              # inf_conorm_pow - sup_det; condition holds iff > 0
    grid_n: int
    angle_check_inf: float     # cross-check: direct min over 64 directions

    @property
    def holds(self) -> bool:
        return self.margin > 0.0


def _sv_min_max(j11, j12, j21, j22):
    # exact 2x2 singular values
    f = j11 * j11 + j12 * j12 + j21 * j21 + j22 * j22
    det = j11 * j22 - j12 * j21
    g1 = math.sqrt(max(f + 2.0 * abs(det), 0.0))
    g2 = math.sqrt(max(f - 2.0 * abs(det), 0.0))
    return 0.5 * abs(g1 - g2), 0.5 * (g1 + g2)


def jacobian_extremes(m_map, region: TrappingRegion, grid_n: int = 256):
    """(sup |det Df|, inf conorm, sup ||Df||, sup ||Df^{-1}||) over a grid."""
    pts = region.sample_grid(grid_n)
    sup_det = 0.0
    inf_co = math.inf
    sup_op = 0.0
    for p in pts:
        j11, j12, j21, j22 = m_map.jacobian_entries(p)
        sup_det = max(sup_det, abs(j11 * j22 - j12 * j21))
        smin, smax = _sv_min_max(j11, j12, j21, j22)
        inf_co = min(inf_co, smin)
        sup_op = max(sup_op, smax)
    sup_inv = 1.0 / inf_co if inf_co > 0 else math.inf
    return sup_det, inf_co, sup_op, sup_inv


def check_dissipation2(m_map, region: TrappingRegion, grid_n: int = 128
                       ) -> DissipationReport:
    """sup of |det Df| over an x-grid versus the 9/10 power of the minimal
    contraction inf_{y,u} ||Df(y) u|| over a y-grid.  The infimum over unit
    vectors is the minimal singular value (analytic); a 64-angle sweep is
    kept as a cross-check."""
    if grid_n < 2:
        raise ParameterError("grid_n must be at least 2")
    pts = region.sample_grid(grid_n)
    sup_det = 0.0
    inf_co = math.inf
    for p in pts:
        j11, j12, j21, j22 = m_map.jacobian_entries(p)
        sup_det = max(sup_det, abs(j11 * j22 - j12 * j21))
        smin, _ = _sv_min_max(j11, j12, j21, j22)
        inf_co = min(inf_co, smin)
    angles = np.linspace(0.0, math.pi, 64, endpoint=False)
    U = np.column_stack([np.cos(angles), np.sin(angles)])
    inf_angle = math.inf
    for p in pts[:: max(1, len(pts) // 4096)]:
        J = np.asarray(m_map.jacobian_entries(p), float).reshape(2, 2)
        inf_angle = min(inf_angle, float(np.hypot(*(J @ U.T)).min()))
    return DissipationReport(sup_det=sup_det, inf_conorm=inf_co,
                             inf_conorm_pow=inf_co ** 0.9,
                             margin=inf_co ** 0.9 - sup_det,
                             grid_n=grid_n, angle_check_inf=inf_angle)


def measure_is_sink_supported(m_map, measure: EmpiricalMeasure) -> bool:
    """Operational sink test: support of diameter < 1e-6 whose Jacobian has
    spectral radius < 1."""
    if measure.support_diameter() >= 1e-6:
        return False
    p = measure.points.mean(axis=0)
    ev = np.linalg.eigvals(np.asarray(m_map.jacobian_entries(p), float).reshape(2, 2))
    return bool(np.max(np.abs(ev)) < 1.0)


@dataclass
class SampleRecord:
    point: tuple
    certified: bool
    decided: bool
    exit_plus: bool = False
    exit_minus: bool = False
    note: str = ""

    def as_dict(self):
        return {"x": self.point[0], "y": self.point[1],
                "certified": self.certified, "decided": self.decided,
                "exit_plus": self.exit_plus, "exit_minus": self.exit_minus,
                "note": self.note}


@dataclass
class SDVerdict:
    records: list
    vacuous: bool = False      # measure classified as sink-supported
    trapping_margin: float = 0.0

    @property
    def certified_count(self):
        return sum(r.certified for r in self.records)

    @property
    def decided_count(self):
        return sum(r.certified and r.decided for r in self.records)

    @property
    def both_exit_fraction(self):
        dec = [r for r in self.records if r.certified and r.decided]
        if not dec:
            return float("nan")
        return sum(r.exit_plus and r.exit_minus for r in dec) / len(dec)

    def summary(self):
        return {"samples": len(self.records),
                "certified": self.certified_count,
                "decided": self.decided_count,
                "both_exit_fraction": self.both_exit_fraction,
                "vacuous": self.vacuous,
                "trapping_margin": self.trapping_margin}


def _verify_one(m_map, region, constants, N, n_back, max_pullbacks, horizon, p):
    seg = iterate(m_map, p, horizon)
    rec = SampleRecord(point=(float(p[0]), float(p[1])),
                       certified=False, decided=False)
    if seg.overflowed:
        rec.note = "orbit escaped"
        return rec
    try:
        E, degen = pliss.estimate_E(m_map, seg.points, n_back)
    except NumericalError as e:
        rec.note = f"direction estimate failed: {e}"
        return rec
    if degen:
        rec.note = "degenerate singular directions"
        return rec
    cert = pliss.certify(m_map, seg.points, E, constants, N)
    rec.certified = cert.passed
    if not cert.passed:
        rec.note = f"certificate failed at n={cert.first_fail_n}"
        return rec
    try:
        charts = chart_sequence(m_map, seg, E, constants, N=N)
        curve = local_stable_curve(m_map, charts)
        pair = grow_branches(m_map, curve, region, max_pullbacks=max_pullbacks)
    except Exception as e:
        rec.note = f"undecided: {type(e).__name__}: {e}"
        return rec
    rec.decided = True
    rec.exit_plus = pair.exit_plus
    rec.exit_minus = pair.exit_minus
    return rec


def verify_strong_dissipation(m_map, region: TrappingRegion,
                              measure: EmpiricalMeasure, constants,
                              N: int = 10, sample_k: int = 100,
                              n_back: int = 20, max_pullbacks: int = 8,
                              rng=None, require_trapping: bool = True,
                              trapping_samples: int = 512,
                              threads: int = 1) -> SDVerdict:
    """For sample_k points of the measure: certify the contraction window,
    build the local stable curve, grow both branches, and record whether
    each branch reaches region \\ f(region).  Curve-construction failures
    become undecided records, excluded from the aggregate fraction.
    Per-sample work is pure; records are assembled in sample order, so the
    result is independent of the thread count."""
    from .maps import trapping_check
    margin = trapping_check(m_map, region, trapping_samples)
    if require_trapping and margin <= 0.0:
        raise ParameterError(
            f"region is not trapping at sample resolution (margin {margin:.3g}); "
            "shrink it or pass require_trapping=False")
    if rng is None:
        rng = np.random.default_rng(0)
    if measure_is_sink_supported(m_map, measure):
        return SDVerdict(records=[], vacuous=True, trapping_margin=margin)

    idx = rng.choice(len(measure.points), size=min(sample_k, len(measure.points)),
                     replace=False)
    idx.sort()
    horizon = max(N, n_back)
    pts = [measure.points[i] for i in idx]
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(
                lambda p: _verify_one(m_map, region, constants, N, n_back,
                                      max_pullbacks, horizon, p), pts))
    else:
        records = [_verify_one(m_map, region, constants, N, n_back,
                               max_pullbacks, horizon, p) for p in pts]
    return SDVerdict(records=records, trapping_margin=margin)


def estimate_Xg(m_map, region, measure, constants, N: int = 10,
                sample_k: int = 100, **kw) -> float:
    """Fraction of measure samples that are certified AND have both
    branches exiting (certified-and-exiting over all sampled points)."""
    v = verify_strong_dissipation(m_map, region, measure, constants, N=N,
                                  sample_k=sample_k, **kw)
    if not v.records:
        return 0.0
    hits = sum(1 for r in v.records
               if r.certified and r.decided and r.exit_plus and r.exit_minus)
    return hits / len(v.records)
