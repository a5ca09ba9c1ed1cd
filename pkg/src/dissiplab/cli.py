"""Reproducible experiment runner.

Commands: simulate, lyapunov, pliss, stable, verify-sd, close, reduce,
report.  Every command reads one key-value config file (--config), writes
its declared outputs plus a manifest.json (config hash, version, timings)
into --out, and is byte-deterministic for a fixed seed (manifest timings
excluded).  Exit codes: 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, make_rng
from .errors import ConstructionError, NumericalError, ParameterError


def _fmt(v) -> str:
    if isinstance(v, np.floating):
        v = float(v)
    elif isinstance(v, np.integer):
        v = int(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _json_default(o):
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def write_json(path: Path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, sort_keys=True, indent=1, default=_json_default)
        f.write("\n")


class Runner:
    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.outputs = []
        self.t0 = time.time()
        cfg.out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.cfg.out / name

    def finish(self):
        manifest = {
            "command": self.command,
            "config_hash": self.cfg.config_hash(),
            "config": self.cfg.raw,
            "version": __version__,
            "seed": self.cfg.seed,
            "outputs": sorted(self.outputs),
            "timings": {"seconds": time.time() - self.t0},
        }
        write_json(self.cfg.out / "manifest.json", manifest)


def _orbit_measure(cfg, m_map):
    from .orbits import birkhoff_measure
    x0 = cfg.get_float("x0", 0.1)
    y0 = cfg.get_float("y0", 0.0)
    n = cfg.get_int("n", 30000)
    burn = cfg.get_int("burn", 2000)
    return birkhoff_measure(m_map, (x0, y0), n, burn)


def _constants(cfg, m_map):
    from .orbits import lyapunov
    from .pliss import constants_from_exponents
    x0 = cfg.get_float("x0", 0.1)
    y0 = cfg.get_float("y0", 0.0)
    ly = lyapunov(m_map, (x0, y0), cfg.get_int("lyap_n", 50000),
                  cfg.get_int("burn", 2000))
    up = cfg.get_float("slack_up", 0.45)
    down = cfg.get_float("slack_down", 0.62)
    return constants_from_exponents(ly.lambda_minus, ly.lambda_plus,
                                    up=up, down=down), ly


def cmd_simulate(cfg: RunConfig):
    from .orbits import iterate
    run = Runner(cfg, "simulate")
    m_map = cfg.build_map()
    seg = iterate(m_map, (cfg.get_float("x0", 0.1), cfg.get_float("y0", 0.0)),
                  cfg.get_int("n", 10000))
    rows = [(i, p[0], p[1]) for i, p in enumerate(seg.points)]
    write_csv(run.path("orbit.csv"), ["i", "x", "y"], rows)
    write_json(run.path("simulate.json"),
               {"overflowed": seg.overflowed, "points": len(seg.points),
                "requested": seg.requested})
    run.finish()
    return 0


def cmd_lyapunov(cfg: RunConfig):
    from .orbits import lyapunov
    run = Runner(cfg, "lyapunov")
    m_map = cfg.build_map()
    est = lyapunov(m_map, (cfg.get_float("x0", 0.1), cfg.get_float("y0", 0.0)),
                   cfg.get_int("n", 100000), cfg.get_int("burn", 2000))
    write_json(run.path("lyapunov.json"), est.as_dict())
    run.finish()
    return 0


def cmd_pliss(cfg: RunConfig):
    from .pliss import block_fraction, certify, estimate_E
    from .orbits import iterate
    run = Runner(cfg, "pliss")
    m_map = cfg.build_map()
    measure = _orbit_measure(cfg, m_map)
    constants, ly = _constants(cfg, m_map)
    N = cfg.get_int("N", 10)
    n_back = cfg.get_int("n_back", 20)
    sample_k = cfg.get_int("sample_k", 200)
    rng = make_rng(cfg.seed, 1)
    idx = np.sort(rng.choice(len(measure.points), size=min(sample_k, len(measure.points)),
                             replace=False))
    reports = []
    for i in idx:
        seg = iterate(m_map, measure.points[i], max(N, n_back))
        if seg.overflowed:
            continue
        E, degen = estimate_E(m_map, seg.points, n_back)
        if degen:
            continue
        reports.append(certify(m_map, seg.points, E, constants, N).as_dict())
    frac = sum(r["pass"] for r in reports) / max(len(reports), 1)
    write_json(run.path("certificates.json"), reports)
    write_json(run.path("pliss_summary.json"),
               {"fraction": frac, "samples": len(reports), "N": N,
                "lambda_minus": ly.lambda_minus, "lambda_plus": ly.lambda_plus,
                "sigma": constants.sigma, "sigma_tilde": constants.sigma_tilde,
                "rho": constants.rho, "rho_tilde": constants.rho_tilde})
    run.finish()
    return 0


def cmd_stable(cfg: RunConfig):
    from .charts import chart_sequence
    from .manifold import grow_branches, local_stable_curve
    from .orbits import iterate
    from .pliss import certify, estimate_E
    run = Runner(cfg, "stable")
    m_map = cfg.build_map()
    region = cfg.build_region(m_map)
    constants, _ = _constants(cfg, m_map)
    N = cfg.get_int("N", 10)
    n_back = cfg.get_int("n_back", 20)
    measure = _orbit_measure(cfg, m_map)
    rng = make_rng(cfg.seed, 2)
    idx = rng.permutation(len(measure.points))
    curve = None
    for i in idx[: cfg.get_int("max_tries", 200)]:
        seg = iterate(m_map, measure.points[i], max(N, n_back))
        if seg.overflowed:
            continue
        E, degen = estimate_E(m_map, seg.points, n_back)
        if degen or not certify(m_map, seg.points, E, constants, N).passed:
            continue
        try:
            charts = chart_sequence(m_map, seg, E, constants, N=N)
            curve = local_stable_curve(m_map, charts)
            break
        except NumericalError:
            continue
    if curve is None:
        raise NumericalError("no certified point admitted a stable curve")
    pair = grow_branches(m_map, curve, region,
                         max_pullbacks=cfg.get_int("max_pullbacks", 10))
    s = curve.arclength_samples()
    write_csv(run.path("curve.csv"), ["s", "x", "y"],
              [(s[i], curve.polyline[i, 0], curve.polyline[i, 1])
               for i in range(len(s))])
    for name, branch in (("branch_plus.csv", pair.plus),
                         ("branch_minus.csv", pair.minus)):
        seg_len = np.concatenate([[0.0], np.cumsum(np.hypot(*(np.diff(branch, axis=0).T)))]) \
            if len(branch) > 1 else np.zeros(len(branch))
        write_csv(run.path(name), ["s", "x", "y"],
                  [(seg_len[i], branch[i, 0], branch[i, 1]) for i in range(len(branch))])
    write_json(run.path("branches.json"), pair.as_dict())
    run.finish()
    return 0


def cmd_verify_sd(cfg: RunConfig):
    from .dissipation import check_dissipation2, verify_strong_dissipation
    run = Runner(cfg, "verify-sd")
    m_map = cfg.build_map()
    region = cfg.build_region(m_map)
    constants, ly = _constants(cfg, m_map)
    measure = _orbit_measure(cfg, m_map)
    verdict = verify_strong_dissipation(
        m_map, region, measure, constants,
        N=cfg.get_int("N", 10), sample_k=cfg.get_int("sample_k", 100),
        n_back=cfg.get_int("n_back", 20),
        max_pullbacks=cfg.get_int("max_pullbacks", 10),
        rng=make_rng(cfg.seed, 3),
        require_trapping=cfg.get_int("require_trapping", 1) == 1,
        threads=cfg.threads)
    with open(run.path("verdicts.jsonl"), "w") as f:
        for rec in verdict.records:
            f.write(json.dumps(rec.as_dict(), sort_keys=True) + "\n")
    summary = verdict.summary()
    summary["lambda_minus"] = ly.lambda_minus
    summary["lambda_plus"] = ly.lambda_plus
    rep = check_dissipation2(m_map, region, cfg.get_int("grid_n", 128))
    summary["dissipation2_margin"] = rep.margin
    summary["dissipation2_holds"] = rep.holds
    write_json(run.path("verify_sd.json"), summary)
    run.finish()
    return 0


def cmd_close(cfg: RunConfig):
    from .closing import PeriodicOrbitRegistry, periodic_density_report
    run = Runner(cfg, "close")
    m_map = cfg.build_map()
    measure = _orbit_measure(cfg, m_map)
    registry = PeriodicOrbitRegistry()
    report = periodic_density_report(
        m_map, measure, cfg.get_float("delta", 0.05),
        cfg.get_int("budget", 100), rng=make_rng(cfg.seed, 4),
        registry=registry)
    write_csv(run.path("periodic_orbits.csv"),
              ["period", "x", "y", "residual",
               "mult1_re", "mult1_im", "mult2_re", "mult2_im"],
              [o.csv_row() for o in registry])
    out = report.as_dict()
    if cfg.get_int("region_demo", 1) == 1:
        demo = _region_demo(cfg, m_map, measure)
        if demo is not None:
            write_json(run.path("region.json"), demo)
            out["region_demo"] = "region.json"
        else:
            out["region_demo"] = "failed"
    write_json(run.path("close.json"), out)
    run.finish()
    return 0


def _region_demo(cfg, m_map, measure):
    """One paper-style closing-region construction: recurrent certified
    sample, stable arcs at x0 and f^n(x0), disc from a forward image of
    the trapping region, first-exit time and retraction fixed point."""
    from .charts import chart_sequence
    from .closing import (build_region, first_exit_k, forward_image_disc,
                          retract_fixed_point)
    from .manifold import grow_branches, local_stable_curve
    from .orbits import iterate
    from .pliss import certify, estimate_E
    region = cfg.build_region(m_map)
    try:
        constants, _ = _constants(cfg, m_map)
    except (ParameterError, NumericalError):
        return None
    N = cfg.get_int("N", 10)
    n_back = cfg.get_int("n_back", 20)
    delta = cfg.get_float("delta", 0.05)
    D = forward_image_disc(m_map, region, cfg.get_int("disc_iterates", 2))
    P = measure.points
    rng = make_rng(cfg.seed, 8)

    def arc_at(p):
        seg = iterate(m_map, p, max(N, n_back))
        if seg.overflowed:
            return None
        E, degen = estimate_E(m_map, seg.points, n_back)
        if degen or not certify(m_map, seg.points, E, constants, N).passed:
            return None
        charts = chart_sequence(m_map, seg, E, constants, N=N)
        curve = local_stable_curve(m_map, charts)
        pair = grow_branches(m_map, curve, region,
                             max_pullbacks=cfg.get_int("max_pullbacks", 10))
        if not (pair.exit_plus and pair.exit_minus):
            return None
        return pair.full_arc()

    for _ in range(cfg.get_int("region_tries", 40)):
        i = int(rng.integers(1000, len(P) - 3000))
        x0 = P[i]
        d = np.hypot(P[i + 1:i + 3000, 0] - x0[0], P[i + 1:i + 3000, 1] - x0[1])
        w = np.nonzero(d < delta / 2)[0]
        if not len(w):
            continue
        n = int(w[0]) + 1
        try:
            a0 = arc_at(x0)
            a1 = arc_at(P[i + n])
            if a0 is None or a1 is None:
                continue
            reg = build_region(m_map, x0, n, a0, a1, D, delta)
            k = first_exit_k(m_map, reg, n)
            orb = retract_fixed_point(m_map, reg, n, k)
        except Exception:
            continue
        return {"D": reg.D.tolist(), "R": reg.R.tolist(),
                "D_minus": reg.D_minus.tolist(), "D_plus": reg.D_plus.tolist(),
                "arc0": reg.arc0.tolist(), "arc1": reg.arc1.tolist(),
                "x0": list(reg.x0), "x1": list(reg.x1),
                "n": n, "k": k, "diameter": reg.diameter(),
                "orbit": {"period": orb.period, "residual": orb.residual,
                          "x": orb.points[0, 0], "y": orb.points[0, 1]}}
    return None


def cmd_reduce(cfg: RunConfig):
    from .tree import build_tree, collect_arcs, induced_map, itineraries
    run = Runner(cfg, "reduce")
    m_map = cfg.build_map()
    region = cfg.build_region(m_map)
    constants, _ = _constants(cfg, m_map)
    measure = _orbit_measure(cfg, m_map)
    D = region.polygon()
    arcs = collect_arcs(m_map, region, D, cfg.get_int("n_arcs", 10),
                        constants, measure, N=cfg.get_int("N", 10),
                        n_back=cfg.get_int("n_back", 20),
                        rng=make_rng(cfg.seed, 5),
                        preimage_rounds=cfg.get_int("preimage_rounds", 1))
    tree = build_tree(arcs)
    tm = induced_map(tree, m_map, samples=cfg.get_int("map_samples", 100),
                     rng=make_rng(cfg.seed, 6))
    verts = []
    for v in range(tree.n_vertices):
        if tree.vertex_kind(v) == "component":
            verts.append({"id": v, "kind": "component",
                          "polygon": [[float(x), float(y)]
                                      for x, y in tree.comp_polygons[v]]})
        else:
            verts.append({"id": v, "kind": "arc",
                          "arc_id": v - tree.n_components})
    write_json(run.path("tree.json"),
               {"vertices": verts,
                "edges": [[int(a), int(b)] for a, b in tree.edges],
                "map": [[v, int(tm.h[v])] for v in range(tree.n_vertices)],
                "well_defined": [bool(b) for b in tm.well_defined],
                "arcs": [[[float(x), float(y)] for x, y in a]
                         for a in arcs.arcs]})
    n_itin = cfg.get_int("itinerary_len", 12)
    W = itineraries(tree, measure.points[: cfg.get_int("itinerary_points", 2000) + n_itin],
                    n_itin)
    write_csv(run.path("itineraries.csv"),
              [f"v{j}" for j in range(n_itin)], [tuple(row) for row in W])
    run.finish()
    return 0


def cmd_report(cfg: RunConfig):
    from .dissipation import check_dissipation2
    from .maps import trapping_check
    run = Runner(cfg, "report")
    m_map = cfg.build_map()
    region = cfg.build_region(m_map)
    constants, ly = _constants(cfg, m_map)
    rep = check_dissipation2(m_map, region, cfg.get_int("grid_n", 128))
    out = {
        "family": cfg.family,
        "trapping_margin": trapping_check(m_map, region, cfg.get_int("boundary_n", 512)),
        "dissipation2": {"sup_det": rep.sup_det, "inf_conorm": rep.inf_conorm,
                         "margin": rep.margin, "holds": rep.holds},
        "lambda_minus": ly.lambda_minus,
        "lambda_plus": ly.lambda_plus,
        "lyapunov_sum_defect": abs(ly.lambda_minus + ly.lambda_plus
                                   - np.log(abs(m_map.det_jacobian))),
        "constants": {"sigma": constants.sigma, "sigma_tilde": constants.sigma_tilde,
                      "rho": constants.rho, "rho_tilde": constants.rho_tilde,
                      "pinching_ratio": constants.pinching_ratio},
    }
    write_json(run.path("report.json"), out)
    run.finish()
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "lyapunov": cmd_lyapunov,
    "pliss": cmd_pliss,
    "stable": cmd_stable,
    "verify-sd": cmd_verify_sd,
    "close": cmd_close,
    "reduce": cmd_reduce,
    "report": cmd_report,
}

_OVERRIDE_KEYS = ["n", "burn", "x0", "y0", "N", "n_back", "sample_k",
                  "max_pullbacks", "delta", "budget", "n_arcs", "grid_n",
                  "slack_up", "slack_down", "lyap_n", "region_shrink",
                  "require_trapping", "preimage_rounds", "itinerary_len"]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dissiplab",
        description="Numerical laboratory for strongly dissipative planar maps")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=None)
        for key in _OVERRIDE_KEYS:
            p.add_argument(f"--{key}", default=None)
    args = parser.parse_args(argv)
    overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (NumericalError, ConstructionError, ParameterError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
