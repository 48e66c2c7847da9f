"""``fermat-finsler`` command-line driver.

Exit codes: 0 success, 1 computational failure (no convergence, failed
check), 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import causality, fermat
from .config import Config, build_domain, build_metric, build_spacetime, load_config
from .expr import evaluate_constant
from .errors import ConfigError, DomainError, FermatFinslerError, Inconsistent, NonPositiveConformal, RandersConditionError
from .finsler import fundamental_tensor, geodesic_shoot, reversibility
from .variational import connect, multistart_homotopy

COMMANDS = ("diag", "geodesic", "connect", "lens", "timelike", "distmap", "causal")
DIAG_SAMPLES = 200


class UsageError(Exception):
    pass


# -- output helpers ------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n")


def write_csv(path: Path, header: list[str], columns) -> None:
    data = np.column_stack(columns)
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def write_curve_dat(path: Path, x: np.ndarray) -> None:
    """Two-column gnuplot file: the first two coordinates (or ``index, x1`` in 1D)."""
    x = np.asarray(x)
    cols = x[:, :2] if x.shape[1] >= 2 else np.column_stack([np.arange(len(x)), x[:, 0]])
    np.savetxt(path, cols, fmt="%.17g", delimiter=" ")


def write_matrix_dat(path: Path, m: np.ndarray) -> None:
    np.savetxt(path, np.where(np.isfinite(m), m, np.nan), fmt="%.17g", delimiter=" ")


# -- argument handling ---------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--config", required=True, help="path to the config file")
    g.add_argument("--out", default=".", help="output directory (created if missing; default: current directory)")
    g.add_argument("--N", type=int, help="number of curve segments (default 128)")
    g.add_argument("--K", type=int, help="winding range [-K, K] per periodic axis")
    g.add_argument("--tol", type=float, help="H1 gradient-norm tolerance for descent (default 1e-8)")
    g.add_argument("--step", type=float, help="RK4 step for shooting (default 1e-3)")
    g.add_argument("--resolution", type=int, help="grid points per axis for samples and distance maps")
    g.add_argument("--stencil", type=int, help="grid-graph neighbours: 8, 16 (default) or 32 in 2D")
    g.add_argument("--seed", type=int, help="seed for random samples (default 0)")
    g.add_argument("--direction", choices=("future", "past"), help="future (Fermat) or past (reversed Fermat) rays")
    g.add_argument("--energy", type=float, help="energy E > 0 of timelike geodesics (default 1)")
    g.add_argument("--source", type=_floats, help="start point / event position, e.g. 0,0")
    g.add_argument("--target", type=_floats, help="end point / observer position")
    g.add_argument("--velocity", type=_floats, help="initial velocity for geodesic")
    g.add_argument("--t0", type=float, help="emission time of the event (default 0)")
    g.add_argument("--interval", type=_floats, help="parameter interval a,b for timelike (default 0,1)")
    g.add_argument("--horizon", type=float, help="cone horizon mu (default: unbounded)")
    g.add_argument("--s-max", dest="s_max", type=float, help="parameter length for geodesic (default 1)")
    g.add_argument("--event", action="append", type=_floats, help="causal query x1,...,xn,t (repeatable)")
    g.add_argument("--workers", type=int, default=1, help="threads for multistart (default 1)")
    g.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
    g.add_argument("--plot-data", action="store_true", help="also write gnuplot-friendly .dat files")

    parser = argparse.ArgumentParser(prog="fermat-finsler", description="Finsler geodesics, Fermat metrics and light rays.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "diag": "check metric invariants (homogeneity, Euler identity, convexity, reversibility, Randers bound)",
        "geodesic": "shoot a geodesic from --source with --velocity",
        "connect": "minimise energy between --source and --target",
        "lens": "light rays from the event (--source, --t0) to the observer at --target",
        "timelike": "fixed-energy timelike geodesics from (--source, --t0) to --target",
        "distmap": "forward/backward grid distance maps from --source",
        "causal": "cone slices from (--source, --t0) and membership of --event queries",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
    return parser


_OVERRIDES = ("N", "K", "tol", "step", "resolution", "stencil", "seed", "direction", "energy", "source", "target", "velocity", "t0", "interval", "horizon", "s_max")


def apply_overrides(cfg: Config, args) -> Config:
    for key in _OVERRIDES:
        val = getattr(args, key)
        if val is not None:
            cfg.set(key, val)
    if args.event:
        cfg.set("events", args.event)
    return cfg


class Settings:
    """Run knobs resolved from the config (after CLI overrides) with per-command defaults."""

    def __init__(self, cfg: Config, command: str):
        self.cfg = cfg
        self.N = cfg.integer("N", 128)
        self.K = cfg.integer("K", None)
        self.tol = cfg.number("tol", 1e-8)
        self.step = cfg.number("step", 1e-3)
        self.resolution = cfg.integer("resolution", 201 if command in ("distmap", "causal") else 21)
        self.stencil = cfg.integer("stencil", causality.DEFAULT_STENCIL)
        self.seed = cfg.integer("seed", 0)
        self.direction = cfg.word("direction", "future")
        self.energy = cfg.number("energy", 1.0)
        self.t0 = cfg.number("t0", 0.0)
        self.s_max = cfg.number("s_max", 1.0)
        self.horizon = cfg.number("horizon", math.inf)
        interval = cfg.vector("interval", np.array([0.0, 1.0]))
        if len(interval) != 2 or not interval[0] < interval[1]:
            raise UsageError("interval must be a,b with a < b")
        self.interval = (float(interval[0]), float(interval[1]))
        if self.N < 2:
            raise UsageError("N must be at least 2")
        if self.K is not None and self.K < 0:
            raise UsageError("K must be non-negative")
        for name in ("tol", "step", "s_max", "horizon"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be positive")
        if self.resolution < 2:
            raise UsageError("resolution must be at least 2")
        if self.seed < 0:
            raise UsageError("seed must be non-negative")
        if self.direction not in ("future", "past"):
            raise UsageError("direction must be future or past")

    def point(self, key, dim, required=True):
        v = self.cfg.vector(key)
        if v is None:
            if required:
                raise UsageError(f"--{key} (or '{key}' in the config) is required")
            return None
        if len(v) != dim:
            raise UsageError(f"{key} needs {dim} coordinates, got {len(v)}")
        return v

    def events(self, dim):
        raw = self.cfg.raw("events")
        if raw is None:
            return []
        consts = self.cfg.constant_values()
        out = []
        for e in raw if isinstance(raw, list) else [raw]:
            if not isinstance(e, list) or len(e) != dim + 1:
                raise UsageError(f"each event needs {dim} coordinates and a time")
            vals = [evaluate_constant(str(v), consts) for v in e]
            out.append((np.array(vals[:dim]), vals[dim]))
        return out


# -- commands --------------------------------------------------------------------------


def cmd_diag(cfg: Config, s: Settings, out: Path, args) -> int:
    checks: dict[str, dict] = {}
    report = {"kind": cfg.kind, "checks": checks}
    try:
        if cfg.kind == "spacetime":
            st = build_spacetime(cfg, s.resolution)
            try:
                fermat.conformal_normalize(st, s.resolution)
                if st.phi is not None:
                    checks["conformal_factor_positive"] = {"passed": True}
            except NonPositiveConformal as exc:
                checks["conformal_factor_positive"] = {"passed": False, "message": str(exc)}
            db = causality.delta_beta_condition(st, s.resolution)
            report["delta_beta_sup"] = db.record()
        metric = build_metric(cfg)
        checks["randers_condition"] = {"passed": True}
    except RandersConditionError as exc:
        checks["randers_condition"] = {"passed": False, "message": str(exc)}
        report["passed"] = False
        write_json(out / "diag.json", report)
        return 1

    dom = metric.domain
    rng = np.random.default_rng(s.seed)
    box = dom.sample_box()
    margin = 1e-3 * max(1.0, max(hi - lo for lo, hi in box))
    xs = dom.random_points(rng, DIAG_SAMPLES, margin)
    ys = rng.normal(size=(DIAG_SAMPLES, dom.dim))
    lam = rng.uniform(0.1, 10.0, DIAG_SAMPLES)

    F = metric.F(xs, ys)
    checks["positivity"] = {"passed": bool(np.all(F > 0)), "value": float(np.min(F))}
    hom = np.max(np.abs(metric.F(xs, lam[:, None] * ys) - lam * F) / (lam * F))
    checks["homogeneity"] = {"passed": bool(hom <= 1e-12), "value": float(hom)}

    ft = fundamental_tensor(metric, xs, ys, with_cartan=True)
    gyy = np.einsum("...ij,...i,...j->...", ft.g, ys, ys)
    euler = np.max(np.abs(gyy - F**2) / F**2)
    checks["euler_identity"] = {"passed": bool(euler <= 1e-6), "value": float(euler)}
    contraction = float(np.max(np.abs(np.einsum("...i,...ijk->...jk", ys, ft.cartan))))
    checks["cartan_contraction"] = {"passed": bool(contraction <= 1e-7), "value": contraction}
    eig = float(np.min(np.linalg.eigvalsh(ft.g)))
    checks["fundamental_tensor_positive_definite"] = {"passed": eig > 0, "value": eig}

    sample = dom.grid(3)
    lams = np.array([reversibility(metric, x, seed=s.seed) for x in sample])
    report["lambda"] = float(np.max(lams))
    report["lambda_min"] = float(np.min(lams))
    report["lambda_points"] = sample
    sup = causality.omega_norm_sup(metric, s.resolution)
    report["omega_norm_sup"] = sup.record()
    checks["omega_norm_below_one"] = {"passed": sup.value < 1.0, "value": sup.value}
    report["passed"] = all(c["passed"] for c in checks.values())
    write_json(out / "diag.json", report)
    return 0 if report["passed"] else 1


def cmd_geodesic(cfg: Config, s: Settings, out: Path, args) -> int:
    metric = build_metric(cfg, s.direction)
    dim = metric.domain.dim
    x0 = s.point("source", dim)
    v0 = s.point("velocity", dim)
    metric.domain.check(x0, what="source")
    shot = geodesic_shoot(metric, x0, v0, s.s_max, s.step)
    write_csv(out / "geodesic.csv", ["s"] + [f"x{i + 1}" for i in range(dim)], [shot.s, shot.x])
    if args.plot_data:
        write_curve_dat(out / "geodesic.dat", shot.x)
    speed = np.asarray(shot.speed)
    write_json(
        out / "geodesic.json",
        {
            "source": x0,
            "velocity": v0,
            "s_max": s.s_max,
            "step": s.step,
            "exited": shot.exited,
            "message": shot.message,
            "end": shot.x[-1],
            "speed_start": float(speed[0]),
            "speed_end": float(speed[-1]),
            "speed_drift": float(np.max(np.abs(speed - speed[0])) / speed[0]),
        },
    )
    return 1 if shot.exited else 0


def _curve_columns(curve):
    return [curve.s, curve.nodes]


def cmd_connect(cfg: Config, s: Settings, out: Path, args) -> int:
    metric = build_metric(cfg, s.direction)
    dim = metric.domain.dim
    p, q = s.point("source", dim), s.point("target", dim)
    if metric.domain.periodic_axes and s.K:
        results = multistart_homotopy(metric, p, q, s.K, s.N, s.tol, workers=args.workers)
    else:
        results = [connect(metric, p, q, s.N, s.tol)]
    header = ["s"] + [f"x{i + 1}" for i in range(dim)]
    records = []
    for i, r in enumerate(results):
        write_csv(out / f"curve_{i}.csv", header, _curve_columns(r.curve))
        if args.plot_data:
            write_curve_dat(out / f"curve_{i}.dat", r.curve.nodes)
        rec = r.record()
        rec["file"] = f"curve_{i}.csv"
        records.append(rec)
    write_json(out / "connect.json", {"source": p, "target": q, "N": s.N, "tol": s.tol, "results": records})
    return 0 if any(r.converged for r in results) else 1


def _separations(curves, domain):
    from .variational import _periodic_distance

    out = []
    for i, a in enumerate(curves):
        d = [_periodic_distance(domain, a.nodes, b.nodes) for j, b in enumerate(curves) if j != i and a.N == b.N]
        out.append(min(d) if d else None)
    return out


def cmd_lens(cfg: Config, s: Settings, out: Path, args) -> int:
    st = build_spacetime(cfg)
    dim = st.domain.dim
    x_bar, x_obs = s.point("source", dim), s.point("target", dim)
    K = s.K if s.K is not None else (2 if st.domain.periodic_axes else 0)
    rays = fermat.lens_images(st, (x_bar, s.t0), x_obs, K, s.N, s.tol, s.direction, workers=args.workers)
    header = ["s"] + [f"x{i + 1}" for i in range(dim)] + ["t"]
    seps = _separations([r.curve for r in rays], st.domain)
    records = []
    for i, (ray, sep) in enumerate(zip(rays, seps)):
        write_csv(out / f"ray_{i}.csv", header, [ray.curve.s, ray.curve.nodes, ray.t])
        if args.plot_data:
            write_curve_dat(out / f"ray_{i}.dat", ray.curve.nodes)
        rec = ray.record()
        rec.update({"file": f"ray_{i}.csv", "null_scale": ray.null_scale, "c_spread": ray.c_spread, "nearest_image_distance": sep})
        records.append(rec)
    write_json(out / "summary.json", {"event": {"x": x_bar, "t0": s.t0}, "observer": x_obs, "direction": s.direction, "K": K, "N": s.N, "rays": records})
    return 0 if rays else 1


def cmd_timelike(cfg: Config, s: Settings, out: Path, args) -> int:
    if not s.energy > 0:
        raise UsageError("energy must be positive")
    st = build_spacetime(cfg)
    dim = st.domain.dim
    x_bar, x_obs = s.point("source", dim), s.point("target", dim)
    K = s.K if s.K is not None else 0
    results = fermat.timelike_fixed_energy(st, (x_bar, s.t0), x_obs, s.energy, s.interval, K, s.N, s.tol, workers=args.workers)
    header = ["s"] + [f"x{i + 1}" for i in range(dim)] + ["t", "u"]
    records = []
    for i, r in enumerate(results):
        write_csv(out / f"timelike_{i}.csv", header, [r.s, r.x, r.t, r.u])
        if args.plot_data:
            write_curve_dat(out / f"timelike_{i}.dat", r.x)
        rec = r.record()
        rec["file"] = f"timelike_{i}.csv"
        records.append(rec)
    write_json(
        out / "summary.json",
        {"event": {"x": x_bar, "t0": s.t0}, "observer": x_obs, "energy": s.energy, "interval": list(s.interval), "K": K, "N": s.N, "results": records},
    )
    ok = bool(results) and all(np.isfinite(r.energy_residual) for r in results)
    return 0 if ok else 1


def cmd_distmap(cfg: Config, s: Settings, out: Path, args) -> int:
    metric = build_metric(cfg)
    dim = metric.domain.dim
    x0 = s.point("source", dim)
    grid = causality.distance_map(metric, x0, s.resolution, s.stencil)
    header = [f"x{i + 1}" for i in range(dim)] + ["dplus", "dminus"]
    rows = grid.raster_rows()
    write_csv(out / "distmap.csv", header, [rows])
    if args.plot_data and dim == 2:
        write_matrix_dat(out / "dplus.dat", grid.dplus)
        write_matrix_dat(out / "dminus.dat", grid.dminus)
    finite = np.isfinite(grid.dplus)
    write_json(
        out / "distmap.json",
        {
            "source": x0,
            "resolution": s.resolution,
            "stencil": s.stencil,
            "dplus_max": float(np.max(grid.dplus[finite])),
            "dminus_max": float(np.max(grid.dminus[np.isfinite(grid.dminus)])),
            "unreached": int(np.sum(~finite)),
            "file": "distmap.csv",
        },
    )
    return 0


def cmd_causal(cfg: Config, s: Settings, out: Path, args) -> int:
    st = build_spacetime(cfg)
    dim = st.domain.dim
    x0 = s.point("source", dim)
    st.domain.check(x0, what="apex")
    metric = fermat.fermat_metric(st)
    grid = causality.distance_map(metric, x0, s.resolution, s.stencil)
    cone = causality.causal_cone(st, (x0, s.t0), s.horizon, s.direction, grid=grid)
    queries = []
    status = 0
    for x1, t1 in s.events(dim):
        q = {"x1": x1, "t1": t1, "in_cone": cone.contains((x1, t1))}
        # the explicit-curve check refers to the unbounded future cone
        if s.direction == "future" and t1 > s.t0:
            try:
                rep = causality.connectivity_crosscheck(st, (x0, s.t0), (x1, t1), grid=grid, N=min(s.N, 64), tol=s.tol)
                q["crosscheck"] = rep.record()
            except Inconsistent as exc:
                q["crosscheck"] = {"error": str(exc)}
                status = 1
        queries.append(q)
    report = cone.record()
    report["queries"] = queries
    report["resolution"] = s.resolution
    report["stencil"] = s.stencil
    write_json(out / "cone.json", report)
    if args.plot_data and dim == 2:
        write_matrix_dat(out / ("dplus.dat" if s.direction == "future" else "dminus.dat"), grid.dplus if s.direction == "future" else grid.dminus)
        for k, sl in enumerate(cone.slices):
            for j, line in enumerate(sl.polylines or []):
                write_curve_dat(out / f"slice_{k}_{j}.dat", line)
    return status


HANDLERS = {
    "diag": cmd_diag,
    "geodesic": cmd_geodesic,
    "connect": cmd_connect,
    "lens": cmd_lens,
    "timelike": cmd_timelike,
    "distmap": cmd_distmap,
    "causal": cmd_causal,
}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = apply_overrides(load_config(args.config), args)
        if args.dump_config:
            sys.stdout.write(cfg.dump())
            return 0
        build_domain(cfg)
        settings = Settings(cfg, args.command)
        if args.workers < 1:
            raise UsageError("workers must be at least 1")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[args.command](cfg, settings, out, args)
    except (ConfigError, UsageError, DomainError, RandersConditionError, NonPositiveConformal) as exc:
        print(f"fermat-finsler: error: {exc}", file=sys.stderr)
        return 2
    except FermatFinslerError as exc:
        print(f"fermat-finsler: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
