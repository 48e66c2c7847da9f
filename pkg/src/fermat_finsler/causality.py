"""Completeness and causality diagnostics on a sampled chart.

Distances are shortest paths in a grid graph whose directed edge ``a -> b``
costs ``F(midpoint, b - a)``.  Grid paths only overestimate the true
distance; the bias is the stencil's metrication error (about 2.7% for 16
neighbours in the worst direction of a Euclidean grid, 1.3% for 32).
All sup-type quantities are grid maxima and therefore lower bounds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.csgraph import dijkstra
from skimage.measure import find_contours

from .errors import Inconsistent
from .fermat import FUTURE, PAST, StationarySpacetime, fermat_metric, lift_to_lightlike, reversed_fermat_metric
from .fields import OneFormField
from .finsler import FinslerMetric, RandersMetric
from .variational import connect, multistart_homotopy

DEFAULT_STENCIL = 16
CAUSAL_TOL = 1e-8


@dataclass
class SupEstimate:
    """Grid maximum of a pointwise quantity; a lower bound for the true sup."""

    value: float
    location: list
    resolution: int
    samples: int

    def holds_below(self, bound: float = 1.0) -> bool:
        return self.value < bound

    def record(self) -> dict:
        return {"value": self.value, "location": self.location, "resolution": self.resolution, "samples": self.samples, "lower_bound": True}


def _grid_max(domain, func, resolution, region=None) -> SupEstimate:
    pts = domain.grid(resolution)
    if region is not None:
        pts = pts[np.asarray(region(pts), dtype=bool)]
    vals = func(pts)
    k = int(np.argmax(vals))
    return SupEstimate(float(vals[k]), pts[k].tolist(), int(resolution), int(len(pts)))


def omega_norm_sup(randers: RandersMetric, resolution: int = 201, region=None) -> SupEstimate:
    """Grid maximum of ``||omega||_x``; ``region`` optionally masks the sample points."""
    return _grid_max(randers.domain, randers.omega_norm, resolution, region)


def _g0_norm2(st: StationarySpacetime, x):
    d = st.delta(x)
    return np.einsum("...ij,...i,...j->...", st.g0(x), d, d)


def delta_beta_condition(spacetime: StationarySpacetime, resolution: int = 201, region=None) -> SupEstimate:
    """Grid maximum of ``|delta|_0 / sqrt(|delta|_0^2 + beta)``; the sufficient condition wants it below 1."""

    def ratio(x):
        n2 = _g0_norm2(spacetime, x)
        return np.sqrt(n2 / (n2 + spacetime.beta(x)))

    return _grid_max(spacetime.domain, ratio, resolution, region)


@dataclass
class GrowthReport:
    passed: bool
    delta_passed: bool
    beta_passed: bool
    delta_worst: float
    delta_worst_at: list
    beta_worst: float
    beta_worst_at: list

    def record(self) -> dict:
        return dict(self.__dict__)


def growth_condition_check(
    spacetime: StationarySpacetime,
    x0,
    c,
    resolution: int = 101,
    stencil: int = DEFAULT_STENCIL,
) -> GrowthReport:
    """Check ``|delta|_0^2 <= c1 d0^2 + c2`` and ``beta <= c3 d0^2 + c4`` on the grid.

    ``d0`` is the grid distance of ``g0`` from ``x0``; it overestimates the
    true distance, so a pass is only as good as the grid.  Worst values are
    ``lhs - rhs`` (positive means violated).
    """
    c1, c2, c3, c4 = map(float, c)
    if min(c1, c2, c3, c4) < 0:
        raise ValueError("growth coefficients must be non-negative")
    dom = spacetime.domain
    riem = RandersMetric(spacetime.g0, OneFormField.constant(dom, np.zeros(dom.dim)), check=False, name="g0")
    grid = distance_map(riem, x0, resolution, stencil, backward=False)
    pts = grid.points
    d2 = grid.dplus.ravel() ** 2
    dv = _g0_norm2(spacetime, pts) - (c1 * d2 + c2)
    bv = spacetime.beta(pts) - (c3 * d2 + c4)
    slack = 1e-9 * (1.0 + np.abs(c1 * d2 + c2))
    slack_b = 1e-9 * (1.0 + np.abs(c3 * d2 + c4))
    kd, kb = int(np.argmax(dv)), int(np.argmax(bv))
    d_ok = bool(np.all(dv <= slack))
    b_ok = bool(np.all(bv <= slack_b))
    return GrowthReport(d_ok and b_ok, d_ok, b_ok, float(dv[kd]), pts[kd].tolist(), float(bv[kb]), pts[kb].tolist())


# -- grid distances --------------------------------------------------------------------


def stencil_offsets(dim: int, stencil: int) -> np.ndarray:
    """Integer offsets with coprime entries and max-norm <= r, for the r giving ``stencil`` neighbours."""
    for r in range(1, 6):
        offs = [o for o in itertools.product(range(-r, r + 1), repeat=dim) if any(o) and math.gcd(*map(abs, o)) == 1]
        if len(offs) == stencil:
            return np.array(offs, dtype=int)
        if len(offs) > stencil:
            break
    raise ValueError(f"no stencil with {stencil} neighbours in dimension {dim}")


class GridGraph:
    """Directed grid graph over the chart's sampling box.

    Periodic axes without explicit bounds wrap around; all other axes are
    cut at the box edges.
    """

    def __init__(self, metric: FinslerMetric, resolution, stencil: int = DEFAULT_STENCIL):
        dom = metric.domain
        self.metric = metric
        self.domain = dom
        self.stencil = int(stencil)
        res = [int(resolution)] * dom.dim if np.ndim(resolution) == 0 else [int(r) for r in resolution]
        self.wraps = tuple(p is not None and b is None for p, b in zip(dom.periods, dom.bounds))
        axes = []
        for (lo, hi), r, w in zip(dom.sample_box(), res, self.wraps):
            axes.append(np.linspace(lo, hi, r, endpoint=not w))
        self.axes = tuple(axes)
        self.shape = tuple(res)
        self.spacing = np.array([a[1] - a[0] for a in axes])
        mesh = np.meshgrid(*axes, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=-1)
        self.matrix = self._build()

    @property
    def size(self) -> int:
        return len(self.points)

    def _edges(self, offsets):
        n = self.domain.dim
        shape = np.array(self.shape)
        multi = np.stack(np.unravel_index(np.arange(self.size), self.shape), axis=-1)
        src, dst, w = [], [], []
        for o in offsets:
            tgt = multi + o
            ok = np.ones(self.size, dtype=bool)
            for i in range(n):
                if self.wraps[i]:
                    tgt[:, i] %= shape[i]
                else:
                    ok &= (tgt[:, i] >= 0) & (tgt[:, i] < shape[i])
            a = np.nonzero(ok)[0]
            disp = o * self.spacing
            mid = self.points[a] + 0.5 * disp
            src.append(a)
            dst.append(np.ravel_multi_index(tuple(tgt[a].T), self.shape))
            w.append(self.metric.F(mid, np.broadcast_to(disp, mid.shape)))
        return np.concatenate(src), np.concatenate(dst), np.concatenate(w)

    def _build(self):
        offs = stencil_offsets(self.domain.dim, self.stencil)
        s, d, w = self._edges(offs)
        return sp.csr_matrix((w, (s, d)), shape=(self.size + 1, self.size + 1))

    def _source_matrix(self, x0):
        """Graph with an extra vertex at ``x0`` joined to the corners of its cell."""
        x0 = self.domain.wrap(np.asarray(x0, dtype=float))
        lo = np.array([a[0] for a in self.axes])
        rel = (x0 - lo) / self.spacing
        node = np.rint(rel)
        if np.all(np.abs(rel - node) < 1e-9):
            idx = [int(k) % s if w else int(np.clip(k, 0, s - 1)) for k, s, w in zip(node, self.shape, self.wraps)]
            return self.matrix, int(np.ravel_multi_index(tuple(idx), self.shape))
        base = np.floor(rel).astype(int)
        corners = []
        for bits in itertools.product((0, 1), repeat=self.domain.dim):
            k = base + np.array(bits)
            ok = True
            for i in range(self.domain.dim):
                if self.wraps[i]:
                    k[i] %= self.shape[i]
                elif not 0 <= k[i] < self.shape[i]:
                    ok = False
            if ok:
                corners.append(int(np.ravel_multi_index(tuple(k), self.shape)))
        corners = np.array(corners)
        disp = np.array([self._disp_to(x0, c) for c in corners])
        src_v = self.size
        mid_out = x0 + 0.5 * disp
        w_out = self.metric.F(mid_out, disp)
        w_in = self.metric.F(mid_out, -disp)
        extra = sp.csr_matrix(
            (np.concatenate([w_out, w_in]), (np.concatenate([np.full(len(corners), src_v), corners]), np.concatenate([corners, np.full(len(corners), src_v)]))),
            shape=self.matrix.shape,
        )
        return (self.matrix + extra).tocsr(), src_v

    def _disp_to(self, x0, node):
        p = self.points[node]
        d = p - x0
        for i in range(self.domain.dim):
            if self.wraps[i]:
                per = self.domain.periods[i]
                d[i] = (d[i] + 0.5 * per) % per - 0.5 * per
        return d

    def distances(self, x0, backward: bool = True):
        mat, src = self._source_matrix(x0)
        fwd = dijkstra(mat, directed=True, indices=src)[: self.size]
        bwd = dijkstra(mat.T.tocsr(), directed=True, indices=src)[: self.size] if backward else None
        return fwd, bwd


@dataclass
class DistanceGrid:
    """Forward distances ``d+(x0, .)`` and backward distances ``d-(., x0)`` on a regular grid."""

    axes: tuple
    source: np.ndarray
    dplus: np.ndarray
    dminus: np.ndarray | None
    stencil: int
    wraps: tuple
    domain: object = field(repr=False)

    @property
    def shape(self):
        return self.dplus.shape

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def _values(self, which):
        if which in ("plus", "forward", FUTURE):
            return self.dplus
        if which in ("minus", "backward", PAST):
            if self.dminus is None:
                raise ValueError("backward distances were not computed")
            return self.dminus
        raise ValueError(f"unknown distance kind {which!r}")

    def interpolate(self, x, which: str = "plus") -> np.ndarray:
        vals = self._values(which)
        axes = list(self.axes)
        for i, w in enumerate(self.wraps):
            if w:
                axes[i] = np.append(axes[i], axes[i][0] + self.domain.periods[i])
                vals = np.concatenate([vals, np.take(vals, [0], axis=i)], axis=i)
        interp = RegularGridInterpolator(axes, vals, method="linear", bounds_error=False, fill_value=np.nan)
        x = np.asarray(x, dtype=float)
        out = interp(self.domain.wrap(x))
        return out[0] if x.ndim == 1 else out

    def ball(self, r: float, which: str = "plus") -> np.ndarray:
        """Mask of the closed forward (``plus``) or backward (``minus``) ball of radius ``r``."""
        return self._values(which) <= r

    def raster_rows(self):
        pts = self.points
        dm = self.dminus.ravel() if self.dminus is not None else np.full(len(pts), np.nan)
        return np.column_stack([pts, self.dplus.ravel(), dm])


def distance_map(metric: FinslerMetric, x0, resolution=201, stencil: int = DEFAULT_STENCIL, backward: bool = True, graph: GridGraph | None = None) -> DistanceGrid:
    """Grid Dijkstra from ``x0``; forward uses ``a -> b`` edges, backward the transposed graph."""
    metric.domain.check(np.asarray(x0, dtype=float), what="source")
    graph = graph or GridGraph(metric, resolution, stencil)
    fwd, bwd = graph.distances(x0, backward)
    return DistanceGrid(
        graph.axes,
        np.asarray(x0, dtype=float),
        fwd.reshape(graph.shape),
        None if bwd is None else bwd.reshape(graph.shape),
        graph.stencil,
        graph.wraps,
        metric.domain,
    )


# -- cones -----------------------------------------------------------------------------


@dataclass
class ConeSlice:
    s: float
    time: float
    polylines: list | None


@dataclass
class CausalCone:
    """``C+(p0, mu)`` (or ``C-``): at offset ``s`` the closed ball of radius ``s`` at time ``t0 +- s``."""

    apex: tuple
    horizon: float
    direction: str
    grid: DistanceGrid
    slices: list

    def _dist(self, x):
        return self.grid.interpolate(x, "plus" if self.direction == FUTURE else "minus")

    def slice_mask(self, s: float) -> np.ndarray:
        return self.grid.ball(s, "plus" if self.direction == FUTURE else "minus")

    def contains(self, event) -> bool:
        x1, t1 = event
        x0, t0 = self.apex
        dt = (t1 - t0) if self.direction == FUTURE else (t0 - t1)
        if dt < 0 or not dt < self.horizon:
            return False
        return bool(self._dist(np.asarray(x1, dtype=float)) <= dt)

    def record(self) -> dict:
        return {
            "apex": {"x": list(map(float, self.apex[0])), "t": float(self.apex[1])},
            "horizon": self.horizon if math.isfinite(self.horizon) else None,
            "direction": self.direction,
            "slices": [
                {"s": sl.s, "t": sl.time, "polylines": None if sl.polylines is None else [p.tolist() for p in sl.polylines]}
                for sl in self.slices
            ],
        }


def _contours(grid: DistanceGrid, values: np.ndarray, level: float):
    if values.ndim != 2:
        return None
    lines = []
    for c in find_contours(values, level):
        coords = np.column_stack([grid.axes[i][0] + c[:, i] * (grid.axes[i][1] - grid.axes[i][0]) for i in range(2)])
        lines.append(coords)
    return lines


def causal_cone(
    spacetime: StationarySpacetime,
    p0,
    mu: float = math.inf,
    direction: str = FUTURE,
    resolution=201,
    stencil: int = DEFAULT_STENCIL,
    n_slices: int = 8,
    grid: DistanceGrid | None = None,
) -> CausalCone:
    """Cone sets from the Fermat distance map; slices (finite ``mu`` only) carry contour polylines in 2D."""
    x0, t0 = p0
    if grid is None:
        grid = distance_map(fermat_metric(spacetime), x0, resolution, stencil)
    sign = 1.0 if direction == FUTURE else -1.0
    values = grid.dplus if direction == FUTURE else grid.dminus
    slices = []
    if math.isfinite(mu):
        for k in range(n_slices):
            s = mu * (k + 0.5) / n_slices
            slices.append(ConeSlice(float(s), float(t0 + sign * s), _contours(grid, values, s)))
    return CausalCone((np.asarray(x0, dtype=float), float(t0)), float(mu), direction, grid, slices)


@dataclass
class CrosscheckReport:
    event: tuple
    grid_distance: float
    grid_member: bool
    curve_member: bool | None
    fermat_length: float | None
    max_causal_character: float | None
    x: np.ndarray | None = field(default=None, repr=False)
    t: np.ndarray | None = field(default=None, repr=False)

    @property
    def member(self) -> bool:
        return self.grid_member if self.curve_member is None else self.curve_member

    @property
    def agree(self) -> bool:
        return self.curve_member is None or self.curve_member == self.grid_member

    def record(self) -> dict:
        return {
            "x1": list(map(float, self.event[0])),
            "t1": float(self.event[1]),
            "grid_distance": self.grid_distance,
            "grid_member": self.grid_member,
            "curve_member": self.curve_member,
            "member": self.member,
            "fermat_length": self.fermat_length,
            "max_causal_character": self.max_causal_character,
        }


def _causal_character(spacetime, x, t):
    """``max g(z', z') / (1 + t'^2)`` over midpoints of the polyline ``(x, t)`` and ``min t'``."""
    n = len(t) - 1
    xdot = n * np.diff(x, axis=0)
    tdot = n * np.diff(t)
    m = 0.5 * (x[1:] + x[:-1])
    q = spacetime.lorentz_form(m, xdot, tdot)
    return float(np.max(q / (1.0 + tdot**2))), float(np.min(tdot))


def connectivity_crosscheck(
    spacetime: StationarySpacetime,
    p0,
    q,
    grid: DistanceGrid | None = None,
    resolution=201,
    stencil: int = DEFAULT_STENCIL,
    grid_tol: float = 0.06,
    N: int = 64,
    tol: float = 1e-8,
    K: int = 1,
) -> CrosscheckReport:
    """Compare the grid cone verdict for ``q`` with an explicit causal curve.

    When the grid places ``q = (x1, t1)`` in ``C+(p0, inf)``, or ``t1 - t0``
    lies within the grid's tolerance band, a Fermat geodesic to ``x1`` is
    lifted to a light ray and continued by a vertical segment up to ``t1``;
    the curve counts when it is future-pointing and nowhere spacelike.
    Disagreement outside the band raises :class:`Inconsistent`.
    """
    x0, t0 = p0
    x1, t1 = q
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if not t1 > t0:
        raise ValueError("the event must lie after the apex (t1 > t0)")
    metric = fermat_metric(spacetime)
    if grid is None:
        grid = distance_map(metric, x0, resolution, stencil, backward=False)
    dt = float(t1 - t0)
    d = float(grid.interpolate(x1, "plus"))
    h = float(np.max(np.abs([a[1] - a[0] for a in grid.axes])))
    grid_member = d <= dt
    in_band = d / (1.0 + grid_tol) - 2 * h <= dt <= d + 2 * h
    if not grid_member and not in_band:
        return CrosscheckReport((x1, float(t1)), d, False, None, None, None)

    if spacetime.domain.periodic_axes:
        cands = [r for r in multistart_homotopy(metric, x0, x1, K, N, tol) if r.converged]
    else:
        r = connect(metric, x0, x1, N, tol)
        cands = [r] if r.converged or r.zero_curve else []
    if not cands:
        report = CrosscheckReport((x1, float(t1)), d, grid_member, False, None, None)
    else:
        best = min(cands, key=lambda r: r.length)
        L = best.length
        len_tol = 1e-7 * (1.0 + dt)
        if L > dt + len_tol:
            report = CrosscheckReport((x1, float(t1)), d, grid_member, False, L, None)
        else:
            if best.zero_curve:
                xs, ts = np.repeat(x0[None], 2, axis=0), np.array([t0, t0])
            else:
                ray = lift_to_lightlike(spacetime, best.curve, float(t0), FUTURE, geodesic_tol=None, metric=metric)
                xs, ts = ray.curve.nodes, ray.t
                if abs(dt - L) <= len_tol:
                    ts = t0 + (ts - t0) * (dt / L)
            rest = t1 - ts[-1]
            if rest > 0:
                nv = max(2, int(np.ceil(len(ts) * rest / max(dt, 1e-300))))
                tv = np.linspace(ts[-1], t1, nv + 1)[1:]
                xs = np.concatenate([xs, np.repeat(xs[-1][None], nv, axis=0)])
                ts = np.concatenate([ts, tv])
            character, tmin = _causal_character(spacetime, xs, ts)
            ok = character <= CAUSAL_TOL and tmin >= 0 and abs(ts[-1] - t1) <= len_tol
            report = CrosscheckReport((x1, float(t1)), d, grid_member, bool(ok), L, character, xs, ts)

    if not report.agree and not in_band:
        raise Inconsistent(
            f"cone membership by grid ({report.grid_member}) and by explicit curve ({report.curve_member}) disagree at {x1.tolist()}, t1={t1}"
        )
    return report
