"""Standard stationary spacetimes and their Fermat metrics.

A spacetime on ``M0 x R`` is given by ``g0`` (Riemannian), ``delta`` (vector
field), ``beta > 0`` and an optional conformal factor ``phi``:

    g[(y, tau), (y, tau)] = phi * (g0[y, y] + 2 g0[delta, y] tau - beta tau^2).

With ``gt = g0 / beta`` the future light cone is described by the Randers
metric ``F(x, y) = gt[delta, y] + sqrt(gt[delta, y]^2 + gt[y, y])``; spatial
Fermat geodesics lift to light rays whose arrival time is their Fermat length.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NonPositiveConformal, NotAGeodesic
from .fields import ChartDomain, OneFormField, RiemannianField, ScalarField, VectorField
from .finsler import RandersMetric
from .variational import DiscreteCurve, geodesic_residual, length, multistart_homotopy

FUTURE = "future"
PAST = "past"


def _check_direction(direction):
    if direction not in (FUTURE, PAST):
        raise ValueError(f"direction must be 'future' or 'past', got {direction!r}")


@dataclass
class StationarySpacetime:
    domain: ChartDomain
    g0: RiemannianField
    delta: VectorField
    beta: ScalarField
    phi: ScalarField | None = None
    name: str = "spacetime"

    def validate(self, resolution: int = 21):
        pts = self.domain.grid(resolution)
        if np.min(self.beta(pts)) <= 0:
            raise ValueError("beta must be positive on the sampled bounds")
        if np.min(np.linalg.eigvalsh(self.g0(pts))) <= 0:
            raise ValueError("g0 must be positive definite on the sampled bounds")
        return self

    def g_tilde(self, x) -> np.ndarray:
        return self.g0(x) / self.beta(x)[..., None, None]

    def lorentz_form(self, x, y, tau, conformal: bool = True) -> np.ndarray:
        """``g[(y, tau), (y, tau)]`` at spatial points ``x`` (time-independent data)."""
        g0 = self.g0(x)
        d = self.delta(x)
        b = self.beta(x)
        y = np.asarray(y, dtype=float)
        q = (
            np.einsum("...ij,...i,...j->...", g0, y, y)
            + 2.0 * np.einsum("...ij,...i,...j->...", g0, d, y) * tau
            - b * tau**2
        )
        if conformal and self.phi is not None:
            q = self.phi(x) * q
        return q

    def time_reflected(self) -> "StationarySpacetime":
        """The spacetime with ``delta -> -delta`` (time reflection ``t -> -t``)."""
        d = self.delta
        neg = VectorField(self.domain, lambda x: -d(x), lambda x: -d.partials(x, check=False), name=f"-{d.name}")
        return replace(self, delta=neg, name=f"{self.name}-reflected")


def conformal_normalize(spacetime: StationarySpacetime, resolution: int = 21) -> StationarySpacetime:
    """Drop the conformal factor after checking it is positive on the sampled bounds.

    ``g0``, ``delta`` and ``beta`` already describe ``g / phi``, so only ``phi``
    goes; light rays and the Fermat metric are unchanged.
    """
    if spacetime.phi is None:
        return spacetime
    pts = spacetime.domain.grid(resolution)
    vals = spacetime.phi(pts)
    if np.min(vals) <= 0:
        at = pts[int(np.argmin(vals))].tolist()
        raise NonPositiveConformal(f"conformal factor {float(np.min(vals)):.6g} <= 0 at {at}")
    return replace(spacetime, phi=None)


def _fermat_fields(st: StationarySpacetime, sign: float):
    def parts(x):
        g0 = st.g0(x)
        gt = g0 / st.beta(x)[..., None, None]
        w = np.einsum("...ij,...j->...i", gt, st.delta(x))
        return gt, w

    def h_eval(x):
        gt, w = parts(x)
        return gt + w[..., :, None] * w[..., None, :]

    def w_eval(x):
        return sign * parts(x)[1]

    h = RiemannianField(st.domain, h_eval, name="fermat_h")
    w = OneFormField(st.domain, w_eval, name="fermat_omega" if sign > 0 else "-fermat_omega")
    return h, w


def fermat_metric(spacetime: StationarySpacetime, check: bool = True) -> RandersMetric:
    """Randers metric with ``h = gt + (gt delta)^2`` and ``omega = gt[delta, .]``."""
    h, w = _fermat_fields(spacetime, 1.0)
    return RandersMetric(h, w, check=check, name=f"fermat({spacetime.name})")


def reversed_fermat_metric(spacetime: StationarySpacetime, check: bool = True) -> RandersMetric:
    """``F*(x, y) = -gt[delta, y] + sqrt(gt[delta, y]^2 + gt[y, y]) = F(x, -y)``."""
    h, w = _fermat_fields(spacetime, -1.0)
    return RandersMetric(h, w, check=check, name=f"fermat*({spacetime.name})")


def _metric_for(spacetime, direction):
    _check_direction(direction)
    return fermat_metric(spacetime) if direction == FUTURE else reversed_fermat_metric(spacetime)


def reconstruct_time(spacetime: StationarySpacetime, curve: DiscreteCurve, t0: float = 0.0, direction: str = FUTURE, metric=None):
    """Time along a spatial curve so that its lift is lightlike.

    Returns ``(t, T)``; ``t`` has one entry per node and ``T = t[-1]``.
    Future rays accumulate the Fermat length, past rays subtract the
    reversed-Fermat length, both by the midpoint rule.
    """
    metric = metric or _metric_for(spacetime, direction)
    dt = metric.F(curve.midpoints, curve.velocities) / curve.N
    sign = 1.0 if direction == FUTURE else -1.0
    t = t0 + sign * np.concatenate([[0.0], np.cumsum(dt)])
    return t, float(t[-1])


def resample_constant_speed(metric: RandersMetric, curve: DiscreteCurve, N: int | None = None, sweeps: int = 2) -> DiscreteCurve:
    """Reparameterise to constant ``h``-speed by arc-length resampling with linear interpolation."""
    N = N or curve.N
    nodes = curve.nodes
    for _ in range(sweeps):
        m = 0.5 * (nodes[1:] + nodes[:-1])
        dx = np.diff(nodes, axis=0)
        seg = np.sqrt(np.einsum("...ij,...i,...j->...", metric.h(m), dx, dx))
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        target = np.linspace(0.0, cum[-1], N + 1)
        nodes = np.stack([np.interp(target, cum, nodes[:, i]) for i in range(nodes.shape[1])], axis=-1)
        nodes[0], nodes[-1] = curve.nodes[0], curve.nodes[-1]
    return DiscreteCurve(nodes, curve.winding)


@dataclass
class LightRay:
    curve: DiscreteCurve
    t: np.ndarray
    t0: float
    arrival_time: float
    direction: str
    length: float
    null_residual: float
    null_scale: float
    c_spread: float
    winding: tuple = ()
    geodesic_deviation: float | None = None
    energy: float | None = None

    @property
    def relative_null_residual(self) -> float:
        return self.null_residual / self.null_scale

    def record(self) -> dict:
        return {
            "winding": list(self.winding),
            "arrival_time": self.arrival_time,
            "length": self.length,
            "null_residual": self.null_residual,
            "energy_residual": None,
            "direction": self.direction,
        }


def null_residual(spacetime: StationarySpacetime, curve: DiscreteCurve, t: np.ndarray, conformal: bool = True):
    """``max_k |g(z', z')|`` at segment midpoints with difference velocities, and the scale ``max(1 + t'^2)``."""
    tdot = curve.N * np.diff(t)
    q = spacetime.lorentz_form(curve.midpoints, curve.velocities, tdot, conformal=conformal)
    return float(np.max(np.abs(q))), float(np.max(1.0 + tdot**2))


def lift_to_lightlike(
    spacetime: StationarySpacetime,
    curve: DiscreteCurve,
    t0: float = 0.0,
    direction: str = FUTURE,
    N: int | None = None,
    geodesic_tol: float | None = 5e-3,
    metric: RandersMetric | None = None,
) -> LightRay:
    """Lift a Fermat geodesic to a light ray.

    The curve is first checked with :func:`geodesic_residual` (skipped when
    ``geodesic_tol`` is None), then resampled to constant h-speed; times come
    from :func:`reconstruct_time`.
    """
    metric = metric or _metric_for(spacetime, direction)
    deviation = None
    if geodesic_tol is not None:
        extent = float(np.max(np.ptp(curve.nodes, axis=0)))
        deviation = geodesic_residual(metric, curve).deviation
        if not deviation <= geodesic_tol * max(1.0, extent):
            raise NotAGeodesic(f"geodesic residual {deviation:.3e} exceeds tolerance")
    lifted = resample_constant_speed(metric, curve, N)
    t, T = reconstruct_time(spacetime, lifted, t0, direction, metric=metric)
    res, scale = null_residual(spacetime, lifted, t)

    # second Euler-Lagrange relation: t' - gt[delta, x'] is constant along a ray
    m, v = lifted.midpoints, lifted.velocities
    tdot = lifted.N * np.diff(t)
    drift = tdot - np.einsum("...ij,...i,...j->...", spacetime.g_tilde(m), spacetime.delta(m), v)
    c_spread = float(np.std(drift) / abs(np.mean(drift)))

    return LightRay(
        curve=lifted,
        t=t,
        t0=t0,
        arrival_time=T,
        direction=direction,
        length=length(metric, lifted),
        null_residual=res,
        null_scale=scale,
        c_spread=c_spread,
        winding=curve.winding,
        geodesic_deviation=deviation,
    )


def lens_images(
    spacetime: StationarySpacetime,
    event,
    observer,
    K: int = 2,
    N: int = 128,
    tol: float = 1e-8,
    direction: str = FUTURE,
    max_iter: int = 2000,
    workers: int = 1,
    geodesic_tol: float | None = 5e-3,
) -> list[LightRay]:
    """Light rays from the event ``(x_bar, t0)`` to the worldline of ``observer``, one per homotopy class.

    Rays are returned in order of increasing Fermat length, i.e. increasing
    ``|T - t0|``.  Classes whose descent does not converge are left out.
    """
    x_bar, t0 = event
    metric = _metric_for(spacetime, direction)
    found = multistart_homotopy(metric, x_bar, observer, K, N, tol, max_iter=max_iter, workers=workers)
    rays = []
    for res in found:
        if not res.converged:
            continue
        ray = lift_to_lightlike(spacetime, res.curve, float(t0), direction, N, geodesic_tol, metric=metric)
        ray.energy = res.energy
        rays.append(ray)
    rays.sort(key=lambda r: (r.length, r.winding))
    return rays


# -- Kaluza-Klein extension ---------------------------------------------------------


@dataclass
class ExtendedSpacetime:
    """``N0 = M0 x R_u`` with ``n = g0 + du^2 + 2 g0[delta, .] dt - beta dt^2`` and target energy ``E``."""

    base: StationarySpacetime
    energy: float
    spacetime: StationarySpacetime

    def fermat(self) -> RandersMetric:
        return fermat_metric(self.spacetime)


def kaluza_klein_extend(spacetime: StationarySpacetime, E: float) -> ExtendedSpacetime:
    if not E > 0:
        raise ValueError("energy E must be positive")
    base = spacetime
    n = base.domain.dim
    dom = ChartDomain(n + 1, base.domain.periods + (None,), base.domain.bounds + (None,))

    def g0(X):
        g = base.g0(X[..., :n])
        out = np.zeros(X.shape[:-1] + (n + 1, n + 1))
        out[..., :n, :n] = g
        out[..., n, n] = 1.0
        return out

    def delta(X):
        out = np.zeros(X.shape)
        out[..., :n] = base.delta(X[..., :n])
        return out

    ext = StationarySpacetime(
        dom,
        RiemannianField(dom, g0, name="g0_ext"),
        VectorField(dom, delta, name="delta_ext"),
        ScalarField(dom, lambda X: base.beta(X[..., :n]), name="beta_ext"),
        None,
        name=f"kk({base.name})",
    )
    return ExtendedSpacetime(base, float(E), ext)


@dataclass
class TimelikeResult:
    s: np.ndarray
    x: np.ndarray
    t: np.ndarray
    u: np.ndarray
    arrival_time: float
    energy: float
    energy_residual: float
    u_dot_spread: float
    length: float
    winding: tuple = ()
    affine: bool = True
    ray: LightRay | None = field(default=None, repr=False)

    def record(self) -> dict:
        return {
            "winding": list(self.winding),
            "arrival_time": self.arrival_time,
            "length": self.length,
            "null_residual": self.ray.null_residual if self.ray is not None else None,
            "energy_residual": self.energy_residual,
            "u_dot_spread": self.u_dot_spread,
            "direction": FUTURE,
        }


def timelike_fixed_energy(
    spacetime: StationarySpacetime,
    event,
    observer,
    E: float = 1.0,
    interval=(0.0, 1.0),
    K: int = 0,
    N: int = 128,
    tol: float = 1e-8,
    max_iter: int = 2000,
    workers: int = 1,
) -> list[TimelikeResult]:
    """Timelike geodesics with ``g(z', z') = -E`` on ``[a, b]`` from ``(x_bar, t0)`` to the observer's worldline.

    Each is the projection of a light ray of the extended spacetime joining
    ``(x_bar, a sqrt(E))`` to ``(x_tilde, b sqrt(E))``; the ray is
    reparameterised so that ``u`` is affine in ``s``, which fixes the energy.
    """
    a, b = map(float, interval)
    if not a < b:
        raise ValueError("interval must satisfy a < b")
    ext = kaluza_klein_extend(spacetime, E)
    x_bar, t0 = event
    rootE = np.sqrt(E)
    p = np.append(np.asarray(x_bar, dtype=float), a * rootE)
    q = np.append(np.asarray(observer, dtype=float), b * rootE)
    rays = lens_images(ext.spacetime, (p, t0), q, K, N, tol, FUTURE, max_iter=max_iter, workers=workers)
    n = spacetime.domain.dim
    out = []
    for ray in rays:
        nodes = ray.curve.nodes
        u = nodes[:, n]
        m = ray.curve.midpoints
        udot = ray.curve.N * np.diff(u) / spacetime.beta(m[:, :n])
        u_spread = float(np.std(udot) / abs(np.mean(udot))) if np.mean(udot) != 0 else float("inf")

        affine = bool(np.all(np.diff(u) > 0))
        if affine:
            u_target = np.linspace(a * rootE, b * rootE, ray.curve.N + 1)
            x = np.stack([np.interp(u_target, u, nodes[:, i]) for i in range(n)], axis=-1)
            t = np.interp(u_target, u, ray.t)
            s = np.linspace(a, b, ray.curve.N + 1)
            ds = np.diff(s)
            xm = 0.5 * (x[1:] + x[:-1])
            g = spacetime.lorentz_form(xm, np.diff(x, axis=0) / ds[:, None], np.diff(t) / ds, conformal=False)
            e_res = float(np.max(np.abs(g + E)) / E)
            u_nodes = u_target
        else:
            x, t = nodes[:, :n], ray.t
            s = np.linspace(a, b, ray.curve.N + 1)
            e_res = float("nan")
            u_nodes = u
        out.append(
            TimelikeResult(
                s=s,
                x=x,
                t=t,
                u=u_nodes,
                arrival_time=float(t[-1]),
                energy=float(E),
                energy_residual=e_res,
                u_dot_spread=u_spread,
                length=ray.length,
                winding=ray.winding,
                affine=affine,
                ray=ray,
            )
        )
    return out
