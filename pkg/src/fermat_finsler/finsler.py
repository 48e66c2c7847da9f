"""Finsler structures: F, G = F^2, fundamental and Cartan tensors, Chern connection, geodesics.

Two metric families are provided.  :class:`RandersMetric` evaluates
``F(x, y) = sqrt(h(x)[y, y]) + omega(x)[y]`` and all its y-derivatives in
closed form.  :class:`GenericFinsler` wraps an arbitrary vectorised
``F(x, y)`` and differentiates it numerically.

All array methods broadcast over leading axes: ``x`` and ``y`` have shape
``(..., dim)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import DegenerateDirection, DomainError, RandersConditionError
from .fields import FD_STEP, ChartDomain, OneFormField, RiemannianField, fd_step

EPS_Y = 1e-12


def _check_direction(y):
    norm = np.max(np.abs(np.asarray(y, dtype=float)), axis=-1)
    if np.any(norm <= EPS_Y):
        raise DegenerateDirection("direction vector is (numerically) zero")


def _shift(x, h, direction):
    return x + h[..., None] * direction


class FinslerMetric:
    """Common interface.  Subclasses implement :meth:`F`, :meth:`dG`,
    :meth:`fundamental_tensor_array` and :meth:`cartan_array`."""

    domain: ChartDomain

    def F(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def G(self, x, y) -> np.ndarray:
        return self.F(x, y) ** 2

    def dG(self, x, y, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """``(dG/dx, dG/dy)`` with y (resp. x) held fixed; both vanish at ``y = 0``."""
        raise NotImplementedError

    def dG_dy(self, x, y) -> np.ndarray:
        return self.dG(x, y, check=False)[1]

    def fundamental_tensor_array(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def cartan_array(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def reversed(self) -> "FinslerMetric":
        raise NotImplementedError

    # -- derived quantities -------------------------------------------------

    def dg_dx(self, x, y) -> np.ndarray:
        """x-partials of g_ij at fixed y, indexed ``[..., i, j, k]`` with k the x-slot."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        n = self.domain.dim
        h = fd_step(x, self._x_step)
        self.domain.check(x, margin=h, what="finite-difference stencil")
        eye = np.eye(n)
        out = []
        for k in range(n):
            gp = self.fundamental_tensor_array(_shift(x, h, eye[k]), y)
            gm = self.fundamental_tensor_array(_shift(x, h, -eye[k]), y)
            out.append((gp - gm) / (2.0 * h[..., None, None]))
        return np.stack(out, axis=-1)

    _x_step = FD_STEP

    def spray(self, x, y) -> np.ndarray:
        """``gamma^i_jk y^j y^k`` (equal to ``Gamma^i_jk y^j y^k``: Cartan terms drop out
        on contraction with y).  Geodesics satisfy ``x'' = -spray(x, x')``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ynorm = np.linalg.norm(y, axis=-1)
        h = fd_step(x, self._x_step)
        self.domain.check(x, margin=h, what="finite-difference stencil")
        u = y / np.where(ynorm > 0, ynorm, 1.0)[..., None]
        Gx, _ = self.dG(x, y)
        Gy_p = self.dG_dy(_shift(x, h, u), y)
        Gy_m = self.dG_dy(_shift(x, h, -u), y)
        directional = (Gy_p - Gy_m) / (2.0 * h[..., None]) * ynorm[..., None]
        lower = 0.5 * directional - 0.5 * Gx
        g = self.fundamental_tensor_array(x, y)
        return np.linalg.solve(g, lower[..., None])[..., 0]


class RandersMetric(FinslerMetric):
    """``F(x, y) = sqrt(h(x)[y, y]) + omega(x)[y]`` with ``||omega||_x < 1``.

    The condition is checked on a ``check_resolution`` grid over the chart's
    sampling box at construction; pass ``check=False`` to skip it.
    """

    def __init__(
        self,
        h: RiemannianField,
        omega: OneFormField,
        check: bool = True,
        check_resolution: int = 21,
        name: str = "randers",
    ):
        if h.domain.dim != omega.domain.dim:
            raise ValueError("h and omega live on charts of different dimension")
        self.h = h
        self.omega = omega
        self.domain = h.domain
        self.name = name
        if check:
            pts = self.domain.grid(check_resolution)
            norms = self.omega_norm(pts)
            worst = float(np.max(norms))
            if not worst < 1.0:
                at = pts[int(np.argmax(norms))].tolist()
                raise RandersConditionError(f"||omega|| = {worst:.6g} >= 1 at {at}")
            if np.min(np.linalg.eigvalsh(self.h(pts))) <= 0:
                raise RandersConditionError("h is not positive definite on the sampled bounds")

    def omega_norm(self, x) -> np.ndarray:
        """``||omega||_x = sqrt(omega h^{-1} omega^T)``."""
        a = self.h(x)
        b = self.omega(x)
        sol = np.linalg.solve(a, b[..., None])[..., 0]
        return np.sqrt(np.maximum(np.sum(b * sol, axis=-1), 0.0))

    def _parts(self, x, y):
        a = self.h(x)
        b = self.omega(x)
        ay = np.einsum("...ij,...j->...i", a, y)
        alpha = np.sqrt(np.maximum(np.sum(y * ay, axis=-1), 0.0))
        return a, b, ay, alpha

    def F(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        _, b, _, alpha = self._parts(x, y)
        return alpha + np.sum(b * y, axis=-1)

    def dG_dy(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        _, b, ay, alpha = self._parts(x, y)
        pos = alpha > 0
        ell = np.where(pos[..., None], ay / np.where(pos, alpha, 1.0)[..., None], 0.0)
        F = alpha + np.sum(b * y, axis=-1)
        return 2.0 * F[..., None] * (ell + b)

    def dG(self, x, y, check: bool = True):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        a, b, ay, alpha = self._parts(x, y)
        F = alpha + np.sum(b * y, axis=-1)
        pos = alpha > 0
        safe = np.where(pos, alpha, 1.0)
        ell = np.where(pos[..., None], ay / safe[..., None], 0.0)
        Gy = 2.0 * F[..., None] * (ell + b)
        da = self.h.partials(x, check=check)
        db = self.omega.partials(x, check=check)
        quad = np.einsum("...ijk,...i,...j->...k", da, y, y)
        Fx = np.where(pos[..., None], quad / (2.0 * safe[..., None]), 0.0) + np.einsum("...ik,...i->...k", db, y)
        Gx = 2.0 * F[..., None] * Fx
        return Gx, Gy

    def spray(self, x, y):
        # same formula as the base class, with all field evaluations in one batch
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        n = self.domain.dim
        h = fd_step(x)
        self.domain.check(x, margin=h, what="finite-difference stencil")
        ynorm = np.linalg.norm(y, axis=-1)
        u = y / np.where(ynorm > 0, ynorm, 1.0)[..., None]
        eye = np.eye(n)
        shifts = [np.zeros_like(x)] + [h[..., None] * e for e in eye] + [-h[..., None] * e for e in eye]
        shifts += [h[..., None] * u, -h[..., None] * u]
        pts = x[None] + np.stack(shifts)
        A = self.h(pts)
        B = self.omega(pts)
        two_h = 2.0 * h
        if self.h.has_analytic_partials:
            da = self.h.partials(x, check=False)
        else:
            da = np.moveaxis((A[1 : n + 1] - A[n + 1 : 2 * n + 1]) / two_h[None, ..., None, None], 0, -1)
        if self.omega.has_analytic_partials:
            db = self.omega.partials(x, check=False)
        else:
            db = np.moveaxis((B[1 : n + 1] - B[n + 1 : 2 * n + 1]) / two_h[None, ..., None], 0, -1)

        def pieces(a, b):
            ay = np.einsum("...ij,...j->...i", a, y)
            alpha = np.sqrt(np.sum(y * ay, axis=-1))
            ell = ay / alpha[..., None]
            return ay, alpha, ell, alpha + np.sum(b * y, axis=-1)

        a0, b0 = A[0], B[0]
        _, alpha, ell, F = pieces(a0, b0)
        quad = np.einsum("...ijk,...i,...j->...k", da, y, y)
        Gx = 2.0 * F[..., None] * (quad / (2.0 * alpha[..., None]) + np.einsum("...ik,...i->...k", db, y))
        _, _, ell_p, F_p = pieces(A[-2], B[-2])
        _, _, ell_m, F_m = pieces(A[-1], B[-1])
        Gy_p = 2.0 * F_p[..., None] * (ell_p + B[-2])
        Gy_m = 2.0 * F_m[..., None] * (ell_m + B[-1])
        directional = (Gy_p - Gy_m) / two_h[..., None] * ynorm[..., None]
        lower = 0.5 * directional - 0.5 * Gx
        P = (a0 - ell[..., :, None] * ell[..., None, :]) / alpha[..., None, None]
        Fi = ell + b0
        g = F[..., None, None] * P + Fi[..., :, None] * Fi[..., None, :]
        return np.linalg.solve(g, lower[..., None])[..., 0]

    def _tensors(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        _check_direction(y)
        a, b, ay, alpha = self._parts(x, y)
        ell = ay / alpha[..., None]
        F = alpha + np.sum(b * y, axis=-1)
        Fi = ell + b
        P = (a - ell[..., :, None] * ell[..., None, :]) / alpha[..., None, None]
        return F, Fi, P, ell, alpha

    def fundamental_tensor_array(self, x, y):
        # g_ij = F * d2(alpha) + F_i F_j, with d2(alpha) = (a_ij - l_i l_j) / alpha
        F, Fi, P, _, _ = self._tensors(x, y)
        return F[..., None, None] * P + Fi[..., :, None] * Fi[..., None, :]

    def cartan_array(self, x, y):
        # A_ijk = F/2 d_k g_ij;  d_k P_ij = -(P_ij l_k + P_ik l_j + P_jk l_i) / alpha
        F, Fi, P, ell, alpha = self._tensors(x, y)
        dP = -(
            np.einsum("...ij,...k->...ijk", P, ell)
            + np.einsum("...ik,...j->...ijk", P, ell)
            + np.einsum("...jk,...i->...ijk", P, ell)
        ) / alpha[..., None, None, None]
        dg = (
            np.einsum("...k,...ij->...ijk", Fi, P)
            + F[..., None, None, None] * dP
            + np.einsum("...ik,...j->...ijk", P, Fi)
            + np.einsum("...i,...jk->...ijk", Fi, P)
        )
        return 0.5 * F[..., None, None, None] * dg

    def reversed(self) -> "RandersMetric":
        neg = OneFormField(
            self.domain,
            lambda x, w=self.omega: -w(x),
            (lambda x, w=self.omega: -w.partials(x, check=False)),
            name=f"-{self.omega.name}",
        )
        return RandersMetric(self.h, neg, check=False, name=f"{self.name}*")


class GenericFinsler(FinslerMetric):
    """Any vectorised ``F(x, y)``; every derivative is a central difference.

    Second y-differences use step ``1e-4 * |y|_inf``; the Cartan tensor uses a
    Richardson-extrapolated third difference.  Nested x/y differences make
    the Chern coefficients of this class accurate to roughly 1e-5 only.
    """

    _x_step = 1e-3

    def __init__(self, domain: ChartDomain, func: Callable[[np.ndarray, np.ndarray], np.ndarray], name: str = "generic"):
        self.domain = domain
        self.func = func
        self.name = name

    def F(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(self.func(self.domain.wrap(x), y), np.broadcast_shapes(x.shape, y.shape)[:-1])

    def dG(self, x, y, check: bool = True):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        n = self.domain.dim
        hx = fd_step(x)
        if check:
            self.domain.check(x, margin=hx, what="finite-difference stencil")
        ynorm = np.max(np.abs(y), axis=-1)
        hy = 1e-6 * np.where(ynorm > 0, ynorm, 1.0)
        eye = np.eye(n)
        Gx = np.stack(
            [(self.G(_shift(x, hx, e), y) - self.G(_shift(x, hx, -e), y)) / (2 * hx) for e in eye], axis=-1
        )
        Gy = np.stack(
            [(self.G(x, _shift(y, hy, e)) - self.G(x, _shift(y, hy, -e))) / (2 * hy) for e in eye], axis=-1
        )
        zero = (ynorm == 0)[..., None]
        return np.where(zero, 0.0, Gx), np.where(zero, 0.0, Gy)

    def fundamental_tensor_array(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        _check_direction(y)
        x, y = np.broadcast_arrays(x, y)
        n = self.domain.dim
        h = 1e-4 * np.max(np.abs(y), axis=-1)
        eye = np.eye(n)
        g = np.empty(y.shape + (n,))
        for i in range(n):
            for j in range(i, n):
                acc = 0.0
                for si in (1, -1):
                    for sj in (1, -1):
                        acc = acc + si * sj * self.G(x, _shift(y, h, si * eye[i] + sj * eye[j]))
                g[..., i, j] = g[..., j, i] = acc / (8.0 * h**2)
        return g

    def _third(self, x, y, h):
        n = self.domain.dim
        eye = np.eye(n)
        out = np.empty(y.shape + (n, n))
        for i in range(n):
            for j in range(i, n):
                for k in range(j, n):
                    acc = 0.0
                    for si in (1, -1):
                        for sj in (1, -1):
                            for sk in (1, -1):
                                step = si * eye[i] + sj * eye[j] + sk * eye[k]
                                acc = acc + si * sj * sk * self.G(x, _shift(y, h, step))
                    val = acc / (8.0 * h**3)
                    for p in {(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)}:
                        out[(Ellipsis,) + p] = val
        return out

    def cartan_array(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        _check_direction(y)
        x, y = np.broadcast_arrays(x, y)
        h = 1e-2 * np.max(np.abs(y), axis=-1)
        d3 = (4.0 * self._third(x, y, h / 2) - self._third(x, y, h)) / 3.0
        return 0.25 * self.F(x, y)[..., None, None, None] * d3

    def reversed(self):
        return GenericFinsler(self.domain, lambda x, y, f=self.func: f(x, -y), name=f"{self.name}*")


# -- operations ---------------------------------------------------------------


@dataclass
class FundamentalTensor:
    x: np.ndarray
    y: np.ndarray
    g: np.ndarray
    cartan: np.ndarray | None = None


@dataclass
class ConnectionCoefficients:
    """Formal Christoffel symbols, nonlinear connection and Chern connection at ``(x, y)``.

    Arrays are indexed ``[i, j, k]`` as ``gamma^i_jk``, ``N^i_j`` and ``Gamma^i_jk``.
    """

    x: np.ndarray
    y: np.ndarray
    gamma: np.ndarray
    nonlinear: np.ndarray
    chern: np.ndarray


def eval_F(metric: FinslerMetric, x, y) -> np.ndarray:
    return metric.F(x, y)


def fundamental_tensor(metric: FinslerMetric, x, y, with_cartan: bool = False) -> FundamentalTensor:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    g = metric.fundamental_tensor_array(x, y)
    A = metric.cartan_array(x, y) if with_cartan else None
    return FundamentalTensor(x, y, g, A)


def cartan_tensor(metric: FinslerMetric, x, y) -> np.ndarray:
    return metric.cartan_array(x, y)


def reversibility(metric: FinslerMetric, x, samples: int | None = None, seed: int = 0) -> float:
    """``lambda(x) = max {F(x, -y) : F(x, y) = 1}`` (always >= 1).

    In 2D the unit circle of directions is sampled densely and the best
    bracket is refined by a bounded scalar search.  In higher dimension random
    directions are refined by a Nelder-Mead ascent.
    """
    x = np.asarray(x, dtype=float)
    n = metric.domain.dim

    def ratio(v):
        return metric.F(x, -v) / metric.F(x, v)

    if n == 1:
        return float(max(1.0, ratio(np.array([1.0])), ratio(np.array([-1.0]))))
    count = samples or 360 * n
    if n == 2:
        theta = 2 * np.pi * np.arange(count) / count
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        vals = ratio(dirs)
        j = int(np.argmax(vals))
        step = 2 * np.pi / count

        def neg(t):
            return -float(ratio(np.array([np.cos(t), np.sin(t)])))

        # bounded search: a flat ratio (reversible case) has no strict bracket
        res = optimize.minimize_scalar(neg, bounds=(theta[j] - step, theta[j] + step), method="bounded", options={"xatol": 1e-12})
        best = max(float(vals[j]), -float(res.fun))
        return max(1.0, best)

    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(max(count, 2000), n))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    vals = ratio(dirs)
    v0 = dirs[int(np.argmax(vals))]

    def neg(v):
        nv = np.linalg.norm(v)
        return -float(ratio(v / nv)) if nv > 0 else 0.0

    res = optimize.minimize(neg, v0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
    return max(1.0, float(np.max(vals)), -float(res.fun))


def chern_coefficients(metric: FinslerMetric, x, y) -> ConnectionCoefficients:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_direction(y)
    g = metric.fundamental_tensor_array(x, y)
    ginv = np.linalg.inv(g)
    dg = metric.dg_dx(x, y)  # [s, j, k] = d g_sj / dx^k
    # Christoffel symbols of the first kind, [s, j, k]
    first = 0.5 * (dg - np.einsum("...jks->...sjk", dg) + np.einsum("...ksj->...sjk", dg))
    gamma = np.einsum("...is,...sjk->...ijk", ginv, first)
    A = metric.cartan_array(x, y)
    A_up = np.einsum("...il,...ljk->...ijk", ginv, A)
    F = metric.F(x, y)[..., None, None]
    spray = np.einsum("...krs,...r,...s->...k", gamma, y, y)
    N = np.einsum("...ijk,...k->...ij", gamma, y) - np.einsum("...ijk,...k->...ij", A_up, spray) / F
    bracket = (
        np.einsum("...ljs,...sk->...ljk", A, N)
        - np.einsum("...jks,...sl->...ljk", A, N)
        + np.einsum("...kls,...sj->...ljk", A, N)
    )
    chern = gamma - np.einsum("...il,...ljk->...ijk", ginv, bracket) / F[..., None]
    return ConnectionCoefficients(x, y, gamma, N, chern)


def covariant_derivative(metric: FinslerMetric, point, T, W, Wdot) -> np.ndarray:
    """``(D_T W)^i = W'^i + W^j T^k Gamma^i_jk(point, T)`` with reference vector T."""
    T = np.asarray(T, dtype=float)
    W = np.asarray(W, dtype=float)
    Gamma = chern_coefficients(metric, point, T).chern
    return np.asarray(Wdot, dtype=float) + np.einsum("...ijk,...j,...k->...i", Gamma, W, T)


@dataclass
class ShotCurve:
    """Output of :func:`geodesic_shoot`: samples ``s``, positions and velocities."""

    s: np.ndarray
    x: np.ndarray
    v: np.ndarray
    exited: bool = False
    message: str = ""
    speed: np.ndarray = field(default=None, repr=False)


def geodesic_shoot(
    metric: FinslerMetric,
    x0,
    y0,
    s_max: float = 1.0,
    step: float = 1e-3,
    raise_on_exit: bool = False,
) -> ShotCurve:
    """Integrate ``x'' + Gamma^i_jk(x, x') x'^j x'^k = 0`` with fixed-step RK4.

    If the trajectory leaves the chart bounds the partial curve is returned
    with ``exited=True`` (or :class:`DomainError` is raised when asked).
    """
    x = np.array(x0, dtype=float)
    v = np.array(y0, dtype=float)
    _check_direction(v)
    if s_max <= 0 or step <= 0:
        raise ValueError("s_max and step must be positive")
    n_steps = max(1, int(round(s_max / step)))
    h = s_max / n_steps

    def acc(xx, vv):
        return -metric.spray(xx, vv)

    xs = [x.copy()]
    vs = [v.copy()]
    exited, message = False, ""
    for _ in range(n_steps):
        try:
            k1x, k1v = v, acc(x, v)
            k2x, k2v = v + 0.5 * h * k1v, acc(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
            k3x, k3v = v + 0.5 * h * k2v, acc(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
            k4x, k4v = v + h * k3v, acc(x + h * k3x, v + h * k3v)
        except DomainError as exc:
            exited, message = True, str(exc)
            break
        x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not metric.domain.inside(x):
            exited, message = True, f"trajectory left the chart bounds at {x.tolist()}"
            break
        xs.append(x.copy())
        vs.append(v.copy())
    xs = np.array(xs)
    vs = np.array(vs)
    curve = ShotCurve(h * np.arange(len(xs)), xs, vs, exited, message)
    curve.speed = metric.F(xs, vs)
    if exited and raise_on_exit:
        err = DomainError(message)
        err.partial = curve
        raise err
    return curve
