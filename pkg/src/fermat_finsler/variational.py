"""Discrete energy functional on sampled curves and its critical points.

A curve is sampled at ``N + 1`` nodes on the uniform grid ``s_k = k / N``.
The energy is the midpoint rule

    J = 1/2 * sum_k G(m_k, N * (x_{k+1} - x_k)) / N,   m_k = (x_k + x_{k+1}) / 2,

so only segment velocities enter and ``J`` stays differentiable where a
velocity vanishes.  Critical points are sought by gradient descent in the
discrete H^1 inner product (P1 mass + stiffness on the chart's Euclidean
metric) with Armijo backtracking.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import DegenerateDirection, NoDescent
from .finsler import FinslerMetric, geodesic_shoot

log = logging.getLogger(__name__)

ARMIJO_C = 1e-4
ARMIJO_SHRINK = 0.5
DEDUP_TOL = 1e-4
PROJECTION_TOL = 1e-10


@dataclass
class DiscreteCurve:
    """Nodes ``x_0 .. x_N`` (lifted coordinates) plus the winding vector of the lift."""

    nodes: np.ndarray
    winding: tuple = ()

    def __post_init__(self):
        self.nodes = np.array(self.nodes, dtype=float)
        if self.nodes.ndim != 2 or self.nodes.shape[0] < 3:
            raise ValueError("a discrete curve needs at least N = 2 segments")
        self.winding = tuple(int(k) for k in self.winding)

    @property
    def N(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def s(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    @property
    def velocities(self) -> np.ndarray:
        return self.N * np.diff(self.nodes, axis=0)

    def is_constant(self, tol: float = 1e-14) -> bool:
        return bool(np.max(np.abs(self.nodes - self.nodes[0])) <= tol)

    @classmethod
    def chord(cls, p, q, N: int, winding: Sequence[int] = (), domain=None) -> "DiscreteCurve":
        """Straight segment from ``p`` to the lift ``q + offset(winding)``."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if domain is not None and domain.periodic_axes:
            winding = tuple(winding) or (0,) * len(domain.periodic_axes)
            q = q + domain.lift_offset(winding)
        t = np.linspace(0.0, 1.0, N + 1)[:, None]
        return cls((1 - t) * p + t * q, winding)


# -- boundary conditions --------------------------------------------------------


@dataclass(frozen=True)
class FixedFixed:
    """Both endpoints held fixed (at their values in the initial curve)."""


@dataclass(frozen=True)
class Periodic:
    """Closed curve: ``x_N`` is ``x_0`` translated by the curve's lift offset."""


@dataclass
class Submanifold:
    """Zero set of a constraint map ``c: R^n -> R^m`` with Jacobian ``jac``."""

    func: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    def value(self, x) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float))

    def jacobian(self, x) -> np.ndarray:
        return np.atleast_2d(np.asarray(self.jac(np.asarray(x, dtype=float)), dtype=float))

    def tangent_basis(self, x) -> np.ndarray:
        """Orthonormal basis of the tangent space, shape ``(n, n - m)``."""
        return scipy.linalg.null_space(self.jacobian(x))

    def project(self, x, tol: float = PROJECTION_TOL, max_iter: int = 50) -> np.ndarray:
        """Gauss-Newton (minimum-norm) projection onto the zero set."""
        x = np.array(x, dtype=float)
        for _ in range(max_iter):
            c = self.value(x)
            if np.max(np.abs(c)) < tol:
                break
            x = x - np.linalg.pinv(self.jacobian(x)) @ c
        return x

    @classmethod
    def point(cls, p) -> "Submanifold":
        p = np.asarray(p, dtype=float)
        return cls(lambda x: x - p, lambda x: np.eye(p.size), name="point")

    @classmethod
    def hyperplane(cls, normal, offset: float = 0.0) -> "Submanifold":
        """``{x : normal . x = offset}``."""
        nrm = np.asarray(normal, dtype=float)
        return cls(lambda x: np.array([nrm @ x - offset]), lambda x: nrm[None, :], name="hyperplane")


@dataclass
class ProductSubmanifolds:
    """Start on ``start`` and end on ``end`` (orthogonality conditions at both ends)."""

    start: Submanifold
    end: Submanifold


# -- energy and gradient ----------------------------------------------------------


def energy(metric: FinslerMetric, curve: DiscreteCurve) -> float:
    """Midpoint-rule energy ``1/2 * sum G(m_k, N dx_k) / N``."""
    return 0.5 * float(np.sum(metric.G(curve.midpoints, curve.velocities))) / curve.N


def length(metric: FinslerMetric, curve: DiscreteCurve) -> float:
    return float(np.sum(metric.F(curve.midpoints, curve.velocities))) / curve.N


def segment_speeds(metric: FinslerMetric, curve: DiscreteCurve) -> np.ndarray:
    return metric.F(curve.midpoints, curve.velocities)


def _raw_gradient(metric: FinslerMetric, nodes: np.ndarray) -> np.ndarray:
    N = nodes.shape[0] - 1
    m = 0.5 * (nodes[1:] + nodes[:-1])
    v = N * np.diff(nodes, axis=0)
    Gx, Gy = metric.dG(m, v)
    grad = np.zeros_like(nodes)
    grad[:-1] += 0.25 / N * Gx - 0.5 * Gy
    grad[1:] += 0.25 / N * Gx + 0.5 * Gy
    return grad


def energy_gradient(metric: FinslerMetric, curve: DiscreteCurve, boundary=None) -> np.ndarray:
    """Exact gradient of the discrete energy, one covector per node, with boundary rows projected.

    FixedFixed zeroes the endpoint rows, ProductSubmanifolds projects them onto
    the constraint tangent spaces, Periodic sums the two rows of the shared node.
    """
    grad = _raw_gradient(metric, curve.nodes)
    boundary = FixedFixed() if boundary is None else boundary
    if isinstance(boundary, FixedFixed):
        grad[0] = 0.0
        grad[-1] = 0.0
    elif isinstance(boundary, Periodic):
        shared = grad[0] + grad[-1]
        grad[0] = shared
        grad[-1] = shared
    elif isinstance(boundary, ProductSubmanifolds):
        T0 = boundary.start.tangent_basis(curve.nodes[0])
        T1 = boundary.end.tangent_basis(curve.nodes[-1])
        grad[0] = T0 @ (T0.T @ grad[0])
        grad[-1] = T1 @ (T1.T @ grad[-1])
    else:
        raise TypeError(f"unknown boundary condition {boundary!r}")
    return grad


def h1_gram(N: int) -> sp.csr_matrix:
    """P1 mass + stiffness matrix of the scalar H^1 product on ``[0, 1]`` with ``N`` cells."""
    h = 1.0 / N
    main = np.full(N + 1, 4.0 * h / 6.0 + 2.0 / h)
    main[0] = main[-1] = 2.0 * h / 6.0 + 1.0 / h
    off = np.full(N, h / 6.0 - 1.0 / h)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _basis(boundary, nodes: np.ndarray) -> sp.csr_matrix:
    """Columns span the admissible variations (dofs are node-major, component-minor)."""
    n1, n = nodes.shape
    N = n1 - 1
    rows, cols, vals = [], [], []
    col = 0

    def add_free(node):
        nonlocal col
        for i in range(n):
            rows.append(node * n + i)
            cols.append(col)
            vals.append(1.0)
            col += 1

    def add_tangent(node, T):
        nonlocal col
        for c in range(T.shape[1]):
            for i in range(n):
                if T[i, c] != 0.0:
                    rows.append(node * n + i)
                    cols.append(col)
                    vals.append(T[i, c])
            col += 1

    if isinstance(boundary, FixedFixed):
        for k in range(1, N):
            add_free(k)
    elif isinstance(boundary, Periodic):
        for k in range(N):
            add_free(k)
        for i in range(n):
            rows.append(N * n + i)
            cols.append(i)
            vals.append(1.0)
    elif isinstance(boundary, ProductSubmanifolds):
        add_tangent(0, boundary.start.tangent_basis(nodes[0]))
        for k in range(1, N):
            add_free(k)
        add_tangent(N, boundary.end.tangent_basis(nodes[-1]))
    else:
        raise TypeError(f"unknown boundary condition {boundary!r}")
    return sp.csr_matrix((vals, (rows, cols)), shape=(n1 * n, col))


def sobolev_direction(boundary, nodes: np.ndarray, grad: np.ndarray, gram: sp.csr_matrix | None = None):
    """Riesz representative of ``grad`` in the discrete H^1 product restricted to
    admissible variations.  Returns ``(direction, dual_norm)``."""
    n1, n = nodes.shape
    if gram is None:
        gram = h1_gram(n1 - 1)
    A = sp.kron(gram, sp.identity(n), format="csr")
    B = _basis(boundary, nodes)
    if B.shape[1] == 0:
        return np.zeros_like(nodes), 0.0
    rhs = B.T @ grad.ravel()
    S = (B.T @ A @ B).tocsc()
    z = np.atleast_1d(spsolve(S, rhs))
    direction = (B @ z).reshape(nodes.shape)
    return direction, float(np.sqrt(max(rhs @ z, 0.0)))


def grad_norm_h1(metric: FinslerMetric, curve: DiscreteCurve, boundary=None) -> float:
    """``||dJ||_1``: norm of the differential in the dual of the discrete H^1 product."""
    boundary = FixedFixed() if boundary is None else boundary
    _, norm = sobolev_direction(boundary, curve.nodes, _raw_gradient(metric, curve.nodes))
    return norm


# -- descent ----------------------------------------------------------------------


@dataclass
class DescentReport:
    iterations: int
    energies: list
    grad_norms: list
    converged: bool
    curve: DiscreteCurve
    status: str = "ok"
    zero_curve: bool = False

    @property
    def energy(self) -> float:
        return self.energies[-1]

    @property
    def grad_norm(self) -> float:
        return self.grad_norms[-1]


def _project_ends(boundary, nodes):
    if isinstance(boundary, ProductSubmanifolds):
        nodes[0] = boundary.start.project(nodes[0])
        nodes[-1] = boundary.end.project(nodes[-1])
    return nodes


def _quadratic_refine(J, boundary, nodes, d, Jk, slope, trial, Jt, t):
    """Step to the minimiser of the parabola through ``J(0)``, ``J'(0)`` and ``J(t)`` when it does better.

    Plain Armijo acceptance lets the step settle where stiff modes barely
    contract; one interpolated trial per iteration keeps the step near the
    line minimum.
    """
    curv = Jt - Jk + t * slope
    if curv <= 0.0:
        return trial, Jt, t
    ts = float(np.clip(0.5 * slope * t * t / curv, 0.1 * t, 10.0 * t))
    if abs(ts - t) <= 0.05 * t:
        return trial, Jt, t
    alt = _project_ends(boundary, nodes - ts * d)
    Ja = J(alt)
    if np.isfinite(Ja) and Ja < Jt:
        return alt, Ja, ts
    return trial, Jt, t


def minimize(
    metric: FinslerMetric,
    curve0: DiscreteCurve,
    boundary=None,
    tol: float = 1e-8,
    max_iter: int = 2000,
    raise_on_failure: bool = False,
) -> DescentReport:
    """Sobolev-preconditioned gradient descent with Armijo backtracking.

    Stops when the H^1 dual norm of dJ drops below ``tol``.  When the
    sufficient-decrease margin falls below the rounding floor of J, the step
    is accepted on the directional derivative instead, so the exact gradient
    keeps driving the iteration after J itself stops resolving the decrease.
    """
    boundary = FixedFixed() if boundary is None else boundary
    nodes = _project_ends(boundary, curve0.nodes.copy())
    winding = curve0.winding
    N = nodes.shape[0] - 1
    gram = h1_gram(N)

    if curve0.is_constant() and not isinstance(boundary, ProductSubmanifolds):
        return DescentReport(0, [0.0], [0.0], True, DiscreteCurve(nodes, winding), "zero_curve", True)

    domain = metric.domain

    def J(xs):
        m = 0.5 * (xs[1:] + xs[:-1])
        # trial curves leaving the chart (or its FD stencil margin) count as rejected
        margin = 1e-4 * (1.0 + np.max(np.abs(m), axis=-1))
        if not (np.all(domain.inside(xs)) and np.all(domain.inside(m, margin))):
            return float("inf")
        return 0.5 * float(np.sum(metric.G(m, N * np.diff(xs, axis=0)))) / N

    Jk = J(nodes)
    energies, norms = [], []
    t_prev = 1.0
    status = "max_iter"
    converged = False
    it = 0
    for it in range(max_iter + 1):
        grad = _raw_gradient(metric, nodes)
        d, gnorm = sobolev_direction(boundary, nodes, grad, gram)
        energies.append(Jk)
        norms.append(gnorm)
        if gnorm < tol:
            converged, status = True, "converged"
            break
        if it == max_iter:
            break
        slope = gnorm**2
        floor = 1e-13 * max(abs(Jk), 1e-300) * np.sqrt(N)
        t = min(2.0 * t_prev, 1e3)
        accepted = False
        while t > 1e-18:
            trial = _project_ends(boundary, nodes - t * d)
            Jt = J(trial)
            if np.isfinite(Jt) and Jt <= Jk - ARMIJO_C * t * slope:
                accepted = True
                trial, Jt, t = _quadratic_refine(J, boundary, nodes, d, Jk, slope, trial, Jt, t)
            elif np.isfinite(Jt) and ARMIJO_C * t * slope < floor and Jt <= Jk + floor:
                # J no longer resolves the decrease: use the slope along d at the trial point
                d_slope = float(np.sum(_raw_gradient(metric, trial) * d))
                accepted = d_slope >= -0.5 * slope
            if accepted:
                break
            t *= ARMIJO_SHRINK
        if not accepted:
            status = "no_descent"
            log.warning("minimize: Armijo failed at |dJ|_1 = %.3e", gnorm)
            if raise_on_failure:
                raise NoDescent(f"Armijo backtracking failed at |dJ|_1 = {gnorm:.3e}")
            break
        nodes, Jk, t_prev = trial, Jt, t

    return DescentReport(it, energies, norms, converged, DiscreteCurve(nodes, winding), status)


# -- two-point problems ---------------------------------------------------------------


@dataclass
class ConnectResult:
    curve: DiscreteCurve
    length: float
    energy: float
    report: DescentReport
    winding: tuple = ()

    @property
    def converged(self) -> bool:
        return self.report.converged

    @property
    def zero_curve(self) -> bool:
        return self.report.zero_curve

    def record(self) -> dict:
        return {
            "winding": list(self.winding),
            "length": self.length,
            "energy": self.energy,
            "grad_norm": self.report.grad_norm,
            "iterations": self.report.iterations,
            "converged": self.report.converged,
            "zero_curve": self.report.zero_curve,
        }


def connect(
    metric: FinslerMetric,
    p,
    q,
    N: int = 128,
    tol: float = 1e-8,
    winding: Sequence[int] | None = None,
    max_iter: int = 2000,
    raise_on_failure: bool = False,
) -> ConnectResult:
    """Geodesic from ``p`` to ``q`` (in the given winding class) by minimising J from the chord."""
    domain = metric.domain
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    domain.check(p, what="start point")
    domain.check(q, what="end point")
    winding = tuple(winding) if winding is not None else (0,) * len(domain.periodic_axes)
    curve0 = DiscreteCurve.chord(p, q, N, winding, domain)
    report = minimize(metric, curve0, FixedFixed(), tol=tol, max_iter=max_iter, raise_on_failure=raise_on_failure)
    curve = report.curve
    return ConnectResult(curve, length(metric, curve), energy(metric, curve), report, winding)


def _periodic_distance(domain, a: np.ndarray, b: np.ndarray) -> float:
    diff = domain.wrap(a) - domain.wrap(b)
    for i in domain.periodic_axes:
        p = domain.periods[i]
        diff[..., i] = (diff[..., i] + 0.5 * p) % p - 0.5 * p
    return float(np.max(np.abs(diff)))


def multistart_homotopy(
    metric: FinslerMetric,
    p,
    q,
    K: int,
    N: int = 128,
    tol: float = 1e-8,
    max_iter: int = 2000,
    workers: int = 1,
) -> list[ConnectResult]:
    """One :func:`connect` per winding vector in ``[-K, K]^(periodic axes)``.

    Curves within ``1e-4`` (sup norm, after wrapping) of a lower-energy curve
    are dropped; the rest are returned in increasing energy.
    """
    domain = metric.domain
    axes = domain.periodic_axes
    if not axes:
        return [connect(metric, p, q, N, tol, (), max_iter)]
    windings = list(itertools.product(range(-K, K + 1), repeat=len(axes)))

    def run(w):
        return connect(metric, p, q, N, tol, w, max_iter)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, windings))
    else:
        results = [run(w) for w in windings]

    results.sort(key=lambda r: (r.energy, r.winding))
    kept: list[ConnectResult] = []
    for r in results:
        if all(
            r.curve.N != k.curve.N or _periodic_distance(domain, r.curve.nodes, k.curve.nodes) >= DEDUP_TOL
            for k in kept
        ):
            kept.append(r)
    return kept


# -- geodesic check -------------------------------------------------------------------


@dataclass
class GeodesicResidual:
    deviation: float
    acceleration: float
    relative_acceleration: float
    shot: object = field(default=None, repr=False)


def geodesic_residual(metric: FinslerMetric, curve: DiscreteCurve, step: float = 1e-3) -> GeodesicResidual:
    """Re-shoot from ``x_0`` and measure the largest node deviation.

    The initial velocity is the second-order one-sided difference over the
    first two segments.  ``acceleration`` is ``max |D_T T|`` at interior nodes
    from second differences plus the spray term.
    """
    x = curve.nodes
    N = curve.N
    if np.max(np.abs(np.diff(x, axis=0))) < 1e-12:
        raise DegenerateDirection("curve is (numerically) constant")
    v0 = N * (-3.0 * x[0] + 4.0 * x[1] - x[2]) / 2.0
    sub = max(1, int(np.ceil((1.0 / N) / step)))
    shot = geodesic_shoot(metric, x[0], v0, s_max=1.0, step=1.0 / (N * sub))
    reached = shot.x[::sub]
    if shot.exited or len(reached) < N + 1:
        deviation = float("inf")
    else:
        deviation = float(np.max(np.linalg.norm(reached - x, axis=-1)))

    T = 0.5 * N * (x[2:] - x[:-2])
    Tdot = N * N * (x[2:] - 2.0 * x[1:-1] + x[:-2])
    acc = Tdot + metric.spray(x[1:-1], T)
    acc_norm = np.linalg.norm(acc, axis=-1)
    speed2 = np.mean(np.sum(T * T, axis=-1))
    return GeodesicResidual(deviation, float(np.max(acc_norm)), float(np.max(acc_norm) / speed2), shot)
