"""Chart domains and the scalar, vector, one-form and metric fields living on them.

Every field is evaluated on arrays of points with shape ``(..., dim)`` and
returns values of shape ``(..., *field.shape)``.  Partial derivatives come
from a user-supplied evaluator when one is given and from central finite
differences otherwise; the derivative index is always the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError
from .expr import Expression

FD_STEP = 1e-5
FD_STEP_2ND = 1e-4


def fd_step(x: np.ndarray, rel: float = FD_STEP) -> np.ndarray:
    """Per-point step ``rel * (1 + |x|_inf)``; shape ``x.shape[:-1]``."""
    return rel * (1.0 + np.max(np.abs(x), axis=-1))


@dataclass(frozen=True)
class ChartDomain:
    """A single coordinate chart, optionally periodic along some axes.

    ``periods[i]`` is the period of axis ``i`` or ``None``.  ``bounds[i]`` is a
    closed sampling interval or ``None``.  Bounds on periodic axes only steer
    sampling; curves are stored lifted, so they are never bounds-checked there.
    """

    dim: int
    periods: tuple = ()
    bounds: tuple = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        periods = tuple(self.periods) if self.periods else (None,) * self.dim
        bounds = tuple(self.bounds) if self.bounds else (None,) * self.dim
        if len(periods) != self.dim or len(bounds) != self.dim:
            raise ValueError("periods and bounds need one entry per axis")
        periods = tuple(None if p is None else float(p) for p in periods)
        for p in periods:
            if p is not None and not p > 0:
                raise ValueError(f"period must be positive, got {p}")
        clean = []
        for b in bounds:
            if b is None:
                clean.append(None)
                continue
            lo, hi = float(b[0]), float(b[1])
            if not lo < hi:
                raise ValueError(f"empty bounds interval {b}")
            clean.append((lo, hi))
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "bounds", tuple(clean))

    @property
    def periodic_axes(self) -> tuple[int, ...]:
        return tuple(i for i, p in enumerate(self.periods) if p is not None)

    def wrap(self, x) -> np.ndarray:
        x = np.array(x, dtype=float, copy=True)
        for i in self.periodic_axes:
            p = self.periods[i]
            x[..., i] = np.mod(x[..., i], p)
            # np.mod can round up to exactly p for tiny negative inputs
            x[..., i] = np.where(x[..., i] >= p, 0.0, x[..., i])
        return x

    def lift_offset(self, winding: Sequence[int]) -> np.ndarray:
        """Translation in the universal cover for a winding vector (one entry per periodic axis)."""
        off = np.zeros(self.dim)
        winding = tuple(winding)
        if len(winding) != len(self.periodic_axes):
            raise ValueError(f"winding needs {len(self.periodic_axes)} entries, got {len(winding)}")
        for k, i in zip(winding, self.periodic_axes):
            off[i] = k * self.periods[i]
        return off

    def inside(self, x, margin=0.0) -> np.ndarray:
        """Boolean mask of points at least ``margin`` inside the bounds (non-periodic axes)."""
        x = np.asarray(x, dtype=float)
        margin = np.asarray(margin, dtype=float)
        ok = np.all(np.isfinite(x), axis=-1)
        for i, b in enumerate(self.bounds):
            if b is None or self.periods[i] is not None:
                continue
            ok &= (x[..., i] - margin >= b[0]) & (x[..., i] + margin <= b[1])
        return ok

    def check(self, x, margin=0.0, what="point"):
        ok = self.inside(x, margin)
        if not np.all(ok):
            bad = np.asarray(x, dtype=float)[~ok] if np.ndim(ok) else np.asarray(x)
            raise DomainError(f"{what} outside chart bounds: {np.atleast_2d(bad)[0].tolist()}")

    def sample_box(self) -> list[tuple[float, float]]:
        """Intervals used for grids and random sampling."""
        box = []
        for b, p in zip(self.bounds, self.periods):
            if b is not None:
                box.append(b)
            elif p is not None:
                box.append((0.0, p))
            else:
                box.append((-1.0, 1.0))
        return box

    def grid(self, resolution: int | Sequence[int]) -> np.ndarray:
        """Regular grid over :meth:`sample_box`, shape ``(M, dim)``.

        Periodic axes without bounds exclude the duplicated endpoint.
        """
        res = _per_axis(resolution, self.dim)
        axes = []
        for (lo, hi), r, p, b in zip(self.sample_box(), res, self.periods, self.bounds):
            if p is not None and b is None:
                axes.append(np.linspace(lo, hi, r, endpoint=False))
            else:
                axes.append(np.linspace(lo, hi, r))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def random_points(self, rng: np.random.Generator, count: int, margin: float = 0.0) -> np.ndarray:
        box = self.sample_box()
        lo = np.array([b[0] for b in box]) + margin
        hi = np.array([b[1] for b in box]) - margin
        return lo + (hi - lo) * rng.random((count, self.dim))


def _per_axis(value, dim):
    if np.ndim(value) == 0:
        return [int(value)] * dim
    value = [int(v) for v in value]
    if len(value) != dim:
        raise ValueError("resolution needs one entry per axis")
    return value


class Field:
    """Base class: a pure evaluator ``x -> value`` with optional analytic partials."""

    kind = "field"

    def __init__(
        self,
        domain: ChartDomain,
        evaluator: Callable[[np.ndarray], np.ndarray],
        partials: Callable[[np.ndarray], np.ndarray] | None = None,
        name: str = "",
        source=None,
    ):
        self.domain = domain
        self._evaluator = evaluator
        self._partials = partials
        self.name = name
        # expression text kept for config round-trips
        self.source = source

    @property
    def shape(self) -> tuple[int, ...]:
        raise NotImplementedError

    @property
    def has_analytic_partials(self) -> bool:
        return self._partials is not None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        val = self._evaluator(self.domain.wrap(x))
        return np.broadcast_to(val, x.shape[:-1] + self.shape)

    def partials(self, x, check: bool = True) -> np.ndarray:
        """First partials, shape ``(..., *shape, dim)``; see :func:`field_partials`."""
        x = np.asarray(x, dtype=float)
        if self._partials is not None:
            if check:
                self.domain.check(x, what="evaluation point")
            val = self._partials(self.domain.wrap(x))
            return np.broadcast_to(val, x.shape[:-1] + self.shape + (self.domain.dim,))
        return self.fd_partials(x, check=check)

    def fd_partials(self, x, check: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = self.domain.dim
        h = fd_step(x)
        if check:
            self.domain.check(x, margin=h, what="finite-difference stencil")
        eye = np.eye(n)
        shifts = np.concatenate([eye, -eye])  # (2n, n)
        pts = x[None] + h[None, ..., None] * shifts.reshape((2 * n,) + (1,) * (x.ndim - 1) + (n,))
        vals = self(pts)  # (2n, ..., *shape)
        d = (vals[:n] - vals[n:]) / (2.0 * h[(None, ...) + (None,) * len(self.shape)])
        return np.moveaxis(d, 0, -1)

    @classmethod
    def constant(cls, domain: ChartDomain, value, name: str = ""):
        value = np.array(value, dtype=float)
        zeros = np.zeros(value.shape + (domain.dim,))
        field = cls(domain, lambda x: value, lambda x: zeros, name=name, source=_const_source(value))
        return field

    @classmethod
    def from_expressions(cls, domain: ChartDomain, exprs, partial_exprs=None, constants=None, name: str = ""):
        """Build a field from (nested lists of) expression strings."""
        compiled = _compile_nested(exprs, domain.dim, constants)
        evaluator = _stack_evaluator(compiled)
        partials = None
        if partial_exprs is not None:
            partials = _stack_evaluator(_compile_nested(partial_exprs, domain.dim, constants))
        elif all(e.is_constant for e in _flatten(compiled)):
            zeros = np.zeros(_nested_shape(exprs) + (domain.dim,))
            partials = lambda x: zeros  # noqa: E731
        field = cls(domain, evaluator, partials, name=name, source=exprs)
        field.partial_source = partial_exprs
        expected = field.shape
        got = _nested_shape(exprs)
        if got != expected:
            raise ValueError(f"field {name or cls.__name__} expects shape {expected}, got {got}")
        if partial_exprs is not None and _nested_shape(partial_exprs) != expected + (domain.dim,):
            raise ValueError(f"partials of {name} must have shape {expected + (domain.dim,)}")
        return field


class ScalarField(Field):
    kind = "scalar"

    @property
    def shape(self):
        return ()


class VectorField(Field):
    kind = "vector"

    @property
    def shape(self):
        return (self.domain.dim,)


class OneFormField(Field):
    kind = "oneform"

    @property
    def shape(self):
        return (self.domain.dim,)


class RiemannianField(Field):
    kind = "metric"

    @property
    def shape(self):
        return (self.domain.dim, self.domain.dim)

    def min_eigenvalue(self, resolution=21) -> float:
        pts = self.domain.grid(resolution)
        vals = self(pts)
        sym = 0.5 * (vals + np.swapaxes(vals, -1, -2))
        return float(np.min(np.linalg.eigvalsh(sym)))

    def check_positive_definite(self, resolution=21) -> bool:
        pts = self.domain.grid(resolution)
        vals = self(pts)
        if not np.allclose(vals, np.swapaxes(vals, -1, -2), rtol=1e-12, atol=1e-12):
            return False
        return bool(np.min(np.linalg.eigvalsh(vals)) > 0)


def wrap(domain: ChartDomain, x) -> np.ndarray:
    return domain.wrap(x)


def field_partials(field: Field, x) -> np.ndarray:
    """First partials of ``field`` at ``x``.

    Analytic partials are used when the field carries them; otherwise central
    differences with step ``1e-5 * (1 + |x|_inf)``.  Raises :class:`DomainError`
    when ``x`` or its stencil leaves the bounds.
    """
    return field.partials(x, check=True)


def _const_source(value: np.ndarray):
    if value.ndim == 0:
        return repr(float(value))
    return [_const_source(v) for v in value]


def _compile_nested(exprs, dim, constants):
    if isinstance(exprs, (list, tuple)):
        return [_compile_nested(e, dim, constants) for e in exprs]
    return Expression(str(exprs), dim, constants)


def _nested_shape(exprs) -> tuple[int, ...]:
    if isinstance(exprs, (list, tuple)):
        inner = {_nested_shape(e) for e in exprs}
        if len(inner) != 1:
            raise ValueError("ragged expression list")
        return (len(exprs),) + inner.pop()
    return ()


def _flatten(node) -> list:
    if isinstance(node, list):
        return [leaf for child in node for leaf in _flatten(child)]
    return [node]


def _stack_evaluator(compiled):
    if not isinstance(compiled, list):
        return compiled

    flat = _flatten(compiled)
    shape = _nested_shape(compiled)

    def evaluate(x):
        out = np.stack([f(x) for f in flat], axis=-1)
        return out.reshape(x.shape[:-1] + shape)

    return evaluate
