"""Metrics and spacetimes shared by the test modules."""

from pathlib import Path

import numpy as np

from fermat_finsler.config import build_metric, build_spacetime, load_config
from fermat_finsler.errors import RandersConditionError
from fermat_finsler.fermat import StationarySpacetime
from fermat_finsler.fields import ChartDomain, OneFormField, RiemannianField, ScalarField, VectorField
from fermat_finsler.finsler import RandersMetric

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def plane(bound=1.0):
    return ChartDomain(2, bounds=((-bound, bound), (-bound, bound)))


def randers_const(b, bound=1.0, dom=None, h=None):
    dom = dom or plane(bound)
    h = np.eye(dom.dim) if h is None else h
    w = np.zeros(dom.dim)
    w[0] = b
    return RandersMetric(RiemannianField.constant(dom, h), OneFormField.constant(dom, w), name=f"RB({b})")


def euclidean(bound=1.0, dim=2):
    dom = ChartDomain(dim, bounds=((-bound, bound),) * dim)
    return RandersMetric(RiemannianField.constant(dom, np.eye(dim)), OneFormField.constant(dom, np.zeros(dim)), name="euclidean")


def conformal(bound=1.0):
    """exp(x1) * id with analytic partials."""
    dom = plane(bound)
    h = RiemannianField.from_expressions(
        dom, [["exp(x1)", "0"], ["0", "exp(x1)"]], [[["exp(x1)", "0"], ["0", "0"]], [["0", "0"], ["exp(x1)", "0"]]]
    )
    return RandersMetric(h, OneFormField.constant(dom, [0.0, 0.0]), name="conformal")


def wavy_randers(b, bound=1.0):
    """h = exp(0.3 x1) id and omega of constant h-norm b turning with x2."""
    dom = plane(bound)
    h = RiemannianField.from_expressions(dom, [["exp(0.3*x1)", "0"], ["0", "exp(0.3*x1)"]])
    w = OneFormField.from_expressions(dom, [f"{b}*exp(0.15*x1)*cos(x2)", f"{b}*exp(0.15*x1)*sin(x2)"])
    return RandersMetric(h, w, name=f"wavy({b})")


def spacetime(dom, g0=None, delta=None, beta=1.0, phi=None, name="spacetime"):
    n = dom.dim
    g0 = g0 if g0 is not None else RiemannianField.constant(dom, np.eye(n))
    if delta is None:
        delta = VectorField.constant(dom, np.zeros(n))
    elif not hasattr(delta, "domain"):
        delta = VectorField.constant(dom, delta)
    if not hasattr(beta, "domain"):
        beta = ScalarField.constant(dom, beta)
    if phi is not None and not hasattr(phi, "domain"):
        phi = ScalarField.constant(dom, phi)
    return StationarySpacetime(dom, g0, delta, beta, phi, name=name)


def minkowski(bound=5.0, dim=2):
    return spacetime(ChartDomain(dim, bounds=((-bound, bound),) * dim), name="minkowski")


def cylinder():
    dom = ChartDomain(2, periods=(2 * np.pi, None), bounds=(None, (-5.0, 5.0)))
    return spacetime(dom, name="cylinder")


def rot(w, bound=3.0):
    dom = plane(bound)
    delta = VectorField.from_expressions(dom, [f"-{w}*x2", f"{w}*x1"], [["0", f"-{w}"], [f"{w}", "0"]])
    return spacetime(dom, delta=delta, name=f"ROT({w})")


def config_spacetime(name):
    return build_spacetime(load_config(CONFIGS / f"{name}.cfg"))


def configured_metrics():
    """Every example config that defines a valid metric, keyed by file stem."""
    out = {}
    for path in sorted(CONFIGS.glob("*.cfg")):
        try:
            out[path.stem] = build_metric(load_config(path))
        except RandersConditionError:
            continue
    return out
