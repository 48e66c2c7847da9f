import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fermat_finsler.errors import DegenerateDirection, RandersConditionError
from fermat_finsler.fermat import fermat_metric
from fermat_finsler.fields import ChartDomain, OneFormField, RiemannianField
from fermat_finsler.finsler import (
    GenericFinsler,
    RandersMetric,
    cartan_tensor,
    chern_coefficients,
    covariant_derivative,
    eval_F,
    fundamental_tensor,
    geodesic_shoot,
    reversibility,
)

import oracles
from models import conformal, euclidean, plane, randers_const, rot, spacetime, wavy_randers


def as_generic(metric):
    return GenericFinsler(metric.domain, metric.F, name=f"generic({metric.name})")


class TestEvalF:
    def test_randers_values(self):
        m = randers_const(0.5)
        assert eval_F(m, [0.2, 0.1], [1.0, 0.0]) == pytest.approx(1.5, rel=1e-15)
        assert eval_F(m, [0.2, 0.1], [-1.0, 0.0]) == pytest.approx(0.5, rel=1e-15)

    def test_zero_section(self):
        for m in (randers_const(0.5), wavy_randers(0.9), fermat_metric(rot(0.5))):
            assert eval_F(m, [0.1, 0.2], [0.0, 0.0]) == 0.0

    def test_against_oracle(self, rng):
        m = wavy_randers(0.7)
        for _ in range(20):
            x = rng.uniform(-1, 1, 2)
            y = rng.normal(size=2)
            s = math.exp(0.3 * x[0])
            w = [0.7 * math.exp(0.15 * x[0]) * math.cos(x[1]), 0.7 * math.exp(0.15 * x[0]) * math.sin(x[1])]
            ref = oracles.randers_F([[s, 0], [0, s]], w, y)
            assert eval_F(m, x, y) == pytest.approx(ref, rel=1e-14)

    def test_randers_condition(self):
        with pytest.raises(RandersConditionError):
            randers_const(1.2)
        with pytest.raises(RandersConditionError):
            randers_const(1.0)
        dom = plane()
        with pytest.raises(RandersConditionError):
            RandersMetric(RiemannianField.constant(dom, [[1.0, 0.0], [0.0, -1.0]]), OneFormField.constant(dom, [0.0, 0.0]))

    @given(st.floats(0.0, 0.95), st.floats(1e-3, 1e3), st.floats(-3.0, 3.0))
    @settings(max_examples=100, deadline=None)
    def test_homogeneity_property(self, b, lam, angle):
        m = randers_const(b)
        y = np.array([math.cos(angle), math.sin(angle)])
        assert m.F([0.0, 0.0], lam * y) == pytest.approx(lam * m.F([0.0, 0.0], y), rel=1e-13)


class TestFundamentalTensor:
    @pytest.mark.parametrize("b", [0.1, 0.5, 0.9])
    def test_closed_form_matches_fd_hessian(self, b, rng):
        m = wavy_randers(b)
        x = m.domain.random_points(rng, 100)
        y = rng.normal(size=(100, 2))
        g = fundamental_tensor(m, x, y).g
        g_fd = fundamental_tensor(as_generic(m), x, y).g
        assert np.max(np.abs(g - g_fd)) / np.max(np.abs(g)) < 1e-6

    def test_symmetric_positive_definite_degree_zero(self, rng):
        m = fermat_metric(rot(0.5))
        x = m.domain.random_points(rng, 50)
        y = rng.normal(size=(50, 2))
        g = fundamental_tensor(m, x, y).g
        np.testing.assert_allclose(g, np.swapaxes(g, -1, -2), atol=1e-14)
        assert np.min(np.linalg.eigvalsh(g)) > 0
        np.testing.assert_allclose(fundamental_tensor(m, x, 3.7 * y).g, g, rtol=1e-12)

    def test_euler_identity(self, rng):
        m = wavy_randers(0.6)
        x = m.domain.random_points(rng, 50)
        y = rng.normal(size=(50, 2))
        g = fundamental_tensor(m, x, y).g
        np.testing.assert_allclose(np.einsum("...ij,...i,...j->...", g, y, y), m.G(x, y), rtol=1e-12)

    def test_degenerate_direction(self):
        with pytest.raises(DegenerateDirection):
            fundamental_tensor(randers_const(0.5), [0.0, 0.0], [0.0, 0.0])

    def test_riemannian_g_is_h(self, rng):
        m = conformal()
        x = m.domain.random_points(rng, 10)
        y = rng.normal(size=(10, 2))
        np.testing.assert_allclose(fundamental_tensor(m, x, y).g, m.h(x), rtol=1e-13, atol=1e-15)


class TestCartan:
    def test_contraction_with_y_vanishes(self, rng):
        m = wavy_randers(0.8)
        x = m.domain.random_points(rng, 100)
        y = rng.normal(size=(100, 2))
        A = cartan_tensor(m, x, y)
        assert np.max(np.abs(np.einsum("...i,...ijk->...jk", y, A))) < 1e-12

    def test_totally_symmetric(self, rng):
        m = wavy_randers(0.8)
        A = cartan_tensor(m, [0.1, 0.3], rng.normal(size=2))
        for perm in [(1, 0, 2), (0, 2, 1), (2, 1, 0)]:
            np.testing.assert_allclose(A, np.transpose(A, perm), atol=1e-14)

    def test_closed_form_matches_generic(self, rng):
        m = wavy_randers(0.5)
        x = m.domain.random_points(rng, 20)
        y = rng.normal(size=(20, 2))
        A = cartan_tensor(m, x, y)
        A_fd = cartan_tensor(as_generic(m), x, y)
        assert np.max(np.abs(A - A_fd)) / np.max(np.abs(A)) < 1e-5

    def test_vanishes_for_riemannian(self, rng):
        m = conformal()
        A = cartan_tensor(m, [0.2, 0.2], rng.normal(size=2))
        assert np.max(np.abs(A)) < 1e-14


class TestReversibility:
    def test_riemannian(self):
        assert reversibility(conformal(), [0.3, -0.2]) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("b", [0.0, 0.25, 0.5, 0.9])
    def test_randers_constant(self, b):
        assert reversibility(randers_const(b), [0.0, 0.0]) == pytest.approx(oracles.rb_lambda(b), abs=1e-5)

    def test_static_fermat(self):
        dom = plane(2.0)
        from fermat_finsler.fields import ScalarField

        st = spacetime(dom, beta=ScalarField.from_expressions(dom, "3 + x1"))
        assert reversibility(fermat_metric(st), [0.5, 0.5]) == pytest.approx(1.0, abs=1e-9)

    def test_three_dimensions(self):
        dom = ChartDomain(3, bounds=((-1, 1),) * 3)
        m = RandersMetric(RiemannianField.constant(dom, np.eye(3)), OneFormField.constant(dom, [0.3, 0.0, 0.4]))
        assert reversibility(m, [0, 0, 0]) == pytest.approx(oracles.rb_lambda(0.5), abs=1e-5)


class TestChern:
    def test_flat(self, rng):
        c = chern_coefficients(euclidean(), [0.1, 0.2], rng.normal(size=2))
        assert np.max(np.abs(c.chern)) < 1e-9
        assert np.max(np.abs(c.nonlinear)) < 1e-9

    def test_conformal_levi_civita(self, rng):
        ref = np.array(oracles.conformal_christoffel([1.0, 0.0]))
        for _ in range(3):
            c = chern_coefficients(conformal(), rng.uniform(-0.5, 0.5, 2), rng.normal(size=2))
            np.testing.assert_allclose(c.chern, ref, atol=1e-5)
            np.testing.assert_allclose(c.gamma, ref, atol=1e-5)

    def test_torsion_free_and_homogeneous(self, rng):
        m = fermat_metric(rot(0.5))
        x, y = np.array([0.4, -0.3]), rng.normal(size=2)
        c = chern_coefficients(m, x, y)
        np.testing.assert_allclose(c.chern, np.swapaxes(c.chern, -1, -2), atol=1e-8)
        np.testing.assert_allclose(chern_coefficients(m, x, 2.0 * y).chern, c.chern, atol=1e-6)

    def test_spray_matches_connection(self, rng):
        m = wavy_randers(0.6)
        x, y = np.array([0.2, 0.1]), rng.normal(size=2)
        c = chern_coefficients(m, x, y)
        np.testing.assert_allclose(np.einsum("ijk,j,k->i", c.chern, y, y), m.spray(x, y), atol=1e-6)

    def test_nonlinear_connection_is_half_spray_derivative(self, rng):
        # N^i_j y^j = gamma^i_jk y^j y^k
        m = wavy_randers(0.6)
        x, y = np.array([0.2, 0.1]), rng.normal(size=2)
        c = chern_coefficients(m, x, y)
        np.testing.assert_allclose(c.nonlinear @ y, np.einsum("ijk,j,k->i", c.gamma, y, y), atol=1e-7)


class TestCovariantDerivative:
    def test_flat(self):
        out = covariant_derivative(euclidean(), [0.0, 0.0], [1.0, 0.5], [0.3, 0.2], [1.0, -1.0])
        np.testing.assert_allclose(out, [1.0, -1.0], atol=1e-9)

    def test_linear(self, rng):
        m = wavy_randers(0.5)
        p, T = [0.1, 0.1], rng.normal(size=2)
        W1, W2, D1, D2 = rng.normal(size=(4, 2))
        a, b = 0.7, -1.3
        lhs = covariant_derivative(m, p, T, a * W1 + b * W2, a * D1 + b * D2)
        rhs = a * covariant_derivative(m, p, T, W1, D1) + b * covariant_derivative(m, p, T, W2, D2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_geodesic_tangent_is_parallel(self):
        m = conformal()
        shot = geodesic_shoot(m, [-0.3, 0.0], [0.4, 0.3], s_max=1.0, step=1e-3)
        k = 500
        acc = -m.spray(shot.x[k], shot.v[k])
        D = covariant_derivative(m, shot.x[k], shot.v[k], shot.v[k], acc)
        assert np.max(np.abs(D)) < 1e-5

    def test_degenerate(self):
        with pytest.raises(DegenerateDirection):
            covariant_derivative(conformal(), [0, 0], [0, 0], [1, 0], [0, 0])


class TestShooting:
    def test_euclidean_line(self):
        shot = geodesic_shoot(euclidean(2.0), [0.0, 0.0], [1.0, 0.0], 1.0, 1e-3)
        np.testing.assert_allclose(shot.x[-1], [1.0, 0.0], atol=1e-12)
        assert not shot.exited

    def test_randers_constant_straight(self):
        m = randers_const(0.5, bound=2.0)
        shot = geodesic_shoot(m, [0.0, 0.0], [1.0, 0.0], 1.0, 1e-3)
        line = np.outer(shot.s, [1.0, 0.0])
        assert np.max(np.abs(shot.x - line)) < 1e-6

    def test_speed_drift(self):
        m = fermat_metric(rot(0.5))
        shot = geodesic_shoot(m, [1.0, 0.0], [-0.5, 1.0], 1.0, 1e-3)
        drift = np.abs(shot.speed - shot.speed[0]) / shot.speed[0]
        assert np.max(drift) < 1e-6

    def test_exit_returns_partial(self):
        shot = geodesic_shoot(euclidean(1.0), [0.0, 0.0], [3.0, 0.0], 1.0, 1e-3)
        assert shot.exited
        assert shot.x[-1][0] <= 1.0
        assert len(shot.s) < 1001

    def test_zero_velocity(self):
        with pytest.raises(DegenerateDirection):
            geodesic_shoot(euclidean(), [0.0, 0.0], [0.0, 0.0])

    def test_cylinder_wraps_freely(self):
        from fermat_finsler.fermat import fermat_metric as fm
        from models import cylinder

        shot = geodesic_shoot(fm(cylinder()), [0.0, 0.0], [10.0, 1.0], 1.0, 1e-3)
        assert not shot.exited
        np.testing.assert_allclose(shot.x[-1], [10.0, 1.0], atol=1e-10)
