import math

import numpy as np
import pytest

from fermat_finsler.causality import (
    GridGraph,
    causal_cone,
    connectivity_crosscheck,
    delta_beta_condition,
    distance_map,
    growth_condition_check,
    omega_norm_sup,
    stencil_offsets,
)
from fermat_finsler.fermat import PAST, fermat_metric
from fermat_finsler.fields import ScalarField, VectorField
from fermat_finsler.variational import connect

import oracles
from models import config_spacetime, conformal, cylinder, euclidean, minkowski, plane, randers_const, rot, spacetime


def disk(R):
    return lambda x: np.hypot(x[..., 0], x[..., 1]) <= R


class TestOmegaSup:
    def test_zero_form(self):
        assert omega_norm_sup(euclidean(), 21).value == 0.0

    @pytest.mark.parametrize("b", [0.3, 0.9])
    def test_constant(self, b):
        est = omega_norm_sup(randers_const(b), 21)
        assert est.value == pytest.approx(b, rel=1e-14)
        assert est.holds_below()

    def test_rot_disk(self):
        F = fermat_metric(rot(1.0, bound=2.0))
        est = omega_norm_sup(F, 201, region=disk(2.0))
        assert est.value == pytest.approx(oracles.ROT_SUP_W1_R2, abs=1e-3)
        assert est.value <= oracles.ROT_SUP_W1_R2 + 1e-15
        assert est.record()["lower_bound"] is True


class TestDeltaBeta:
    def test_static(self):
        assert delta_beta_condition(minkowski(), 11).value == 0.0

    def test_unit_delta(self):
        st = spacetime(plane(), delta=[0.6, 0.8])
        assert delta_beta_condition(st, 11).value == pytest.approx(1 / math.sqrt(2), rel=1e-14)

    def test_rot_degrades_with_radius(self):
        vals = [delta_beta_condition(rot(1.0, bound=R), 101, region=disk(R)).value for R in (1.0, 3.0, 10.0)]
        assert vals == sorted(vals)
        for R, v in zip((1.0, 3.0, 10.0), vals):
            assert v == pytest.approx(R / math.sqrt(R * R + 1), abs=1e-3)
        assert vals[-1] > 0.99


class TestGrowth:
    def test_constants_dominate(self):
        assert growth_condition_check(minkowski(2.0), [0, 0], (0, 1, 0, 2), 41).passed

    def test_rot_quadratic(self):
        w = 0.5
        rep = growth_condition_check(rot(w, bound=2.0), [0, 0], (w * w, 0, 0, 1), 41)
        assert rep.delta_passed and rep.passed

    def test_exponential_beta_fails(self):
        dom = plane(3.0)
        st = spacetime(dom, beta=ScalarField.from_expressions(dom, "exp(x1^2 + x2^2)"))
        rep = growth_condition_check(st, [0, 0], (0, 0, 10, 10), 41)
        assert rep.delta_passed and not rep.beta_passed
        assert max(abs(v) for v in rep.beta_worst_at) == pytest.approx(3.0)

    def test_negative_coefficient(self):
        with pytest.raises(ValueError):
            growth_condition_check(minkowski(), [0, 0], (-1, 0, 0, 0))


class TestStencil:
    @pytest.mark.parametrize("stencil,r", [(8, 1), (16, 2), (32, 3)])
    def test_counts(self, stencil, r):
        offs = stencil_offsets(2, stencil)
        assert len(offs) == stencil
        assert np.max(np.abs(offs)) == r
        assert all(math.gcd(*map(abs, o)) == 1 for o in offs)

    def test_unknown(self):
        with pytest.raises(ValueError):
            stencil_offsets(2, 12)

    def test_sixteen_neighbour_error_matches_angular_oracle(self):
        grid = distance_map(euclidean(), [0, 0], 201, 16, backward=False)
        pts = grid.points
        r = np.linalg.norm(pts, axis=-1)
        far = r > 0.2
        err = np.max(np.abs(grid.dplus.ravel()[far] - r[far]) / r[far])
        assert err == pytest.approx(oracles.STENCIL16_EUCLIDEAN_ERROR, abs=2e-3)


class TestDistanceMap:
    def test_triangle_inequality(self, rng):
        F = fermat_metric(rot(0.5, bound=1.0))
        graph = GridGraph(F, 21, 16)
        pts = graph.points
        idx = rng.choice(len(pts), size=(30, 3))
        # distances from 30 sources give 30 * 21^2 (a, b, c) triples; check 1000 of them
        sources = {}
        for a in np.unique(idx[:, :2]):
            sources[a] = graph.distances(pts[a], backward=False)[0]
        checked = 0
        for a, b, _ in idx:
            dab = sources[a][b]
            for c in rng.choice(len(pts), size=34):
                assert sources[a][c] <= dab + sources[b][c] + 1e-12
                checked += 1
        assert checked >= 1000

    def test_reversible_symmetry(self):
        grid = distance_map(conformal(), [0.1, -0.2], 41)
        np.testing.assert_allclose(grid.dplus, grid.dminus, atol=1e-10)

    def test_randers_asymmetry(self):
        grid = distance_map(randers_const(0.5, bound=2.0), [0, 0], 201)
        assert grid.interpolate([1.0, 0.0], "plus") == pytest.approx(1.5, rel=0.02)
        assert grid.interpolate([1.0, 0.0], "minus") == pytest.approx(0.5, rel=0.02)

    def test_balls_nested(self):
        grid = distance_map(fermat_metric(rot(0.5, 2.0)), [0.3, 0.0], 61)
        for which in ("plus", "minus"):
            masks = [grid.ball(r, which) for r in (0.2, 0.5, 1.0, 2.0)]
            for small, big in zip(masks, masks[1:]):
                assert np.all(big[small])

    def test_off_grid_source(self):
        src = np.array([0.013, -0.021])
        grid = distance_map(euclidean(), src, 21)
        # the source vertex is linked straight to its cell corners
        for corner in ([0.0, 0.0], [0.1, 0.0], [0.0, -0.1], [0.1, -0.1]):
            i, j = (np.round((np.array(corner) + 1.0) / 0.1)).astype(int)
            assert grid.dplus[i, j] == pytest.approx(np.linalg.norm(np.array(corner) - src), rel=1e-12)
        assert np.all(np.isfinite(grid.dplus))

    def test_periodic_wrap(self):
        F = fermat_metric(cylinder())
        grid = distance_map(F, [0.0, 0.0], (64, 41), backward=False)
        near_seam = grid.interpolate([2 * math.pi - 0.3, 0.0])
        assert near_seam == pytest.approx(0.3, abs=0.05)

    def test_raster_rows(self):
        grid = distance_map(euclidean(), [0, 0], 11)
        rows = grid.raster_rows()
        assert rows.shape == (121, 4)

    def test_source_outside(self):
        from fermat_finsler.errors import DomainError

        with pytest.raises(DomainError):
            distance_map(euclidean(), [2.0, 0.0], 11)

    def test_variational_cross_validation(self, rng):
        F = fermat_metric(config_spacetime("rot_plane"))
        grid = distance_map(F, [0.0, 0.0], 121, stencil=32, backward=False)
        for x in rng.uniform(-1.5, 1.5, size=(4, 2)):
            L = connect(F, [0.0, 0.0], x, N=64).length
            assert float(grid.interpolate(x)) == pytest.approx(L, rel=0.025)


class TestCone:
    def test_minkowski_slice_radius(self):
        cone = causal_cone(minkowski(2.0), ([0.0, 0.0], 1.0), mu=1.6, resolution=81, n_slices=4)
        assert [sl.s for sl in cone.slices] == pytest.approx([0.2, 0.6, 1.0, 1.4])
        for sl in cone.slices:
            assert sl.time == pytest.approx(1.0 + sl.s)
            pts = np.concatenate(sl.polylines)
            r = np.linalg.norm(pts, axis=-1)
            assert np.max(np.abs(r - sl.s)) < 0.04 * sl.s + 0.05

    def test_slices_nested(self):
        cone = causal_cone(config_spacetime("rb_spacetime"), ([0.0, 0.0], 0.0), mu=1.5, resolution=81)
        masks = [cone.slice_mask(sl.s) for sl in cone.slices]
        for small, big in zip(masks, masks[1:]):
            assert np.all(big[small])

    def test_offset_ball_shape(self):
        # constant delta: the slice is the level set of a constant-coefficient Randers norm
        st = config_spacetime("rb_spacetime")
        cone = causal_cone(st, ([0.0, 0.0], 0.0), mu=2.0, resolution=161, n_slices=2)
        for sl in cone.slices:
            pts = np.concatenate(sl.polylines)
            exact = np.array([oracles.fermat_F(np.eye(2), [0.5, 0.0], 1.0, p) for p in pts])
            assert np.max(np.abs(exact - sl.s)) < 0.06 * sl.s

    def test_membership_matches_distances(self, rng):
        st = rot(0.5, bound=2.0)
        cone = causal_cone(st, ([0.0, 0.0], 0.0), resolution=81)
        for _ in range(100):
            x = rng.uniform(-2, 2, 2)
            t = rng.uniform(0, 4)
            d = float(cone.grid.interpolate(x))
            assert cone.contains((x, t)) == (d <= t)

    def test_past_cone(self):
        st = config_spacetime("rb_spacetime")
        fut = causal_cone(st, ([0.0, 0.0], 0.0), resolution=81)
        past = causal_cone(st, ([0.0, 0.0], 0.0), direction=PAST, resolution=81, grid=fut.grid)
        assert past.contains(([0.5, 0.0], -1.0))
        assert not past.contains(([0.5, 0.0], 1.0))

    def test_horizon(self):
        cone = causal_cone(minkowski(2.0), ([0.0, 0.0], 0.0), mu=1.0, resolution=41)
        assert cone.contains(([0.1, 0.0], 0.5))
        assert not cone.contains(([0.1, 0.0], 1.5))
        assert cone.record()["horizon"] == 1.0


class TestCrosscheck:
    def test_member_constructs_curve(self):
        rep = connectivity_crosscheck(minkowski(2.0), ([0.0, 0.0], 0.0), ([1.0, 0.0], 2.0), resolution=41)
        assert rep.grid_member and rep.curve_member and rep.agree
        assert rep.max_causal_character <= 1e-8
        np.testing.assert_allclose(rep.x[-1], [1.0, 0.0])
        assert rep.t[-1] == pytest.approx(2.0)
        assert np.all(np.diff(rep.t) >= 0)

    def test_non_member_skips_curve(self):
        rep = connectivity_crosscheck(minkowski(2.0), ([0.0, 0.0], 0.0), ([1.0, 0.0], 0.5), resolution=41)
        assert not rep.member and rep.curve_member is None and rep.fermat_length is None

    def test_boundary_is_pure_light_ray(self):
        rep = connectivity_crosscheck(minkowski(2.0), ([0.0, 0.0], 0.0), ([1.0, 0.0], 1.0), resolution=41)
        assert rep.curve_member and rep.member
        assert abs(rep.max_causal_character) < 1e-8

    def test_rot_event_agrees(self):
        st = config_spacetime("rot_plane")
        F = fermat_metric(st)
        L = connect(F, [0.0, 0.0], [0.8, 0.4]).length
        grid = distance_map(F, [0.0, 0.0], 101, backward=False)
        inside = connectivity_crosscheck(st, ([0.0, 0.0], 0.0), ([0.8, 0.4], 1.2 * L), grid=grid)
        outside = connectivity_crosscheck(st, ([0.0, 0.0], 0.0), ([0.8, 0.4], 0.8 * L), grid=grid)
        assert inside.member and inside.agree
        assert not outside.member and outside.agree

    def test_event_before_apex(self):
        with pytest.raises(ValueError):
            connectivity_crosscheck(minkowski(2.0), ([0.0, 0.0], 1.0), ([0.5, 0.0], 0.5), resolution=21)
