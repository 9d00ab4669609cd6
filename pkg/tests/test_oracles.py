import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bilevelcg.core import (
    BallProduct,
    Halfspace,
    L1Ball,
    OracleError,
    Polytope,
    ProductRegion,
)
from bilevelcg.oracles import (
    LpProblem,
    feasible_point,
    halfspace_lmo,
    lmo,
    project,
    project_ball_product,
    project_l1_ball,
    project_polytope,
    simplex_solve,
)

TOY_REGION = Polytope(A=np.array([[1.0, 1.0], [4.0, 6.0]]), b=np.array([1.0, 5.0]))


class TestSimplex:
    def test_minimizes_over_toy_region(self):
        sol = simplex_solve(LpProblem(c=np.array([-1.0, -1.0]), A=TOY_REGION.A, b=TOY_REGION.b))
        assert sol.status == "optimal"
        assert sol.value == pytest.approx(-1.0)
        assert TOY_REGION.contains(sol.point, tol=1e-9)

    def test_zero_objective_returns_feasible_point(self):
        sol = simplex_solve(LpProblem(c=np.zeros(2), A=TOY_REGION.A, b=TOY_REGION.b))
        assert sol.status == "optimal"
        assert TOY_REGION.contains(sol.point, tol=1e-9)

    def test_negative_rhs_handled_by_phase_one(self):
        # x >= 0.5 written as -x <= -0.5, plus x <= 2.
        sol = simplex_solve(
            LpProblem(c=np.array([1.0]), A=np.array([[-1.0], [1.0]]), b=np.array([-0.5, 2.0]))
        )
        assert sol.value == pytest.approx(0.5)

    def test_infeasible_detected(self):
        sol = simplex_solve(
            LpProblem(c=np.array([1.0]), A=np.array([[1.0], [-1.0]]), b=np.array([1.0, -2.0]))
        )
        assert sol.status == "infeasible"

    def test_deterministic(self):
        problem = LpProblem(c=np.array([-1.0, -1.0]), A=TOY_REGION.A, b=TOY_REGION.b)
        a = simplex_solve(problem)
        b = simplex_solve(problem)
        np.testing.assert_array_equal(a.point, b.point)


class TestLmo:
    def test_l1_selects_largest_coefficient(self):
        s = lmo(L1Ball(2.0, 3), np.array([3.0, -5.0, 2.0]))
        np.testing.assert_allclose(s, [0.0, 2.0, 0.0])

    def test_l1_tie_break_is_lowest_index(self):
        s = lmo(L1Ball(1.0, 2), np.array([1.0, -1.0]))
        np.testing.assert_allclose(s, [-1.0, 0.0])

    def test_ball_product_per_column(self):
        region = BallProduct(num_cols=2, col_dim=2, radii=np.array([1.0, 2.0]))
        c = region.flatten(np.array([[3.0, 0.0], [4.0, 0.0]]))
        s = lmo(region, c)
        cols = region.columns(s)
        np.testing.assert_allclose(cols[:, 0], [-0.6, -0.8])
        np.testing.assert_allclose(cols[:, 1], [-2.0, 0.0])  # zero column convention

    def test_polytope_matches_vertex_minimum(self):
        c = np.array([-1.0, -1.0])
        s = lmo(TOY_REGION, c)
        assert float(c @ s) == pytest.approx(-1.0)

    def test_product_region_blockwise(self):
        region = ProductRegion((L1Ball(1.0, 2), L1Ball(3.0, 2)))
        s = lmo(region, np.array([1.0, 0.0, 0.0, -2.0]))
        np.testing.assert_allclose(s, [-1.0, 0.0, 0.0, 3.0])

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_l1_lmo_optimal_over_random_feasible_points(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(2, 6))
        region = L1Ball(float(rng.uniform(0.5, 2.0)), d)
        c = rng.standard_normal(d)
        s = lmo(region, c)
        assert region.contains(s, tol=1e-9)
        mags = rng.dirichlet(np.ones(d), size=50) * region.radius
        pts = mags * rng.choice([-1.0, 1.0], size=(50, d))
        assert float(c @ s) <= float((pts @ c).min()) + 1e-9


class TestHalfspaceLmo:
    def test_unrestricted_when_cut_satisfied(self):
        # If the plain LMO already satisfies the halfspace, the same point
        # must come back (identical tie-break path).
        region = L1Ball(1.0, 2)
        c = np.array([1.0, -1.0])
        plain = lmo(region, c)
        h = Halfspace(np.array([0.0, 1.0]), 10.0)
        np.testing.assert_array_equal(halfspace_lmo(region, h, c), plain)

    def test_l1_restricted_frozen_case(self):
        # Minimize -x1 over the unit l1 ball cut by x1 <= 0.5.
        region = L1Ball(1.0, 2)
        h = Halfspace(np.array([1.0, 0.0]), 0.5)
        s = halfspace_lmo(region, h, np.array([-1.0, 0.0]))
        assert s[0] == pytest.approx(0.5)
        assert region.contains(s, tol=1e-8) and h.contains(s, tol=1e-8)

    def test_polytope_restricted_appends_row(self):
        h = Halfspace(np.array([-1.0, -1.0]), -1.0)  # forces x1 + x2 >= 1
        s = halfspace_lmo(TOY_REGION, h, np.array([1.0, 0.0]))
        # cheapest x1 on the lower-level optimal face is at (0.5, 0.5)
        np.testing.assert_allclose(s, [0.5, 0.5], atol=1e-9)

    def test_ball_product_restricted_stays_feasible(self):
        region = BallProduct(num_cols=2, col_dim=2, radii=1.0)
        c = region.flatten(np.array([[1.0, -1.0], [0.0, 0.5]]))
        normal = region.flatten(np.array([[1.0, 0.0], [1.0, 0.0]]))
        plain = lmo(region, c)
        loose = Halfspace(normal, float(normal @ plain) + 0.3)
        np.testing.assert_array_equal(halfspace_lmo(region, loose, c), plain)
        tight = Halfspace(normal, float(normal @ plain) - 0.3)  # cuts off the plain point
        s2 = halfspace_lmo(region, tight, c)
        assert region.contains(s2, tol=1e-7) and tight.contains(s2, tol=1e-7)
        assert float(c @ s2) >= float(c @ plain) - 1e-9

    def test_product_region_single_active_block(self):
        region = ProductRegion((L1Ball(1.0, 2), L1Ball(1.0, 2)))
        normal = np.array([1.0, 0.0, 0.0, 0.0])  # lives in the first block only
        c = np.array([-1.0, 0.0, -1.0, 0.0])
        h = Halfspace(normal, 0.25)
        s = halfspace_lmo(region, h, c)
        assert s[0] == pytest.approx(0.25)
        np.testing.assert_allclose(s[2:], [1.0, 0.0])

    def test_infeasible_cut_raises(self):
        region = L1Ball(1.0, 2)
        h = Halfspace(np.array([1.0, 0.0]), -5.0)  # x1 <= -5 misses the ball
        with pytest.raises(OracleError):
            halfspace_lmo(region, h, np.array([0.0, 1.0]))


class TestProjections:
    def test_l1_inside_point_unchanged(self):
        y = np.array([0.3, -0.2])
        np.testing.assert_array_equal(project_l1_ball(y, 1.0), y)

    def test_l1_frozen_case(self):
        np.testing.assert_allclose(project_l1_ball(np.array([2.0, 1.0]), 1.0), [1.0, 0.0])

    def test_l1_boundary_norm(self):
        p = project_l1_ball(np.array([3.0, -2.0, 1.0]), 1.5)
        assert np.abs(p).sum() == pytest.approx(1.5)

    def test_polytope_projection_frozen_case(self):
        p = project_polytope(TOY_REGION, np.array([1.0, 1.0]))
        np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-8)

    def test_ball_product_per_column(self):
        region = BallProduct(num_cols=2, col_dim=2, radii=1.0)
        y = region.flatten(np.array([[3.0, 0.2], [4.0, 0.1]]))
        p = project_ball_product(region, y)
        cols = region.columns(p)
        np.testing.assert_allclose(cols[:, 0], [0.6, 0.8])
        np.testing.assert_allclose(cols[:, 1], [0.2, 0.1])

    def test_dispatcher_handles_product_region(self):
        region = ProductRegion((L1Ball(1.0, 2), BallProduct(1, 2, 1.0)))
        y = np.array([2.0, 0.0, 3.0, 4.0])
        p = project(region, y)
        np.testing.assert_allclose(p, [1.0, 0.0, 0.6, 0.8])

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_l1_projection_idempotent_and_nonexpansive(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(2, 6))
        r = float(rng.uniform(0.5, 2.0))
        y, z = rng.standard_normal(d) * 3.0, rng.standard_normal(d) * 3.0
        py, pz = project_l1_ball(y, r), project_l1_ball(z, r)
        np.testing.assert_allclose(project_l1_ball(py, r), py, atol=1e-12)
        assert np.linalg.norm(py - pz) <= np.linalg.norm(y - z) + 1e-12

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_polytope_projection_optimality(self, seed):
        # Variational inequality: <y - p, z - p> <= 0 for all feasible z.
        rng = np.random.default_rng(seed)
        y = rng.standard_normal(2) * 2.0
        p = project_polytope(TOY_REGION, y)
        assert TOY_REGION.contains(p, tol=1e-7)
        for v in TOY_REGION.vertices():
            assert float((y - p) @ (v - p)) <= 1e-7


class TestFeasiblePoint:
    def test_every_region_type(self):
        regions = [
            L1Ball(1.0, 3),
            BallProduct(2, 2, 1.0),
            TOY_REGION,
            ProductRegion((L1Ball(1.0, 2), BallProduct(1, 2, 1.0))),
        ]
        for region in regions:
            x = feasible_point(region)
            assert region.contains(x, tol=1e-9)

    def test_polytope_with_mandatory_lower_bounds(self):
        # Origin infeasible: x1 >= 0.5 encoded as -x1 <= -0.5.
        region = Polytope(A=np.array([[-1.0, 0.0], [1.0, 1.0]]), b=np.array([-0.5, 2.0]))
        x = feasible_point(region)
        assert region.contains(x, tol=1e-9)
