import numpy as np
import pytest
from hypothesis import given, strategies as st

from bilevelcg.core import (
    BallProduct,
    BilevelInstance,
    ConstantStep,
    Halfspace,
    Harmonic,
    InvSqrt,
    L1Ball,
    OracleError,
    Polytope,
    ProductRegion,
    QuadraticForm,
    ReferenceData,
    SmoothOracle,
    SolveOutcome,
    SolverConfig,
    TraceRow,
    check_membership,
    cutting_plane,
    step_size,
)


def quad_oracle(Q, q, c=0.0):
    form = QuadraticForm(np.asarray(Q, float), np.asarray(q, float), c)
    return SmoothOracle(form.q.shape[0], lambda x: (form.value(x), form.gradient(x)), quadratic=form)


class TestQuadraticForm:
    def test_value_and_gradient(self):
        form = QuadraticForm(np.array([[2.0, 0.0], [0.0, 4.0]]), np.array([1.0, -1.0]), 0.5)
        x = np.array([1.0, 2.0])
        assert form.value(x) == pytest.approx(8.5)
        np.testing.assert_allclose(form.gradient(x), [3.0, 7.0])

    def test_zero_form(self):
        form = QuadraticForm(np.zeros((3, 3)), np.zeros(3), 0.0)
        assert form.value(np.ones(3)) == 0.0


class TestSmoothOracle:
    def test_shape_validation_on_input(self):
        oracle = quad_oracle(np.eye(2), np.zeros(2))
        with pytest.raises(ValueError):
            oracle(np.zeros(3))

    def test_shape_validation_on_gradient(self):
        bad = SmoothOracle(2, lambda x: (0.0, np.zeros(3)))
        with pytest.raises(OracleError):
            bad(np.zeros(2))

    def test_value_and_gradient_accessors(self):
        oracle = quad_oracle(2.0 * np.eye(2), np.zeros(2))
        assert oracle.value(np.array([1.0, 1.0])) == pytest.approx(2.0)
        np.testing.assert_allclose(oracle.gradient(np.array([1.0, 1.0])), [2.0, 2.0])


class TestL1Ball:
    def test_membership_and_diameter(self):
        ball = L1Ball(radius=2.0, dimension=3)
        assert ball.contains(np.array([1.0, -0.5, 0.5]))
        assert not ball.contains(np.array([1.5, -1.0, 0.0]))
        assert ball.diameter == 4.0

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValueError):
            L1Ball(radius=0.0, dimension=2)

    @given(st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3))
    def test_boundary_tolerance(self, vals):
        ball = L1Ball(radius=1.0, dimension=3)
        x = np.array(vals)
        s = np.abs(x).sum()
        if s > 0:
            assert ball.contains(x / s)


class TestBallProduct:
    def test_column_layout_round_trip(self):
        region = BallProduct(num_cols=3, col_dim=2, radii=1.0)
        cols = np.arange(6.0).reshape(2, 3)
        np.testing.assert_allclose(region.columns(region.flatten(cols)), cols)

    def test_membership_per_column(self):
        region = BallProduct(num_cols=2, col_dim=2, radii=np.array([1.0, 0.5]))
        ok = region.flatten(np.array([[1.0, 0.0], [0.0, 0.5]]))
        assert region.contains(ok)
        bad = region.flatten(np.array([[1.0, 0.0], [0.0, 0.6]]))
        assert not region.contains(bad)

    def test_diameter(self):
        region = BallProduct(num_cols=2, col_dim=3, radii=np.array([3.0, 4.0]))
        assert region.diameter == pytest.approx(10.0)


class TestPolytope:
    def region(self):
        return Polytope(A=np.array([[1.0, 1.0], [4.0, 6.0]]), b=np.array([1.0, 5.0]))

    def test_vertex_enumeration(self):
        verts = self.region().vertices()
        expected = {(0.0, 0.0), (1.0, 0.0), (0.0, 5.0 / 6.0), (0.5, 0.5)}
        got = {tuple(np.round(v, 9)) for v in verts}
        assert got == {tuple(np.round(np.array(e), 9)) for e in expected}

    def test_diameter_is_max_vertex_distance(self):
        assert self.region().diameter == pytest.approx(np.sqrt(61.0) / 6.0)

    def test_membership_includes_sign_constraints(self):
        reg = self.region()
        assert reg.contains(np.array([0.2, 0.3]))
        assert not reg.contains(np.array([-0.1, 0.3]))
        assert not reg.contains(np.array([0.9, 0.3]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Polytope(A=np.eye(2), b=np.ones(3))


class TestProductRegion:
    def region(self):
        return ProductRegion((L1Ball(1.0, 2), BallProduct(1, 3, 2.0)))

    def test_offsets_and_split(self):
        reg = self.region()
        assert reg.offsets() == [(0, 2), (2, 5)]
        parts = reg.split(np.arange(5.0))
        assert [p.tolist() for p in parts] == [[0.0, 1.0], [2.0, 3.0, 4.0]]

    def test_membership_blockwise(self):
        reg = self.region()
        assert reg.contains(np.array([0.5, -0.5, 1.0, 1.0, 1.0]))
        assert not reg.contains(np.array([0.9, -0.5, 1.0, 1.0, 1.0]))

    def test_diameter_combines_blocks(self):
        reg = self.region()
        assert reg.diameter == pytest.approx(np.sqrt(2.0**2 + 4.0**2))

    def test_check_membership_validates_shape(self):
        with pytest.raises(ValueError):
            check_membership(self.region(), np.zeros(4))


class TestHalfspace:
    def test_contains_and_violation(self):
        h = Halfspace(np.array([1.0, -1.0]), 0.5)
        assert h.contains(np.array([0.5, 0.0]))
        assert not h.contains(np.array([1.0, 0.0]))
        assert h.violation(np.array([1.0, 0.0])) == pytest.approx(0.5)


class TestCuttingPlane:
    def test_matches_hand_computation(self):
        g = quad_oracle(np.zeros((2, 2)), np.array([-1.0, -1.0]))
        cut = cutting_plane(g, np.array([1.0, 0.0]), np.array([0.25, 0.25]))
        np.testing.assert_allclose(cut.normal, [-1.0, -1.0])
        assert cut.offset == pytest.approx(-1.0)

    def test_keeps_all_lower_optima(self):
        # Points with g-value equal to g(x0) lie exactly on the cut boundary.
        g = quad_oracle(np.zeros((2, 2)), np.array([-1.0, -1.0]))
        cut = cutting_plane(g, np.array([1.0, 0.0]), np.array([0.3, 0.3]))
        for t in np.linspace(0.0, 1.0, 11):
            s = (1 - t) * np.array([0.5, 0.5]) + t * np.array([1.0, 0.0])
            assert cut.contains(s, tol=1e-12)


class TestSchedules:
    def test_harmonic_values(self):
        assert step_size(Harmonic(2), 0) == 1.0
        assert step_size(Harmonic(2), 2) == 0.5
        assert step_size(Harmonic(12), 0) == pytest.approx(1.0 / 6.0)

    def test_harmonic_shift_floor(self):
        with pytest.raises(ValueError):
            Harmonic(1)

    def test_constant_range(self):
        assert step_size(ConstantStep(0.25), 7) == 0.25
        with pytest.raises(ValueError):
            ConstantStep(0.0)
        with pytest.raises(ValueError):
            ConstantStep(1.5)

    def test_inv_sqrt_clamped(self):
        assert step_size(InvSqrt(3.0), 0) == 1.0
        assert step_size(InvSqrt(1.0), 3) == 0.5

    def test_negative_index_rejected(self):
        with pytest.raises(ValueError):
            step_size(Harmonic(2), -1)

    @given(st.integers(0, 10_000), st.integers(2, 30))
    def test_harmonic_always_in_unit_interval(self, k, shift):
        assert 0.0 < step_size(Harmonic(shift), k) <= 1.0

    @given(st.integers(0, 10_000), st.floats(0.01, 10.0))
    def test_inv_sqrt_always_in_unit_interval(self, k, scale):
        assert 0.0 < step_size(InvSqrt(scale), k) <= 1.0


class TestSolverConfig:
    def test_rejects_bad_tolerances(self):
        with pytest.raises(ValueError):
            SolverConfig(eps_f=0.0)
        with pytest.raises(ValueError):
            SolverConfig(max_iters=0)


class TestSolveOutcome:
    def rows(self, gaps):
        return tuple(
            TraceRow(k=i, f_val=0.0, g_val=0.0, surrogate_f_gap=g, surrogate_g_gap=0.0, wall_nanos=0)
            for i, g in enumerate(gaps)
        )

    def test_trace_must_increase(self):
        rows = self.rows([1.0, 2.0])
        bad = (rows[1], rows[0])
        with pytest.raises(ValueError):
            SolveOutcome(final_point=np.zeros(1), stop_reason="criterion_met", trace=bad)

    def test_best_index_minimizes_f_gap(self):
        out = SolveOutcome(np.zeros(1), "budget_exhausted", self.rows([3.0, 0.5, 2.0]))
        assert out.best_index == 1

    def test_best_index_falls_back_to_last_row(self):
        out = SolveOutcome(np.zeros(1), "budget_exhausted", self.rows([np.nan, np.nan]))
        assert out.best_index == 1

    def test_empty_trace_rejected(self):
        with pytest.raises(ValueError):
            SolveOutcome(np.zeros(1), "criterion_met", ())


class TestBilevelInstance:
    def test_dimension_consistency(self):
        upper = quad_oracle(np.eye(2), np.zeros(2))
        lower = quad_oracle(np.eye(3), np.zeros(3))
        with pytest.raises(ValueError):
            BilevelInstance(upper, lower, L1Ball(1.0, 2))

    def test_reference_is_optional(self):
        upper = quad_oracle(np.eye(2), np.zeros(2))
        inst = BilevelInstance(upper, upper, L1Ball(1.0, 2), ReferenceData(g_star=0.0))
        assert inst.dimension == 2
