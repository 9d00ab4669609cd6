import json

import numpy as np
import pytest

from bilevelcg.core import (
    BilevelInstance,
    L1Ball,
    QuadraticForm,
    ReferenceData,
    SmoothOracle,
    SolveOutcome,
    SolverConfig,
    TraceRow,
)
from bilevelcg.harness import (
    HoelderParams,
    RunRecord,
    config_from_dict,
    config_to_dict,
    dist_to_hull,
    fairness_metrics,
    hoelder_estimate,
    parse_schedule,
    value_transfer_check,
    read_trace_csv,
    recovery_rate,
    reference_bilevel,
    reference_lower,
    run_experiment,
    sample_region,
    schedule_to_string,
    true_fw_gap,
    write_trace_csv,
)
from bilevelcg.problems import synthetic_fair_data, toy_problem


def quad_instance(Q, q, segment, region=None):
    """Convex quadratic upper level with a constant-zero lower level whose
    declared solution face is the given segment."""
    form = QuadraticForm(np.asarray(Q, float), np.asarray(q, float), 0.0)
    dim = form.q.shape[0]
    upper = SmoothOracle(dim, lambda x: (form.value(x), form.gradient(x)), quadratic=form)
    lower = SmoothOracle(dim, lambda x: (0.0, np.zeros(dim)), lipschitz_grad=0.0)
    return BilevelInstance(
        upper, lower, region or L1Ball(10.0, dim),
        ReferenceData(g_star=0.0, lower_solution_set=np.asarray(segment, float)),
    )


class TestReferenceLower:
    def test_toy_is_exact(self):
        assert reference_lower(toy_problem()) == -1.0

    def test_constant_objective_immediate(self):
        oracle = SmoothOracle(2, lambda x: (3.5, np.zeros(2)))
        inst = BilevelInstance(oracle, oracle, L1Ball(1.0, 2))
        assert reference_lower(inst) == pytest.approx(3.5)

    def test_budget_exhaustion_reports_gap(self):
        form = QuadraticForm(np.eye(2), np.array([-0.3, -0.2]), 0.0)
        oracle = SmoothOracle(
            2, lambda x: (form.value(x), form.gradient(x)), lipschitz_grad=1.0, quadratic=form
        )
        inst = BilevelInstance(oracle, oracle, L1Ball(1.0, 2))
        with pytest.raises(RuntimeError, match="achieved gap"):
            reference_lower(inst, tol=1e-16, max_iters=5)


class TestReferenceBilevel:
    def test_toy_value(self):
        assert reference_bilevel(toy_problem()) == pytest.approx(-0.08, abs=1e-9)

    def test_constant_upper(self):
        upper = SmoothOracle(2, lambda x: (2.0, np.zeros(2)))
        lower = SmoothOracle(2, lambda x: (0.0, np.zeros(2)), lipschitz_grad=0.0)
        inst = BilevelInstance(
            upper, lower, L1Ball(1.0, 2),
            ReferenceData(g_star=0.0, lower_solution_set=np.array([[0.0, 0.0], [1.0, 0.0]])),
        )
        assert reference_bilevel(inst) == pytest.approx(2.0)

    def test_single_vertex_face(self):
        inst = quad_instance(np.eye(2), np.zeros(2), [[0.5, 0.5]])
        assert reference_bilevel(inst) == pytest.approx(0.25)

    @pytest.mark.parametrize("seed", range(5))
    def test_random_quadratic_over_segment_matches_grid(self, seed):
        rng = np.random.default_rng(seed)
        B = rng.standard_normal((2, 2))
        Q = B.T @ B + 0.1 * np.eye(2)
        q = rng.standard_normal(2)
        a, b = rng.standard_normal(2), rng.standard_normal(2)
        inst = quad_instance(Q, q, [a, b])
        t = np.linspace(0.0, 1.0, 100_001)
        pts = np.outer(1 - t, a) + np.outer(t, b)
        grid_min = min(inst.upper.value(p) for p in pts)
        assert reference_bilevel(inst, tol=1e-9) == pytest.approx(grid_min, abs=1e-6)

    def test_hull_minimization_over_triangle(self):
        verts = [[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]
        inst = quad_instance(np.eye(2), np.array([-0.5, -0.5]), verts)
        # unconstrained minimum (0.5, 0.5) lies inside the triangle
        assert reference_bilevel(inst, tol=1e-10) == pytest.approx(-0.25, abs=1e-8)

    def test_missing_face_rejected(self):
        oracle = SmoothOracle(5, lambda x: (0.0, np.zeros(5)))
        inst = BilevelInstance(oracle, oracle, L1Ball(1.0, 5))
        with pytest.raises(ValueError):
            reference_bilevel(inst)


class TestTrueFwGap:
    def test_toy_at_corner(self):
        assert true_fw_gap(toy_problem(), np.array([1.0, 0.0])) == pytest.approx(0.2)

    def test_toy_at_optimum(self):
        assert abs(true_fw_gap(toy_problem(), np.array([0.6, 0.4]))) <= 1e-9

    def test_zero_at_stationary_point(self):
        inst = quad_instance(np.eye(2), np.zeros(2), [[0.0, 0.0], [0.0, 0.0]])
        # gradient vanishes at the origin, which lies on the face
        assert true_fw_gap(inst, np.zeros(2)) == 0.0


class TestDistToHull:
    def test_point_segment_triangle(self):
        seg = np.array([[0.0, 0.0], [1.0, 0.0]])
        assert dist_to_hull(np.array([0.5, 2.0]), seg) == pytest.approx(2.0)
        assert dist_to_hull(np.array([2.0, 0.0]), seg) == pytest.approx(1.0)
        tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assert dist_to_hull(np.array([0.25, 0.25]), tri) == pytest.approx(0.0, abs=1e-7)
        assert dist_to_hull(np.array([1.0, 1.0]), tri) == pytest.approx(np.sqrt(0.5), abs=1e-7)


class TestHoelder:
    def test_toy_gradient_bound(self):
        params = hoelder_estimate(toy_problem(), order=1.0)
        assert params.M == pytest.approx(np.hypot(0.5, 0.1), abs=1e-6)
        assert params.alpha > 0.0

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            HoelderParams(alpha=0.0, order=1.0, M=1.0)
        with pytest.raises(ValueError):
            HoelderParams(alpha=1.0, order=0.5, M=1.0)

    def test_degenerate_face_covering_region_rejected(self):
        # lower level constant on the whole region: every grid point is on
        # the face, leaving no exterior points to estimate the modulus from
        from bilevelcg.core import Polytope

        reg = Polytope(A=np.eye(2), b=np.ones(2))
        lower = SmoothOracle(2, lambda x: (0.0, np.zeros(2)), lipschitz_grad=0.0)
        upper = SmoothOracle(2, lambda x: (float(x @ x), 2 * x))
        inst = BilevelInstance(
            upper, lower, reg,
            ReferenceData(g_star=0.0, lower_solution_set=reg.vertices()),
        )
        with pytest.raises(ValueError):
            hoelder_estimate(inst, order=1.0, grid_per_axis=15)

    def test_value_transfer_bound_holds_on_toy(self):
        inst = toy_problem()
        params = hoelder_estimate(inst, order=1.0)
        assert value_transfer_check(inst, params, eps_g=1e-3, samples=300)


class TestFairnessMetrics:
    def make_split(self, preds_group_a, preds_group_b):
        """Dataset whose test block realizes the given positive rates."""
        na, nb = len(preds_group_a), len(preds_group_b)
        n = na + nb
        X = np.zeros((n, 1))
        X[:na, 0] = np.where(np.array(preds_group_a), 1.0, -1.0)
        X[na:, 0] = np.where(np.array(preds_group_b), 1.0, -1.0)
        v = np.concatenate([np.zeros(na), np.ones(nb)])
        y = (X[:, 0] > 0).astype(float)
        idx = np.arange(n)
        from bilevelcg.problems import DatasetSplit

        return DatasetSplit(
            X, y, idx[:0], idx[:0], idx, sensitive=v, fractions=(0.0, 0.0, 1.0)
        )

    def metric(self, a, b):
        split = self.make_split(a, b)
        return fairness_metrics(np.array([1.0]), split)

    def test_equal_rates_give_100(self):
        m = self.metric([True, False], [True, False])
        assert m["p_rule"] == 100.0
        assert m["accuracy"] == 1.0

    def test_rate_ratio(self):
        m = self.metric([True, False, False, False], [True, True, False, False])
        assert m["p_rule"] == pytest.approx(50.0)

    def test_one_zero_rate_gives_0(self):
        m = self.metric([False, False, False], [True, False, False])
        assert m["p_rule"] == 0.0

    def test_both_zero_rates_give_100(self):
        m = self.metric([False, False], [False, False])
        assert m["p_rule"] == 100.0

    def test_requires_sensitive_attribute(self):
        data = synthetic_fair_data(n=20, d=2, seed=0)
        from bilevelcg.problems import DatasetSplit

        stripped = DatasetSplit(
            data.features, data.targets, data.train_idx, data.val_idx, data.test_idx
        )
        with pytest.raises(ValueError):
            fairness_metrics(np.zeros(2), stripped)


class TestRecoveryRate:
    def test_self_match(self):
        rng = np.random.default_rng(0)
        D = rng.standard_normal((10, 6))
        assert recovery_rate(D, D) == 1.0

    def test_orthogonal_no_match(self):
        truth = np.eye(4)[:, :2]
        learned = np.eye(4)[:, 2:]
        assert recovery_rate(learned, truth) == 0.0

    def test_half_match(self):
        truth = np.eye(4)
        learned = np.eye(4)[:, :2]
        assert recovery_rate(learned, truth) == 0.5


class TestSampleRegion:
    @pytest.mark.parametrize("region", [
        L1Ball(1.5, 3),
    ])
    def test_samples_feasible_and_deterministic(self, region):
        a = sample_region(region, 200, seed=1)
        b = sample_region(region, 200, seed=1)
        np.testing.assert_array_equal(a, b)
        for x in a:
            assert region.contains(x, tol=1e-9)


class TestPersistence:
    def make_outcome(self):
        rows = tuple(
            TraceRow(k=i, f_val=float(np.pi) * i, g_val=-1.0 / (i + 1),
                     surrogate_f_gap=10.0 ** -i, surrogate_g_gap=float("nan"),
                     wall_nanos=0)
            for i in range(4)
        )
        return SolveOutcome(np.zeros(2), "budget_exhausted", rows)

    def test_trace_round_trip_bit_exact(self, tmp_path):
        out = self.make_outcome()
        path = tmp_path / "trace.csv"
        write_trace_csv(path, out.trace)
        back = read_trace_csv(path)
        for a, b in zip(out.trace, back):
            assert a.k == b.k
            assert (a.f_val == b.f_val) and (a.g_val == b.g_val)
            assert a.surrogate_f_gap == b.surrogate_f_gap
            assert np.isnan(b.surrogate_g_gap)

    def test_summary_consistent_with_trace_tail(self):
        out = self.make_outcome()
        record = RunRecord("toy", "cg-bio", {"eps_f": 1e-5}, 0, out)
        s = record.summary
        assert s["iterations"] == out.trace[-1].k
        assert s["final_f_gap"] == out.trace[-1].surrogate_f_gap
        assert s["final_g_gap"] is None  # NaN serialized as null
        assert s["stop_reason"] == out.stop_reason

    def test_schedule_string_round_trip(self):
        for text in ("harmonic:2", "harmonic:12", "constant:0.25", "inv-sqrt:0.3"):
            assert schedule_to_string(parse_schedule(text)) == text

    def test_config_dict_round_trip(self):
        cfg = SolverConfig(eps_f=1e-3, eps_g=1e-4, max_iters=77)
        assert config_from_dict(config_to_dict(cfg)) == cfg


class TestRunExperiment:
    def test_empty_suite(self, tmp_path):
        assert run_experiment([], str(tmp_path)) == []

    def test_toy_cell_produces_files(self, tmp_path):
        cells = [{"instance": "toy", "solver": "cg-bio",
                  "config": {"eps_f": 1e-5, "eps_g": 1e-5}, "seed": 0}]
        summaries = run_experiment(cells, str(tmp_path))
        assert summaries[0]["stop_reason"] == "criterion_met"
        assert summaries[0]["iterations"] <= 40
        files = sorted(p.name for p in tmp_path.iterdir())
        assert files == ["000_toy_cg-bio_seed0.csv", "000_toy_cg-bio_seed0.json"]

    def test_rerun_is_byte_identical(self, tmp_path):
        cells = [{"instance": "toy", "solver": "cg-bio",
                  "config": {"eps_f": 1e-5, "eps_g": 1e-5}, "seed": 0}]
        d1, d2 = tmp_path / "a", tmp_path / "b"
        run_experiment(cells, str(d1))
        run_experiment(cells, str(d2))
        for name in ("000_toy_cg-bio_seed0.csv", "000_toy_cg-bio_seed0.json"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    def test_resume_skips_completed_cells(self, tmp_path):
        cells = [{"instance": "toy", "solver": "cg-bio",
                  "config": {"eps_f": 1e-5, "eps_g": 1e-5}, "seed": 0}]
        run_experiment(cells, str(tmp_path))
        stamp = (tmp_path / "000_toy_cg-bio_seed0.json").stat().st_mtime_ns
        run_experiment(cells, str(tmp_path))
        assert (tmp_path / "000_toy_cg-bio_seed0.json").stat().st_mtime_ns == stamp

    def test_cell_failure_recorded_suite_continues(self, tmp_path):
        cells = [
            {"instance": "nonsense", "solver": "cg-bio", "config": {}, "seed": 0},
            {"instance": "toy", "solver": "cg-bio",
             "config": {"eps_f": 1e-5, "eps_g": 1e-5}, "seed": 0},
        ]
        summaries = run_experiment(cells, str(tmp_path))
        assert summaries[0]["stop_reason"].startswith("error")
        assert summaries[1]["stop_reason"] == "criterion_met"

    def test_summary_json_well_formed(self, tmp_path):
        cells = [{"instance": "toy", "solver": "cg-bio",
                  "config": {"eps_f": 1e-5, "eps_g": 1e-5}, "seed": 3}]
        run_experiment(cells, str(tmp_path))
        data = json.loads((tmp_path / "000_toy_cg-bio_seed3.json").read_text())
        assert set(data) == {
            "instance", "solver", "config", "stop_reason", "iterations",
            "final_f_gap", "final_g_gap", "wall_nanos_total", "seed",
        }
        assert data["seed"] == 3
