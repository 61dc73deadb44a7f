"""
Tests for scenarios, checks and experiment procedures

Run with: python -m pytest test_experiments.py -v
"""

import dataclasses
import json
import math

import numpy as np
import pytest

import artifacts
import experiments
from errors import BlowUp, ConfigError
from experiments import (
    CONSISTENCY_RESOLUTIONS, CheckSpec, FieldRecipe, RunContext, build_initial_field, comparison_test,
    consistency_order, evaluate_check, extinction_time, get_relabeling, get_scenario, grid_refinement_test,
    hyperboloid_distance_decay, invariance_test, lipschitz_constant, lipschitz_tracking, list_scenarios,
    run_scenario, scheme_robustness_test, snapshot_name, supersolution_sign_test, viscosity_probe,
)
from manifold import ManifoldSpec, build_manifold
from operators import CurvatureOperator, OperatorKind
from levelsets import DistanceSign
from solver import LevelSetField, SolverConfig, Trajectory, evolve


def quick_circle(**solver):
    """The shrinking circle on a coarse grid for a few steps"""
    sc = get_scenario("euclid_shrinking_circle").with_resolution(32)
    cfg = SolverConfig(**{"t_end": 0.02, "snapshot_every": 0.01, **solver})
    return dataclasses.replace(sc, solver=cfg, checks=(CheckSpec("max_principle"),))


class TestRegistry:
    """Tests for scenario and generator registries"""

    def test_builtin_scenarios(self):
        """The built-in scenarios are registered and validate"""
        names = {sc.name for sc in list_scenarios()}
        assert len(names) >= 8
        for expected in ("euclid_shrinking_circle", "hyperboloid_stationary_equator",
                         "hyperboloid_distance_decay", "revolution_supersolution_sign", "euclid_gauss_convex",
                         "invariance_cube", "lipschitz_euclidean", "lipschitz_hyperboloid"):
            assert expected in names
        for sc in list_scenarios():
            assert sc.validate() is sc
            assert sc.description

    def test_unknown_scenario(self):
        """Unknown names are configuration errors naming the key"""
        with pytest.raises(ConfigError) as info:
            get_scenario("euclid_growing_square")
        assert info.value.key == "scenario"

    def test_unknown_relabeling(self):
        """Relabelings resolve by name"""
        assert get_relabeling("cube").fn(np.array([2.0]))[0] == 8.0
        with pytest.raises(ConfigError):
            get_relabeling("sqrt")

    def test_with_resolution_propagates(self):
        """Resolution overrides reach the also_on bases"""
        sc = get_scenario("invariance_tanh").with_resolution(40)
        assert sc.resolution == 40
        assert all(base.resolution == 40 for base in sc.also_on)

    def test_to_dict_uses_config_keys(self):
        """Scenario dicts carry solver keys as written in run files"""
        data = get_scenario("euclid_shrinking_circle").to_dict()
        assert data["solver"]["t_end_seconds"] == 0.15
        assert data["operator"]["kind"] == "mce"


class TestValidation:
    """Tests for scenario validation"""

    def test_unknown_initial_field(self):
        """Unknown generators are refused"""
        sc = dataclasses.replace(quick_circle(), initial=FieldRecipe("square"))
        with pytest.raises(ConfigError) as info:
            sc.validate()
        assert info.value.key == "initial.name"

    def test_revolution_only_generator(self):
        """Latitude fields need a surface of revolution"""
        sc = dataclasses.replace(quick_circle(), initial=FieldRecipe("latitude_distance", {"s0": 0.0}))
        with pytest.raises(ConfigError):
            sc.validate()

    def test_check_procedure_mismatch(self):
        """Checks must be fed by the scenario's procedure"""
        sc = dataclasses.replace(quick_circle(), checks=(CheckSpec("sign_pattern"),))
        with pytest.raises(ConfigError):
            sc.validate()

    def test_unknown_check(self):
        """Unknown checks are refused"""
        sc = dataclasses.replace(quick_circle(), checks=(CheckSpec("volume"),))
        with pytest.raises(ConfigError):
            sc.validate()

    def test_distance_decay_needs_second_front(self):
        """DISTANCE_DECAY without a companion front is refused"""
        sc = dataclasses.replace(get_scenario("hyperboloid_distance_decay"), second_front=None)
        with pytest.raises(ConfigError):
            sc.validate()

    def test_invalid_before_compute(self, tmp_path, monkeypatch):
        """run_scenario refuses an invalid scenario without evolving anything"""
        calls = []
        monkeypatch.setattr(experiments, "evolve", lambda *a, **k: calls.append(a))
        sc = dataclasses.replace(quick_circle(), initial=FieldRecipe("square"))
        with pytest.raises(ConfigError):
            run_scenario(sc, tmp_path / "out")
        assert calls == []
        assert not (tmp_path / "out").exists()


class TestInitialFields:
    """Tests for initial-field generators"""

    def test_circle_inside_sign(self):
        """inside_sign flips the sign of the inside"""
        spec = ManifoldSpec.euclidean()
        grid = spec.default_grid(33)
        plus = build_initial_field(FieldRecipe("circle", {"radius": 0.5}), spec, grid)
        minus = build_initial_field(FieldRecipe("circle", {"radius": 0.5, "inside_sign": -1}), spec, grid)
        assert plus.values[16, 16] == pytest.approx(0.5)
        assert np.array_equal(minus.values, -plus.values)

    def test_latitude_band(self):
        """Positive strictly between the two latitudes"""
        spec = ManifoldSpec.hyperboloid()
        grid = spec.default_grid(64)
        u = build_initial_field(FieldRecipe("latitude_band", {"lower": 0.0, "upper": 1.0}), spec, grid)
        s = grid.axis(0)
        inside = (s > 0.0) & (s < 1.0)
        assert np.all(u.values[inside] > 0)
        assert np.all(u.values[~inside] <= 0)

    def test_latitude_band_order(self):
        """lower must be below upper"""
        spec = ManifoldSpec.hyperboloid()
        with pytest.raises(ConfigError):
            build_initial_field(FieldRecipe("latitude_band", {"lower": 1.0, "upper": 0.0}), spec,
                                spec.default_grid(16))

    def test_random_smooth_is_seeded(self):
        """The same seed gives the same field"""
        spec = ManifoldSpec.revolution("one_plus_cos2")
        grid = spec.default_grid(24)
        a = build_initial_field(FieldRecipe("random_smooth", {"seed": 4}), spec, grid)
        b = build_initial_field(FieldRecipe("random_smooth", {"seed": 4}), spec, grid)
        assert np.array_equal(a.values, b.values)

    def test_coordinate_axis(self):
        """Only axes 0 and 1 exist"""
        spec = ManifoldSpec.euclidean()
        with pytest.raises(ConfigError):
            build_initial_field(FieldRecipe("coordinate", {"axis": 2}), spec, spec.default_grid(16))


class TestMeasurements:
    """Tests for extinction, Lipschitz and probe measurements"""

    def test_extinction_time_interpolates(self):
        """The crossing of max u through zero is linearly interpolated"""
        traj = Trajectory(series=[
            {"time": 0.0, "max": 1.0, "min": -1.0},
            {"time": 1.0, "max": 0.5, "min": -1.0},
            {"time": 2.0, "max": -0.5, "min": -1.0},
        ])
        assert extinction_time(traj) == pytest.approx(1.5)
        assert extinction_time(traj, inside_sign=-1.0) == math.inf

    def test_lipschitz_constant_of_linear_field(self):
        """|∇(2s)| = 2 on the plane"""
        spec = ManifoldSpec.euclidean()
        grid = spec.default_grid(17)
        m = build_manifold(spec, grid)
        u = LevelSetField.from_function(grid, lambda s, t: 2.0 * s)
        assert lipschitz_constant(u, m) == pytest.approx(2.0)

    def test_probe_stationary_field(self):
        """A plane that does not move satisfies the equation everywhere"""
        spec = ManifoldSpec.euclidean()
        grid = spec.default_grid(33)
        m = build_manifold(spec, grid)
        u = LevelSetField.from_function(grid, lambda s, t: s + 0.3 * t)
        later = LevelSetField(grid, u.values, 0.1)
        report = viscosity_probe([u, later], m, CurvatureOperator(OperatorKind.MCE))
        assert report.nodes > 0
        assert report.passed
        assert report.pass_rate == 1.0
        assert report.to_dict()["modulus"] == "r^1.5"

    def test_probe_empty_sample_fails(self):
        """No sampled nodes means no evidence"""
        spec = ManifoldSpec.euclidean()
        grid = spec.default_grid(17)
        m = build_manifold(spec, grid)
        u = LevelSetField.from_function(grid, lambda s, t: s + 0.0 * t)
        report = viscosity_probe([u, LevelSetField(grid, u.values, 0.1)], m, CurvatureOperator(OperatorKind.MCE),
                                 sample=np.zeros(grid.shape, dtype=bool))
        assert report.nodes == 0
        assert not report.passed

    def test_probe_needs_two_increasing_snapshots(self):
        """One snapshot, or equal times, are refused"""
        spec = ManifoldSpec.euclidean()
        grid = spec.default_grid(17)
        m = build_manifold(spec, grid)
        u = LevelSetField.from_function(grid, lambda s, t: s + 0.0 * t)
        op = CurvatureOperator(OperatorKind.MCE)
        with pytest.raises(ValueError):
            viscosity_probe([u], m, op)
        with pytest.raises(ValueError):
            viscosity_probe([u, u.copy()], m, op)

    def test_probe_detects_wrong_operator(self):
        """A shrinking circle is not a GCE_PLUS solution with inside positive"""
        sc = quick_circle()
        grid = sc.grid()
        m = build_manifold(sc.manifold, grid)
        traj = evolve(build_initial_field(sc.initial, sc.manifold, grid), m, sc.operator, sc.solver)
        wrong = viscosity_probe(traj.snapshots[-2:], m, CurvatureOperator(OperatorKind.GCE_PLUS),
                                tolerance=0.5)
        right = viscosity_probe(traj.snapshots[-2:], m, sc.operator, tolerance=0.5)
        assert right.pass_rate > wrong.pass_rate

    def test_failing_check_raises_inside(self):
        """A check that throws becomes a failed result"""
        result = evaluate_check(RunContext(quick_circle()), CheckSpec("max_principle"))
        assert result.passed is False
        assert "error" in result.detail


class TestRunScenario:
    """Tests for running scenarios end to end"""

    def test_quick_run_writes_artifacts(self, tmp_path):
        """Snapshots, contours, series and a schema-valid report land in the output directory"""
        report = run_scenario(quick_circle(), tmp_path)
        assert report.passed
        assert report.error is None
        fields = tmp_path / "front" / "fields"
        assert sorted(p.name for p in fields.iterdir()) == [snapshot_name(k) for k in range(3)]
        assert (tmp_path / "front" / "contours" / "contour_0002.csv").exists()
        assert (tmp_path / "front" / "steps.csv").exists()
        document = json.loads((tmp_path / "report.json").read_text())
        assert document["format"] == artifacts.REPORT_FORMAT
        assert document["scenario"] == "euclid_shrinking_circle"
        assert report.artifacts["report"] == str(tmp_path / "report.json")
        assert artifacts.read_snapshot(fields / snapshot_name(2)).time == pytest.approx(0.02)

    def test_failed_check(self):
        """An unreachable tolerance gives a failed report, not an error"""
        sc = dataclasses.replace(quick_circle(), checks=(CheckSpec("radius_trajectory", 1e-12, {"until": 0.02}),))
        report = run_scenario(sc)
        assert not report.passed
        assert report.error is None
        assert report.failed_checks == ["radius_trajectory"]

    def test_blowup_becomes_error(self, monkeypatch):
        """Solver failures are reported, not raised"""
        def explode(*args, **kwargs):
            raise BlowUp("solution blew up at node (1, 1)", node=(1, 1), time=0.01)

        monkeypatch.setattr(experiments, "evolve", explode)
        report = run_scenario(quick_circle())
        assert not report.passed
        assert report.error.startswith("BlowUp")

    def test_keyboard_interrupt_propagates(self, monkeypatch):
        """Interrupts are not swallowed"""
        def interrupt(*args, **kwargs):
            raise KeyboardInterrupt

        monkeypatch.setattr(experiments, "evolve", interrupt)
        with pytest.raises(KeyboardInterrupt):
            run_scenario(quick_circle())

    def test_resume_matches_uninterrupted(self, tmp_path):
        """Interrupt after a checkpoint, resume, and get the same snapshots bitwise"""
        sc = quick_circle()
        run_scenario(sc, tmp_path / "reference")
        written = []

        def on_checkpoint(path, state):
            written.append((path, state.step_index))
            if len(written) == 1:
                raise KeyboardInterrupt

        with pytest.raises(KeyboardInterrupt):
            run_scenario(sc, tmp_path / "run", checkpoint_every=5, on_checkpoint=on_checkpoint)
        assert written[0][1] == 5
        assert written[-1][0] == tmp_path / "run" / "front" / experiments.CHECKPOINT_NAME

        report = run_scenario(sc, tmp_path / "run", resume=True)
        assert report.passed
        for k in range(3):
            expected = artifacts.read_snapshot(tmp_path / "reference" / "front" / "fields" / snapshot_name(k))
            resumed = artifacts.read_snapshot(tmp_path / "run" / "front" / "fields" / snapshot_name(k))
            assert resumed.time == expected.time
            assert np.array_equal(resumed.values, expected.values)
        reference_steps = artifacts.read_series_csv(tmp_path / "reference" / "front" / "steps.csv")
        resumed_steps = artifacts.read_series_csv(tmp_path / "run" / "front" / "steps.csv")
        assert len(resumed_steps) == len(reference_steps)


class TestProcedures:
    """Tests for the non-evolution procedures at coarse resolution"""

    def test_invariance_identity(self):
        """θ = identity reproduces the zero sets exactly"""
        sc = get_scenario("invariance_cube").with_resolution(32)
        report = invariance_test(sc, "identity")
        assert report.passed
        assert report.max_distance == 0.0
        assert all(row["identical"] for row in report.rows)

    def test_lipschitz_on_hyperboloid_is_recorded(self):
        """Off the plane the bound is recorded, not asserted"""
        report = lipschitz_tracking(get_scenario("lipschitz_hyperboloid").with_resolution(32))
        check = report.check("lipschitz_bound")
        assert check.passed is None
        assert check.value > 0
        assert report.passed
        assert len(report.series["lipschitz"]) == 7

    def test_sign_test(self):
        """Mixed signs with changes near ±π/2, flat control, hyperboloid subsolution"""
        report = supersolution_sign_test()
        assert report.passed
        assert report.mixed
        assert report.control_violations == 0
        assert len(report.sign_changes) == 2
        assert sorted(report.sign_changes) == pytest.approx([-math.pi / 2, math.pi / 2], abs=0.011)

    def test_sign_test_narrow_range(self):
        """Within |s| < π/2 the distance is a supersolution and the pattern is not mixed"""
        report = supersolution_sign_test(s_range=1.0)
        assert not report.mixed
        assert report.classification is DistanceSign.SUPERSOLUTION

    @pytest.mark.parametrize("spec", [ManifoldSpec.euclidean(), ManifoldSpec.revolution("one_plus_cos2")],
                             ids=["euclidean", "revolution"])
    def test_comparison_principle(self, spec):
        """Ordered random pairs stay ordered"""
        report = comparison_test(spec, pairs=3, resolution=24, t_end=0.005, snapshot_every=0.0025)
        assert report.passed
        assert report.pairs == 3
        assert report.to_dict()["failures"] == 0


class TestConvergence:
    """Tests for operator consistency, grid refinement and scheme agreement"""

    def test_consistency_order(self):
        """The discrete operator converges at second order on exp(−|x|²)"""
        report = consistency_order()
        assert len(report.rows) == len(CONSISTENCY_RESOLUTIONS)
        assert report.passed
        assert report.min_order >= 1.8
        errors = [row["error"] for row in report.rows]
        assert errors == sorted(errors, reverse=True)
        assert report.to_dict()["operator"] == "mce"

    def test_consistency_needs_two_resolutions(self):
        """A single resolution has no order and does not pass"""
        report = consistency_order(resolutions=(33,))
        assert math.isnan(report.min_order)
        assert not report.passed

    def test_consistency_check_params(self):
        """The check reads its resolutions and records the series"""
        ctx = RunContext(quick_circle())
        result = evaluate_check(ctx, CheckSpec("consistency_order", 1.8, {"resolutions": [17, 33, 65]}))
        assert result.passed is True
        assert result.value >= 1.8
        assert [row["resolution"] for row in ctx.series["consistency"]] == [17, 33, 65]

    def test_grid_refinement(self):
        """Zero sets at 32 and 64 agree within 4·h_coarse up to t = 0.05"""
        sc = get_scenario("euclid_shrinking_circle").with_resolution(64)
        report = grid_refinement_test(sc, until=0.05)
        coarse_h = ManifoldSpec.euclidean().default_grid(32).h_min
        assert report.h == pytest.approx(coarse_h)
        assert report.passed
        assert report.max_distance <= 4.0 * coarse_h
        assert report.rows[-1]["time"] == pytest.approx(0.05)
        assert all(row["time"] == row["other_time"] for row in report.rows)

    @pytest.mark.parametrize("coarse", [4, 64, 80])
    def test_grid_refinement_coarse_range(self, coarse):
        """The coarse resolution must lie below the scenario resolution"""
        sc = get_scenario("euclid_shrinking_circle").with_resolution(64)
        with pytest.raises(ConfigError) as info:
            grid_refinement_test(sc, coarse=coarse)
        assert info.value.key == "resolution"

    def test_scheme_robustness(self):
        """REGULARIZED and FREEZE_DEGENERATE zero sets stay within 2·h before extinction"""
        sc = get_scenario("euclid_shrinking_circle").with_resolution(64)
        report = scheme_robustness_test(sc, until=0.1)
        assert report.passed
        assert report.max_distance <= 2.0 * sc.grid().h_min
        assert report.rows[-1]["time"] == pytest.approx(0.1)
        assert report.to_dict()["comparison"] == "regularized/freeze_degenerate"

    def test_scheme_robustness_reuses_reference(self):
        """An existing run replaces the evolution under its own scheme"""
        sc = quick_circle()
        grid = sc.grid()
        m = build_manifold(sc.manifold, grid)
        reference = evolve(build_initial_field(sc.initial, sc.manifold, grid), m, sc.operator, sc.solver)
        report = scheme_robustness_test(sc, reference=reference, metric=m)
        assert len(report.rows) == len(reference.snapshots)
        assert report.passed

    def test_circle_carries_convergence_checks(self):
        """The shrinking circle runs all three checks"""
        sc = get_scenario("euclid_shrinking_circle")
        for name in ("consistency_order", "contour_refinement", "scheme_robustness"):
            assert sc.check(name) is not None
            assert name in experiments.CHECKS


class TestAcceptance:
    """The acceptance scenarios at their registered resolution"""

    def test_shrinking_circle(self, tmp_path):
        """Extinction near t = 1/8, radius law, maximum principle and probe"""
        report = run_scenario(get_scenario("euclid_shrinking_circle"), tmp_path)
        assert report.passed, report.failed_checks
        assert report.check("extinction_time").value == pytest.approx(0.125, rel=0.05)
        assert (tmp_path / "series" / "radius.csv").exists()

    def test_stationary_equator(self):
        """The hyperboloid neck stays within 2h"""
        report = run_scenario(get_scenario("hyperboloid_stationary_equator"))
        assert report.passed, report.failed_checks

    def test_distance_decay(self, tmp_path):
        """The initial gap is the meridian arc length and it shrinks"""
        report = hyperboloid_distance_decay(output_dir=tmp_path)
        assert report.passed, report.failed_checks
        initial = report.check("initial_front_distance")
        assert initial.detail["expected"] == pytest.approx(1.0997, abs=2e-3)
        assert initial.value == pytest.approx(1.0997, rel=0.03)
        distances = [row["distance"] for row in report.series["front_distance"]]
        assert all(b < a for a, b in zip(distances, distances[1:]))

    def test_sign_pattern_scenario(self):
        """The sign-pattern scenario passes both of its checks"""
        report = run_scenario(get_scenario("revolution_supersolution_sign"))
        assert report.passed
        assert report.check("curvature_formula").value <= 1e-3

    def test_invariance_cube(self):
        """Relabeling by r³ keeps the zero sets within 3h"""
        report = run_scenario(get_scenario("invariance_cube").with_resolution(64))
        assert report.passed, report.failed_checks
