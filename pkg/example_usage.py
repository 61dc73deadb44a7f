"""
Example Usage of the Level-Set Experiments

This script shows how to run scenarios from Python instead of the CLI:
a single registered scenario, an ad-hoc scenario, the probe on a finished
run, and a small suite through the orchestrator.
"""

import sys

from experiments import (
    CheckSpec, FieldRecipe, Scenario, build_initial_field, get_scenario, run_scenario, supersolution_sign_test,
    viscosity_probe,
)
from manifold import ManifoldSpec, build_manifold
from operators import CurvatureOperator, OperatorKind
from orchestrator import ExperimentOrchestrator
from solver import SolverConfig, evolve


def example_shrinking_circle():
    """Example: the Euclidean shrinking circle at a coarse resolution"""
    sc = get_scenario("euclid_shrinking_circle").with_resolution(64)
    report = run_scenario(sc, "./output/shrinking_circle")

    print(f"Passed: {report.passed}")
    for check in report.checks:
        print(f"  {check.name}: {check.value} (tolerance {check.tolerance})")


def example_custom_scenario():
    """Example: an ad-hoc scenario on a surface of revolution"""
    sc = Scenario(
        name="band_on_peanut",
        manifold=ManifoldSpec.revolution("one_plus_cos2"),
        initial=FieldRecipe("latitude_band", {"lower": -0.5, "upper": 0.5}),
        operator=CurvatureOperator(OperatorKind.MCE),
        solver=SolverConfig(t_end=0.1, snapshot_every=0.02),
        checks=(CheckSpec("max_principle"),),
        resolution=64,
    )
    report = run_scenario(sc, "./output/band_on_peanut")
    print(f"Passed: {report.passed}, series: {sorted(report.series)}")


def example_probe():
    """Example: viscosity probe on the last two snapshots of a run"""
    spec = ManifoldSpec.hyperboloid()
    grid = spec.default_grid(64)
    m = build_manifold(spec, grid)
    u0 = build_initial_field(FieldRecipe("coordinate", {"axis": 0}), spec, grid)
    op = CurvatureOperator(OperatorKind.MCE)
    trajectory = evolve(u0, m, op, SolverConfig(t_end=0.1, snapshot_every=0.05))

    probe = viscosity_probe(trajectory.snapshots, m, op)
    print(f"Probe pass rate: {probe.pass_rate:.3f} over {probe.nodes} nodes")
    print(f"Histogram: {probe.histogram}")


def example_sign_pattern():
    """Example: where |d| to the equator fails to be a supersolution"""
    report = supersolution_sign_test("one_plus_cos2", s_range=2.0)
    print(f"Classification: {report.classification.value}")
    print(f"Sign changes at s = {report.sign_changes}")


def example_suite():
    """Example: a small suite on two workers, recorded in the ledger"""
    orchestrator = ExperimentOrchestrator(output_dir="./output/suite", num_workers=2, resolution=64)
    outcome = orchestrator.run_suite(["euclid_shrinking_circle", "revolution_supersolution_sign"])

    print(f"Results: passed={outcome['passed']} failed={outcome['failed']} skipped={outcome['skipped']}")
    print(f"Overall stats: {orchestrator.get_overall_stats()}")


if __name__ == "__main__":
    examples = {
        "circle": example_shrinking_circle,
        "custom": example_custom_scenario,
        "probe": example_probe,
        "sign": example_sign_pattern,
        "suite": example_suite,
    }

    if len(sys.argv) > 1 and sys.argv[1] in examples:
        examples[sys.argv[1]]()
    else:
        print("Available examples:")
        for name in examples:
            print(f"  python example_usage.py {name}")
