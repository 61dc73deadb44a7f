"""
Tests for the manifold kernel

Run with: python -m pytest test_manifold.py -v
"""

import math

import numpy as np
import pytest

from errors import ConfigError, EmptySeeds, ProfileTooSmall, RadiusTooLarge
from manifold import (
    ChartGrid, ManifoldSpec, MetricProvenance, build_manifold, comparison_cosine,
    comparison_ratio, comparison_sine, covariant_hessian_field, distance_field, exp_map, gradient,
    gradient_field, grid_edges, log_map, parallel_transport, parse_profile, sakai_bounds_check, shoot,
)


class TestChartGrid:
    """Tests for the discrete chart domain"""

    def test_spacing_open_and_periodic(self):
        """Periodic axes have no duplicated seam node"""
        grid = ChartGrid(((0.0, 1.0), (0.0, 2 * math.pi)), (11, 16), (False, True))
        assert grid.spacing[0] == pytest.approx(0.1)
        assert grid.spacing[1] == pytest.approx(2 * math.pi / 16)
        assert grid.h_min == pytest.approx(0.1)
        assert grid.axis(1)[-1] < 2 * math.pi

    def test_rejects_coarse_grid(self):
        """Fewer than 8 nodes per axis is refused"""
        with pytest.raises(ValueError):
            ChartGrid(((0.0, 1.0), (0.0, 1.0)), (4, 16))

    def test_dict_round_trip(self):
        """to_dict/from_dict preserve the grid"""
        grid = ManifoldSpec.hyperboloid().default_grid(32)
        assert ChartGrid.from_dict(grid.to_dict()) == grid

    def test_chart_difference_wraps(self):
        """Differences along a periodic axis take the short way round"""
        grid = ManifoldSpec.hyperboloid().default_grid(32)
        d = grid.chart_difference(np.array([0.0, 0.1]), np.array([0.0, 2 * math.pi - 0.1]))
        assert d[1] == pytest.approx(-0.2)


class TestBuildManifold:
    """Tests for metric sampling"""

    def test_euclidean_is_flat(self):
        """Euclidean metric is the identity and Γ vanishes"""
        spec = ManifoldSpec.euclidean(((0.0, 1.0), (0.0, 1.0)))
        m = build_manifold(spec, spec.default_grid(16))
        assert np.array_equal(m.g, np.broadcast_to(np.eye(2), m.g.shape))
        assert not np.any(m.christoffel)

    def test_revolution_christoffels_validate(self):
        """Closed-form Christoffels agree with finite differences of the metric"""
        spec = ManifoldSpec.revolution("one_plus_cos2")
        m = build_manifold(spec, spec.default_grid(24))
        assert m.validate() < 1e-8

    def test_finite_difference_provenance_close(self):
        """Grid-spacing Christoffels approximate the analytic ones"""
        spec = ManifoldSpec.hyperboloid()
        grid = spec.default_grid(64)
        exact = build_manifold(spec, grid)
        approx = build_manifold(spec, grid, MetricProvenance.FINITE_DIFFERENCE)
        assert np.max(np.abs(exact.christoffel - approx.christoffel)) < 1e-3

    def test_profile_below_floor(self):
        """A vanishing profile is refused"""
        spec = ManifoldSpec.revolution("constant(0)")
        with pytest.raises(ProfileTooSmall):
            build_manifold(spec, spec.default_grid(16))

    def test_unknown_profile(self):
        """Unknown profile names are configuration errors"""
        with pytest.raises(ConfigError):
            parse_profile("catenoid")

    def test_spec_round_trip(self):
        """ManifoldSpec serializes through plain dicts"""
        for spec in (ManifoldSpec.euclidean(), ManifoldSpec.revolution("one_plus_cos2"),
                     ManifoldSpec.hyperboloid(), ManifoldSpec.sphere(2.0)):
            again = ManifoldSpec.from_dict(spec.to_dict())
            assert again.kind is spec.kind
            assert again.bounds == spec.bounds

    def test_gaussian_curvature(self):
        """Sphere 1/R², hyperboloid neck −1, plane 0"""
        assert float(ManifoldSpec.sphere(2.0).gaussian_curvature(np.array([0.3, 1.0]))) == pytest.approx(0.25)
        assert float(ManifoldSpec.hyperboloid().gaussian_curvature(np.array([0.0, 0.0]))) == pytest.approx(-1.0)
        assert float(ManifoldSpec.euclidean().gaussian_curvature(np.array([0.5, 0.5]))) == 0.0

    def test_meridian_length_oracle(self):
        """Arc length of the hyperboloid meridian from the neck to s=1"""
        profile = parse_profile("hyperboloid")
        assert profile.meridian_length(1.0) == pytest.approx(1.0997, abs=2e-3)
        assert profile.meridian_length(-1.0) == pytest.approx(-profile.meridian_length(1.0))


class TestDerivatives:
    """Tests for gradient and covariant Hessian stencils"""

    def test_linear_field_gradient(self):
        """u = s has ζ = (1, 0) and v = (1, 0) on the plane"""
        spec = ManifoldSpec.euclidean()
        grid = spec.default_grid(16)
        m = build_manifold(spec, grid)
        s, _ = grid.mesh()
        data = gradient(s, m, (5, 7))
        assert np.allclose(data.covector, [1.0, 0.0])
        assert np.allclose(data.vector, [1.0, 0.0])

    def test_quadratic_hessian_exact(self):
        """½(s²+θ²) has covariant Hessian I at every node"""
        spec = ManifoldSpec.euclidean(((0.0, 1.0), (0.0, 1.0)))
        grid = spec.default_grid(64)
        m = build_manifold(spec, grid)
        s, t = grid.mesh()
        hess = covariant_hessian_field(0.5 * (s * s + t * t), m)
        assert np.max(np.abs(hess - np.eye(2))) < 1e-9

    def test_mirrored_edges_have_zero_normal_derivative(self):
        """The ghost-node stencil gives ∂_s u = 0 on the s edges"""
        spec = ManifoldSpec.euclidean()
        grid = spec.default_grid(16)
        m = build_manifold(spec, grid)
        s, _ = grid.mesh()
        covector, _ = gradient_field(s * s + s, m, mirror=True)
        assert np.all(covector[0, :, 0] == 0.0)
        assert np.all(covector[-1, :, 0] == 0.0)

    def test_periodic_axis_wraps(self):
        """cos θ differentiates across the seam"""
        spec = ManifoldSpec.hyperboloid()
        grid = spec.default_grid(64)
        m = build_manifold(spec, grid)
        _, t = grid.mesh()
        covector, _ = gradient_field(np.cos(t), m)
        assert np.max(np.abs(covector[..., 1] + np.sin(t))) < 5e-3


class TestGeodesics:
    """Tests for geodesics, exponential map and transport"""

    def test_euclidean_exp_is_translation(self):
        """exp_x(v) = x + v on the plane"""
        end = exp_map(ManifoldSpec.euclidean(), [0.1, -0.2], [0.25, 0.5])
        assert np.allclose(end, [0.35, 0.3], atol=1e-12)

    def test_sphere_equator_is_geodesic(self):
        """Shooting along the equator stays on it"""
        geodesic = shoot(ManifoldSpec.sphere(), [0.0, 0.0], [0.0, 1.0])
        assert np.allclose(geodesic.end, [0.0, 1.0], atol=1e-6)
        assert geodesic.length == pytest.approx(1.0, abs=1e-6)

    def test_euclidean_transport_identity(self):
        """Transport on the plane leaves components unchanged"""
        spec = ManifoldSpec.euclidean()
        transported = parallel_transport(spec, shoot(spec, [0.0, 0.0], [0.3, 0.1]), [0.2, -0.7])
        assert np.allclose(transported.vector, [0.2, -0.7])

    def test_transport_preserves_length(self):
        """Parallel transport is an isometry on the sphere"""
        spec = ManifoldSpec.sphere()
        geodesic = shoot(spec, [0.2, 0.5], [0.3, 0.4])
        w = np.array([0.5, -0.2])
        before = float(w @ spec.metric_at(np.array([0.2, 0.5])) @ w)
        after = parallel_transport(spec, geodesic, w).norm_squared()
        assert after == pytest.approx(before, rel=1e-6)

    def test_log_inverts_exp(self):
        """log_x(exp_x(v)) = v on a surface of revolution"""
        spec = ManifoldSpec.revolution("one_plus_cos2")
        x, v = np.array([0.1, 1.0]), np.array([0.3, 0.2])
        w = log_map(spec, x, exp_map(spec, x, v, tol=1e-9))
        assert np.allclose(w, v, atol=1e-6)

    def test_sphere_great_circle_closes(self):
        """An inclined great circle returns to its start after length 2π"""
        spec = ManifoldSpec.sphere()
        tilt = 1.0
        geodesic = shoot(spec, [0.0, 0.0], [2 * math.pi * math.sin(tilt), 2 * math.pi * math.cos(tilt)])
        assert geodesic.length == pytest.approx(2 * math.pi, abs=1e-6)
        gap = spec.default_grid(16).chart_difference(np.zeros(2), geodesic.end)
        assert np.max(np.abs(gap)) < 1e-4
        assert np.allclose(geodesic.end_velocity, geodesic.velocity, atol=1e-4)

    def test_velocity_transports_to_end_velocity(self):
        """Transporting γ'(0) along γ gives γ'(ℓ)"""
        spec = ManifoldSpec.sphere()
        geodesic = shoot(spec, [0.3, 1.0], [0.8, 1.5])
        transported = parallel_transport(spec, geodesic, geodesic.velocity)
        assert np.allclose(transported.point, geodesic.end, atol=1e-9)
        assert np.allclose(transported.vector, geodesic.end_velocity, atol=1e-6)

    def test_octant_holonomy(self):
        """Transport around a geodesic octant rotates vectors by its area π/2"""
        spec = ManifoldSpec.sphere()
        # Rows map the octant centroid (1, 1, 1)/√3 onto (1, 0, 0), so every
        # vertex sits within 0.96 rad of the equator.
        rotation = np.array([
            [1 / math.sqrt(3), 1 / math.sqrt(3), 1 / math.sqrt(3)],
            [1 / math.sqrt(2), -1 / math.sqrt(2), 0.0],
            [1 / math.sqrt(6), 1 / math.sqrt(6), -2 / math.sqrt(6)],
        ])
        corners = [spec.chart_point(rotation @ axis) for axis in np.eye(3)]
        assert all(abs(c[0]) < 1.0 for c in corners)

        start = corners[0]
        w = log_map(spec, start, corners[1])
        w0 = w.copy()
        for a, b in zip(corners, corners[1:] + corners[:1]):
            geodesic = shoot(spec, a, log_map(spec, a, b), tol=1e-9)
            assert geodesic.length == pytest.approx(math.pi / 2, abs=1e-6)
            w = parallel_transport(spec, geodesic, w).vector

        lower = np.linalg.cholesky(spec.metric_at(start))
        before, after = lower.T @ w0, lower.T @ w
        angle = math.atan2(before[0] * after[1] - before[1] * after[0], before @ after)
        assert abs(angle) == pytest.approx(math.pi / 2, abs=1e-3)
        assert np.linalg.norm(after) == pytest.approx(np.linalg.norm(before), rel=1e-6)


class TestDistanceField:
    """Tests for graph distances"""

    def test_single_seed_euclidean(self):
        """Dijkstra distance stays within the 8-neighbour metrication bound"""
        spec = ManifoldSpec.euclidean()
        grid = spec.default_grid(65)
        m = build_manifold(spec, grid)
        d = distance_field(m, [[0.0, 0.0]])
        s, t = grid.mesh()
        exact = np.hypot(s, t)
        assert np.all(d >= exact - 1e-9)
        assert np.all(d <= 1.083 * exact + 1e-9)

    def test_empty_seeds(self):
        """A distance field needs at least one seed"""
        spec = ManifoldSpec.euclidean()
        m = build_manifold(spec, spec.default_grid(16))
        with pytest.raises(EmptySeeds):
            distance_field(m, np.zeros((0, 2)))

    def test_grid_edges_count_and_lengths(self):
        """8-neighbour edges on an 8×8 open grid"""
        spec = ManifoldSpec.euclidean()
        grid = spec.default_grid(8)
        rows, cols, lengths = grid_edges(build_manifold(spec, grid))
        assert len(rows) == len(cols) == 210
        h = grid.h_min
        assert set(np.round(lengths / h, 9)) == {1.0, round(math.sqrt(2.0), 9)}


class TestComparisonBounds:
    """Tests for comparison functions and the distance-Hessian check"""

    def test_comparison_functions(self):
        """s_κ, c_κ for positive, zero and negative curvature"""
        assert comparison_sine(1.0, 0.5) == pytest.approx(math.sin(0.5))
        assert comparison_sine(0.0, 0.5) == pytest.approx(0.5)
        assert comparison_sine(-4.0, 0.5) == pytest.approx(math.sinh(1.0) / 2.0)
        assert comparison_cosine(-1.0, 0.5) == pytest.approx(math.cosh(0.5))
        assert comparison_ratio(1.0, 0.7) == pytest.approx(1.0 / math.tan(0.7), rel=1e-12)
        assert comparison_ratio(0.0, 0.25) == pytest.approx(4.0)

    def test_sphere_bounds(self):
        """On the unit sphere D²d(v,v) = cot(d) for v ⊥ ∇d, and D²d(∇d,∇d) = 0"""
        report = sakai_bounds_check(ManifoldSpec.sphere(), [0.0, 0.0], 1.0, 1.0, 1.0, samples=4)
        assert report.passed
        for row in report.samples:
            assert row["hessian_tangent"] == pytest.approx(1.0 / math.tan(row["distance"]), abs=0.05)
        assert report.max_null_residual <= 0.05

    def test_radius_beyond_budget(self):
        """Radii past π/(2√Δ) are refused"""
        with pytest.raises(RadiusTooLarge):
            sakai_bounds_check(ManifoldSpec.sphere(), [0.0, 0.0], 1.6, 1.0, 1.0)
