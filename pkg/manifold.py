"""
Manifold Kernel

Charts, metrics, Christoffel symbols, covariant derivatives, geodesics,
parallel transport, the exponential map and geodesic distance fields for a
small family of built-in surfaces (Euclidean plane, surfaces of revolution,
the hyperboloid x²+y²=1+z², round spheres).

All built-in metrics are diagonal in their chart and depend only on the first
coordinate, so the Levi-Civita connection has three independent coefficients.
"""

import enum
import logging
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp
from scipy import integrate
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from errors import (
    ChartExit, ConfigError, EmptySeeds, NonPositiveDefinite, ProfileTooSmall,
    RadiusTooLarge,
)

logger = logging.getLogger(__name__)

# RK4 arc length per substep; min(h)/4 for a 128-point grid on [-1, 1]
GEODESIC_STEP = 0.005

PD_FLOOR = 1e-12
PROFILE_FLOOR = 1e-6
CHRISTOFFEL_CHECK_STEP = 1e-3
CHRISTOFFEL_TOLERANCE = 1e-8

S = sp.Symbol("s", real=True)

Extents = Tuple[Tuple[float, float], Tuple[float, float]]


# ---------------------------------------------------------------------------
# Chart grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChartGrid:
    """
    Rectangular node grid on a 2-D chart.

    A periodic axis stores n nodes with spacing (b - a)/n; index n is
    identified with index 0, so there is no duplicated seam column.
    """
    extents: Extents
    resolution: Tuple[int, int]
    periodic: Tuple[bool, bool] = (False, False)

    def __post_init__(self):
        extents = tuple((float(a), float(b)) for a, b in self.extents)
        resolution = tuple(int(n) for n in self.resolution)
        periodic = tuple(bool(p) for p in self.periodic)
        if len(extents) != 2 or len(resolution) != 2 or len(periodic) != 2:
            raise ValueError("ChartGrid is two-dimensional")
        for (a, b), n in zip(extents, resolution):
            if n < 8:
                raise ValueError(f"resolution {n} is below the minimum of 8 nodes per axis")
            if not b > a:
                raise ValueError(f"empty extent [{a}, {b}]")
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "resolution", resolution)
        object.__setattr__(self, "periodic", periodic)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.resolution

    @property
    def spacing(self) -> Tuple[float, float]:
        return tuple(
            (b - a) / (n if p else n - 1)
            for (a, b), n, p in zip(self.extents, self.resolution, self.periodic)
        )

    @property
    def h_min(self) -> float:
        return min(self.spacing)

    @property
    def periods(self) -> Tuple[float, float]:
        return tuple(b - a for a, b in self.extents)

    def axis(self, index: int) -> np.ndarray:
        a, _ = self.extents[index]
        return a + self.spacing[index] * np.arange(self.resolution[index])

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis(0), self.axis(1), indexing="ij")

    def points(self) -> np.ndarray:
        """Node coordinates, shape (n0, n1, 2)."""
        return np.stack(self.mesh(), axis=-1)

    def node_point(self, node: Tuple[int, int]) -> np.ndarray:
        return np.array([self.extents[k][0] + self.spacing[k] * node[k] for k in range(2)])

    def wrap(self, point: np.ndarray) -> np.ndarray:
        """Map periodic coordinates back into [a, b)."""
        p = np.array(point, dtype=float)
        for k in range(2):
            if self.periodic[k]:
                a, b = self.extents[k]
                p[..., k] = a + np.mod(p[..., k] - a, b - a)
        return p

    def chart_difference(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """q - p, using the shortest representative on periodic axes."""
        d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
        for k in range(2):
            if self.periodic[k]:
                period = self.periods[k]
                d[..., k] = d[..., k] - period * np.round(d[..., k] / period)
        return d

    def contains(self, point: np.ndarray, slack: float = 1e-9) -> bool:
        for k in range(2):
            if self.periodic[k]:
                continue
            a, b = self.extents[k]
            if not (a - slack <= point[k] <= b + slack):
                return False
        return True

    def cell_of(self, point: np.ndarray) -> Tuple[int, int]:
        """Lower-left node index of the cell containing point."""
        index = []
        for k in range(2):
            a, _ = self.extents[k]
            n = self.resolution[k]
            i = int(math.floor((point[k] - a) / self.spacing[k]))
            if self.periodic[k]:
                i %= n
            else:
                i = min(max(i, 0), n - 2)
            index.append(i)
        return index[0], index[1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "extents": [list(e) for e in self.extents],
            "resolution": list(self.resolution),
            "periodic": list(self.periodic),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ChartGrid":
        return cls(
            extents=tuple(tuple(e) for e in data["extents"]),
            resolution=tuple(data["resolution"]),
            periodic=tuple(data.get("periodic", (False, False))),
        )


# ---------------------------------------------------------------------------
# Profiles for surfaces of revolution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Radius function r(s) of a surface of revolution, held symbolically."""
    name: str
    expression: sp.Expr

    @cached_property
    def _functions(self) -> Tuple[Callable, Callable, Callable]:
        first = sp.diff(self.expression, S)
        second = sp.diff(first, S)
        return tuple(sp.lambdify(S, e, "numpy") for e in (self.expression, first, second))

    def derivative_expression(self, order: int) -> sp.Expr:
        return sp.diff(self.expression, S, order) if order else self.expression

    def _evaluate(self, index: int, s):
        s_arr = np.asarray(s, dtype=float)
        value = np.zeros_like(s_arr) + self._functions[index](s_arr)
        return float(value) if value.ndim == 0 else value

    def r(self, s):
        return self._evaluate(0, s)

    def dr(self, s):
        return self._evaluate(1, s)

    def ddr(self, s):
        return self._evaluate(2, s)

    def speed(self, s):
        """Meridian speed v(s) = sqrt(r'(s)^2 + 1)."""
        return np.sqrt(np.asarray(self.dr(s)) ** 2 + 1.0)

    def meridian_length(self, s):
        """Signed arc length along a meridian from s=0 to s."""
        def one(value: float) -> float:
            length, _ = integrate.quad(lambda t: float(self.speed(t)), 0.0, value,
                                       epsabs=1e-13, epsrel=1e-12)
            return length

        s_arr = np.asarray(s, dtype=float)
        if s_arr.ndim == 0:
            return one(float(s_arr))
        return np.vectorize(one)(s_arr)


PROFILE_LIBRARY: Dict[str, sp.Expr] = {
    "one_plus_cos2": 1 + sp.cos(S) ** 2,
    "hyperboloid": sp.sqrt(1 + S ** 2),
}

_CONSTANT_PROFILE = re.compile(r"^constant\(\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*\)$")


def parse_profile(name: str) -> Profile:
    """
    Resolve a named profile.

    Args:
        name: "one_plus_cos2", "hyperboloid" or "constant(c)"

    Returns:
        Profile instance
    """
    key = name.strip()
    if key in PROFILE_LIBRARY:
        return Profile(key, PROFILE_LIBRARY[key])
    match = _CONSTANT_PROFILE.match(key)
    if match:
        return Profile(key, sp.Float(float(match.group(1))))
    raise ConfigError(f"unknown profile '{name}' (expected one of "
                      f"{sorted(PROFILE_LIBRARY)} or constant(c))")


# ---------------------------------------------------------------------------
# Manifold specification
# ---------------------------------------------------------------------------

class ManifoldKind(str, enum.Enum):
    """Built-in manifolds."""
    EUCLIDEAN = "euclidean"
    REVOLUTION = "revolution"
    HYPERBOLOID = "hyperboloid"
    SPHERE = "sphere"


class MetricProvenance(str, enum.Enum):
    """How Christoffel symbols were obtained."""
    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "finite-difference"


_DEFAULT_CHART = {
    ManifoldKind.EUCLIDEAN: "cartesian",
    ManifoldKind.REVOLUTION: "meridian-angle",
    ManifoldKind.HYPERBOLOID: "meridian-angle",
    ManifoldKind.SPHERE: "latitude-longitude",
}

_DEFAULT_BOUNDS = {
    ManifoldKind.EUCLIDEAN: ((-1.0, 1.0), (-1.0, 1.0)),
    ManifoldKind.REVOLUTION: ((-2.0, 2.0), (0.0, 2.0 * math.pi)),
    ManifoldKind.HYPERBOLOID: ((-2.0, 2.0), (0.0, 2.0 * math.pi)),
    ManifoldKind.SPHERE: ((-1.4, 1.4), (0.0, 2.0 * math.pi)),
}


@dataclass(frozen=True)
class ManifoldSpec:
    """
    A built-in manifold together with the chart patch it is used in.

    Attributes:
        kind: which built-in
        profile: r(s) for REVOLUTION; filled in automatically for HYPERBOLOID
        radius: sphere radius R
        chart: name of the coordinate patch
        bounds: chart extents of the patch (coordinates outside are a ChartExit
            on non-periodic axes); the Euclidean chart itself is unbounded
    """
    kind: ManifoldKind
    profile: Optional[Profile] = None
    radius: float = 1.0
    chart: str = ""
    bounds: Optional[Extents] = None

    def __post_init__(self):
        kind = ManifoldKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ManifoldKind.HYPERBOLOID and self.profile is None:
            object.__setattr__(self, "profile", parse_profile("hyperboloid"))
        if kind is ManifoldKind.REVOLUTION and self.profile is None:
            raise ConfigError("a surface of revolution needs a profile")
        if kind is ManifoldKind.SPHERE and not self.radius > 0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")
        if not self.chart:
            object.__setattr__(self, "chart", _DEFAULT_CHART[kind])
        if self.bounds is None:
            object.__setattr__(self, "bounds", _DEFAULT_BOUNDS[kind])
        else:
            object.__setattr__(self, "bounds", tuple((float(a), float(b)) for a, b in self.bounds))

    # Constructors

    @classmethod
    def euclidean(cls, bounds: Optional[Extents] = None) -> "ManifoldSpec":
        return cls(ManifoldKind.EUCLIDEAN, bounds=bounds)

    @classmethod
    def revolution(cls, profile: Union[str, Profile], bounds: Optional[Extents] = None) -> "ManifoldSpec":
        if isinstance(profile, str):
            profile = parse_profile(profile)
        return cls(ManifoldKind.REVOLUTION, profile=profile, bounds=bounds)

    @classmethod
    def hyperboloid(cls, bounds: Optional[Extents] = None) -> "ManifoldSpec":
        return cls(ManifoldKind.HYPERBOLOID, bounds=bounds)

    @classmethod
    def sphere(cls, radius: float = 1.0, bounds: Optional[Extents] = None) -> "ManifoldSpec":
        return cls(ManifoldKind.SPHERE, radius=radius, bounds=bounds)

    @property
    def is_revolution(self) -> bool:
        return self.kind in (ManifoldKind.REVOLUTION, ManifoldKind.HYPERBOLOID)

    @property
    def periodic(self) -> Tuple[bool, bool]:
        return (False, self.kind is not ManifoldKind.EUCLIDEAN)

    def default_grid(self, resolution: Union[int, Tuple[int, int]] = 128) -> ChartGrid:
        if isinstance(resolution, int):
            resolution = (resolution, resolution)
        return ChartGrid(self.bounds, resolution, self.periodic)

    # Geometry

    def connection_coefficients(self, s):
        """
        The three nonzero Christoffel symbols as functions of the first
        coordinate: (Γ^0_00, Γ^0_11, Γ^1_01).
        """
        if self.kind is ManifoldKind.EUCLIDEAN:
            zero = np.zeros_like(np.asarray(s, dtype=float))
            return zero, zero, zero
        if self.kind is ManifoldKind.SPHERE:
            return np.zeros_like(np.asarray(s, dtype=float)), np.sin(s) * np.cos(s), -np.tan(s)
        r, dr, ddr = self.profile.r(s), self.profile.dr(s), self.profile.ddr(s)
        e = dr * dr + 1.0
        return dr * ddr / e, -r * dr / e, dr / r

    def metric_at(self, points) -> np.ndarray:
        """Metric tensor at chart points, shape (..., 2, 2)."""
        p = np.asarray(points, dtype=float)
        g = np.zeros(p.shape[:-1] + (2, 2))
        s = p[..., 0]
        if self.kind is ManifoldKind.EUCLIDEAN:
            g[..., 0, 0] = 1.0
            g[..., 1, 1] = 1.0
        elif self.kind is ManifoldKind.SPHERE:
            g[..., 0, 0] = self.radius ** 2
            g[..., 1, 1] = (self.radius * np.cos(s)) ** 2
        else:
            g[..., 0, 0] = np.asarray(self.profile.dr(s)) ** 2 + 1.0
            g[..., 1, 1] = np.asarray(self.profile.r(s)) ** 2
        return g

    def christoffel_at(self, points) -> np.ndarray:
        """Closed-form Γ^k_ij at chart points, shape (..., 2, 2, 2) indexed [k, i, j]."""
        p = np.asarray(points, dtype=float)
        gamma = np.zeros(p.shape[:-1] + (2, 2, 2))
        a, b, c = self.connection_coefficients(p[..., 0])
        gamma[..., 0, 0, 0] = a
        gamma[..., 0, 1, 1] = b
        gamma[..., 1, 0, 1] = c
        gamma[..., 1, 1, 0] = c
        return gamma

    def gaussian_curvature(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        s = p[..., 0]
        if self.kind is ManifoldKind.EUCLIDEAN:
            return np.zeros_like(s)
        if self.kind is ManifoldKind.SPHERE:
            return np.full_like(s, 1.0 / self.radius ** 2)
        r, dr, ddr = self.profile.r(s), self.profile.dr(s), self.profile.ddr(s)
        return -ddr / (r * (1.0 + dr * dr) ** 2)

    def curvature_bounds(self, grid: Optional[ChartGrid] = None) -> Tuple[float, float]:
        """(min K, max K) sampled on the grid (or on the chart bounds)."""
        grid = grid or self.default_grid(256)
        k = self.gaussian_curvature(grid.points())
        return float(np.min(k)), float(np.max(k))

    def injectivity_budget(self) -> float:
        if self.kind is ManifoldKind.EUCLIDEAN:
            return math.inf
        if self.kind is ManifoldKind.SPHERE:
            return 0.95 * math.pi * self.radius
        (a, b), _ = self.bounds
        r_min = float(np.min(self.profile.r(np.linspace(a, b, 2001))))
        return min(0.5 * (b - a), 0.95 * math.pi * r_min)

    # Embedding into R^3

    def embed(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        s, t = p[..., 0], p[..., 1]
        if self.kind is ManifoldKind.EUCLIDEAN:
            return np.stack([s, t, np.zeros_like(s)], axis=-1)
        if self.kind is ManifoldKind.SPHERE:
            R = self.radius
            return np.stack([R * np.cos(s) * np.cos(t), R * np.cos(s) * np.sin(t), R * np.sin(s)], axis=-1)
        r = np.asarray(self.profile.r(s))
        return np.stack([r * np.cos(t), r * np.sin(t), s], axis=-1)

    def embedding_jacobian(self, point) -> np.ndarray:
        """Columns are the ambient images of the coordinate vectors, shape (3, 2)."""
        s, t = float(point[0]), float(point[1])
        if self.kind is ManifoldKind.EUCLIDEAN:
            return np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        if self.kind is ManifoldKind.SPHERE:
            R = self.radius
            return R * np.array([
                [-math.sin(s) * math.cos(t), -math.cos(s) * math.sin(t)],
                [-math.sin(s) * math.sin(t), math.cos(s) * math.cos(t)],
                [math.cos(s), 0.0],
            ])
        r, dr = self.profile.r(s), self.profile.dr(s)
        return np.array([
            [dr * math.cos(t), -r * math.sin(t)],
            [dr * math.sin(t), r * math.cos(t)],
            [1.0, 0.0],
        ])

    def chart_point(self, ambient) -> np.ndarray:
        x, y, z = (float(c) for c in ambient)
        if self.kind is ManifoldKind.EUCLIDEAN:
            return np.array([x, y])
        theta = math.atan2(y, x) % (2.0 * math.pi)
        if self.kind is ManifoldKind.SPHERE:
            return np.array([math.asin(max(-1.0, min(1.0, z / self.radius))), theta])
        return np.array([z, theta])

    def chart_vector(self, point, ambient_vector) -> np.ndarray:
        """Chart components of an ambient tangent vector at point."""
        jac = self.embedding_jacobian(point)
        components, *_ = np.linalg.lstsq(jac, np.asarray(ambient_vector, dtype=float), rcond=None)
        return components

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind.value, "bounds": [list(b) for b in self.bounds]}
        if self.kind is ManifoldKind.REVOLUTION:
            data["profile"] = self.profile.name
        if self.kind is ManifoldKind.SPHERE:
            data["radius"] = self.radius
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ManifoldSpec":
        try:
            kind = ManifoldKind(str(data["kind"]).lower())
        except (KeyError, ValueError):
            raise ConfigError(f"unknown manifold kind '{data.get('kind')}' in key 'manifold.kind'")
        bounds = data.get("bounds")
        bounds = tuple(tuple(b) for b in bounds) if bounds else None
        if kind is ManifoldKind.REVOLUTION:
            if "profile" not in data:
                raise ConfigError("missing key 'manifold.profile' for a surface of revolution")
            return cls.revolution(data["profile"], bounds=bounds)
        if kind is ManifoldKind.SPHERE:
            return cls.sphere(float(data.get("radius", 1.0)), bounds=bounds)
        return cls(kind, bounds=bounds)


# ---------------------------------------------------------------------------
# Metric fields
# ---------------------------------------------------------------------------

def _sym2_eigenvalues(m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a, b, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 1]
    half_trace = 0.5 * (a + d)
    radius = np.sqrt((0.5 * (a - d)) ** 2 + b * b)
    return half_trace - radius, half_trace + radius


def _inverse2(m: np.ndarray) -> np.ndarray:
    a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
    det = a * d - b * c
    inv = np.empty_like(m)
    inv[..., 0, 0] = d / det
    inv[..., 0, 1] = -b / det
    inv[..., 1, 0] = -c / det
    inv[..., 1, 1] = a / det
    return inv


def _symmetrize_christoffel(gamma: np.ndarray) -> np.ndarray:
    return 0.5 * (gamma + np.swapaxes(gamma, -1, -2))


@dataclass(eq=False)
class MetricField:
    """
    Metric sampled on a ChartGrid.

    Attributes:
        grid: the discrete chart domain
        g: metric tensor per node, shape (n0, n1, 2, 2)
        g_inv: inverse metric per node
        christoffel: Γ^k_ij per node, shape (n0, n1, 2, 2, 2) indexed [k, i, j]
        provenance: analytic or finite-difference Christoffels
        spec: the manifold the field was sampled from
    """
    grid: ChartGrid
    g: np.ndarray
    g_inv: np.ndarray
    christoffel: np.ndarray
    provenance: MetricProvenance = MetricProvenance.ANALYTIC
    spec: Optional[ManifoldSpec] = field(default=None, repr=False)

    @cached_property
    def inverse_eigenvalue_max(self) -> np.ndarray:
        """Largest eigenvalue of g^{-1} per node (the metric anisotropy scale)."""
        return _sym2_eigenvalues(self.g_inv)[1]

    def validate(self, check_step: float = CHRISTOFFEL_CHECK_STEP) -> float:
        """
        Assert the MetricField invariants.

        Returns:
            Largest Christoffel mismatch against a finite-difference
            recomputation (0.0 when no analytic spec is attached)
        """
        if not np.array_equal(self.g, np.swapaxes(self.g, -1, -2)):
            raise NonPositiveDefinite("metric is not symmetric")
        lam_min, _ = _sym2_eigenvalues(self.g)
        if np.any(lam_min <= PD_FLOOR):
            node = tuple(int(i) for i in np.argwhere(lam_min <= PD_FLOOR)[0])
            raise NonPositiveDefinite(f"metric not positive definite at node {node}", node)
        identity = np.einsum("...ij,...jk->...ik", self.g, self.g_inv)
        if np.max(np.abs(identity - np.eye(2))) > 1e-10:
            raise ValueError("g * g_inv deviates from the identity by more than 1e-10")
        if not np.array_equal(self.christoffel, np.swapaxes(self.christoffel, -1, -2)):
            raise ValueError("Christoffel symbols are not symmetric in (i, j)")
        if self.spec is None or self.provenance is not MetricProvenance.ANALYTIC:
            return 0.0
        reference = christoffel_from_metric(self.spec.metric_at, self.grid.points(), check_step)
        mismatch = float(np.max(np.abs(reference - self.christoffel)))
        if mismatch > CHRISTOFFEL_TOLERANCE:
            raise ValueError(f"analytic Christoffels differ from finite differences by {mismatch:.3e}")
        return mismatch


def christoffel_from_metric(metric_fn: Callable[[np.ndarray], np.ndarray], points: np.ndarray,
                            step: Union[float, Sequence[float]]) -> np.ndarray:
    """
    Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij) with 4th-order central
    differences of the metric.
    """
    steps = (step, step) if np.isscalar(step) else tuple(step)
    points = np.asarray(points, dtype=float)
    dg = np.empty(points.shape[:-1] + (2, 2, 2))  # [l, i, j] = ∂_l g_ij
    for l in range(2):
        e = np.zeros(2)
        e[l] = steps[l]
        dg[..., l, :, :] = (
            -metric_fn(points + 2 * e) + 8 * metric_fn(points + e)
            - 8 * metric_fn(points - e) + metric_fn(points - 2 * e)
        ) / (12 * steps[l])
    first_kind = 0.5 * (np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg)
    g_inv = _inverse2(metric_fn(points))
    return _symmetrize_christoffel(np.einsum("...kl,...lij->...kij", g_inv, first_kind))


def build_manifold(spec: ManifoldSpec, grid: ChartGrid,
                   provenance: MetricProvenance = MetricProvenance.ANALYTIC) -> MetricField:
    """
    Sample a built-in manifold's metric and connection on a grid.

    Args:
        spec: manifold description
        grid: chart grid to sample on
        provenance: closed-form or finite-difference Christoffel symbols

    Returns:
        MetricField satisfying its invariants
    """
    points = grid.points()
    if spec.is_revolution:
        r_min = float(np.min(spec.profile.r(points[..., 0])))
        if r_min < PROFILE_FLOOR:
            raise ProfileTooSmall(f"profile '{spec.profile.name}' reaches r = {r_min:.3e} < {PROFILE_FLOOR}")
    g = spec.metric_at(points)
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    lam_min, _ = _sym2_eigenvalues(g)
    if np.any(~(lam_min > PD_FLOOR)):
        node = tuple(int(i) for i in np.argwhere(~(lam_min > PD_FLOOR))[0])
        raise NonPositiveDefinite(f"metric of {spec.kind.value} not positive definite at node {node}", node)
    g_inv = _inverse2(g)
    if MetricProvenance(provenance) is MetricProvenance.ANALYTIC:
        gamma = spec.christoffel_at(points)
    else:
        gamma = christoffel_from_metric(spec.metric_at, points, grid.spacing)
    gamma = _symmetrize_christoffel(gamma)
    logger.debug(f"Built {spec.kind.value} metric on {grid.resolution} grid ({provenance.value})")
    return MetricField(grid, g, g_inv, gamma, MetricProvenance(provenance), spec)


# ---------------------------------------------------------------------------
# Tangent data and derivatives
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class TangentData:
    """A tangent vector at a point in both index positions."""
    point: np.ndarray
    vector: np.ndarray
    covector: np.ndarray

    @classmethod
    def from_vector(cls, point, vector, g: np.ndarray) -> "TangentData":
        v = np.asarray(vector, dtype=float)
        return cls(np.asarray(point, dtype=float), v, g @ v)

    @classmethod
    def from_covector(cls, point, covector, g_inv: np.ndarray) -> "TangentData":
        z = np.asarray(covector, dtype=float)
        return cls(np.asarray(point, dtype=float), g_inv @ z, z)

    def norm_squared(self) -> float:
        return float(self.vector @ self.covector)

    def norm(self) -> float:
        return math.sqrt(max(self.norm_squared(), 0.0))


def _values(u) -> np.ndarray:
    return np.asarray(getattr(u, "values", u), dtype=float)


def _mirrored(u: np.ndarray, axis: int) -> np.ndarray:
    # ghost node u[-1] = u[1] on both ends of a non-periodic axis
    pad = [(0, 0)] * u.ndim
    pad[axis] = (1, 1)
    return np.pad(u, pad, mode="reflect")


def _first_difference(u: np.ndarray, axis: int, h: float, periodic: bool,
                      mirror: bool = False) -> np.ndarray:
    if periodic:
        return (np.roll(u, -1, axis) - np.roll(u, 1, axis)) / (2.0 * h)
    if mirror:
        v = np.moveaxis(_mirrored(u, axis), axis, 0)
        return np.moveaxis((v[2:] - v[:-2]) / (2.0 * h), 0, axis)
    return np.gradient(u, h, axis=axis, edge_order=2)


def _second_difference(u: np.ndarray, axis: int, h: float, periodic: bool,
                       mirror: bool = False) -> np.ndarray:
    if periodic:
        return (np.roll(u, -1, axis) - 2.0 * u + np.roll(u, 1, axis)) / (h * h)
    if mirror:
        v = np.moveaxis(_mirrored(u, axis), axis, 0)
        return np.moveaxis((v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h), 0, axis)
    v = np.moveaxis(u, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (h * h)
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / (h * h)
    return np.moveaxis(out, 0, axis)


def gradient_field(u, m: MetricField, mirror: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    Differential and gradient of a scalar field.

    Non-periodic edges use one-sided second-order stencils, or a mirrored
    ghost node (zero normal derivative) when mirror is set.

    Returns:
        (covector ζ_i, vector v^i = g^ij ζ_j), each of shape (n0, n1, 2)
    """
    values = _values(u)
    h, periodic = m.grid.spacing, m.grid.periodic
    z0 = _first_difference(values, 0, h[0], periodic[0], mirror)
    z1 = _first_difference(values, 1, h[1], periodic[1], mirror)
    gi = m.g_inv
    covector = np.stack([z0, z1], axis=-1)
    vector = np.stack([gi[..., 0, 0] * z0 + gi[..., 0, 1] * z1,
                       gi[..., 1, 0] * z0 + gi[..., 1, 1] * z1], axis=-1)
    return covector, vector


def covariant_hessian_field(u, m: MetricField, covector: Optional[np.ndarray] = None,
                            mirror: bool = False) -> np.ndarray:
    """H_ij = ∂_i∂_j u − Γ^k_ij ∂_k u per node, shape (n0, n1, 2, 2)."""
    values = _values(u)
    h, periodic = m.grid.spacing, m.grid.periodic
    if covector is None:
        covector, _ = gradient_field(values, m, mirror)
    z0, z1 = covector[..., 0], covector[..., 1]
    d00 = _second_difference(values, 0, h[0], periodic[0], mirror)
    d11 = _second_difference(values, 1, h[1], periodic[1], mirror)
    d01 = _first_difference(_first_difference(values, 0, h[0], periodic[0], mirror),
                            1, h[1], periodic[1], mirror)
    gam = m.christoffel
    hess = np.empty(values.shape + (2, 2))
    hess[..., 0, 0] = d00 - (gam[..., 0, 0, 0] * z0 + gam[..., 1, 0, 0] * z1)
    hess[..., 1, 1] = d11 - (gam[..., 0, 1, 1] * z0 + gam[..., 1, 1, 1] * z1)
    mixed = d01 - (gam[..., 0, 0, 1] * z0 + gam[..., 1, 0, 1] * z1)
    hess[..., 0, 1] = mixed
    hess[..., 1, 0] = mixed
    return hess


def gradient(u, m: MetricField, node: Tuple[int, int]) -> TangentData:
    covector, vector = gradient_field(u, m)
    return TangentData(m.grid.node_point(node), vector[node], covector[node])


def covariant_hessian(u, m: MetricField, node: Tuple[int, int]) -> np.ndarray:
    return covariant_hessian_field(u, m)[node]


def covariant_hessian_at(spec: ManifoldSpec, point, stencil: np.ndarray,
                         h: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Differential and covariant Hessian at the centre of a 3x3 chart stencil
    of spacing h (stencil[a, b] is the value at point + (a-1, b-1)·h).
    """
    v = np.asarray(stencil, dtype=float)
    zeta = np.array([(v[2, 1] - v[0, 1]) / (2 * h), (v[1, 2] - v[1, 0]) / (2 * h)])
    d = np.empty((2, 2))
    d[0, 0] = (v[2, 1] - 2 * v[1, 1] + v[0, 1]) / (h * h)
    d[1, 1] = (v[1, 2] - 2 * v[1, 1] + v[1, 0]) / (h * h)
    d[0, 1] = d[1, 0] = (v[2, 2] - v[2, 0] - v[0, 2] + v[0, 0]) / (4 * h * h)
    gamma = spec.christoffel_at(np.asarray(point, dtype=float))
    hess = d - np.einsum("kij,k->ij", gamma, zeta)
    return zeta, 0.5 * (hess + hess.T)


# ---------------------------------------------------------------------------
# Geodesics, exponential map, parallel transport
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Geodesic:
    """A geodesic segment γ(t) = exp_x(t·v), t in [0, 1]."""
    start: np.ndarray
    velocity: np.ndarray
    end: np.ndarray
    end_velocity: np.ndarray
    length: float
    substeps: int


def _as_vector(v) -> np.ndarray:
    return np.asarray(getattr(v, "vector", v), dtype=float)


def _flow(spec: ManifoldSpec, state: np.ndarray) -> np.ndarray:
    """Geodesic equation plus transport of the frame vectors stored after (x, v)."""
    a, b, c = (float(k) for k in spec.connection_coefficients(state[0]))
    v0, v1 = state[2], state[3]
    out = np.empty_like(state)
    out[0] = v0
    out[1] = v1
    out[2] = -(a * v0 * v0 + b * v1 * v1)
    out[3] = -2.0 * c * v0 * v1
    w = state[4:].reshape(-1, 2)
    dw = out[4:].reshape(-1, 2)
    dw[:, 0] = -(a * v0 * w[:, 0] + b * v1 * w[:, 1])
    dw[:, 1] = -c * (v0 * w[:, 1] + v1 * w[:, 0])
    return out


def _rk4(spec: ManifoldSpec, state: np.ndarray, dt: float) -> np.ndarray:
    k1 = _flow(spec, state)
    k2 = _flow(spec, state + 0.5 * dt * k1)
    k3 = _flow(spec, state + 0.5 * dt * k2)
    k4 = _flow(spec, state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _settle(spec: ManifoldSpec, state: np.ndarray) -> np.ndarray:
    for k in range(2):
        a, b = spec.bounds[k]
        if spec.periodic[k]:
            state[k] = a + (state[k] - a) % (b - a)
        elif spec.kind is not ManifoldKind.EUCLIDEAN and not (a < state[k] < b):
            raise ChartExit(f"geodesic left the chart axis {k} range [{a}, {b}] at {state[:2]}",
                            point=state[:2].copy())
    return state


def geodesic_step(spec: ManifoldSpec, x, v, dt: float) -> Tuple[np.ndarray, TangentData]:
    """
    One RK4 step of x''^k + Γ^k_ij x'^i x'^j = 0.

    Returns:
        (new chart point, velocity there)
    """
    state = np.concatenate([np.asarray(x, dtype=float), _as_vector(v)])
    state = _settle(spec, _rk4(spec, state, dt))
    point = state[:2].copy()
    return point, TangentData.from_vector(point, state[2:4], spec.metric_at(point))


def _integrate(spec: ManifoldSpec, x: np.ndarray, v: np.ndarray, substeps: int,
               frames: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float]:
    frames = np.zeros((0, 2)) if frames is None else np.asarray(frames, dtype=float).reshape(-1, 2)
    state = np.concatenate([x, v, frames.ravel()])
    dt = 1.0 / substeps

    def speed(st: np.ndarray) -> float:
        g = spec.metric_at(st[:2])
        return math.sqrt(max(float(st[2:4] @ g @ st[2:4]), 0.0))

    length = 0.0
    previous = speed(state)
    for _ in range(substeps):
        state = _settle(spec, _rk4(spec, state, dt))
        current = speed(state)
        length += 0.5 * dt * (previous + current)
        previous = current
    return state, length


def shoot(spec: ManifoldSpec, x, v, step: float = GEODESIC_STEP, tol: float = 1e-6,
          max_refinements: int = 8) -> Geodesic:
    """
    Integrate γ(t) = exp_x(t·v) for t in [0, 1], halving the substep until
    the endpoint is stable to tol·max(1, |v|).
    """
    x = np.asarray(x, dtype=float)
    v = _as_vector(v)
    norm_v = math.sqrt(max(float(v @ spec.metric_at(x) @ v), 0.0))
    if norm_v == 0.0:
        return Geodesic(x.copy(), v.copy(), x.copy(), v.copy(), 0.0, 1)

    substeps = max(1, math.ceil(norm_v / step))
    coarse, _ = _integrate(spec, x, v, substeps)
    for _ in range(max_refinements):
        fine, length = _integrate(spec, x, v, 2 * substeps)
        substeps *= 2
        gap = float(np.max(np.abs(_chart_gap(spec, coarse[:2], fine[:2]))))
        if gap <= tol * max(1.0, norm_v):
            break
        coarse = fine
    return Geodesic(x.copy(), v.copy(), fine[:2].copy(), fine[2:4].copy(), length, substeps)


def _chart_gap(spec: ManifoldSpec, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = q - p
    for k in range(2):
        if spec.periodic[k]:
            period = spec.bounds[k][1] - spec.bounds[k][0]
            d[k] -= period * round(d[k] / period)
    return d


def exp_map(spec: ManifoldSpec, x, v, step: float = GEODESIC_STEP, tol: float = 1e-6) -> np.ndarray:
    """Chart coordinates of exp_x(v)."""
    return shoot(spec, x, v, step=step, tol=tol).end


def parallel_transport(spec: ManifoldSpec, geodesic: Geodesic, w) -> TangentData:
    """
    Transport w from γ(0) to γ(1) by solving w'^k + Γ^k_ij γ'^i w^j = 0.

    Returns:
        TangentData at the geodesic's end point
    """
    w_vec = _as_vector(w)
    if geodesic.length == 0.0:
        return TangentData.from_vector(geodesic.end, w_vec, spec.metric_at(geodesic.end))
    state, _ = _integrate(spec, geodesic.start, geodesic.velocity, geodesic.substeps, w_vec)
    return TangentData.from_vector(state[:2], state[4:6], spec.metric_at(state[:2]))


def transport_matrix(spec: ManifoldSpec, geodesic: Geodesic) -> np.ndarray:
    """Matrix T with L_xy(w) = T w in chart components."""
    if geodesic.length == 0.0:
        return np.eye(2)
    state, _ = _integrate(spec, geodesic.start, geodesic.velocity, geodesic.substeps, np.eye(2))
    return state[4:].reshape(2, 2).T.copy()


def orthonormal_frame(g: np.ndarray) -> np.ndarray:
    """Columns form a g-orthonormal basis."""
    lower = np.linalg.cholesky(np.asarray(g, dtype=float))
    return np.linalg.inv(lower).T


def log_map(spec: ManifoldSpec, x, y, guess=None, jacobian: Optional[np.ndarray] = None,
            step: float = GEODESIC_STEP, tol: float = 1e-12, max_iter: int = 30) -> np.ndarray:
    """
    Solve exp_x(w) = y for w by chord iterations on the exponential map.

    Args:
        guess: starting vector (defaults to the chart difference y - x)
        jacobian: d exp_x at the guess; finite-differenced when omitted
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = _chart_gap(spec, x, y.copy()) if guess is None else np.array(guess, dtype=float)
    if jacobian is None:
        jacobian = exp_jacobian(spec, x, w, step=step)
    jac_inv = np.linalg.inv(jacobian)
    for _ in range(max_iter):
        residual = _chart_gap(spec, exp_map(spec, x, w, step=step, tol=1e-9), y.copy())
        if float(np.max(np.abs(residual))) < tol:
            break
        w = w + jac_inv @ residual
    return w


def exp_jacobian(spec: ManifoldSpec, x, w, step: float = GEODESIC_STEP, eps: float = 1e-6) -> np.ndarray:
    jac = np.empty((2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = eps
        plus = exp_map(spec, x, w + e, step=step, tol=1e-9)
        minus = exp_map(spec, x, w - e, step=step, tol=1e-9)
        jac[:, k] = _chart_gap(spec, minus, plus) / (2 * eps)
    return jac


# ---------------------------------------------------------------------------
# Distance fields
# ---------------------------------------------------------------------------

_NEIGHBOUR_OFFSETS = ((1, 0), (0, 1), (1, 1), (1, -1))


def grid_edges(m: MetricField) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """8-neighbour edges with midpoint-rule metric lengths."""
    n0, n1 = m.grid.resolution
    h0, h1 = m.grid.spacing
    p0, p1 = m.grid.periodic
    index = np.arange(n0 * n1).reshape(n0, n1)
    I, J = np.meshgrid(np.arange(n0), np.arange(n1), indexing="ij")
    rows, cols, weights = [], [], []
    for d0, d1 in _NEIGHBOUR_OFFSETS:
        ti, tj = I + d0, J + d1
        valid = np.ones_like(I, dtype=bool)
        if p0:
            ti = ti % n0
        else:
            valid &= (ti >= 0) & (ti < n0)
        if p1:
            tj = tj % n1
        else:
            valid &= (tj >= 0) & (tj < n1)
        si, sj, ti, tj = I[valid], J[valid], ti[valid], tj[valid]
        delta = np.array([d0 * h0, d1 * h1])
        g_mid = 0.5 * (m.g[si, sj] + m.g[ti, tj])
        length = np.sqrt(np.einsum("i,nij,j->n", delta, g_mid, delta))
        rows.append(index[si, sj])
        cols.append(index[ti, tj])
        weights.append(length)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(weights)


def _seed_offsets(m: MetricField, seeds: np.ndarray) -> np.ndarray:
    """Initial distances of the cell corners around each seed."""
    n0, n1 = m.grid.resolution
    init = np.full(n0 * n1, np.inf)
    for p in seeds:
        if not m.grid.contains(p):
            raise ValueError(f"seed {p} lies outside the grid")
        i, j = m.grid.cell_of(p)
        for a in (0, 1):
            for b in (0, 1):
                ci = (i + a) % n0
                cj = (j + b) % n1
                delta = m.grid.chart_difference(p, m.grid.node_point((i + a, j + b)))
                length = math.sqrt(max(float(delta @ m.g[ci, cj] @ delta), 0.0))
                k = ci * n1 + cj
                init[k] = min(init[k], length)
    return init


def distance_field(m: MetricField, seeds) -> np.ndarray:
    """
    Approximate geodesic distance to a seed set (Dijkstra on the 8-neighbour
    grid graph, edge weight = metric length of the straight chart segment).

    Args:
        m: metric field
        seeds: chart points, shape (k, 2)

    Returns:
        distance per node, shape (n0, n1)
    """
    seeds = np.asarray(seeds, dtype=float).reshape(-1, 2)
    if len(seeds) == 0:
        raise EmptySeeds("distance_field needs at least one seed")
    n0, n1 = m.grid.resolution
    total = n0 * n1
    rows, cols, weights = grid_edges(m)
    init = _seed_offsets(m, seeds)
    seeded = np.flatnonzero(np.isfinite(init))
    # super-source edges carry a unit offset so zero-length seed edges survive the sparse format
    rows = np.concatenate([rows, np.full(len(seeded), total)])
    cols = np.concatenate([cols, seeded])
    weights = np.concatenate([weights, 1.0 + init[seeded]])
    graph = coo_matrix((weights, (rows, cols)), shape=(total + 1, total + 1)).tocsr()
    dist = dijkstra(graph, directed=False, indices=total)
    return (dist[:total] - 1.0).reshape(n0, n1)


def distance_at(m: MetricField, distances: np.ndarray, seeds, points) -> np.ndarray:
    """
    Distance from off-grid points to the seed set: the shorter of a direct
    segment to a seed in the same cell and the best corner d(c) + |c - p|.
    """
    seeds = np.asarray(seeds, dtype=float).reshape(-1, 2)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    n0, n1 = m.grid.resolution
    buckets: Dict[Tuple[int, int], List[np.ndarray]] = {}
    for p in seeds:
        buckets.setdefault(m.grid.cell_of(p), []).append(p)
    out = np.empty(len(points))
    for n, p in enumerate(points):
        i, j = m.grid.cell_of(p)
        best = math.inf
        for a in (0, 1):
            for b in (0, 1):
                ci, cj = (i + a) % n0, (j + b) % n1
                delta = m.grid.chart_difference(p, m.grid.node_point((i + a, j + b)))
                best = min(best, distances[ci, cj] + math.sqrt(max(float(delta @ m.g[ci, cj] @ delta), 0.0)))
        g_cell = m.g[i, j]
        for q in buckets.get((i, j), ()):
            delta = m.grid.chart_difference(p, q)
            best = min(best, math.sqrt(max(float(delta @ g_cell @ delta), 0.0)))
        out[n] = best
    return out


# ---------------------------------------------------------------------------
# Comparison bounds for the Hessian of the distance function
# ---------------------------------------------------------------------------

def comparison_sine(kappa: float, d):
    """s_κ(d): sin(√κ d)/√κ, d, or sinh(√-κ d)/√-κ."""
    d = np.asarray(d, dtype=float)
    if kappa > 0:
        root = math.sqrt(kappa)
        return np.sin(root * d) / root
    if kappa < 0:
        root = math.sqrt(-kappa)
        return np.sinh(root * d) / root
    return d


def comparison_cosine(kappa: float, d):
    """c_κ(d) = s_κ'(d)."""
    d = np.asarray(d, dtype=float)
    if kappa > 0:
        return np.cos(math.sqrt(kappa) * d)
    if kappa < 0:
        return np.cosh(math.sqrt(-kappa) * d)
    return np.ones_like(d)


def comparison_ratio(kappa: float, d):
    """c_κ(d)/s_κ(d)."""
    return comparison_cosine(kappa, d) / comparison_sine(kappa, d)


@dataclass
class SakaiReport:
    """Outcome of a distance-Hessian comparison check."""
    x0: Tuple[float, float]
    radius: float
    delta: float
    Delta: float
    stencil_h: float
    samples: List[Dict[str, float]]
    worst_lower_margin: float
    worst_upper_margin: float
    max_null_residual: float
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "check": "sakai_bounds",
            "x0": list(self.x0),
            "radius": self.radius,
            "delta": self.delta,
            "Delta": self.Delta,
            "stencil_h": self.stencil_h,
            "worst_lower_margin": self.worst_lower_margin,
            "worst_upper_margin": self.worst_upper_margin,
            "max_null_residual": self.max_null_residual,
            "passed": self.passed,
            "samples": self.samples,
        }


def sakai_bounds_check(spec: ManifoldSpec, x0, radius: float, delta: float, Delta: float,
                       samples: int = 8, stencil_h: float = 1e-2, seed: int = 0,
                       step: float = GEODESIC_STEP) -> SakaiReport:
    """
    Check c_Δ(d)/s_Δ(d)|v|² ≤ D²d(v,v) ≤ c_δ(d)/s_δ(d)|v|² for v ⊥ ∇d and
    D²d(∇d, ∇d) = 0 on sampled points of B(x0, radius), d = d(·, x0).

    d is sampled on a 3x3 chart stencil around each point by log-map
    shooting; violations beyond 5·stencil_h fail.
    """
    budget = spec.injectivity_budget()
    if radius >= budget:
        raise RadiusTooLarge(f"radius {radius} exceeds the injectivity budget {budget:.4f}")
    if Delta > 0 and radius >= math.pi / (2.0 * math.sqrt(Delta)):
        raise RadiusTooLarge(f"radius {radius} exceeds π/(2√Δ) = {math.pi / (2 * math.sqrt(Delta)):.4f}")

    x0 = np.asarray(x0, dtype=float)
    g0 = spec.metric_at(x0)
    frame = orthonormal_frame(g0)
    rng = np.random.default_rng(seed)
    tolerance = 5.0 * stencil_h
    rows: List[Dict[str, float]] = []

    for k in range(samples):
        angle = 2.0 * math.pi * (k + rng.uniform()) / samples
        rho = rng.uniform(radius / 3.0, radius)
        v = rho * (math.cos(angle) * frame[:, 0] + math.sin(angle) * frame[:, 1])
        x = exp_map(spec, x0, v, step=step, tol=1e-9)
        jac = exp_jacobian(spec, x0, v, step=step)
        stencil = np.empty((3, 3))
        for a in range(3):
            for b in range(3):
                offset = np.array([(a - 1) * stencil_h, (b - 1) * stencil_h])
                target = x + offset
                guess = v + np.linalg.solve(jac, offset)
                w = log_map(spec, x0, target, guess=guess, jacobian=jac, step=step)
                stencil[a, b] = math.sqrt(max(float(w @ g0 @ w), 0.0))
        zeta, hess = covariant_hessian_at(spec, x, stencil, stencil_h)
        g = spec.metric_at(x)
        g_inv = np.linalg.inv(g)
        grad = g_inv @ zeta
        grad_unit = grad / math.sqrt(float(grad @ g @ grad))
        tangent = np.array([-zeta[1], zeta[0]])
        tangent = tangent / math.sqrt(float(tangent @ g @ tangent))
        d = stencil[1, 1]
        value = float(tangent @ hess @ tangent)
        lower = float(comparison_ratio(Delta, d))
        upper = float(comparison_ratio(delta, d))
        null = abs(float(grad_unit @ hess @ grad_unit))
        rows.append({"s": float(x[0]), "theta": float(x[1]), "distance": d, "hessian_tangent": value,
                     "lower_bound": lower, "upper_bound": upper, "null_residual": null})

    worst_lower = min(r["hessian_tangent"] - r["lower_bound"] for r in rows)
    worst_upper = min(r["upper_bound"] - r["hessian_tangent"] for r in rows)
    max_null = max(r["null_residual"] for r in rows)
    passed = worst_lower >= -tolerance and worst_upper >= -tolerance and max_null <= tolerance
    logger.info(f"Sakai check on {spec.kind.value}: lower margin {worst_lower:.2e}, "
                f"upper margin {worst_upper:.2e}, null residual {max_null:.2e}")
    return SakaiReport((float(x0[0]), float(x0[1])), radius, delta, Delta, stencil_h, rows,
                       worst_lower, worst_upper, max_null, passed)
