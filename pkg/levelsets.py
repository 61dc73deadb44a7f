"""
Level Sets

Zero-set extraction by marching squares, signed geodesic distance to a
front, distances between fronts, and the mean curvature of the distance to
the equator family on surfaces of revolution.
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from errors import EmptyContour
from manifold import (
    ChartGrid, ManifoldSpec, MetricField, Profile, build_manifold, covariant_hessian_field,
    distance_at, distance_field, gradient_field,
)
from operators import CurvatureOperator, Jet, OperatorKind, eval_F
from solver import LevelSetField

logger = logging.getLogger(__name__)

EdgeKey = Tuple[int, int, int]


@dataclass(eq=False)
class Chain:
    """Polyline in chart coordinates; closed chains repeat their first vertex."""
    vertices: np.ndarray
    closed: bool


@dataclass(eq=False)
class Contour:
    """
    Level set of a field as chart polylines.

    Attributes:
        chains: polyline chains, closed or ending on a non-periodic chart edge
        level: extracted isovalue
        source_time: time of the field it came from
    """
    chains: List[Chain] = field(default_factory=list)
    level: float = 0.0
    source_time: float = 0.0

    @property
    def empty(self) -> bool:
        return not self.chains

    @property
    def vertices(self) -> np.ndarray:
        """All distinct chain vertices, shape (k, 2)."""
        if self.empty:
            return np.zeros((0, 2))
        parts = [c.vertices[:-1] if c.closed else c.vertices for c in self.chains]
        return np.concatenate(parts, axis=0)

    def require_vertices(self) -> np.ndarray:
        if self.empty:
            raise EmptyContour(f"contour at level {self.level} (t={self.source_time}) is empty")
        return self.vertices

    def metric_length(self, m: MetricField) -> float:
        total = 0.0
        for chain in self.chains:
            for p, q in zip(chain.vertices, chain.vertices[1:]):
                delta = m.grid.chart_difference(p, q)
                g = m.spec.metric_at(0.5 * (p + p + delta)) if m.spec else np.eye(2)
                total += math.sqrt(max(float(delta @ g @ delta), 0.0))
        return total

    def to_dict(self) -> Dict[str, Any]:
        return {
            "level": self.level,
            "source_time": self.source_time,
            "empty": self.empty,
            "chains": [
                {"closed": c.closed, "vertex_count": len(c.vertices), "vertices": c.vertices.tolist()}
                for c in self.chains
            ],
        }


# ---------------------------------------------------------------------------
# Marching squares
# ---------------------------------------------------------------------------

def _crossings(values: np.ndarray, grid: ChartGrid) -> Tuple[Dict[EdgeKey, np.ndarray], np.ndarray]:
    """Interpolated crossing points on every edge whose end signs differ."""
    n0, n1 = values.shape
    positive = values > 0
    points: Dict[EdgeKey, np.ndarray] = {}
    for axis in (0, 1):
        limit = values.shape[axis] if grid.periodic[axis] else values.shape[axis] - 1
        nxt = np.roll(values, -1, axis)
        nxt_pos = np.roll(positive, -1, axis)
        differs = positive != nxt_pos
        if axis == 0:
            differs[limit:, :] = False
        else:
            differs[:, limit:] = False
        h = grid.spacing[axis]
        for i, j in np.argwhere(differs):
            a, b = values[i, j], nxt[i, j]
            t = a / (a - b)
            p = grid.node_point((i, j))
            p[axis] += t * h
            points[(axis, int(i), int(j))] = grid.wrap(p)
    return points, positive


def _cell_segments(i: int, j: int, values: np.ndarray, positive: np.ndarray,
                   grid: ChartGrid) -> List[Tuple[EdgeKey, EdgeKey]]:
    n0, n1 = values.shape
    i1, j1 = (i + 1) % n0, (j + 1) % n1
    corners = [(i, j), (i1, j), (i1, j1), (i, j1)]
    signs = [bool(positive[c]) for c in corners]
    edges = [(0, i, j), (1, i1, j), (0, i, j1), (1, i, j)]
    cut = [signs[0] != signs[1], signs[1] != signs[2], signs[3] != signs[2], signs[0] != signs[3]]
    crossing = [e for e, c in zip(edges, cut) if c]
    if len(crossing) == 2:
        return [(crossing[0], crossing[1])]
    if len(crossing) != 4:
        return []
    center_positive = float(np.mean([values[c] for c in corners])) > 0
    if center_positive == signs[0]:
        # corners 0 and 2 joined through the centre
        return [(edges[0], edges[1]), (edges[2], edges[3])]
    return [(edges[3], edges[0]), (edges[1], edges[2])]


def extract_contour(u: LevelSetField, level: float = 0.0) -> Contour:
    """
    Marching squares with linear edge interpolation.

    Saddle cells are split according to the sign of the cell average.
    Periodic axes are stitched across the seam; vertex coordinates are
    wrapped into the chart range. A field without a sign change gives an
    empty contour.
    """
    grid = u.grid
    values = u.values - level
    points, positive = _crossings(values, grid)
    if not points:
        return Contour([], level, u.time)

    n0, n1 = values.shape
    rows = n0 if grid.periodic[0] else n0 - 1
    cols = n1 if grid.periodic[1] else n1 - 1
    cells = set()
    for axis, i, j in points:
        if axis == 0:
            cells.update({(i, j), (i, (j - 1) % n1)})
        else:
            cells.update({(i, j), ((i - 1) % n0, j)})
    adjacency: Dict[EdgeKey, List[EdgeKey]] = {key: [] for key in points}
    for i, j in sorted(cells):
        if not (0 <= i < rows and 0 <= j < cols):
            continue
        for a, b in _cell_segments(i, j, values, positive, grid):
            adjacency[a].append(b)
            adjacency[b].append(a)

    chains: List[Chain] = []
    visited = set()

    def walk(start: EdgeKey) -> List[EdgeKey]:
        path = [start]
        visited.add(start)
        current = start
        while True:
            following = [k for k in adjacency[current] if k not in visited]
            if not following:
                return path
            current = following[0]
            visited.add(current)
            path.append(current)

    for key in sorted(k for k in adjacency if len(adjacency[k]) == 1):
        if key not in visited:
            path = walk(key)
            chains.append(Chain(np.array([points[k] for k in path]), closed=False))
    for key in sorted(adjacency):
        if key not in visited and adjacency[key]:
            path = walk(key)
            closed = path[0] in adjacency[path[-1]] and len(path) > 2
            vertices = [points[k] for k in path] + ([points[path[0]]] if closed else [])
            chains.append(Chain(np.array(vertices), closed=closed))
    logger.debug(f"Extracted {len(chains)} chains at level {level} from t={u.time:.6g}")
    return Contour(chains, level, u.time)


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------

def signed_distance(u_or_contour: Union[LevelSetField, Contour], m: MetricField,
                    inside: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Geodesic distance to a front, positive inside.

    Args:
        u_or_contour: a field (its zero contour is used, inside = {u > 0}) or a contour
        m: metric on the field's grid
        inside: boolean node mask of the positive side; required for a bare contour

    Raises:
        EmptyContour: the front has no vertices
    """
    if isinstance(u_or_contour, LevelSetField):
        contour = extract_contour(u_or_contour, 0.0)
        if inside is None:
            inside = u_or_contour.values > 0
    else:
        contour = u_or_contour
        if inside is None:
            raise ValueError("signed_distance of a bare contour needs an inside mask")
    seeds = contour.require_vertices()
    distance = distance_field(m, seeds)
    return np.where(inside, distance, -distance)


def redistance(u: LevelSetField, m: MetricField) -> LevelSetField:
    """Replace u by its signed distance, keeping the time; fields without a front are returned as is."""
    contour = extract_contour(u, 0.0)
    if contour.empty:
        return u
    return LevelSetField(u.grid, signed_distance(contour, m, inside=u.values > 0), u.time)


def eikonal_residual(d: np.ndarray, m: MetricField) -> Dict[str, float]:
    """Median and 95th percentile of | |∇d| - 1 | over interior nodes."""
    zeta, vector = gradient_field(d, m)
    norm = np.sqrt(np.maximum(np.einsum("...i,...i->...", zeta, vector), 0.0))
    residual = np.abs(norm - 1.0)
    core = residual
    if not m.grid.periodic[0]:
        core = core[1:-1, :]
    if not m.grid.periodic[1]:
        core = core[:, 1:-1]
    return {"median": float(np.median(core)), "p95": float(np.percentile(core, 95))}


class FrontDistanceMode(str, enum.Enum):
    MIN = "min"
    HAUSDORFF = "hausdorff"


def _directed(source: Contour, target: Contour, m: MetricField) -> np.ndarray:
    seeds = target.require_vertices()
    field_ = distance_field(m, seeds)
    return distance_at(m, field_, seeds, source.require_vertices())


def front_distance(c1: Contour, c2: Contour, m: MetricField,
                   mode: FrontDistanceMode = FrontDistanceMode.MIN) -> float:
    """
    Geodesic distance between two fronts.

    MIN is the smallest distance from a c1 vertex to c2; HAUSDORFF is the
    larger of the two directed sup-min distances.
    """
    mode = FrontDistanceMode(mode)
    forward = _directed(c1, c2, m)
    if mode is FrontDistanceMode.MIN:
        return float(np.min(forward))
    backward = _directed(c2, c1, m)
    return max(float(np.max(forward)), float(np.max(backward)))


def chart_hausdorff(c1: Contour, c2: Contour, grid: ChartGrid) -> float:
    """Hausdorff distance between vertex sets in chart coordinates (periodic axes wrapped)."""
    if c1.empty and c2.empty:
        return 0.0
    if c1.empty or c2.empty:
        return math.inf
    a, b = c1.vertices, c2.vertices
    squared = np.zeros((len(a), len(b)))
    for k in range(2):
        delta = cdist(a[:, [k]], b[:, [k]], metric="cityblock")
        if grid.periodic[k]:
            delta = np.minimum(delta, grid.periods[k] - delta)
        squared += delta * delta
    pairwise = np.sqrt(squared)
    return float(max(np.max(np.min(pairwise, axis=1)), np.max(np.min(pairwise, axis=0))))


# ---------------------------------------------------------------------------
# Distance to the equator family on surfaces of revolution
# ---------------------------------------------------------------------------

def equator_distance_jet(spec: ManifoldSpec, s: float) -> Jet:
    """
    Analytic jet of d(s, θ) = ∫_0^s v: ζ = (v, 0) and covariant Hessian
    diag(0, r r'/v).
    """
    profile = spec.profile
    r, dr = profile.r(s), profile.dr(s)
    v = math.sqrt(dr * dr + 1.0)
    point = np.array([s, 0.0])
    hessian = np.array([[0.0, 0.0], [0.0, r * dr / v]])
    return Jet(point, np.array([v, 0.0]), hessian, spec.metric_at(point))


def mean_curvature_of_distance(spec: ManifoldSpec, s: float, method: str = "analytic",
                               resolution: int = 128) -> float:
    """
    -F_MCE on the jet of the distance to the equator, which equals r'/(r v).

    Args:
        spec: surface of revolution
        s: meridian coordinate
        method: "analytic" (closed-form jet) or "grid" (stencils on a sampled d)
        resolution: grid resolution for the "grid" method
    """
    if not spec.is_revolution:
        raise ValueError("mean_curvature_of_distance needs a surface of revolution")
    mce = CurvatureOperator(OperatorKind.MCE)
    if method == "analytic":
        return -eval_F(mce, equator_distance_jet(spec, s))
    if method != "grid":
        raise ValueError(f"unknown method '{method}'")

    grid = spec.default_grid(resolution)
    m = build_manifold(spec, grid)
    d_axis = spec.profile.meridian_length(grid.axis(0))
    d = np.broadcast_to(d_axis[:, None], grid.shape)
    zeta, _ = gradient_field(d, m)
    hess = covariant_hessian_field(d, m, zeta)
    i = int(round((s - grid.extents[0][0]) / grid.spacing[0]))
    i = min(max(i, 1), grid.shape[0] - 2)
    node = (i, 0)
    value = -eval_F(mce, Jet(grid.node_point(node), zeta[node], hess[node], m.g[node]))
    return value


def expected_mean_curvature(profile: Profile, s):
    """r'(s) / (r(s) v(s))."""
    return np.asarray(profile.dr(s)) / (np.asarray(profile.r(s)) * profile.speed(s))


class DistanceSign(str, enum.Enum):
    """Which side of the level-set equation |d| satisfies near the equator."""
    SUPERSOLUTION = "supersolution"
    SUBSOLUTION = "subsolution"
    BOTH = "both"
    NEITHER = "neither"


def classify_distance_sign(profile: Profile, s_values: Sequence[float],
                           tolerance: float = 1e-12) -> DistanceSign:
    """
    Classify |d| from the sign of r'(s)·sign(s) over the sampled s (s = 0 skipped).

    r'·sign(s) <= 0 everywhere gives a supersolution, >= 0 a subsolution.
    """
    s = np.asarray([x for x in s_values if x != 0.0], dtype=float)
    signed = np.asarray(profile.dr(s)) * np.sign(s)
    nonpositive = bool(np.all(signed <= tolerance))
    nonnegative = bool(np.all(signed >= -tolerance))
    if nonpositive and nonnegative:
        return DistanceSign.BOTH
    if nonpositive:
        return DistanceSign.SUPERSOLUTION
    if nonnegative:
        return DistanceSign.SUBSOLUTION
    return DistanceSign.NEITHER
