"""
Experiments

Named scenarios that evolve fronts on the built-in manifolds and check the
outcome: shrinking circles, the stationary hyperboloid equator, decay of the
distance between two latitude fronts, relabeling invariance, Lipschitz
tracking, and the sign pattern of the curvature of the distance to the
equator. Also home to the discrete viscosity probe and the comparison test
on random ordered pairs.
"""

import dataclasses
import enum
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

import artifacts
from errors import ConfigError
from levelsets import (
    Contour, DistanceSign, FrontDistanceMode, chart_hausdorff, classify_distance_sign,
    expected_mean_curvature, extract_contour, front_distance, mean_curvature_of_distance,
)
from manifold import (
    ChartGrid, ManifoldKind, ManifoldSpec, MetricField, build_manifold, covariant_hessian_field,
    gradient_field, grid_edges, parse_profile,
)
from operators import CurvatureOperator, OperatorKind, eval_F_field
from solver import (
    LevelSetField, Scheme, SolverConfig, SolverState, Trajectory, compute_speed, evolve, max_principle_check,
    ordering_check,
)
from worker_pool import WorkerPool

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.lsf"
PROBE_TOLERANCE_FACTOR = 20.0
PROBE_GRADIENT_FACTOR = 10.0
PROBE_BAND_FACTOR = 10.0


def snapshot_name(index: int) -> str:
    return f"snapshot_{index:04d}.lsf"


class Procedure(str, enum.Enum):
    """What a scenario does before its checks run."""
    EVOLVE = "evolve"
    DISTANCE_DECAY = "distance_decay"
    SIGN_PATTERN = "sign_pattern"
    INVARIANCE = "invariance"
    LIPSCHITZ = "lipschitz"


# ---------------------------------------------------------------------------
# Initial fields
# ---------------------------------------------------------------------------

FieldFunction = Callable[[ManifoldSpec, ChartGrid, Mapping[str, Any]], np.ndarray]


@dataclass(frozen=True)
class InitialGenerator:
    name: str
    fn: FieldFunction
    revolution_only: bool = False
    description: str = ""


INITIAL_FIELDS: Dict[str, InitialGenerator] = {}


def initial_field(name: str, revolution_only: bool = False):
    """Register an initial-field generator under name."""
    def register(fn: FieldFunction) -> FieldFunction:
        summary = (fn.__doc__ or "").strip().splitlines()[0] if fn.__doc__ else ""
        INITIAL_FIELDS[name] = InitialGenerator(name, fn, revolution_only, summary)
        return fn
    return register


@dataclass(frozen=True)
class FieldRecipe:
    """A registered initial-field generator plus its parameters."""
    name: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "params": dict(self.params)}


@initial_field("circle")
def _circle(spec: ManifoldSpec, grid: ChartGrid, params: Mapping[str, Any]) -> np.ndarray:
    """Signed chart distance to a circle; inside_sign=+1 makes the inside positive."""
    cx, cy = params.get("center", (0.0, 0.0))
    radius = float(params.get("radius", 0.5))
    sign = float(params.get("inside_sign", 1.0))
    s, t = grid.mesh()
    return sign * (radius - np.hypot(s - cx, t - cy))


@initial_field("quadratic")
def _quadratic(spec: ManifoldSpec, grid: ChartGrid, params: Mapping[str, Any]) -> np.ndarray:
    """s² + θ² − offset."""
    s, t = grid.mesh()
    return s * s + t * t - float(params.get("offset", 0.25))


@initial_field("coordinate")
def _coordinate(spec: ManifoldSpec, grid: ChartGrid, params: Mapping[str, Any]) -> np.ndarray:
    """sign · (x_axis − offset)."""
    axis = int(params.get("axis", 0))
    if axis not in (0, 1):
        raise ConfigError(f"coordinate axis must be 0 or 1, got {axis}", key="initial.params.axis")
    return float(params.get("sign", 1.0)) * (grid.mesh()[axis] - float(params.get("offset", 0.0)))


def _meridian_distance(spec: ManifoldSpec, grid: ChartGrid, s0: float) -> np.ndarray:
    d = np.asarray(spec.profile.meridian_length(grid.axis(0))) - spec.profile.meridian_length(s0)
    return np.broadcast_to(d[:, None], grid.shape)


@initial_field("latitude_distance", revolution_only=True)
def _latitude_distance(spec: ManifoldSpec, grid: ChartGrid, params: Mapping[str, Any]) -> np.ndarray:
    """Signed meridian distance to the latitude s = s0, positive toward larger s."""
    return float(params.get("sign", 1.0)) * _meridian_distance(spec, grid, float(params.get("s0", 0.0)))


@initial_field("latitude_band", revolution_only=True)
def _latitude_band(spec: ManifoldSpec, grid: ChartGrid, params: Mapping[str, Any]) -> np.ndarray:
    """Signed distance to the latitudes s = lower and s = upper, positive between them."""
    lower, upper = float(params.get("lower", 0.0)), float(params.get("upper", 1.0))
    if not lower < upper:
        raise ConfigError(f"latitude_band needs lower < upper, got {lower}, {upper}", key="initial.params")
    return np.minimum(_meridian_distance(spec, grid, lower), -_meridian_distance(spec, grid, upper))


def random_smooth_field(grid: ChartGrid, rng: np.random.Generator, modes: int = 4,
                        amplitude: float = 1.0) -> np.ndarray:
    """
    Sum of products of low-frequency cosines with random phases. Periodic
    axes only get whole periods, so the field is continuous across the seam.
    """
    s, t = grid.mesh()
    coords = (s, t)
    total = np.zeros(grid.shape)
    for _ in range(modes):
        term = np.full(grid.shape, rng.normal())
        for k in range(2):
            start, _ = grid.extents[k]
            length = grid.periods[k]
            if grid.periodic[k]:
                omega = 2.0 * math.pi * int(rng.integers(0, 3)) / length
            else:
                omega = math.pi * rng.uniform(0.5, 2.0) / length
            term = term * np.cos(omega * (coords[k] - start) + rng.uniform(0.0, 2.0 * math.pi))
        total += term
    return amplitude * total / math.sqrt(max(modes, 1))


@initial_field("random_smooth")
def _random_smooth(spec: ManifoldSpec, grid: ChartGrid, params: Mapping[str, Any]) -> np.ndarray:
    """Random smooth field (seed, modes, amplitude)."""
    rng = np.random.default_rng(int(params.get("seed", 0)))
    return random_smooth_field(grid, rng, int(params.get("modes", 4)), float(params.get("amplitude", 1.0)))


@initial_field("constant")
def _constant(spec: ManifoldSpec, grid: ChartGrid, params: Mapping[str, Any]) -> np.ndarray:
    """u ≡ value."""
    return np.full(grid.shape, float(params.get("value", 1.0)))


@initial_field("noise")
def _noise(spec: ManifoldSpec, grid: ChartGrid, params: Mapping[str, Any]) -> np.ndarray:
    """Uniform noise in [−amplitude, amplitude]."""
    rng = np.random.default_rng(int(params.get("seed", 0)))
    amplitude = float(params.get("amplitude", 1.0))
    return rng.uniform(-amplitude, amplitude, size=grid.shape)


def build_initial_field(recipe: FieldRecipe, spec: ManifoldSpec, grid: ChartGrid) -> LevelSetField:
    """
    Evaluate a recipe on a grid.

    Raises:
        ConfigError: unknown generator, or a revolution-only generator on another manifold
    """
    generator = INITIAL_FIELDS.get(recipe.name)
    if generator is None:
        raise ConfigError(f"unknown initial field '{recipe.name}' (known: {sorted(INITIAL_FIELDS)})",
                          key="initial.name")
    if generator.revolution_only and not spec.is_revolution:
        raise ConfigError(f"initial field '{recipe.name}' needs a surface of revolution, "
                          f"got {spec.kind.value}", key="initial.name")
    values = np.broadcast_to(generator.fn(spec, grid, recipe.params), grid.shape)
    return LevelSetField(grid, np.array(values, dtype=np.float64), 0.0)


# ---------------------------------------------------------------------------
# Relabelings
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Relabeling:
    """Continuous strictly increasing θ with θ(0) = 0."""
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    expression: str


RELABELINGS: Dict[str, Relabeling] = {
    "identity": Relabeling("identity", lambda r: r, "r"),
    "cube": Relabeling("cube", lambda r: r ** 3, "r^3"),
    "tanh": Relabeling("tanh", np.tanh, "tanh(r)"),
    "cubic_linear": Relabeling("cubic_linear", lambda r: 2.0 * r + r ** 3, "2r + r^3"),
}


def get_relabeling(name: str) -> Relabeling:
    try:
        return RELABELINGS[name]
    except KeyError:
        raise ConfigError(f"unknown relabeling '{name}' (known: {sorted(RELABELINGS)})",
                          key="relabelings") from None


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckSpec:
    """A named check; tolerance None means the check's default."""
    name: str
    tolerance: Optional[float] = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "tolerance": self.tolerance, "params": dict(self.params)}


@dataclass(frozen=True)
class Scenario:
    """
    Everything needed to reproduce one experiment.

    Attributes:
        name: registry identifier
        manifold: manifold and chart patch
        initial: initial field recipe
        operator: curvature operator
        solver: time-stepping configuration
        checks: assertions evaluated after the run
        resolution: nodes per chart axis
        procedure: what to run before the checks
        second_front: companion front for DISTANCE_DECAY
        relabelings: θ names for INVARIANCE
        also_on: further base scenarios INVARIANCE repeats the test on
        description: one line for listings
    """
    name: str
    manifold: ManifoldSpec
    initial: FieldRecipe
    operator: CurvatureOperator = field(default_factory=lambda: CurvatureOperator(OperatorKind.MCE))
    solver: SolverConfig = field(default_factory=SolverConfig)
    checks: Tuple[CheckSpec, ...] = ()
    resolution: int = 128
    procedure: Procedure = Procedure.EVOLVE
    second_front: Optional[FieldRecipe] = None
    relabelings: Tuple[str, ...] = ()
    also_on: Tuple["Scenario", ...] = ()
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "procedure", Procedure(self.procedure))
        object.__setattr__(self, "checks", tuple(self.checks))
        object.__setattr__(self, "relabelings", tuple(self.relabelings))
        object.__setattr__(self, "also_on", tuple(self.also_on))

    def grid(self) -> ChartGrid:
        return self.manifold.default_grid(self.resolution)

    def check(self, name: str) -> Optional[CheckSpec]:
        return next((c for c in self.checks if c.name == name), None)

    def with_resolution(self, resolution: int) -> "Scenario":
        return dataclasses.replace(self, resolution=resolution,
                                   also_on=tuple(s.with_resolution(resolution) for s in self.also_on))

    def with_workers(self, workers: int) -> "Scenario":
        return dataclasses.replace(self, solver=self.solver.model_copy(update={"workers": workers}),
                                   also_on=tuple(s.with_workers(workers) for s in self.also_on))

    def validate(self) -> "Scenario":
        """
        Resolve every registry name.

        Raises:
            ConfigError: unknown name or a check the procedure cannot feed
        """
        if self.resolution < 8:
            raise ConfigError(f"resolution must be at least 8, got {self.resolution}", key="resolution")
        for key, recipe in (("initial", self.initial), ("second_front", self.second_front)):
            if recipe is None:
                continue
            generator = INITIAL_FIELDS.get(recipe.name)
            if generator is None:
                raise ConfigError(f"unknown initial field '{recipe.name}' (known: {sorted(INITIAL_FIELDS)})",
                                  key=f"{key}.name")
            if generator.revolution_only and not self.manifold.is_revolution:
                raise ConfigError(f"initial field '{recipe.name}' needs a surface of revolution",
                                  key=f"{key}.name")
        for theta in self.relabelings:
            get_relabeling(theta)
        for spec in self.checks:
            definition = CHECKS.get(spec.name)
            if definition is None:
                raise ConfigError(f"unknown check '{spec.name}' (known: {sorted(CHECKS)})", key="checks")
            if self.procedure not in definition.procedures:
                raise ConfigError(f"check '{spec.name}' does not apply to a {self.procedure.value} scenario",
                                  key="checks")
        if self.procedure is Procedure.DISTANCE_DECAY and self.second_front is None:
            raise ConfigError("a distance_decay scenario needs a second_front", key="second_front")
        if self.procedure is Procedure.INVARIANCE and not self.relabelings:
            raise ConfigError("an invariance scenario needs at least one relabeling", key="relabelings")
        if self.procedure is Procedure.SIGN_PATTERN and not self.manifold.is_revolution:
            raise ConfigError("a sign_pattern scenario needs a surface of revolution", key="manifold")
        for base in self.also_on:
            base.validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "name": self.name,
            "procedure": self.procedure.value,
            "manifold": self.manifold.to_dict(),
            "initial": self.initial.to_dict(),
            "operator": self.operator.to_dict(),
            "solver": self.solver.model_dump(mode="json", by_alias=True),
            "checks": [c.to_dict() for c in self.checks],
            "resolution": self.resolution,
        }
        if self.second_front is not None:
            data["second_front"] = self.second_front.to_dict()
        if self.relabelings:
            data["relabelings"] = list(self.relabelings)
        if self.also_on:
            data["also_on"] = [s.to_dict() for s in self.also_on]
        return data


SCENARIOS: Dict[str, Scenario] = {}


def register_scenario(scenario: Scenario) -> Scenario:
    SCENARIOS[scenario.name] = scenario.validate()
    return scenario


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario '{name}' (known: {sorted(SCENARIOS)})", key="scenario") from None


def list_scenarios() -> List[Scenario]:
    return list(SCENARIOS.values())


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become None."""
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    return value


@dataclass
class CheckResult:
    """Outcome of one check; passed None means recorded only."""
    name: str
    passed: Optional[bool]
    value: Optional[float]
    tolerance: Optional[float]
    detail: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return _jsonable({"name": self.name, "passed": self.passed, "value": self.value,
                          "tolerance": self.tolerance, "detail": self.detail})


@dataclass
class ScenarioReport:
    """Pass/fail per check, measured series and artifact paths of one run."""
    scenario: str
    procedure: str
    resolution: int
    checks: List[CheckResult] = field(default_factory=list)
    series: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)
    error: Optional[str] = None
    elapsed: float = 0.0
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed is not False for c in self.checks)

    @property
    def failed_checks(self) -> List[str]:
        return [c.name for c in self.checks if c.passed is False]

    def check(self, name: str) -> Optional[CheckResult]:
        return next((c for c in self.checks if c.name == name), None)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": artifacts.REPORT_FORMAT,
            "format_version": artifacts.SCHEMA_VERSION,
            "scenario": self.scenario,
            "procedure": self.procedure,
            "passed": self.passed,
            "error": self.error,
            "elapsed_seconds": self.elapsed,
            "resolution": self.resolution,
            "checks": [c.to_dict() for c in self.checks],
            "series": _jsonable(self.series),
            "artifacts": dict(self.artifacts),
            "config": _jsonable(self.config),
        }


# ---------------------------------------------------------------------------
# Measurements
# ---------------------------------------------------------------------------

def extinction_time(trajectory: Trajectory, inside_sign: float = 1.0) -> float:
    """
    First time the inside extreme (max u, or −min u for inside-negative
    fields) reaches 0, interpolated between steps; inf if it never does.
    """
    previous: Optional[Tuple[float, float]] = None
    for row in trajectory.series:
        extreme = row["max"] if inside_sign > 0 else -row["min"]
        if extreme <= 0.0:
            if previous is None:
                return float(row["time"])
            t0, e0 = previous
            return t0 + (row["time"] - t0) * e0 / (e0 - extreme)
        previous = (row["time"], extreme)
    return math.inf


def front_radius(contour: Contour, center: Sequence[float] = (0.0, 0.0)) -> float:
    """Mean chart distance of the contour vertices from center."""
    vertices = contour.require_vertices()
    return float(np.mean(np.hypot(vertices[:, 0] - center[0], vertices[:, 1] - center[1])))


def lipschitz_constant(u, m: MetricField,
                       edges: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None) -> float:
    """max over 8-neighbour grid edges of |Δu| / metric edge length."""
    values = np.ravel(np.asarray(getattr(u, "values", u), dtype=float))
    rows, cols, lengths = edges if edges is not None else grid_edges(m)
    return float(np.max(np.abs(values[rows] - values[cols]) / lengths))


def lipschitz_series(trajectory: Trajectory, m: MetricField) -> List[Dict[str, float]]:
    edges = grid_edges(m)
    return [{"time": snap.time, "lipschitz": lipschitz_constant(snap, m, edges)} for snap in trajectory.snapshots]


@dataclass
class ProbeReport:
    """Residuals of the discrete jet against the level-set equation at sampled nodes."""
    nodes: int
    passed_nodes: int
    degenerate_nodes: int
    tolerance: float
    gradient_cutoff: float
    max_residual: float
    histogram: Dict[str, int]
    required_rate: float = 0.99
    modulus: str = "r^1.5"

    @property
    def pass_rate(self) -> float:
        return self.passed_nodes / self.nodes if self.nodes else 0.0

    @property
    def passed(self) -> bool:
        return self.nodes > 0 and self.pass_rate >= self.required_rate

    def to_dict(self) -> Dict[str, Any]:
        return _jsonable({
            "nodes": self.nodes, "passed_nodes": self.passed_nodes, "degenerate_nodes": self.degenerate_nodes,
            "pass_rate": self.pass_rate, "required_rate": self.required_rate, "tolerance": self.tolerance,
            "gradient_cutoff": self.gradient_cutoff, "max_residual": self.max_residual,
            "histogram": self.histogram, "modulus": self.modulus, "passed": self.passed,
        })


def probe_modulus(r: float) -> float:
    """w(r) = r^{3/2}, so w(r)/r -> 0."""
    return r ** 1.5


_PROBE_BINS = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, math.inf)


def default_probe_sample(u: np.ndarray, grid: ChartGrid, band: float = PROBE_BAND_FACTOR) -> np.ndarray:
    """Nodes within band·h of the zero set, away from non-periodic chart edges."""
    mask = np.abs(u) <= band * grid.h_min
    if not grid.periodic[0]:
        mask[0, :] = mask[-1, :] = False
    if not grid.periodic[1]:
        mask[:, 0] = mask[:, -1] = False
    return mask


def viscosity_probe(snapshots: Sequence[LevelSetField], m: MetricField, op: CurvatureOperator,
                    sample: Optional[np.ndarray] = None, eps_grad: Optional[float] = None,
                    tolerance: Optional[float] = None, required_rate: float = 0.99) -> ProbeReport:
    """
    Check the discrete jet (a, ζ, A) of the last two snapshots against
    a + F(ζ, A) = 0.

    The jet is taken from the midpoint field with a = Δu/Δt. Nodes with
    |ζ| ≥ 10·eps_grad pass when |a + F| ≤ tolerance; the others pass when
    |a| ≤ tolerance + w(Δt)/Δt.

    Args:
        snapshots: at least two consecutive snapshots
        m: metric on their grid
        op: operator the field was evolved with
        sample: boolean node mask or (k, 2) node indices; default: a band around the zero set
        eps_grad: gradient floor (default h²)
        tolerance: consistency tolerance (default 20·h)
        required_rate: pass-rate threshold of the report
    """
    if len(snapshots) < 2:
        raise ValueError("viscosity_probe needs at least two snapshots")
    first, second = snapshots[-2], snapshots[-1]
    dt = second.time - first.time
    if dt <= 0.0:
        raise ValueError(f"snapshots are not increasing in time ({first.time} -> {second.time})")
    h = m.grid.h_min
    tol = PROBE_TOLERANCE_FACTOR * h if tolerance is None else tolerance
    eps = h * h if eps_grad is None else eps_grad
    cutoff = PROBE_GRADIENT_FACTOR * eps

    mid = 0.5 * (first.values + second.values)
    rate = (second.values - first.values) / dt
    zeta, _ = gradient_field(mid, m)
    hess = covariant_hessian_field(mid, m, zeta)
    norm = np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", zeta, m.g_inv, zeta), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        speed = eval_F_field(op, zeta, hess, m.g_inv, 0.0)

    if sample is None:
        mask = default_probe_sample(mid, m.grid)
    else:
        sample = np.asarray(sample)
        if sample.dtype == bool:
            mask = sample
        else:
            mask = np.zeros(m.grid.shape, dtype=bool)
            mask[sample[:, 0], sample[:, 1]] = True

    degenerate = norm < cutoff
    residual = np.where(degenerate, np.abs(rate), np.abs(rate + np.nan_to_num(speed)))
    allowed = np.where(degenerate, tol + probe_modulus(dt) / dt, tol)
    ok = residual <= allowed

    picked = residual[mask]
    counts, _ = np.histogram(picked / tol, bins=_PROBE_BINS)
    labels = [f"{a:g}-{b:g}" for a, b in zip(_PROBE_BINS, _PROBE_BINS[1:])]
    report = ProbeReport(
        nodes=int(mask.sum()),
        passed_nodes=int(ok[mask].sum()),
        degenerate_nodes=int(degenerate[mask].sum()),
        tolerance=tol,
        gradient_cutoff=cutoff,
        max_residual=float(picked.max()) if picked.size else 0.0,
        histogram=dict(zip(labels, (int(c) for c in counts))),
        required_rate=required_rate,
    )
    logger.debug(f"Probe at t={second.time:.4g}: {report.passed_nodes}/{report.nodes} nodes within tolerance")
    return report


# ---------------------------------------------------------------------------
# Run context
# ---------------------------------------------------------------------------

@dataclass
class FrontRun:
    """One evolved field with the contours of its snapshots."""
    label: str
    trajectory: Trajectory
    contours: List[Contour]


@dataclass
class RunContext:
    """Data a procedure hands to the checks."""
    scenario: Scenario
    metric: Optional[MetricField] = None
    runs: Dict[str, FrontRun] = field(default_factory=dict)
    series: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    values: Dict[str, Any] = field(default_factory=dict)

    @property
    def primary(self) -> FrontRun:
        if not self.runs:
            raise ValueError(f"scenario '{self.scenario.name}' produced no evolution")
        return next(iter(self.runs.values()))


@dataclass
class RunOptions:
    output_dir: Optional[Path] = None
    checkpoint_every: int = 0
    resume: bool = False
    progress: bool = False
    pool: Optional[WorkerPool] = None
    on_checkpoint: Optional[Callable[[Path, SolverState], None]] = None


def _evolve_front(ctx: RunContext, label: str, u0: LevelSetField, options: RunOptions) -> FrontRun:
    sc, m = ctx.scenario, ctx.metric
    out = options.output_dir / label if options.output_dir else None
    checkpoint = out / CHECKPOINT_NAME if out else None
    resume_state: Optional[SolverState] = None
    prior: List[LevelSetField] = []
    prior_series: List[Dict[str, float]] = []

    if options.resume and checkpoint is not None and checkpoint.exists():
        resume_state, prior_series = artifacts.read_checkpoint(checkpoint)
        if resume_state.field.grid != m.grid:
            raise ConfigError(f"checkpoint {checkpoint} was written for a different grid", key="resolution")
        prior = [artifacts.read_snapshot(out / "fields" / snapshot_name(k))
                 for k in range(resume_state.snapshot_index + 1)]
        logger.info(f"Resuming {sc.name}/{label} from step {resume_state.step_index}")

    def on_snapshot(u: LevelSetField, index: int) -> None:
        if out is not None:
            artifacts.write_snapshot(u, out / "fields" / snapshot_name(index))

    def on_checkpoint(state: SolverState, trajectory: Trajectory) -> None:
        series = prior_series + trajectory.series[1:] if resume_state else trajectory.series
        artifacts.write_checkpoint(state, checkpoint, series)
        if options.on_checkpoint:
            options.on_checkpoint(checkpoint, state)

    trajectory = evolve(
        u0, m, sc.operator, sc.solver, pool=options.pool,
        checkpoint_every=options.checkpoint_every,
        on_checkpoint=on_checkpoint if checkpoint is not None else None,
        on_snapshot=on_snapshot, resume=resume_state, progress=options.progress,
    )
    if resume_state is not None:
        trajectory.snapshots = prior + trajectory.snapshots
        trajectory.series = prior_series + trajectory.series[1:]
    contours = [extract_contour(snap, 0.0) for snap in trajectory.snapshots]
    run = FrontRun(label, trajectory, contours)
    ctx.runs[label] = run
    ctx.series[f"{label}_snapshots"] = [
        {"time": snap.time, "max": float(np.max(snap.values)), "min": float(np.min(snap.values)),
         "vertices": len(c.vertices), "length": c.metric_length(m) if not c.empty else 0.0}
        for snap, c in zip(trajectory.snapshots, contours)
    ]
    return run


def _prepare(ctx: RunContext) -> MetricField:
    if ctx.metric is None:
        ctx.metric = build_manifold(ctx.scenario.manifold, ctx.scenario.grid())
    return ctx.metric


# ---------------------------------------------------------------------------
# Procedures
# ---------------------------------------------------------------------------

def _procedure_evolve(ctx: RunContext, options: RunOptions) -> None:
    m = _prepare(ctx)
    _evolve_front(ctx, "front", build_initial_field(ctx.scenario.initial, ctx.scenario.manifold, m.grid), options)


def _procedure_lipschitz(ctx: RunContext, options: RunOptions) -> None:
    _procedure_evolve(ctx, options)
    ctx.series["lipschitz"] = lipschitz_series(ctx.primary.trajectory, ctx.metric)


def _procedure_distance_decay(ctx: RunContext, options: RunOptions) -> None:
    sc = ctx.scenario
    m = _prepare(ctx)
    front = _evolve_front(ctx, "front", build_initial_field(sc.initial, sc.manifold, m.grid), options)
    other = _evolve_front(ctx, "second_front", build_initial_field(sc.second_front, sc.manifold, m.grid), options)
    rows = []
    for a, b in zip(front.contours, other.contours):
        distance = math.nan if a.empty or b.empty else front_distance(a, b, m, FrontDistanceMode.MIN)
        rows.append({"time": a.source_time, "distance": distance})
    ctx.series["front_distance"] = rows


@dataclass
class ZeroSetReport:
    """
    Chart Hausdorff distances between the zero sets of two runs of a scenario,
    snapshot by snapshot.

    Attributes:
        comparison: what differs between the runs, e.g. a relabeling name
        h: grid spacing the tolerance is measured in
    """
    scenario: str
    comparison: str
    h: float
    tolerance: float
    rows: List[Dict[str, Any]]

    @property
    def max_distance(self) -> float:
        return max((row["hausdorff"] for row in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_distance <= self.tolerance

    def to_dict(self) -> Dict[str, Any]:
        return _jsonable({"scenario": self.scenario, "comparison": self.comparison, "h": self.h,
                          "tolerance": self.tolerance, "max_distance": self.max_distance,
                          "passed": self.passed, "rows": self.rows})


def invariance_test(sc: Scenario, theta: str, pool: Optional[WorkerPool] = None,
                    tolerance_factor: float = 3.0) -> ZeroSetReport:
    """
    Evolve u0 and θ∘u0 and compare zero sets snapshot by snapshot.

    Args:
        sc: base scenario (EVOLVE semantics; its checks are ignored)
        theta: registered relabeling name
        pool: worker pool for F evaluation
        tolerance_factor: allowed chart Hausdorff distance in units of h_min
    """
    relabel = get_relabeling(theta)
    grid = sc.grid()
    m = build_manifold(sc.manifold, grid)
    u0 = build_initial_field(sc.initial, sc.manifold, grid)
    plain = evolve(u0, m, sc.operator, sc.solver, pool=pool)
    relabeled = evolve(u0.map(relabel.fn), m, sc.operator, sc.solver, pool=pool)
    rows = []
    for a, b in zip(plain.snapshots, relabeled.snapshots):
        ca, cb = extract_contour(a, 0.0), extract_contour(b, 0.0)
        rows.append({
            "time": a.time,
            "hausdorff": chart_hausdorff(ca, cb, grid),
            "identical": bool(np.array_equal(ca.vertices, cb.vertices)),
        })
    report = ZeroSetReport(sc.name, relabel.name, grid.h_min, tolerance_factor * grid.h_min, rows)
    logger.info(f"Invariance {sc.name} under {relabel.expression}: max Hausdorff "
                f"{report.max_distance:.3g} (tolerance {report.tolerance:.3g})")
    return report


def _procedure_invariance(ctx: RunContext, options: RunOptions) -> None:
    sc = ctx.scenario
    spec = sc.check("contour_hausdorff")
    factor = spec.tolerance if spec and spec.tolerance is not None else CHECKS["contour_hausdorff"].tolerance
    reports = []
    for base in (sc, *sc.also_on):
        for theta in sc.relabelings:
            reports.append(invariance_test(base, theta, options.pool, factor))
    ctx.values["invariance"] = reports
    ctx.series["invariance"] = [
        {"base": r.scenario, "relabeling": r.comparison, **row} for r in reports for row in r.rows
    ]


# ---------------------------------------------------------------------------
# Convergence and scheme agreement
# ---------------------------------------------------------------------------

CONSISTENCY_RESOLUTIONS = (17, 33, 65, 129)


@dataclass
class ConsistencyReport:
    """Discrete F against the exact F on a smooth radial field, one row per resolution."""
    operator: str
    required_order: float
    rows: List[Dict[str, float]]

    @property
    def min_order(self) -> float:
        return min((row["order"] for row in self.rows[1:]), default=math.nan)

    @property
    def passed(self) -> bool:
        return len(self.rows) > 1 and self.min_order >= self.required_order

    def to_dict(self) -> Dict[str, Any]:
        return _jsonable({"operator": self.operator, "required_order": self.required_order,
                          "min_order": self.min_order, "passed": self.passed, "rows": self.rows})


def consistency_order(op: Optional[CurvatureOperator] = None,
                      resolutions: Sequence[int] = CONSISTENCY_RESOLUTIONS,
                      annulus: Tuple[float, float] = (0.25, 0.75),
                      required_order: float = 1.8, sign: float = 1.0) -> ConsistencyReport:
    """
    Observed order of the discrete operator on u = sign·exp(−|x|²) in the
    Euclidean chart.

    The error at a resolution is max |F_h − F| over nodes with
    annulus[0] <= |x| <= annulus[1], F taking the exact gradient and Hessian.
    Resolutions 2^k + 1 halve h from one to the next.
    """
    op = op or CurvatureOperator(OperatorKind.MCE)
    spec = ManifoldSpec.euclidean()
    cfg = SolverConfig()
    rows: List[Dict[str, float]] = []
    for n in resolutions:
        grid = spec.default_grid(int(n))
        m = build_manifold(spec, grid)
        s, t = grid.mesh()
        u = sign * np.exp(-(s * s + t * t))
        zeta = np.stack([-2.0 * s * u, -2.0 * t * u], axis=-1)
        hess = np.empty(grid.shape + (2, 2))
        hess[..., 0, 0] = (4.0 * s * s - 2.0) * u
        hess[..., 1, 1] = (4.0 * t * t - 2.0) * u
        hess[..., 0, 1] = hess[..., 1, 0] = 4.0 * s * t * u
        exact = eval_F_field(op, zeta, hess, m.g_inv)
        r = np.hypot(s, t)
        band = (r >= annulus[0]) & (r <= annulus[1])
        error = float(np.max(np.abs(compute_speed(u, m, op, cfg) - exact)[band]))
        row = {"resolution": int(n), "h": grid.h_min, "error": error}
        if rows:
            previous = rows[-1]
            if error == 0.0 or previous["error"] == 0.0:
                row["order"] = math.inf if error <= previous["error"] else -math.inf
            else:
                row["order"] = math.log(previous["error"] / error) / math.log(previous["h"] / grid.h_min)
        rows.append(row)
    report = ConsistencyReport(op.kind.value, required_order, rows)
    logger.info(f"Consistency of {op.kind.value}: minimum observed order {report.min_order:.3f}")
    return report


def _zero_set_rows(a: Trajectory, b: Trajectory, grid: ChartGrid, until: float) -> List[Dict[str, Any]]:
    rows = []
    for x, y in zip(a.snapshots, b.snapshots):
        if x.time > until + 1e-12:
            break
        rows.append({"time": x.time, "other_time": y.time,
                     "hausdorff": chart_hausdorff(extract_contour(x, 0.0), extract_contour(y, 0.0), grid)})
    return rows


def grid_refinement_test(sc: Scenario, until: float = 0.05, coarse: Optional[int] = None,
                         tolerance_factor: float = 4.0, pool: Optional[WorkerPool] = None) -> ZeroSetReport:
    """
    Evolve the scenario's initial field on a coarse grid and at sc.resolution
    and compare zero sets at the shared snapshot times up to `until`.

    Args:
        sc: scenario with EVOLVE semantics; its checks are ignored
        until: last compared time
        coarse: coarse resolution, half of sc.resolution by default
        tolerance_factor: allowed chart Hausdorff distance in units of the coarse h_min
    """
    coarse = int(coarse or sc.resolution // 2)
    if not 8 <= coarse < sc.resolution:
        raise ConfigError(f"coarse resolution {coarse} must lie in [8, {sc.resolution})", key="resolution")
    cfg = sc.solver.model_copy(update={"t_end": min(until, sc.solver.t_end)})
    runs = []
    for resolution in (coarse, sc.resolution):
        grid = sc.manifold.default_grid(resolution)
        m = build_manifold(sc.manifold, grid)
        runs.append(evolve(build_initial_field(sc.initial, sc.manifold, grid), m, sc.operator, cfg, pool=pool))
    coarse_grid = sc.manifold.default_grid(coarse)
    rows = _zero_set_rows(runs[0], runs[1], coarse_grid, cfg.t_end)
    report = ZeroSetReport(sc.name, f"resolution {coarse}/{sc.resolution}", coarse_grid.h_min,
                           tolerance_factor * coarse_grid.h_min, rows)
    logger.info(f"Grid refinement {sc.name} {coarse}/{sc.resolution}: max Hausdorff "
                f"{report.max_distance:.3g} (tolerance {report.tolerance:.3g})")
    return report


def scheme_robustness_test(sc: Scenario, until: Optional[float] = None, tolerance_factor: float = 2.0,
                           pool: Optional[WorkerPool] = None, reference: Optional[Trajectory] = None,
                           metric: Optional[MetricField] = None) -> ZeroSetReport:
    """
    Compare zero sets of REGULARIZED and FREEZE_DEGENERATE runs of a scenario.

    Args:
        until: last compared time (t_end by default)
        reference: an existing run of sc with its own scheme; reused instead of evolving again
        metric: sampled metric of sc.grid(), built when omitted
    """
    grid = sc.grid()
    m = metric or build_manifold(sc.manifold, grid)
    limit = sc.solver.t_end if until is None else min(until, sc.solver.t_end)
    u0 = build_initial_field(sc.initial, sc.manifold, grid)
    runs: Dict[Scheme, Trajectory] = {}
    for scheme in (Scheme.REGULARIZED, Scheme.FREEZE_DEGENERATE):
        if reference is not None and scheme is sc.solver.scheme:
            runs[scheme] = reference
        else:
            cfg = sc.solver.model_copy(update={"scheme": scheme, "t_end": limit})
            runs[scheme] = evolve(u0, m, sc.operator, cfg, pool=pool)
    rows = _zero_set_rows(runs[Scheme.REGULARIZED], runs[Scheme.FREEZE_DEGENERATE], grid, limit)
    report = ZeroSetReport(sc.name, "regularized/freeze_degenerate", grid.h_min,
                           tolerance_factor * grid.h_min, rows)
    logger.info(f"Scheme agreement {sc.name}: max Hausdorff {report.max_distance:.3g} "
                f"(tolerance {report.tolerance:.3g})")
    return report


@dataclass
class SignPatternReport:
    """Sign of r'/(r v)·sign(s) across the meridian."""
    profile: str
    s_range: float
    samples: List[Dict[str, float]]
    left: Dict[str, bool]
    right: Dict[str, bool]
    sign_changes: List[float]
    classification: DistanceSign
    control: str
    control_violations: int
    hyperboloid: DistanceSign

    @property
    def mixed(self) -> bool:
        return all(self.left.values()) and all(self.right.values())

    @property
    def passed(self) -> bool:
        return self.mixed and self.control_violations == 0 and self.hyperboloid is DistanceSign.SUBSOLUTION

    def to_dict(self) -> Dict[str, Any]:
        return _jsonable({
            "profile": self.profile, "s_range": self.s_range, "left": self.left, "right": self.right,
            "sign_changes": self.sign_changes, "classification": self.classification,
            "control": self.control, "control_violations": self.control_violations,
            "hyperboloid": self.hyperboloid, "mixed": self.mixed, "passed": self.passed,
        })


def supersolution_sign_test(profile: str = "one_plus_cos2", s_range: float = 2.0, samples: int = 401,
                            control: str = "constant(1)", tolerance: float = 1e-12) -> SignPatternReport:
    """
    Sample r'/(r v)·sign(s) on [−s_range, s_range] and report where it is
    positive and negative. The profile should show both signs on each side
    of the equator; the control profile must never be positive; the
    hyperboloid must classify as a subsolution.
    """
    prof = parse_profile(profile)
    s = np.linspace(-s_range, s_range, samples)
    s = s[s != 0.0]
    curvature = np.asarray(expected_mean_curvature(prof, s))
    signed = curvature * np.sign(s)
    right, left = s > 0, s < 0

    def sides(mask: np.ndarray) -> Dict[str, bool]:
        return {"positive": bool(np.any(signed[mask] > tolerance)),
                "negative": bool(np.any(signed[mask] < -tolerance))}

    strict = np.where(np.abs(signed) > tolerance, np.sign(signed), 0.0)
    changes = [float(0.5 * (s[i] + s[i + 1])) for i in range(len(s) - 1)
               if strict[i] * strict[i + 1] < 0 and s[i] * s[i + 1] > 0]

    control_profile = parse_profile(control)
    control_signed = np.asarray(control_profile.dr(s)) * np.sign(s)
    report = SignPatternReport(
        profile=prof.name,
        s_range=s_range,
        samples=[{"s": float(a), "curvature": float(c), "signed": float(v)}
                 for a, c, v in zip(s, curvature, signed)],
        left=sides(left),
        right=sides(right),
        sign_changes=changes,
        classification=classify_distance_sign(prof, s, tolerance),
        control=control_profile.name,
        control_violations=int(np.sum(control_signed > tolerance)),
        hyperboloid=classify_distance_sign(parse_profile("hyperboloid"), s, tolerance),
    )
    logger.info(f"Sign pattern of {prof.name} on |s| <= {s_range}: {report.classification.value}, "
                f"sign changes at {[round(c, 3) for c in changes]}")
    return report


def _procedure_sign_pattern(ctx: RunContext, options: RunOptions) -> None:
    sc = ctx.scenario
    (a, b), _ = sc.manifold.bounds
    report = supersolution_sign_test(sc.manifold.profile.name, max(abs(a), abs(b)))
    ctx.values["sign_pattern"] = report
    ctx.series["sign_pattern"] = report.samples


PROCEDURES: Dict[Procedure, Callable[[RunContext, RunOptions], None]] = {
    Procedure.EVOLVE: _procedure_evolve,
    Procedure.LIPSCHITZ: _procedure_lipschitz,
    Procedure.DISTANCE_DECAY: _procedure_distance_decay,
    Procedure.INVARIANCE: _procedure_invariance,
    Procedure.SIGN_PATTERN: _procedure_sign_pattern,
}


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

CheckFunction = Callable[[RunContext, CheckSpec, float], CheckResult]

_EVOLVING = (Procedure.EVOLVE, Procedure.LIPSCHITZ)
_FRONTS = (Procedure.EVOLVE, Procedure.LIPSCHITZ, Procedure.DISTANCE_DECAY)


@dataclass(frozen=True)
class CheckDefinition:
    name: str
    fn: CheckFunction
    tolerance: Optional[float]
    procedures: FrozenSet[Procedure]
    description: str = ""


CHECKS: Dict[str, CheckDefinition] = {}


def register_check(name: str, tolerance: Optional[float], procedures: Sequence[Procedure] = _EVOLVING):
    """Register a check with its default tolerance and the procedures that feed it."""
    def register(fn: CheckFunction) -> CheckFunction:
        summary = (fn.__doc__ or "").strip().splitlines()[0] if fn.__doc__ else ""
        CHECKS[name] = CheckDefinition(name, fn, tolerance, frozenset(procedures), summary)
        return fn
    return register


def _inside_sign(sc: Scenario) -> float:
    return float(sc.initial.params.get("inside_sign", sc.initial.params.get("sign", 1.0)))


@register_check("extinction_time", tolerance=0.05)
def _check_extinction_time(ctx: RunContext, spec: CheckSpec, tolerance: float) -> CheckResult:
    """Extinction time within a relative tolerance of R0²/2 (or params.expected)."""
    sc = ctx.scenario
    radius = float(sc.initial.params.get("radius", 0.5))
    expected = float(spec.params.get("expected", radius * radius / 2.0))
    measured = extinction_time(ctx.primary.trajectory, _inside_sign(sc))
    error = abs(measured - expected) / expected
    return CheckResult(spec.name, error <= tolerance, measured, tolerance,
                       {"expected": expected, "relative_error": error})


@register_check("radius_trajectory", tolerance=0.02)
def _check_radius_trajectory(ctx: RunContext, spec: CheckSpec, tolerance: float) -> CheckResult:
    """Front radius within a relative tolerance of sqrt(R0² − 2t) for t <= until."""
    sc = ctx.scenario
    center = tuple(sc.initial.params.get("center", (0.0, 0.0)))
    radius = float(sc.initial.params.get("radius", 0.5))
    until = float(spec.params.get("until", 0.1))
    rows, worst = [], 0.0
    for contour in ctx.primary.contours:
        t = contour.source_time
        if t > until + 1e-12:
            break
        expected = math.sqrt(max(radius * radius - 2.0 * t, 0.0))
        measured = front_radius(contour, center) if not contour.empty else 0.0
        error = abs(measured - expected) / expected if expected > 0 else math.inf
        worst = max(worst, error)
        rows.append({"time": t, "radius": measured, "expected": expected, "relative_error": error})
    ctx.series["radius"] = rows
    return CheckResult(spec.name, bool(rows) and worst <= tolerance, worst, tolerance, {"until": until})


@register_check("equator_drift", tolerance=2.0, procedures=_FRONTS)
def _check_equator_drift(ctx: RunContext, spec: CheckSpec, tolerance: float) -> CheckResult:
    """Every snapshot's zero set stays within tolerance·h of the line coordinate[axis] = value."""
    axis = int(spec.params.get("axis", 0))
    value = float(spec.params.get("value", 0.0))
    run = ctx.runs.get(spec.params.get("run", ""), ctx.primary)
    h = ctx.metric.grid.h_min
    worst = 0.0
    for contour in run.contours:
        if contour.empty:
            return CheckResult(spec.name, False, math.inf, tolerance * h,
                               {"empty_at": contour.source_time})
        worst = max(worst, float(np.max(np.abs(contour.vertices[:, axis] - value))))
    return CheckResult(spec.name, worst <= tolerance * h, worst, tolerance * h, {"h": h})


@register_check("max_principle", tolerance=None, procedures=_FRONTS)
def _check_max_principle(ctx: RunContext, spec: CheckSpec, tolerance: Optional[float]) -> CheckResult:
    """max u nonincreasing and min u nondecreasing across snapshots."""
    results = {label: max_principle_check(run.trajectory) for label, run in ctx.runs.items()}
    worst = max(max(r.max_increase, r.min_decrease) for r in results.values())
    return CheckResult(spec.name, all(r.passed for r in results.values()), worst, tolerance,
                       {label: {"max_increase": r.max_increase, "min_decrease": r.min_decrease}
                        for label, r in results.items()})


@register_check("probe_pass_rate", tolerance=0.99, procedures=_FRONTS)
def _check_probe(ctx: RunContext, spec: CheckSpec, tolerance: float) -> CheckResult:
    """Viscosity-probe pass rate on the snapshot pair at the middle of the run."""
    sc = ctx.scenario
    snapshots = ctx.primary.trajectory.snapshots
    if len(snapshots) < 2:
        return CheckResult(spec.name, False, 0.0, tolerance, {"reason": "fewer than two snapshots"})
    index = int(spec.params.get("index", max(1, len(snapshots) // 2)))
    pair = snapshots[index - 1:index + 1]
    eps = sc.solver.resolved_eps(ctx.metric.grid)
    report = viscosity_probe(pair, ctx.metric, sc.operator, eps_grad=eps, required_rate=tolerance)
    return CheckResult(spec.name, report.passed, report.pass_rate, tolerance,
                       {"time": pair[-1].time, **report.to_dict()})


@register_check("lipschitz_bound", tolerance=1.05)
def _check_lipschitz(ctx: RunContext, spec: CheckSpec, tolerance: float) -> CheckResult:
    """L(t) <= tolerance·L(0) before extinction − margin; recorded only off the Euclidean plane."""
    sc = ctx.scenario
    rows = ctx.series.get("lipschitz") or lipschitz_series(ctx.primary.trajectory, ctx.metric)
    ctx.series["lipschitz"] = rows
    if "until" in spec.params:
        until = float(spec.params["until"])
    else:
        margin = float(spec.params.get("extinction_margin", 0.02))
        until = min(extinction_time(ctx.primary.trajectory, _inside_sign(sc)), sc.solver.t_end) - margin
    base = rows[0]["lipschitz"]
    ratios = [row["lipschitz"] / base if base > 0 else 0.0 for row in rows if row["time"] <= until + 1e-12]
    worst = max(ratios, default=0.0)
    detail = {"until": until, "initial": base, "final": rows[-1]["lipschitz"]}
    if sc.manifold.kind is not ManifoldKind.EUCLIDEAN:
        return CheckResult(spec.name, None, worst, None, detail)
    return CheckResult(spec.name, worst <= tolerance, worst, tolerance, detail)


@register_check("initial_front_distance", tolerance=0.03, procedures=(Procedure.DISTANCE_DECAY,))
def _check_initial_distance(ctx: RunContext, spec: CheckSpec, tolerance: float) -> CheckResult:
    """t=0 MIN front distance within a relative tolerance of the meridian arc between the fronts."""
    sc = ctx.scenario
    if "expected" in spec.params:
        expected = float(spec.params["expected"])
    else:
        s0 = float(sc.initial.params.get("s0", 0.0))
        s1 = float(sc.second_front.params.get("s0", 0.0))
        profile = sc.manifold.profile
        expected = abs(profile.meridian_length(s1) - profile.meridian_length(s0))
    measured = ctx.series["front_distance"][0]["distance"]
    error = abs(measured - expected) / expected
    return CheckResult(spec.name, error <= tolerance, measured, tolerance,
                       {"expected": expected, "relative_error": error})


@register_check("distance_decrease", tolerance=1e-4, procedures=(Procedure.DISTANCE_DECAY,))
def _check_distance_decrease(ctx: RunContext, spec: CheckSpec, tolerance: float) -> CheckResult:
    """MIN front distance strictly decreasing across snapshots, by at least tolerance in total."""
    until = float(spec.params.get("until", ctx.scenario.solver.t_end))
    distances = [row["distance"] for row in ctx.series["front_distance"] if row["time"] <= until + 1e-12]
    if len(distances) < 2 or any(math.isnan(d) for d in distances):
        return CheckResult(spec.name, False, None, tolerance, {"distances": distances})
    steps = np.diff(distances)
    total = distances[0] - distances[-1]
    strict = bool(np.all(steps < 0.0))
    return CheckResult(spec.name, strict and total >= tolerance, total, tolerance,
                       {"strictly_decreasing": strict, "until": until})


@register_check("sign_pattern", tolerance=None, procedures=(Procedure.SIGN_PATTERN,))
def _check_sign_pattern(ctx: RunContext, spec: CheckSpec, tolerance: Optional[float]) -> CheckResult:
    """Mixed signs on both sides of the equator; control never positive; hyperboloid a subsolution."""
    report: SignPatternReport = ctx.values["sign_pattern"]
    return CheckResult(spec.name, report.passed, float(len(report.sign_changes)), tolerance, report.to_dict())


@register_check("curvature_formula", tolerance=1e-3, procedures=tuple(Procedure))
def _check_curvature_formula(ctx: RunContext, spec: CheckSpec, tolerance: float) -> CheckResult:
    """Operator pipeline on the analytic distance jet matches r'/(r v) on s ∈ [−1, 1]."""
    profiles = spec.params.get("profiles", ("one_plus_cos2", "hyperboloid"))
    s_values = np.linspace(-1.0, 1.0, int(spec.params.get("samples", 41)))
    worst, per_profile = 0.0, {}
    for name in profiles:
        manifold = ManifoldSpec.revolution(name)
        expected = np.asarray(expected_mean_curvature(manifold.profile, s_values))
        measured = np.array([mean_curvature_of_distance(manifold, float(s)) for s in s_values])
        error = float(np.max(np.abs(measured - expected)))
        per_profile[name] = error
        worst = max(worst, error)
    return CheckResult(spec.name, worst <= tolerance, worst, tolerance, {"max_error": per_profile})


@register_check("contour_hausdorff", tolerance=3.0, procedures=(Procedure.INVARIANCE,))
def _check_contour_hausdorff(ctx: RunContext, spec: CheckSpec, tolerance: float) -> CheckResult:
    """Zero sets of u and θ∘u runs within tolerance·h (chart Hausdorff) at every snapshot."""
    reports: List[ZeroSetReport] = ctx.values["invariance"]
    worst = max(r.max_distance / r.h for r in reports)
    return CheckResult(spec.name, all(r.passed for r in reports), worst, tolerance,
                       {f"{r.scenario}/{r.comparison}": r.max_distance for r in reports})


@register_check("consistency_order", tolerance=1.8, procedures=tuple(Procedure))
def _check_consistency_order(ctx: RunContext, spec: CheckSpec, tolerance: float) -> CheckResult:
    """Observed order of the scenario's discrete operator on a smooth radial field at least tolerance."""
    resolutions = tuple(int(n) for n in spec.params.get("resolutions", CONSISTENCY_RESOLUTIONS))
    sign = float(spec.params.get("sign", _inside_sign(ctx.scenario)))
    report = consistency_order(ctx.scenario.operator, resolutions, required_order=tolerance, sign=sign)
    ctx.series["consistency"] = report.rows
    return CheckResult(spec.name, report.passed, report.min_order, tolerance, report.to_dict())


@register_check("contour_refinement", tolerance=4.0, procedures=_FRONTS)
def _check_contour_refinement(ctx: RunContext, spec: CheckSpec, tolerance: float) -> CheckResult:
    """Zero sets at the scenario resolution and at half of it within tolerance·h_coarse up to params.until."""
    coarse = spec.params.get("coarse")
    report = grid_refinement_test(ctx.scenario, float(spec.params.get("until", 0.05)),
                                  int(coarse) if coarse else None, tolerance)
    ctx.series["contour_refinement"] = report.rows
    return CheckResult(spec.name, report.passed, report.max_distance / report.h, tolerance, report.to_dict())


@register_check("scheme_robustness", tolerance=2.0, procedures=_FRONTS)
def _check_scheme_robustness(ctx: RunContext, spec: CheckSpec, tolerance: float) -> CheckResult:
    """REGULARIZED and FREEZE_DEGENERATE zero sets within tolerance·h at every snapshot up to params.until."""
    until = spec.params.get("until")
    report = scheme_robustness_test(ctx.scenario, None if until is None else float(until), tolerance,
                                    reference=ctx.primary.trajectory, metric=ctx.metric)
    ctx.series["scheme_robustness"] = report.rows
    return CheckResult(spec.name, report.passed, report.max_distance / report.h, tolerance, report.to_dict())


def evaluate_check(ctx: RunContext, spec: CheckSpec) -> CheckResult:
    definition = CHECKS[spec.name]
    tolerance = spec.tolerance if spec.tolerance is not None else definition.tolerance
    try:
        result = definition.fn(ctx, spec, tolerance)
    except Exception as e:
        logger.error(f"Check {spec.name} raised {type(e).__name__}: {e}")
        return CheckResult(spec.name, False, None, tolerance, {"error": f"{type(e).__name__}: {e}"})
    if result.passed is False:
        logger.warning(f"Check {spec.name} failed: value {result.value} vs tolerance {result.tolerance}")
    return result


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

def _write_artifacts(ctx: RunContext, report: ScenarioReport, output_dir: Path) -> None:
    for label, run in ctx.runs.items():
        base = output_dir / label
        for index, contour in enumerate(run.contours):
            artifacts.write_contour_csv(contour, base / "contours" / f"contour_{index:04d}.csv")
            artifacts.write_contour_json(contour, base / "contours" / f"contour_{index:04d}.json")
        report.artifacts[f"{label}/fields"] = str(base / "fields")
        report.artifacts[f"{label}/contours"] = str(base / "contours")
        report.artifacts[f"{label}/steps"] = str(
            artifacts.write_series_csv(run.trajectory.series, base / "steps.csv"))
    for name, rows in ctx.series.items():
        if rows:
            report.artifacts[f"series/{name}"] = str(
                artifacts.write_series_csv(_jsonable(rows), output_dir / "series" / f"{name}.csv"))
    report.artifacts["report"] = str(output_dir / "report.json")
    artifacts.write_report(report.to_dict(), output_dir / "report.json")


def run_scenario(sc: Scenario, output_dir: Optional[Union[str, Path]] = None, *,
                 checkpoint_every: int = 0, resume: bool = False, progress: bool = False,
                 pool: Optional[WorkerPool] = None,
                 on_checkpoint: Optional[Callable[[Path, SolverState], None]] = None) -> ScenarioReport:
    """
    Run a scenario and evaluate its checks.

    Args:
        sc: scenario to run
        output_dir: where fields, contours, series and the report go (None = nothing written)
        checkpoint_every: checkpoint every N solver steps (0 = only on interrupt)
        resume: continue from checkpoints found in output_dir
        progress: show tqdm progress bars
        pool: worker pool for F evaluation
        on_checkpoint: called with the path and state of each written checkpoint

    Returns:
        ScenarioReport; solver and contour errors become a failed report

    Raises:
        ConfigError: the scenario does not validate (nothing is computed)
    """
    sc.validate()
    output = Path(output_dir) if output_dir is not None else None
    options = RunOptions(output, checkpoint_every, resume, progress, pool, on_checkpoint)
    report = ScenarioReport(sc.name, sc.procedure.value, sc.resolution, config=sc.to_dict())
    ctx = RunContext(sc)

    logger.info(f"Running scenario {sc.name} ({sc.procedure.value}, {sc.resolution}x{sc.resolution})")
    started = time.perf_counter()
    try:
        PROCEDURES[sc.procedure](ctx, options)
        report.checks = [evaluate_check(ctx, spec) for spec in sc.checks]
    except Exception as e:
        logger.error(f"Scenario {sc.name} failed: {type(e).__name__}: {e}")
        report.error = f"{type(e).__name__}: {e}"
    report.elapsed = time.perf_counter() - started
    report.series = ctx.series

    if output is not None:
        _write_artifacts(ctx, report, output)

    if report.passed:
        logger.info(f"Scenario {sc.name} passed in {report.elapsed:.1f}s")
    else:
        logger.warning(f"Scenario {sc.name} failed ({report.error or ', '.join(report.failed_checks)})")
    return report


def hyperboloid_distance_decay(resolution: Optional[int] = None, output_dir: Optional[Union[str, Path]] = None,
                               pool: Optional[WorkerPool] = None) -> ScenarioReport:
    """Equator and the latitude s=1 on the hyperboloid: the gap shrinks while the equator stays put."""
    sc = get_scenario("hyperboloid_distance_decay")
    if resolution is not None:
        sc = sc.with_resolution(resolution)
    return run_scenario(sc, output_dir, pool=pool)


def lipschitz_tracking(sc: Scenario, output_dir: Optional[Union[str, Path]] = None,
                       pool: Optional[WorkerPool] = None) -> ScenarioReport:
    """
    Evolve sc and record the metric Lipschitz constant at each snapshot.
    The bound is asserted only on the Euclidean plane.
    """
    check = sc.check("lipschitz_bound") or CheckSpec("lipschitz_bound")
    tracked = dataclasses.replace(sc, procedure=Procedure.LIPSCHITZ, checks=(check,))
    return run_scenario(tracked, output_dir, pool=pool)


# ---------------------------------------------------------------------------
# Comparison on random ordered pairs
# ---------------------------------------------------------------------------

@dataclass
class ComparisonReport:
    """Nodewise ordering of evolved pairs g <= h."""
    manifold: str
    pairs: int
    slack: float
    violations: List[float]

    @property
    def worst(self) -> float:
        return max(self.violations, default=0.0)

    @property
    def failures(self) -> int:
        return sum(1 for v in self.violations if v > 0.0)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_dict(self) -> Dict[str, Any]:
        return _jsonable({"manifold": self.manifold, "pairs": self.pairs, "slack": self.slack,
                          "worst": self.worst, "failures": self.failures, "passed": self.passed})


def comparison_test(spec: ManifoldSpec, pairs: int = 20, seed: int = 0, resolution: int = 48,
                    t_end: float = 0.01, snapshot_every: float = 0.005,
                    op: Optional[CurvatureOperator] = None, slack: float = 1e-8,
                    progress: bool = False) -> ComparisonReport:
    """
    Evolve random smooth g and h = g + (positive smooth gap) and record the
    largest violation of u_g <= u_h + slack per pair.
    """
    op = op or CurvatureOperator(OperatorKind.MCE)
    grid = spec.default_grid(resolution)
    m = build_manifold(spec, grid)
    cfg = SolverConfig(t_end=t_end, snapshot_every=snapshot_every)
    rng = np.random.default_rng(seed)
    violations = []
    for _ in tqdm(range(pairs), disable=not progress, desc=f"comparison[{spec.kind.value}]"):
        lower = random_smooth_field(grid, rng)
        gap = 0.05 + 0.05 * np.tanh(random_smooth_field(grid, rng)) ** 2
        g = LevelSetField(grid, lower)
        h = LevelSetField(grid, lower + gap)
        violations.append(ordering_check(evolve(g, m, op, cfg), evolve(h, m, op, cfg), slack))
    report = ComparisonReport(spec.kind.value, pairs, slack, violations)
    logger.info(f"Comparison on {spec.kind.value}: {report.failures}/{pairs} pairs violated ordering")
    return report


# ---------------------------------------------------------------------------
# Built-in scenarios
# ---------------------------------------------------------------------------

def _circle_recipe(inside_sign: float = 1.0) -> FieldRecipe:
    return FieldRecipe("circle", {"center": (0.0, 0.0), "radius": 0.5, "inside_sign": inside_sign})


def _register_builtin_scenarios() -> None:
    euclid = ManifoldSpec.euclidean()
    hyperboloid = ManifoldSpec.hyperboloid()
    mce = CurvatureOperator(OperatorKind.MCE)
    circle_run = SolverConfig(t_end=0.15, snapshot_every=0.01)

    register_scenario(Scenario(
        name="euclid_shrinking_circle",
        manifold=euclid,
        initial=_circle_recipe(),
        operator=mce,
        solver=circle_run,
        checks=(
            CheckSpec("extinction_time", 0.05, {"expected": 0.125}),
            CheckSpec("radius_trajectory", 0.02, {"until": 0.1}),
            CheckSpec("max_principle"),
            CheckSpec("probe_pass_rate", 0.99),
            CheckSpec("consistency_order", 1.8),
            CheckSpec("contour_refinement", 4.0, {"until": 0.05}),
            CheckSpec("scheme_robustness", 2.0, {"until": 0.1}),
        ),
        description="circle of radius 0.5 shrinking under curve shortening, extinct at t = 0.125",
    ))
    register_scenario(Scenario(
        name="hyperboloid_stationary_equator",
        manifold=hyperboloid,
        initial=FieldRecipe("coordinate", {"axis": 0}),
        operator=mce,
        solver=SolverConfig(t_end=0.5, snapshot_every=0.05),
        checks=(
            CheckSpec("equator_drift", 2.0),
            CheckSpec("max_principle"),
            CheckSpec("probe_pass_rate", 0.99),
            CheckSpec("scheme_robustness", 2.0),
        ),
        description="the hyperboloid neck is a closed geodesic and does not move",
    ))
    register_scenario(Scenario(
        name="hyperboloid_distance_decay",
        manifold=hyperboloid,
        initial=FieldRecipe("latitude_distance", {"s0": 0.0}),
        second_front=FieldRecipe("latitude_distance", {"s0": 1.0}),
        operator=mce,
        solver=SolverConfig(t_end=0.3, snapshot_every=0.05),
        procedure=Procedure.DISTANCE_DECAY,
        checks=(
            CheckSpec("initial_front_distance", 0.03),
            CheckSpec("distance_decrease", 1e-4),
            CheckSpec("equator_drift", 2.0),
        ),
        description="latitude s=1 moves toward the fixed equator; their distance decreases",
    ))
    register_scenario(Scenario(
        name="revolution_supersolution_sign",
        manifold=ManifoldSpec.revolution("one_plus_cos2"),
        initial=FieldRecipe("latitude_distance", {"s0": 0.0}),
        operator=mce,
        procedure=Procedure.SIGN_PATTERN,
        checks=(CheckSpec("sign_pattern"), CheckSpec("curvature_formula", 1e-3)),
        description="sign of r'/(r v)·sign(s) for r = 1 + cos²s, with control and hyperboloid profiles",
    ))
    register_scenario(Scenario(
        name="euclid_gauss_convex",
        manifold=euclid,
        initial=_circle_recipe(inside_sign=-1.0),
        operator=CurvatureOperator(OperatorKind.GCE_PLUS),
        solver=circle_run,
        checks=(
            CheckSpec("extinction_time", 0.05, {"expected": 0.125}),
            CheckSpec("radius_trajectory", 0.02, {"until": 0.1}),
            CheckSpec("max_principle"),
            CheckSpec("scheme_robustness", 2.0, {"until": 0.1}),
        ),
        description="positive Gauss curvature flow of a convex circle (inside negative)",
    ))

    circle_base = Scenario(
        name="invariance_base_circle",
        manifold=euclid,
        initial=_circle_recipe(),
        operator=mce,
        solver=SolverConfig(t_end=0.05, snapshot_every=0.01),
    )
    equator_base = Scenario(
        name="invariance_base_equator",
        manifold=ManifoldSpec.revolution("one_plus_cos2"),
        initial=FieldRecipe("coordinate", {"axis": 0}),
        operator=mce,
        solver=SolverConfig(t_end=0.2, snapshot_every=0.05),
    )
    for theta in ("cube", "tanh", "cubic_linear"):
        register_scenario(dataclasses.replace(
            circle_base,
            name=f"invariance_{theta}",
            procedure=Procedure.INVARIANCE,
            relabelings=(theta,),
            also_on=(equator_base,),
            checks=(CheckSpec("contour_hausdorff", 3.0),),
            description=f"zero sets of u and {RELABELINGS[theta].expression} ∘ u agree (circle and equator)",
        ))

    register_scenario(Scenario(
        name="lipschitz_euclidean",
        manifold=euclid,
        initial=_circle_recipe(),
        operator=mce,
        solver=circle_run,
        procedure=Procedure.LIPSCHITZ,
        checks=(CheckSpec("lipschitz_bound", 1.05, {"extinction_margin": 0.02}),),
        description="Lipschitz constant of the shrinking-circle field stays at its initial value",
    ))
    register_scenario(Scenario(
        name="lipschitz_hyperboloid",
        manifold=hyperboloid,
        initial=FieldRecipe("latitude_band", {"lower": 0.0, "upper": 1.0}),
        operator=mce,
        solver=SolverConfig(t_end=0.3, snapshot_every=0.05),
        procedure=Procedure.LIPSCHITZ,
        checks=(CheckSpec("lipschitz_bound"),),
        description="Lipschitz constant of a two-front field on the hyperboloid (recorded)",
    ))


_register_builtin_scenarios()
