"""
Level-Set Solver

Explicit forward-Euler integration of u_t + F(Du, D²u) = 0 on a chart grid.
Derivatives come from the manifold stencils; F is evaluated per row chunk on
the worker pool, which keeps every node update independent of the worker
count.
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from errors import BlowUp
from manifold import ChartGrid, MetricField, covariant_hessian_field, gradient_field
from operators import CurvatureOperator, OperatorKind, diffusion_scale, eval_F_field
from worker_pool import WorkerPool, row_chunks

logger = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e6


class Scheme(str, enum.Enum):
    """Treatment of nodes with |Du| < eps_grad."""
    REGULARIZED = "regularized"
    FREEZE_DEGENERATE = "freeze_degenerate"


class Boundary(str, enum.Enum):
    """Treatment of non-periodic chart edges."""
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"


class SolverConfig(BaseModel):
    """
    Time-stepping parameters. Field aliases match the config-file keys.

    Attributes:
        cfl_safety: fraction of the explicit stability limit
        eps_grad: gradient floor; None means h_min² of the grid
        t_end: final simulation time (key t_end_seconds)
        snapshot_every: snapshot cadence (key snapshot_every_seconds); None
            means only t=0 and t=t_end
        scheme: degenerate-gradient treatment
        redistance_every: replace u by its signed distance every N steps (0 = off)
        workers: threads used for F evaluation
        boundary: NEUMANN mirrors the field across non-periodic edges;
            DIRICHLET keeps edge values fixed
    """
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    cfl_safety: float = Field(0.4, gt=0.0, le=1.0)
    eps_grad: Optional[float] = Field(None, gt=0.0)
    t_end: float = Field(0.0, ge=0.0, alias="t_end_seconds")
    snapshot_every: Optional[float] = Field(None, gt=0.0, alias="snapshot_every_seconds")
    scheme: Scheme = Scheme.REGULARIZED
    redistance_every: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    boundary: Boundary = Boundary.NEUMANN

    def resolved_eps(self, grid: ChartGrid) -> float:
        return self.eps_grad if self.eps_grad is not None else grid.h_min ** 2

    def snapshot_times(self) -> List[float]:
        """Snapshot boundaries after t=0; the last one is t_end."""
        if self.t_end <= 0.0:
            return []
        every = self.snapshot_every or self.t_end
        count = max(1, math.ceil(self.t_end / every - 1e-9))
        times = [min((j + 1) * every, self.t_end) for j in range(count)]
        times[-1] = self.t_end
        return times


@dataclass(eq=False)
class LevelSetField:
    """Scalar field u(t, ·) on a chart grid."""
    grid: ChartGrid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")
        self.time = float(self.time)

    @classmethod
    def from_function(cls, grid: ChartGrid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
                      time: float = 0.0) -> "LevelSetField":
        s, t = grid.mesh()
        return cls(grid, np.broadcast_to(fn(s, t), grid.shape).astype(np.float64), time)

    def copy(self) -> "LevelSetField":
        return LevelSetField(self.grid, self.values.copy(), self.time)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "LevelSetField":
        return LevelSetField(self.grid, fn(self.values), self.time)


@dataclass
class SolverState:
    """Everything needed to continue an evolution bitwise-identically."""
    field: LevelSetField
    step_index: int = 0
    snapshot_index: int = 0
    reference_scale: float = 1.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "step_index": self.step_index,
            "snapshot_index": self.snapshot_index,
            "reference_scale": self.reference_scale,
        }


@dataclass
class Trajectory:
    """Snapshots plus the per-step time series of an evolution."""
    snapshots: List[LevelSetField] = field(default_factory=list)
    series: List[Dict[str, float]] = field(default_factory=list)
    state: Optional[SolverState] = None

    @property
    def times(self) -> List[float]:
        return [snap.time for snap in self.snapshots]

    @property
    def final(self) -> LevelSetField:
        return self.snapshots[-1]

    def __len__(self) -> int:
        return len(self.snapshots)


def stable_time_step(m: MetricField, op: CurvatureOperator, cfg: SolverConfig) -> float:
    """cfl_safety · h_min² / (max λ_max(g^{-1}) · diffusion scale)."""
    scale = float(np.max(m.inverse_eigenvalue_max)) * diffusion_scale(op)
    return cfg.cfl_safety * m.grid.h_min ** 2 / scale


def compute_speed(u, m: MetricField, op: CurvatureOperator, cfg: SolverConfig,
                  pool: Optional[WorkerPool] = None) -> np.ndarray:
    """F(Du, D²u) at every node."""
    values = np.asarray(getattr(u, "values", u), dtype=float)
    eps = cfg.resolved_eps(m.grid)
    mirror = cfg.boundary is Boundary.NEUMANN
    zeta, _ = gradient_field(values, m, mirror)
    hess = covariant_hessian_field(values, m, zeta, mirror)
    regularization = eps if cfg.scheme is Scheme.REGULARIZED else 0.0

    def evaluate(rows: slice) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return eval_F_field(op, zeta[rows], hess[rows], m.g_inv[rows], regularization)

    chunks = row_chunks(values.shape[0], pool.num_workers if pool else 1)
    parts = pool.map_ordered(evaluate, chunks) if pool else [evaluate(rows) for rows in chunks]
    speed = np.concatenate(parts, axis=0)
    if cfg.scheme is Scheme.FREEZE_DEGENERATE:
        norm = np.sqrt(np.einsum("...i,...ij,...j->...", zeta, m.g_inv, zeta))
        speed[norm < eps] = 0.0
    return speed


def _freeze_boundary(new: np.ndarray, old: np.ndarray, grid: ChartGrid) -> None:
    if not grid.periodic[0]:
        new[0, :] = old[0, :]
        new[-1, :] = old[-1, :]
    if not grid.periodic[1]:
        new[:, 0] = old[:, 0]
        new[:, -1] = old[:, -1]


def step(u: LevelSetField, m: MetricField, op: CurvatureOperator, cfg: SolverConfig,
         dt: Optional[float] = None, pool: Optional[WorkerPool] = None,
         reference_scale: Optional[float] = None) -> LevelSetField:
    """
    One forward-Euler update u <- u - dt·F(Du, D²u).

    With a DIRICHLET boundary, nodes on non-periodic chart edges keep
    their values.

    Raises:
        BlowUp: non-finite values or |u| beyond 1e6 times the reference scale
    """
    if u.grid != m.grid:
        raise ValueError("field and metric live on different grids")
    if dt is None:
        dt = stable_time_step(m, op, cfg)
    if reference_scale is None:
        reference_scale = float(np.max(np.abs(u.values))) or 1.0
    speed = compute_speed(u, m, op, cfg, pool)
    new = u.values - dt * speed
    if cfg.boundary is Boundary.DIRICHLET:
        _freeze_boundary(new, u.values, u.grid)
    bad = ~np.isfinite(new) | (np.abs(new) > BLOWUP_FACTOR * reference_scale)
    if np.any(bad):
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise BlowUp(f"solution blew up at node {node}, t={u.time + dt:.6g}", node=node, time=u.time + dt)
    return LevelSetField(u.grid, new, u.time + dt)


def _redistance(u: LevelSetField, m: MetricField) -> LevelSetField:
    from levelsets import redistance
    return redistance(u, m)


def evolve(u0: LevelSetField, m: MetricField, op: CurvatureOperator, cfg: SolverConfig,
           pool: Optional[WorkerPool] = None, checkpoint_every: int = 0,
           on_checkpoint: Optional[Callable[[SolverState, Trajectory], None]] = None,
           on_snapshot: Optional[Callable[[LevelSetField, int], None]] = None,
           resume: Optional[SolverState] = None, progress: bool = False) -> Trajectory:
    """
    Step until t_end, recording snapshots at the configured cadence.

    Args:
        u0: initial field (ignored when resuming)
        m: metric on the same grid
        op: curvature operator
        cfg: solver configuration
        pool: worker pool for F evaluation; created from cfg.workers if omitted
        checkpoint_every: call on_checkpoint every N steps (0 = never)
        on_checkpoint: receives the state after a completed step and the
            trajectory so far
        on_snapshot: receives each snapshot and its index as it is taken
        resume: continue from a checkpointed state
        progress: show a tqdm bar over simulation time

    Returns:
        Trajectory with t=0 (unless resumed) and every snapshot boundary

    Raises:
        BlowUp: with the trajectory computed so far attached
    """
    if pool is None and cfg.workers > 1:
        with WorkerPool(num_workers=cfg.workers) as owned:
            return evolve(u0, m, op, cfg, owned, checkpoint_every, on_checkpoint, on_snapshot, resume, progress)

    boundaries = cfg.snapshot_times()
    dt_stable = stable_time_step(m, op, cfg)
    if resume is None:
        state = SolverState(u0, 0, 0, float(np.max(np.abs(u0.values))) or 1.0)
        trajectory = Trajectory([u0])
        if on_snapshot:
            on_snapshot(u0, 0)
    else:
        state = resume
        trajectory = Trajectory()
        logger.warning(f"Resuming evolution at step {state.step_index}, t={state.field.time:.6g}")
    trajectory.series.append({"step": state.step_index, "time": state.field.time, "dt": 0.0,
                              "max": float(np.max(state.field.values)), "min": float(np.min(state.field.values))})
    logger.info(f"Evolving {op.label()} to t={cfg.t_end} with dt={dt_stable:.3e} "
                f"({len(boundaries)} snapshots, scheme {cfg.scheme.value})")

    u = state.field
    step_index = state.step_index
    target_index = state.snapshot_index
    bar = tqdm(total=cfg.t_end, initial=u.time, disable=not progress, unit="t", desc=op.label())
    try:
        while target_index < len(boundaries):
            target = boundaries[target_index]
            remaining = target - u.time
            reached = remaining <= dt_stable
            dt = remaining if reached else dt_stable
            try:
                u = step(u, m, op, cfg, dt=dt, pool=pool, reference_scale=state.reference_scale)
            except BlowUp as exc:
                exc.trajectory = trajectory
                raise
            if reached:
                u.time = target
            step_index += 1
            if cfg.redistance_every and step_index % cfg.redistance_every == 0:
                u = _redistance(u, m)
            trajectory.series.append({"step": step_index, "time": u.time, "dt": dt,
                                      "max": float(np.max(u.values)), "min": float(np.min(u.values))})
            bar.update(dt)
            if reached:
                target_index += 1
                trajectory.snapshots.append(u)
                if on_snapshot:
                    on_snapshot(u, target_index)
                logger.debug(f"Snapshot {target_index} at t={u.time:.6g} after {step_index} steps")
            state = SolverState(u, step_index, target_index, state.reference_scale)
            if checkpoint_every and on_checkpoint and step_index % checkpoint_every == 0:
                on_checkpoint(state, trajectory)
    except KeyboardInterrupt:
        logger.warning(f"Interrupted at step {state.step_index}; flushing checkpoint")
        if on_checkpoint:
            on_checkpoint(state, trajectory)
        raise
    finally:
        bar.close()
    trajectory.state = state
    return trajectory


@dataclass
class MaxPrincipleReport:
    """Monotonicity of max u and min u over snapshots."""
    passed: bool
    max_increase: float
    min_decrease: float
    series: List[Dict[str, float]]

    def to_dict(self) -> Dict[str, Any]:
        return {"check": "max_principle", "passed": self.passed, "max_increase": self.max_increase,
                "min_decrease": self.min_decrease, "series": self.series}


def max_principle_check(traj: Trajectory) -> MaxPrincipleReport:
    """
    max_x u must not increase and min_x u must not decrease between
    snapshots, up to 1e-8 + 10·h²·Δt.
    """
    if not traj.snapshots:
        raise ValueError("max_principle_check needs a nonempty trajectory")
    h = traj.snapshots[0].grid.h_min
    series = [{"time": s.time, "max": float(np.max(s.values)), "min": float(np.min(s.values))}
              for s in traj.snapshots]
    passed = True
    worst_up, worst_down = 0.0, 0.0
    for before, after in zip(series, series[1:]):
        slack = 1e-8 + 10.0 * h * h * (after["time"] - before["time"])
        up = after["max"] - before["max"]
        down = before["min"] - after["min"]
        worst_up, worst_down = max(worst_up, up), max(worst_down, down)
        if up > slack or down > slack:
            passed = False
    return MaxPrincipleReport(passed, worst_up, worst_down, series)


def ordering_check(lower: Trajectory, upper: Trajectory, slack: float = 1e-8) -> float:
    """
    Largest violation of u_lower <= u_upper + slack over matching snapshots;
    0.0 when the ordering holds everywhere.
    """
    worst = 0.0
    for a, b in zip(lower.snapshots, upper.snapshots):
        if a.time != b.time:
            raise ValueError(f"snapshot times differ: {a.time} vs {b.time}")
        worst = max(worst, float(np.max(a.values - b.values - slack)))
    return worst
