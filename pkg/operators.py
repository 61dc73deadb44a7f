"""
Curvature Operators

The geometric operator family F(ζ, A) acting on first/second order jets:
mean curvature (MCE), positive Gaussian curvature (GCE_PLUS) and
codimension-k mean curvature (CODIM_K), plus randomized validators for
ellipticity, geometricity, translation invariance and the admissible-f
limit condition.

Sign convention: the evolution is u_t + F(Du, D²u) = 0, so F is the
negative of the (projected) curvature term.
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import sympy as sp

from errors import DegenerateGradient, NonSymmetric
from manifold import ManifoldKind, ManifoldSpec, orthonormal_frame, shoot, transport_matrix

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-12

T = sp.Symbol("t", positive=True)


class OperatorKind(str, enum.Enum):
    """Operator family members."""
    MCE = "mce"
    GCE_PLUS = "gce_plus"
    CODIM_K = "codim_k"


@dataclass(frozen=True)
class CurvatureOperator:
    """
    Selects F and its gradient floor.

    Attributes:
        kind: operator family member
        k: codimension for CODIM_K, 1 <= k <= dimension - 1
        eps_grad: eval_F refuses jets with |ζ| below this
        dimension: ambient dimension n of the jets it acts on
    """
    kind: OperatorKind
    k: int = 1
    eps_grad: float = 1e-12
    dimension: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", OperatorKind(self.kind))
        if self.dimension < 2:
            raise ValueError(f"dimension must be at least 2, got {self.dimension}")
        if self.kind is OperatorKind.CODIM_K and not 1 <= self.k <= self.dimension - 1:
            raise ValueError(f"codimension k={self.k} outside [1, {self.dimension - 1}]")
        if not self.eps_grad >= 0:
            raise ValueError(f"eps_grad must be nonnegative, got {self.eps_grad}")

    @property
    def admissible_f(self) -> sp.Expr:
        """Representative f of the admissible class: t^4, or t^(2n) for GCE_PLUS."""
        if self.kind is OperatorKind.GCE_PLUS:
            return T ** (2 * self.dimension)
        return T ** 4

    def admissible_f_is_valid(self) -> bool:
        """f(0) = f'(0) = f''(0) = 0 and f'' > 0 for t > 0, checked symbolically."""
        f = self.admissible_f
        t0 = sp.Symbol("t0")
        f_any = f.subs(T, t0)
        vanishes = all(sp.diff(f_any, t0, order).subs(t0, 0) == 0 for order in range(3))
        return bool(vanishes and sp.diff(f, T, 2).is_positive)

    @cached_property
    def f_prime(self) -> Callable[[float], float]:
        return sp.lambdify(T, sp.diff(self.admissible_f, T), "math")

    def label(self) -> str:
        if self.kind is OperatorKind.CODIM_K:
            return f"codim_{self.k}"
        return self.kind.value

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "k": self.k, "eps_grad": self.eps_grad, "dimension": self.dimension}


@dataclass(eq=False)
class Jet:
    """
    Second-order data (ζ, A) at a point, with the metric used to raise indices.

    Attributes:
        point: chart coordinates
        zeta: covector ζ_i
        A: symmetric bilinear form A_ij (covariant components)
        g: metric g_ij at the point
    """
    point: np.ndarray
    zeta: np.ndarray
    A: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        self.zeta = np.asarray(self.zeta, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        self.point = np.asarray(self.point, dtype=float) if self.point is not None else np.zeros(len(self.zeta))

    @classmethod
    def euclidean(cls, zeta, A, point=None) -> "Jet":
        zeta = np.asarray(zeta, dtype=float)
        return cls(point, zeta, A, np.eye(len(zeta)))

    @property
    def dimension(self) -> int:
        return len(self.zeta)

    @cached_property
    def g_inv(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @property
    def zeta_norm(self) -> float:
        return math.sqrt(max(float(self.zeta @ self.g_inv @ self.zeta), 0.0))

    def scaled(self, lam: float, mu: float = 0.0) -> "Jet":
        """The jet (λζ, λA + μ ζ⊗ζ)."""
        return Jet(self.point, lam * self.zeta, lam * self.A + mu * np.outer(self.zeta, self.zeta), self.g)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def projected_trace_field(zeta: np.ndarray, hess: np.ndarray, g_inv: np.ndarray,
                          eps: float = 0.0) -> np.ndarray:
    """
    trace(Â) − A(ζ♯, ζ♯)/(|ζ|² + eps²) in two dimensions.

    For eps = 0 this is A(τ, τ) with τ the g-unit vector orthogonal to ζ;
    for eps > 0 it stays bounded as ζ -> 0 and reduces to the Laplacian there.
    """
    z0, z1 = zeta[..., 0], zeta[..., 1]
    v0 = g_inv[..., 0, 0] * z0 + g_inv[..., 0, 1] * z1
    v1 = g_inv[..., 1, 0] * z0 + g_inv[..., 1, 1] * z1
    trace = (g_inv[..., 0, 0] * hess[..., 0, 0] + g_inv[..., 1, 1] * hess[..., 1, 1]
             + 2.0 * g_inv[..., 0, 1] * hess[..., 0, 1])
    along = hess[..., 0, 0] * v0 * v0 + 2.0 * hess[..., 0, 1] * v0 * v1 + hess[..., 1, 1] * v1 * v1
    return trace - along / (z0 * v0 + z1 * v1 + eps * eps)


def eval_F_field(op: CurvatureOperator, zeta: np.ndarray, hess: np.ndarray, g_inv: np.ndarray,
                 eps: float = 0.0) -> np.ndarray:
    """
    Vectorized F over a 2-D field.

    In two dimensions the tangent space of a front is one-dimensional: MCE and
    CODIM_1 reduce to −A(τ,τ); B for GCE_PLUS is triangular in the (ν, τ)
    frame with eigenvalues 1 and A(τ,τ)/|ζ|, so F = −max(A(τ,τ), 0).
    """
    curvature = projected_trace_field(zeta, hess, g_inv, eps)
    if op.kind is OperatorKind.GCE_PLUS:
        return -np.maximum(curvature, 0.0)
    return -curvature


def _tangential_eigenvalues(jet: Jet, norm: float) -> np.ndarray:
    """Eigenvalues of Q = S Â S on the g-orthogonal complement of ζ, ascending."""
    lower = np.linalg.cholesky(jet.g)
    frame = orthonormal_frame(jet.g)
    M = frame.T @ jet.A @ frame
    normal = lower.T @ (jet.g_inv @ jet.zeta) / norm
    S = np.eye(jet.dimension) - np.outer(normal, normal)
    values, vectors = np.linalg.eigh(S @ M @ S)
    along_normal = int(np.argmax(np.abs(vectors.T @ normal)))
    return np.delete(values, along_normal)


def _check_jet(op: CurvatureOperator, jet: Jet) -> float:
    if jet.A.shape != (jet.dimension, jet.dimension):
        raise ValueError(f"form of shape {jet.A.shape} does not match covector of length {jet.dimension}")
    asymmetry = float(np.max(np.abs(jet.A - jet.A.T)))
    if asymmetry > SYMMETRY_TOLERANCE:
        raise NonSymmetric(f"bilinear form asymmetric by {asymmetry:.3e}")
    norm = jet.zeta_norm
    if norm < op.eps_grad or norm == 0.0:
        raise DegenerateGradient(f"|ζ| = {norm:.3e} below eps_grad = {op.eps_grad:.3e}")
    return norm


def eval_F(op: CurvatureOperator, jet: Jet) -> float:
    """
    F(ζ, A) for one jet.

    Raises:
        DegenerateGradient: |ζ| < eps_grad
        NonSymmetric: A asymmetric beyond 1e-12
    """
    norm = _check_jet(op, jet)
    A = 0.5 * (jet.A + jet.A.T)
    if jet.dimension == 2:
        return float(eval_F_field(op, jet.zeta, A, jet.g_inv))

    tangential = _tangential_eigenvalues(Jet(jet.point, jet.zeta, A, jet.g), norm)
    if op.kind is OperatorKind.MCE:
        return -float(np.sum(tangential))
    if op.kind is OperatorKind.GCE_PLUS:
        # the ν eigenvalue of B is exactly 1
        return -norm * float(np.prod(np.maximum(tangential / norm, 0.0)))
    return -float(np.sum(tangential[: jet.dimension - op.k]))


def diffusion_scale(op: CurvatureOperator) -> float:
    """
    Largest coefficient of the second-order part of F relative to g^{-1}.

    The result does not depend on `op`: on a surface each built-in operator
    is linear in the one tangential second derivative with weight at most 1
    (GCE_PLUS is MCE clipped at zero, CODIM_K with k = 1 is MCE).
    """
    return 1.0


# ---------------------------------------------------------------------------
# G formulation
# ---------------------------------------------------------------------------

def mean_curvature_G(normal: np.ndarray, shape: np.ndarray) -> float:
    """G = −trace, reproducing MCE."""
    return -float(np.trace(shape))


def zero_G(normal: np.ndarray, shape: np.ndarray) -> float:
    return 0.0


def F_from_G(G: Callable[[np.ndarray, np.ndarray], float], jet: Jet, eps_grad: float = 1e-12) -> float:
    """
    |ζ|·G(ν, (1/|ζ|)(I − ν⊗ν♭)Â) with ν the unit normal vector and Â = g^{-1}A.
    """
    norm = _check_jet(CurvatureOperator(OperatorKind.MCE, eps_grad=eps_grad, dimension=max(jet.dimension, 2)), jet)
    normal = jet.g_inv @ jet.zeta / norm
    projection = np.eye(jet.dimension) - np.outer(normal, jet.zeta / norm)
    shape = projection @ (jet.g_inv @ jet.A) / norm
    return norm * G(normal, shape)


# ---------------------------------------------------------------------------
# Property suites
# ---------------------------------------------------------------------------

@dataclass
class PropertyReport:
    """Outcome of one randomized property suite."""
    check: str
    operator: str
    trials: int
    tolerance: float
    violations: List[Dict[str, Any]] = field(default_factory=list)
    max_error: float = 0.0
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> Dict[str, Any]:
        return {
            "check": self.check,
            "operator": self.operator,
            "trials": self.trials,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "violation_count": len(self.violations),
            "violations": self.violations[:20],
            "max_error": self.max_error,
            "details": self.details,
        }


def random_metric(rng: np.random.Generator, dimension: int) -> np.ndarray:
    R = rng.normal(size=(dimension, dimension))
    return np.eye(dimension) + 0.5 * R @ R.T


def random_symmetric(rng: np.random.Generator, dimension: int, scale: float = 1.0) -> np.ndarray:
    R = rng.normal(scale=scale, size=(dimension, dimension))
    return 0.5 * (R + R.T)


def random_jet(rng: np.random.Generator, dimension: int = 2, curved: bool = True) -> Jet:
    g = random_metric(rng, dimension) if curved else np.eye(dimension)
    zeta = rng.normal(size=dimension)
    while np.linalg.norm(zeta) < 1e-3:
        zeta = rng.normal(size=dimension)
    return Jet(np.zeros(dimension), zeta, random_symmetric(rng, dimension), g)


def _random_psd(rng: np.random.Generator, dimension: int) -> np.ndarray:
    rank = int(rng.integers(1, dimension + 1))
    B = rng.normal(size=(dimension, rank))
    return B @ B.T


def check_elliptic(op: CurvatureOperator, trials: int = 1000, seed: int = 0,
                   tolerance: float = 1e-10) -> PropertyReport:
    """F(ζ, A + S) <= F(ζ, A) for positive semidefinite S."""
    rng = np.random.default_rng(seed)
    report = PropertyReport("elliptic", op.label(), trials, tolerance)
    for trial in range(trials):
        jet = random_jet(rng, op.dimension)
        S = np.zeros_like(jet.A) if trial == 0 else _random_psd(rng, op.dimension)
        base = eval_F(op, jet)
        raised = eval_F(op, Jet(jet.point, jet.zeta, jet.A + S, jet.g))
        excess = raised - base
        report.max_error = max(report.max_error, excess)
        if excess > tolerance or (trial == 0 and raised != base):
            report.violations.append({"trial": trial, "base": base, "raised": raised})
    logger.debug(f"elliptic[{op.label()}]: {len(report.violations)} violations in {trials} trials")
    return report


def check_geometric(op: CurvatureOperator, trials: int = 1000, seed: int = 0,
                    tolerance: float = 1e-8) -> PropertyReport:
    """F(λζ, λA + μ ζ⊗ζ) = λ F(ζ, A) for λ > 0."""
    rng = np.random.default_rng(seed)
    report = PropertyReport("geometric", op.label(), trials, tolerance)
    for trial in range(trials):
        jet = random_jet(rng, op.dimension)
        lam, mu = (1.0, 0.0) if trial == 0 else (float(rng.uniform(0.1, 10.0)), float(rng.uniform(-5.0, 5.0)))
        base = eval_F(op, jet)
        moved = eval_F(op, jet.scaled(lam, mu))
        error = abs(moved - lam * base)
        report.max_error = max(report.max_error, error)
        if error > tolerance * (1.0 + abs(base)):
            report.violations.append({"trial": trial, "lambda": lam, "mu": mu, "error": error})
    logger.debug(f"geometric[{op.label()}]: max error {report.max_error:.3e}")
    return report


def _sample_point(spec: ManifoldSpec, rng: np.random.Generator) -> np.ndarray:
    (a0, b0), (a1, b1) = spec.bounds
    if spec.kind is ManifoldKind.EUCLIDEAN:
        return rng.uniform(-1.0, 1.0, size=2)
    # keep half a unit of chart room for the geodesic
    return np.array([rng.uniform(0.5 * a0, 0.5 * b0), rng.uniform(a1, b1)])


def check_translation_invariant(op: CurvatureOperator, spec: ManifoldSpec, trials: int = 200,
                                seed: int = 0, tolerance: float = 1e-6,
                                max_length: float = 0.5) -> PropertyReport:
    """
    F(L_xy ζ, A) = F(ζ, L_yx A) along geodesics within the injectivity budget,
    where (L_yx A)(v, w) = A(L_xy v, L_xy w).
    """
    rng = np.random.default_rng(seed)
    report = PropertyReport("translation_invariant", op.label(), trials, tolerance,
                            details={"manifold": spec.to_dict(), "max_length": max_length})
    reach = min(max_length, 0.5 * spec.injectivity_budget())
    for trial in range(trials):
        x = _sample_point(spec, rng)
        g_x = spec.metric_at(x)
        frame = orthonormal_frame(g_x)
        angle = rng.uniform(0.0, 2.0 * math.pi)
        v = rng.uniform(0.05, 1.0) * reach * (math.cos(angle) * frame[:, 0] + math.sin(angle) * frame[:, 1])
        geodesic = shoot(spec, x, v)
        y = geodesic.end
        g_y = spec.metric_at(y)
        transport = transport_matrix(spec, geodesic)

        zeta = rng.normal(size=2)
        A = random_symmetric(rng, 2)
        zeta_y = g_y @ transport @ np.linalg.solve(g_x, zeta)
        at_y = eval_F(op, Jet(y, zeta_y, A, g_y))
        pulled = transport.T @ A @ transport
        at_x = eval_F(op, Jet(x, zeta, 0.5 * (pulled + pulled.T), g_x))
        error = abs(at_y - at_x)
        report.max_error = max(report.max_error, error)
        if error > tolerance * (1.0 + abs(at_y)):
            report.violations.append({"trial": trial, "x": x.tolist(), "y": y.tolist(), "error": error})
    logger.debug(f"translation_invariant[{op.label()}] on {spec.kind.value}: max error {report.max_error:.3e}")
    return report


F_CLASS_SCALES = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


def check_f_class(op: CurvatureOperator, seed: int = 0, threshold: float = 1e-4) -> PropertyReport:
    """
    f'(t)/t · F(ζ_t, ±2I) along |ζ_t| = t -> 0 decays monotonically and ends
    below threshold.
    """
    rng = np.random.default_rng(seed)
    unfloored = CurvatureOperator(op.kind, op.k, eps_grad=0.0, dimension=op.dimension)
    report = PropertyReport("f_class", op.label(), len(F_CLASS_SCALES), threshold,
                            details={"f": str(op.admissible_f)})
    n = op.dimension
    direction = rng.normal(size=n)
    direction /= np.linalg.norm(direction)
    series = []
    for t in F_CLASS_SCALES:
        weight = op.f_prime(t) / t
        values = [abs(weight * eval_F(unfloored, Jet.euclidean(t * direction, sign * 2.0 * np.eye(n))))
                  for sign in (1.0, -1.0)]
        series.append({"t": t, "value": max(values)})
    report.details["series"] = series
    for earlier, later in zip(series, series[1:]):
        if later["value"] > earlier["value"]:
            report.violations.append({"reason": "not monotone", "t": later["t"], "value": later["value"]})
    report.max_error = series[-1]["value"]
    if series[-1]["value"] >= threshold:
        report.violations.append({"reason": "no decay", "t": series[-1]["t"], "value": series[-1]["value"]})
    if not op.admissible_f_is_valid():
        report.violations.append({"reason": "inadmissible f", "f": str(op.admissible_f)})
    return report


def check_codim_matches_mce(trials: int = 1000, seed: int = 0, tolerance: float = 1e-10) -> PropertyReport:
    """CODIM_K with k=1 on surfaces equals MCE."""
    rng = np.random.default_rng(seed)
    mce = CurvatureOperator(OperatorKind.MCE)
    codim = CurvatureOperator(OperatorKind.CODIM_K, k=1)
    report = PropertyReport("codim_matches_mce", codim.label(), trials, tolerance)
    for trial in range(trials):
        jet = random_jet(rng, 2)
        error = abs(eval_F(codim, jet) - eval_F(mce, jet))
        report.max_error = max(report.max_error, error)
        if error > tolerance:
            report.violations.append({"trial": trial, "error": error})
    return report


def property_suite(seed: int = 0, trials: Optional[Dict[str, int]] = None) -> List[PropertyReport]:
    """Every operator property check at its acceptance trial count."""
    counts = {"elliptic": 1000, "geometric": 1000, "translation": 200, "codim": 1000}
    counts.update(trials or {})
    reports: List[PropertyReport] = []
    for kind in (OperatorKind.MCE, OperatorKind.GCE_PLUS):
        op = CurvatureOperator(kind)
        reports.append(check_elliptic(op, counts["elliptic"], seed))
        reports.append(check_geometric(op, counts["geometric"], seed))
        reports.append(check_f_class(op, seed))
    reports.append(check_translation_invariant(CurvatureOperator(OperatorKind.MCE), ManifoldSpec.sphere(1.0),
                                               counts["translation"], seed))
    reports.append(check_translation_invariant(CurvatureOperator(OperatorKind.GCE_PLUS),
                                               ManifoldSpec.revolution("one_plus_cos2"),
                                               counts["translation"], seed))
    reports.append(check_codim_matches_mce(counts["codim"], seed))
    for report in reports:
        status = "passed" if report.passed else f"FAILED ({len(report.violations)} violations)"
        logger.info(f"{report.check}[{report.operator}]: {status}")
    return reports
