"""SDE problem definitions and the differential operators L⁰, L¹ and L¹L¹.

Every evaluator works on arrays of shape ``(..., d)`` so that a whole batch of
paths can be advanced at once. Output shapes are

    drift, diffusion                    (..., d)
    drift_jacobian, diffusion_jacobian  (..., d, d)      [k, u]    = ∂_u f_k
    drift_hessians, diffusion_hessians  (..., d, d, d)   [k, u, l] = ∂²_{ul} f_k

The noise dimension is fixed to one, so the diffusion is a single column.
"""

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from ..utils.errors import (
    DerivativeValidationError,
    OperatorRangeError,
    ParameterError,
)

FD_STEP = 1e-5
VALIDATION_TOLERANCE = 1e-4

Evaluator = Callable[[np.ndarray], np.ndarray]

BUNDLE_FIELDS = ("b", "sigma", "L0b", "L1b", "L0sigma", "L1sigma", "L1L1sigma")


def min_moment_order(rho: float) -> float:
    """Smallest admissible p₀ = 2(5ρ+1) for strong convergence."""
    return 2.0 * (5.0 * rho + 1.0)


def admissible_xi(rho: float) -> float:
    """Largest |ξ| keeping p₀ = 2(5ρ+1) inside [p₀_min, 2/ξ² + 1]."""
    return math.sqrt(2.0 / (min_moment_order(rho) - 1.0))


@dataclass(frozen=True, eq=False)
class Problem:
    name: str
    d: int
    rho: float
    beta: float
    x0: np.ndarray
    T: float
    drift: Evaluator
    diffusion: Evaluator
    drift_jacobian: Evaluator
    drift_hessians: Evaluator
    diffusion_jacobian: Evaluator
    diffusion_hessians: Evaluator
    m: int = 1
    xi: Optional[float] = None
    derivatives: str = "analytic"

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ParameterError(f"State dimension must be a positive integer, got {self.d}")
        if self.m != 1:
            raise ParameterError(f"Only scalar noise (m=1) is supported, got m={self.m}")
        if not self.T > 0:
            raise ParameterError(f"Time horizon must be positive, got T={self.T}")
        if not 0 < self.beta <= 1:
            raise ParameterError(f"Hölder exponent must lie in (0, 1], got beta={self.beta}")
        if self.rho < 0:
            raise ParameterError(f"Growth exponent must be non-negative, got rho={self.rho}")
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        if x0.shape != (self.d,) or not np.all(np.isfinite(x0)):
            raise ParameterError(f"Initial state must be a finite {self.d}-vector, got {self.x0!r}")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)

    def as_points(self, points) -> np.ndarray:
        """Coerce a scalar, a d-vector or a list of d-vectors into shape (k, d)."""
        arr = np.asarray(points, dtype=float)
        if self.d == 1 and arr.ndim <= 1:
            return arr.reshape(-1, 1)
        return arr.reshape(-1, self.d)

    def with_initial_state(self, x0) -> "Problem":
        fields = {name: getattr(self, name) for name in self.__dataclass_fields__}
        fields["x0"] = x0
        return Problem(**fields)

    def describe(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "d": self.d,
            "m": self.m,
            "rho": self.rho,
            "beta": self.beta,
            "xi": self.xi,
            "x0": self.x0.tolist(),
            "T": self.T,
            "derivatives": self.derivatives,
        }

    @classmethod
    def from_polynomials(
        cls,
        name: str,
        drift_coefficients: Sequence[float],
        diffusion_coefficients: Sequence[float],
        rho: float,
        beta: float,
        x0: float,
        T: float = 1.0,
    ) -> "Problem":
        """Scalar SDE with polynomial coefficients, c0 + c1 x + c2 x² + ..."""
        drift = _PolynomialField(drift_coefficients)
        diffusion = _PolynomialField(diffusion_coefficients)
        return cls(
            name=name,
            d=1,
            rho=rho,
            beta=beta,
            x0=x0,
            T=T,
            drift=drift.value,
            diffusion=diffusion.value,
            drift_jacobian=drift.jacobian,
            drift_hessians=drift.hessians,
            diffusion_jacobian=diffusion.jacobian,
            diffusion_hessians=diffusion.hessians,
        )

    @classmethod
    def with_finite_differences(
        cls,
        name: str,
        drift: Evaluator,
        diffusion: Evaluator,
        rho: float,
        beta: float,
        x0,
        T: float = 1.0,
        d: int = 1,
        h: float = FD_STEP,
    ) -> "Problem":
        """Build a problem whose derivatives come from central differences."""
        warnings.warn(
            f"Problem '{name}' uses finite-difference derivatives (h={h:g}); "
            "operator values are lower accuracy than analytic ones.",
            stacklevel=2,
        )
        return cls(
            name=name,
            d=d,
            rho=rho,
            beta=beta,
            x0=x0,
            T=T,
            drift=drift,
            diffusion=diffusion,
            drift_jacobian=lambda x: central_jacobian(drift, x, h),
            drift_hessians=lambda x: central_hessians(drift, x, h),
            diffusion_jacobian=lambda x: central_jacobian(diffusion, x, h),
            diffusion_hessians=lambda x: central_hessians(diffusion, x, h),
            derivatives="finite-difference",
        )


class _PolynomialField:
    def __init__(self, coefficients: Sequence[float]):
        coefficients = [float(c) for c in coefficients] or [0.0]
        self.poly = Polynomial(coefficients)
        self.first = self.poly.deriv(1)
        self.second = self.poly.deriv(2)

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.poly(np.asarray(x, dtype=float))

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return self.first(np.asarray(x, dtype=float))[..., None]

    def hessians(self, x: np.ndarray) -> np.ndarray:
        return self.second(np.asarray(x, dtype=float))[..., None, None]


@dataclass(frozen=True, eq=False)
class OperatorBundle:
    b: np.ndarray
    sigma: np.ndarray
    L0b: np.ndarray
    L1b: np.ndarray
    L0sigma: np.ndarray
    L1sigma: np.ndarray
    L1L1sigma: np.ndarray

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in BUNDLE_FIELDS}


def eval_operator_bundle(problem: Problem, x, strict: bool = True) -> OperatorBundle:
    """Evaluate b, σ and the Itô-Taylor operators applied to them at ``x``.

    With ``strict`` a non-finite input raises ParameterError and a non-finite
    operator value raises OperatorRangeError naming the operator. The path
    integrator passes ``strict=False`` and tracks explosions itself.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != problem.d:
        x = x.reshape(x.shape + (1,)) if problem.d == 1 else x
    if x.shape[-1] != problem.d:
        raise ParameterError(f"Expected points with {problem.d} components, got shape {x.shape}")
    if strict and not np.all(np.isfinite(x)):
        raise ParameterError(f"Operator bundle requested at a non-finite point {x}")

    with np.errstate(over="ignore", invalid="ignore"):
        b = problem.drift(x)
        s = problem.diffusion(x)
        jb = problem.drift_jacobian(x)
        hb = problem.drift_hessians(x)
        js = problem.diffusion_jacobian(x)
        hs = problem.diffusion_hessians(x)

        half_ss = 0.5 * np.einsum("...u,...l->...ul", s, s)
        values = {
            "b": b,
            "sigma": s,
            "L0b": np.einsum("...ku,...u->...k", jb, b) + np.einsum("...kul,...ul->...k", hb, half_ss),
            "L1b": np.einsum("...ku,...u->...k", jb, s),
            "L0sigma": np.einsum("...ku,...u->...k", js, b) + np.einsum("...kul,...ul->...k", hs, half_ss),
            "L1sigma": np.einsum("...ku,...u->...k", js, s),
            "L1L1sigma": np.einsum("...kl,...lu,...u->...k", js, js, s)
            + np.einsum("...kul,...u,...l->...k", hs, s, s),
        }

    if strict:
        for name in BUNDLE_FIELDS:
            if not np.all(np.isfinite(values[name])):
                raise OperatorRangeError(
                    name,
                    f"Non-finite {name} for problem '{problem.name}' (|x| too large to evaluate)",
                )
    return OperatorBundle(**values)


def central_jacobian(f: Evaluator, x, h: float = FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    columns = []
    for u in range(x.shape[-1]):
        step = np.zeros(x.shape[-1])
        step[u] = h
        columns.append((f(x + step) - f(x - step)) / (2.0 * h))
    return np.stack(columns, axis=-1)


def central_hessians(f: Evaluator, x, h: float = FD_STEP) -> np.ndarray:
    return _central_derivative_of_jacobian(lambda y: central_jacobian(f, y, h), x, h)


def _central_derivative_of_jacobian(jacobian: Evaluator, x, h: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    slices = []
    for l in range(x.shape[-1]):
        step = np.zeros(x.shape[-1])
        step[l] = h
        slices.append((jacobian(x + step) - jacobian(x - step)) / (2.0 * h))
    return np.stack(slices, axis=-1)


@dataclass(frozen=True)
class DerivativeCheck:
    evaluator: str
    max_deviation: float
    worst_point: Tuple[float, ...]


def validate_derivatives(
    problem: Problem,
    probe_grid,
    h: float = FD_STEP,
    tolerance: float = VALIDATION_TOLERANCE,
    raise_on_failure: bool = True,
) -> Dict[str, DerivativeCheck]:
    """Compare supplied derivatives with central differences on ``probe_grid``.

    Jacobians are checked against differences of the coefficient itself,
    Hessians against differences of the (already checked) Jacobian. The
    deviation is |supplied − fd| / max(|supplied|, |fd|, 1) per entry.
    """
    points = problem.as_points(probe_grid)
    if points.shape[0] == 0:
        raise ParameterError("Probe grid must contain at least one point")
    if not np.all(np.isfinite(points)):
        raise ParameterError("Probe grid contains non-finite points")

    pairs = {
        "drift_jacobian": (problem.drift_jacobian(points), central_jacobian(problem.drift, points, h)),
        "drift_hessians": (
            problem.drift_hessians(points),
            _central_derivative_of_jacobian(problem.drift_jacobian, points, h),
        ),
        "diffusion_jacobian": (
            problem.diffusion_jacobian(points),
            central_jacobian(problem.diffusion, points, h),
        ),
        "diffusion_hessians": (
            problem.diffusion_hessians(points),
            _central_derivative_of_jacobian(problem.diffusion_jacobian, points, h),
        ),
    }

    report: Dict[str, DerivativeCheck] = {}
    for evaluator, (supplied, approx) in pairs.items():
        scale = np.maximum(np.maximum(np.abs(supplied), np.abs(approx)), 1.0)
        deviation = (np.abs(supplied - approx) / scale).reshape(points.shape[0], -1).max(axis=1)
        worst = int(np.argmax(deviation))
        check = DerivativeCheck(
            evaluator=evaluator,
            max_deviation=float(deviation[worst]),
            worst_point=tuple(float(v) for v in points[worst]),
        )
        if raise_on_failure and check.max_deviation > tolerance:
            raise DerivativeValidationError(evaluator, check.worst_point, check.max_deviation, tolerance)
        report[evaluator] = check
    return report


def _ginzburg(xi: float) -> Dict[str, Evaluator]:
    return {
        "drift": lambda x: x - x**3,
        "drift_jacobian": lambda x: (1.0 - 3.0 * x**2)[..., None],
        "drift_hessians": lambda x: (-6.0 * x)[..., None, None],
        "diffusion": lambda x: xi * (1.0 - x**2),
        "diffusion_jacobian": lambda x: (-2.0 * xi * x)[..., None],
        "diffusion_hessians": lambda x: np.full(np.shape(x) + (1, 1), -2.0 * xi),
    }


def _holder(xi: float) -> Dict[str, Evaluator]:
    return {
        "drift": lambda x: x - x * np.abs(x) ** 3,
        "drift_jacobian": lambda x: (1.0 - 4.0 * np.abs(x) ** 3)[..., None],
        "drift_hessians": lambda x: (-12.0 * x * np.abs(x))[..., None, None],
        "diffusion": lambda x: xi * np.abs(x) ** 2.5,
        "diffusion_jacobian": lambda x: (2.5 * xi * np.abs(x) ** 1.5 * np.sign(x))[..., None],
        "diffusion_hessians": lambda x: (3.75 * xi * np.sqrt(np.abs(x)))[..., None, None],
    }


def _ornstein_uhlenbeck(xi: float) -> Dict[str, Evaluator]:
    return {
        "drift": lambda x: -x,
        "drift_jacobian": lambda x: np.full(np.shape(x) + (1,), -1.0),
        "drift_hessians": lambda x: np.zeros(np.shape(x) + (1, 1)),
        "diffusion": lambda x: np.full(np.shape(x), float(xi)),
        "diffusion_jacobian": lambda x: np.zeros(np.shape(x) + (1,)),
        "diffusion_hessians": lambda x: np.zeros(np.shape(x) + (1, 1)),
    }


# kind -> (rho, beta, evaluator factory, whether xi has an admissible bound)
PROBLEM_KINDS = {
    "ginzburg": (2.0, 1.0, _ginzburg, True),
    "holder": (4.0, 0.5, _holder, True),
    "ou": (0.0, 1.0, _ornstein_uhlenbeck, False),
}


def builtin_problem(
    kind: str,
    xi: float,
    override: bool = False,
    x0: Optional[float] = None,
    T: float = 1.0,
) -> Problem:
    """One of the shipped example SDEs, started at x₀ = 3 on [0, 1] unless overridden."""
    if kind not in PROBLEM_KINDS:
        raise ParameterError(f"Unknown problem kind '{kind}'; expected one of {sorted(PROBLEM_KINDS)}")
    if not math.isfinite(xi):
        raise ParameterError(f"xi must be finite, got {xi}")
    rho, beta, factory, bounded = PROBLEM_KINDS[kind]
    if bounded and not override:
        bound = admissible_xi(rho)
        if abs(xi) > bound:
            raise ParameterError(
                f"xi={xi} is outside the admissible range [-{bound:.4f}, {bound:.4f}] for '{kind}' "
                f"(bound sqrt(2/(p0-1)) with p0 = 2(5*rho+1) = {min_moment_order(rho):g}); "
                "pass override to experiment anyway"
            )
    return Problem(
        name=kind,
        d=1,
        rho=rho,
        beta=beta,
        x0=3.0 if x0 is None else x0,
        T=T,
        xi=float(xi),
        **factory(float(xi)),
    )


def load_problem_file(path) -> Problem:
    """Read a polynomial problem description from JSON."""
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ParameterError(f"Error reading problem file {path}: {exc}") from exc
    missing = [key for key in ("drift", "diffusion", "rho", "beta", "x0") if key not in spec]
    if missing:
        raise ParameterError(f"Problem file {path} is missing keys: {', '.join(missing)}")
    return Problem.from_polynomials(
        name=spec.get("name", path.stem),
        drift_coefficients=spec["drift"],
        diffusion_coefficients=spec["diffusion"],
        rho=float(spec["rho"]),
        beta=float(spec["beta"]),
        x0=float(spec["x0"]),
        T=float(spec.get("T", 1.0)),
    )


def probe_grid_for(problem: Problem) -> List[np.ndarray]:
    """Default probe grid used by validate_derivatives for built-in problems."""
    if problem.name == "holder":
        values = [-2.0, -0.5, 0.5, 2.0]
    else:
        values = [-3.0, -1.0, 0.0, 1.0, 3.0]
    return [np.full(problem.d, v) for v in values]
