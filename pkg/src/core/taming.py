"""Uniform taming: every scheme coefficient is divided by 1 + n^{-θ}|x|^{2ρθ}."""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..utils.errors import BoundViolationError, ParameterError
from .model import BUNDLE_FIELDS, OperatorBundle, Problem, eval_operator_bundle

DEFAULT_THETA = 1.5
# Above this log-magnitude the direct formula loses the factor to overflow.
LOG_OVERFLOW_THRESHOLD = 700.0

# Growth bounds: quantity -> power of n multiplying (1 + |x|).
# sigma is bounded through |sigma^n|^2 against n^{1/2}(1 + |x|^2).
REMARK2_POWERS = {
    "b": 0.5,
    "sigma": 0.5,
    "L0b": 1.0,
    "L1b": 0.75,
    "L0sigma": 0.75,
    "L1sigma": 0.5,
    "L1L1sigma": 0.75,
}
REMARK2_SWEEP = tuple(2**k for k in range(4, 15))
GROWTH_TOLERANCE = 0.05


@dataclass(frozen=True)
class TamingConfig:
    rho: float
    n: int
    theta: float = DEFAULT_THETA
    enabled: bool = True

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"Taming parameter n must be a positive integer, got {self.n}")
        if not self.theta > 0:
            raise ParameterError(f"Taming rate theta must be positive, got {self.theta}")
        if self.rho < 0:
            raise ParameterError(f"Growth exponent rho must be non-negative, got {self.rho}")

    def with_n(self, n: int) -> "TamingConfig":
        return TamingConfig(rho=self.rho, n=n, theta=self.theta, enabled=self.enabled)


def taming_factor(cfg: TamingConfig, x):
    """Return 1 / (1 + n^{-θ}|x|^{2ρθ}) for a d-vector or a batch of them.

    A 1-d ``x`` is a single state vector; batches have the state on the last
    axis. Once 2ρθ·ln|x| − θ·ln n exceeds LOG_OVERFLOW_THRESHOLD the value
    n^θ|x|^{-2ρθ} is returned from log space.
    """
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x, axis=-1) if x.ndim else np.abs(x)
    if not cfg.enabled:
        return _shape_like(np.ones_like(norm))

    exponent = 2.0 * cfg.rho * cfg.theta
    if exponent == 0.0:
        return _shape_like(np.full_like(norm, 1.0 / (1.0 + cfg.n ** (-cfg.theta))))

    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        log_term = exponent * np.log(norm) - cfg.theta * math.log(cfg.n)
        direct = 1.0 / (1.0 + cfg.n ** (-cfg.theta) * norm**exponent)
        stable = np.exp(-log_term)
    factor = np.where(log_term > LOG_OVERFLOW_THRESHOLD, stable, direct)
    # NaN states (exploded paths) stay NaN so they are never mistaken for tamed ones
    return _shape_like(np.where(np.isnan(norm), np.nan, factor))


def _shape_like(values: np.ndarray):
    return float(values) if values.ndim == 0 else values


@dataclass(frozen=True, eq=False)
class TamedBundle:
    b: np.ndarray
    sigma: np.ndarray
    L0b: np.ndarray
    L1b: np.ndarray
    L0sigma: np.ndarray
    L1sigma: np.ndarray
    L1L1sigma: np.ndarray
    factor: object

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in BUNDLE_FIELDS}


def tame(bundle: OperatorBundle, cfg: TamingConfig, x) -> TamedBundle:
    """Scale all seven bundle entries by the same taming factor at ``x``."""
    factor = taming_factor(cfg, x)
    scale = np.asarray(factor)[..., None]
    return TamedBundle(
        **{name: getattr(bundle, name) * scale for name in BUNDLE_FIELDS},
        factor=factor,
    )


@dataclass
class QuantityBound:
    quantity: str
    power: float
    sups: Dict[int, float]
    edge_growth: float
    n_growth: float
    exceeds_untamed: bool
    exceeds_constant: bool = False
    calibrated_at_x0: Optional[float] = None

    @property
    def constant(self) -> float:
        return max(self.sups.values())

    @property
    def bounded(self) -> bool:
        return (
            self.edge_growth <= GROWTH_TOLERANCE
            and self.n_growth <= GROWTH_TOLERANCE
            and not self.exceeds_untamed
            and not self.exceeds_constant
        )


@dataclass
class BoundReport:
    problem: str
    theta: float
    enabled: bool
    n_values: List[int]
    quantities: Dict[str, QuantityBound] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(q.bounded for q in self.quantities.values())

    @property
    def violations(self) -> List[str]:
        return [name for name, q in self.quantities.items() if not q.bounded]

    def to_dict(self) -> Dict[str, object]:
        return {
            "problem": self.problem,
            "theta": self.theta,
            "enabled": self.enabled,
            "n_values": list(self.n_values),
            "passed": self.passed,
            "quantities": {
                name: {
                    "power": q.power,
                    "constant": q.constant,
                    "edge_growth": q.edge_growth,
                    "n_growth": q.n_growth,
                    "bounded": q.bounded,
                    "calibrated_at_x0": q.calibrated_at_x0,
                    "sups": {str(n): s for n, s in q.sups.items()},
                }
                for name, q in self.quantities.items()
            },
        }


def remark2_grid(d: int = 1, max_magnitude: float = 1e6, points: int = 4000) -> np.ndarray:
    """Zero plus signed log-spaced magnitudes from 10⁻³ up to ``max_magnitude``."""
    magnitudes = np.logspace(-3.0, math.log10(max_magnitude), points)
    values = np.concatenate([-magnitudes[::-1], [0.0], magnitudes])
    return np.repeat(values[:, None], d, axis=1) / math.sqrt(d)


def check_remark2_bounds(
    problem: Problem,
    cfg: TamingConfig,
    grid=None,
    n_values: Sequence[int] = REMARK2_SWEEP,
    constant: Optional[float] = None,
    raise_on_violation: bool = False,
) -> BoundReport:
    """Sweep n and measure sup |tamed| / (n^power (1 + |x|)) over the grid.

    A quantity is reported unbounded when the sup grows by more than 5% over
    the outermost decade of the grid or per doubling of n at the top of the
    sweep, when a tamed value exceeds its untamed counterpart, or when it
    exceeds a supplied constant.
    """
    points = problem.as_points(remark2_grid(problem.d) if grid is None else grid)
    if points.shape[0] == 0:
        raise ParameterError("Bound check grid must contain at least one point")
    n_values = sorted(int(n) for n in n_values)

    bundle = eval_operator_bundle(problem, points, strict=False)
    norm = np.linalg.norm(points, axis=-1)
    outer = norm.max() / 10.0
    inner_mask = norm <= outer

    # reference constant at x0 for the smallest n of the sweep
    at_x0 = tame(eval_operator_bundle(problem, problem.x0), cfg.with_n(n_values[0]), problem.x0)
    x0_norm = float(np.linalg.norm(problem.x0))

    report = BoundReport(problem=problem.name, theta=cfg.theta, enabled=cfg.enabled, n_values=n_values)
    for name in BUNDLE_FIELDS:
        raw = np.linalg.norm(getattr(bundle, name), axis=-1)
        sups: Dict[int, float] = {}
        edge_growth = 0.0
        exceeds_untamed = False
        for n in n_values:
            factor = np.asarray(taming_factor(cfg.with_n(n), points))
            with np.errstate(over="ignore", invalid="ignore"):
                tamed = raw * factor
                ratio = _bound_ratio(name, tamed, norm, n)
            ratio = np.where(np.isnan(ratio), np.inf, ratio)
            sups[n] = float(ratio.max())
            if np.any(tamed > raw * (1.0 + 1e-12)):
                exceeds_untamed = True
            if n == n_values[-1] and np.any(inner_mask) and not np.all(inner_mask):
                edge_growth = _relative_growth(float(ratio[inner_mask].max()), sups[n])
        n_growth = 0.0
        if len(n_values) >= 2:
            n_growth = _relative_growth(sups[n_values[-2]], sups[n_values[-1]])
        report.quantities[name] = QuantityBound(
            quantity=name,
            power=REMARK2_POWERS[name],
            sups=sups,
            edge_growth=edge_growth,
            n_growth=n_growth,
            exceeds_untamed=exceeds_untamed,
            exceeds_constant=constant is not None and max(sups.values()) > constant,
            calibrated_at_x0=float(
                _bound_ratio(name, np.linalg.norm(getattr(at_x0, name)), x0_norm, n_values[0])
            ),
        )

    if raise_on_violation and not report.passed:
        raise BoundViolationError(
            f"Growth bounds violated for {problem.name}: {', '.join(report.violations)}"
        )
    return report


def _bound_ratio(name: str, tamed_norm, x_norm, n: int):
    if name == "sigma":
        return tamed_norm**2 / (n ** REMARK2_POWERS[name] * (1.0 + x_norm**2))
    return tamed_norm / (n ** REMARK2_POWERS[name] * (1.0 + x_norm))


def _relative_growth(before: float, after: float) -> float:
    if not np.isfinite(after):
        return math.inf
    if before <= 0.0:
        return 0.0 if after <= 0.0 else math.inf
    return max(after / before - 1.0, 0.0)
