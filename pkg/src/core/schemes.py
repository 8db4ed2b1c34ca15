"""One-step maps for tamed Euler, tamed Milstein and the tamed order-1.5 Taylor scheme."""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional

import numpy as np

from ..utils.errors import ExplosionError, ParameterError
from .brownian import IncrementPair, PathIncrements
from .model import Problem, eval_operator_bundle
from .taming import DEFAULT_THETA, TamedBundle, TamingConfig, tame

logger = logging.getLogger(__name__)

EXPLOSION_BOUND = 1e10


class Scheme(str, Enum):
    TAMED_EULER = "tamed_euler"
    TAMED_MILSTEIN = "tamed_milstein"
    TAYLOR15 = "taylor15"


SCHEME_ALIASES = {
    "euler": Scheme.TAMED_EULER,
    "milstein": Scheme.TAMED_MILSTEIN,
    "taylor15": Scheme.TAYLOR15,
}


@dataclass(frozen=True)
class SchemeKind:
    kind: Scheme
    taming_enabled: bool = True
    theta: float = DEFAULT_THETA

    def __post_init__(self):
        try:
            kind = Scheme(SCHEME_ALIASES.get(self.kind, self.kind))
        except ValueError:
            raise ParameterError(
                f"Unknown scheme '{self.kind}'; expected one of {sorted(SCHEME_ALIASES)}"
            ) from None
        object.__setattr__(self, "kind", kind)

    @property
    def label(self) -> str:
        return self.kind.value if self.taming_enabled else f"{self.kind.value}_untamed"

    def taming(self, rho: float, N: int, T: float) -> TamingConfig:
        return TamingConfig(rho=rho, n=taming_parameter(N, T), theta=self.theta, enabled=self.taming_enabled)


def taming_parameter(N: int, T: float) -> int:
    """n tied to the grid: n = N on [0, 1], n = ⌈N/T⌉ in general."""
    return max(1, math.ceil(N / T - 1e-9))


@dataclass(frozen=True, eq=False)
class StepInputs:
    x: np.ndarray
    pair: IncrementPair
    tamed: TamedBundle


def _noise(inputs: StepInputs):
    dW = np.asarray(inputs.pair.dW, dtype=float)[..., None]
    dZ = np.asarray(inputs.pair.dZ, dtype=float)[..., None]
    return dW, dZ, inputs.pair.dt


def step_tamed_euler(inputs: StepInputs) -> np.ndarray:
    t = inputs.tamed
    dW, _, dt = _noise(inputs)
    return inputs.x + t.b * dt + t.sigma * dW


def step_tamed_milstein(inputs: StepInputs) -> np.ndarray:
    t = inputs.tamed
    dW, _, dt = _noise(inputs)
    return inputs.x + t.b * dt + t.sigma * dW + 0.5 * t.L1sigma * (dW * dW - dt)


def step_taylor15(inputs: StepInputs) -> np.ndarray:
    t = inputs.tamed
    dW, dZ, dt = _noise(inputs)
    return (
        inputs.x
        + t.b * dt
        + t.sigma * dW
        + t.L1b * dZ
        + 0.5 * t.L0b * dt**2
        + 0.5 * t.L1sigma * (dW * dW - dt)
        + t.L0sigma * (dW * dt - dZ)
        + 0.5 * t.L1L1sigma * (dW * dW / 3.0 - dt) * dW
    )


STEPS: Dict[Scheme, Callable[[StepInputs], np.ndarray]] = {
    Scheme.TAMED_EULER: step_tamed_euler,
    Scheme.TAMED_MILSTEIN: step_tamed_milstein,
    Scheme.TAYLOR15: step_taylor15,
}


@dataclass(frozen=True)
class IteratedIntegrals:
    """Integrals over one step [κ, κ+Δ] of the frozen-coefficient continuous scheme."""

    time: float  # ∫(s−κ)ds
    noise_time: object  # ∫(w_s−w_κ)ds
    noise_noise: object  # ∫(w_s−w_κ)dw_s
    time_noise: object  # ∫(s−κ)dw_s
    triple: object  # ∫∫∫ dw dw dw

    @classmethod
    def from_pair(cls, pair: IncrementPair) -> "IteratedIntegrals":
        dW = np.asarray(pair.dW, dtype=float)[..., None]
        dZ = np.asarray(pair.dZ, dtype=float)[..., None]
        dt = pair.dt
        return cls(
            time=0.5 * dt**2,
            noise_time=dZ,
            noise_noise=0.5 * (dW * dW - dt),
            time_noise=dW * dt - dZ,
            triple=0.5 * (dW * dW / 3.0 - dt) * dW,
        )


def integrate_continuous_step(inputs: StepInputs) -> np.ndarray:
    """Integrate the continuous tamed scheme exactly over one step.

    Drift part: bⁿΔ + L^{n,0}b∫(s−κ)ds + L^{n,1}b∫(w−w_κ)ds.
    Diffusion part: σⁿΔW + L^{n,1}σ∫(w−w_κ)dw + L^{n,0}σ∫(s−κ)dw + L^{n,1}L¹σ∫∫∫.
    """
    t = inputs.tamed
    dW = np.asarray(inputs.pair.dW, dtype=float)[..., None]
    integrals = IteratedIntegrals.from_pair(inputs.pair)
    drift_part = t.b * inputs.pair.dt + t.L0b * integrals.time + t.L1b * integrals.noise_time
    diffusion_part = (
        t.sigma * dW
        + t.L1sigma * integrals.noise_noise
        + t.L0sigma * integrals.time_noise
        + t.L1L1sigma * integrals.triple
    )
    return inputs.x + drift_part + diffusion_part


@dataclass(frozen=True, eq=False)
class PathSolution:
    """Terminal states of a batch, step index of the first explosion per path (-1 if none)."""

    terminal: np.ndarray
    exploded_at: np.ndarray
    trajectory: Optional[np.ndarray] = None

    @property
    def exploded(self) -> np.ndarray:
        return self.exploded_at >= 0

    @property
    def explosions(self) -> int:
        return int(np.count_nonzero(self.exploded))


def integrate(
    problem: Problem,
    scheme: SchemeKind,
    dW: np.ndarray,
    dZ: np.ndarray,
    T: float,
    record_trajectory: bool = False,
    explosion_bound: float = EXPLOSION_BOUND,
) -> PathSolution:
    """Fold the chosen step over (paths, N) increment arrays from x₀.

    A path whose state becomes non-finite or leaves the ball of radius
    ``explosion_bound`` is marked with the step index and frozen at NaN.
    """
    dW = np.atleast_2d(np.asarray(dW, dtype=float))
    dZ = np.atleast_2d(np.asarray(dZ, dtype=float))
    if dW.shape != dZ.shape:
        raise ParameterError(f"Increment arrays differ in shape: {dW.shape} vs {dZ.shape}")
    paths, N = dW.shape
    if N < 1:
        raise ParameterError("At least one step is required")
    dt = T / N
    cfg = scheme.taming(problem.rho, N, T)
    step = STEPS[scheme.kind]

    x = np.broadcast_to(problem.x0, (paths, problem.d)).copy()
    exploded_at = np.full(paths, -1, dtype=np.int64)
    trajectory = None
    if record_trajectory:
        trajectory = np.empty((paths, N + 1, problem.d))
        trajectory[:, 0] = x

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N):
            bundle = eval_operator_bundle(problem, x, strict=False)
            inputs = StepInputs(x=x, pair=IncrementPair(dW=dW[:, k], dZ=dZ[:, k], dt=dt), tamed=tame(bundle, cfg, x))
            x = step(inputs)
            fresh = (exploded_at < 0) & ~(np.linalg.norm(x, axis=-1) <= explosion_bound)
            if fresh.any():
                exploded_at[fresh] = k
                x[fresh] = np.nan
            if trajectory is not None:
                trajectory[:, k + 1] = x

    return PathSolution(terminal=x, exploded_at=exploded_at, trajectory=trajectory)


def simulate_path(
    problem: Problem,
    scheme: SchemeKind,
    incs: PathIncrements,
    record_trajectory: bool = False,
) -> PathSolution:
    """Run one path; an explosion is an error only when taming is on."""
    if not math.isclose(incs.T, problem.T, rel_tol=1e-12):
        raise ParameterError(f"Increments cover T={incs.T} but the problem horizon is T={problem.T}")
    solution = integrate(problem, scheme, incs.dW[None, :], incs.dZ[None, :], incs.T, record_trajectory)
    if solution.explosions:
        step = int(solution.exploded_at[0])
        if scheme.taming_enabled:
            raise ExplosionError(step, path=incs.seed_lineage[1])
        logger.debug("Untamed path %s exploded at step %d", incs.seed_lineage, step)
    return solution
