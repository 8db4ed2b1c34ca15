"""Reproducible Brownian increments and the iterated integral ΔZ.

Stream derivation: every path owns a Philox (counter-based) generator whose
128-bit key is the first 16 bytes of SHA-256("<master_seed>:<path_index>").
The Philox counter then plays the role of the step index: step k of a path
consumes the two standard normals that follow the 2k normals drawn before it,
in order (U₁ then U₂ for each step).
"""

import hashlib
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..utils.errors import ParameterError

SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True, eq=False)
class IncrementPair:
    """(ΔW, ΔZ) over one step of length dt.

    ``dW`` and ``dZ`` are floats for a single path or equally shaped arrays
    when a batch of paths is advanced together.
    """

    dW: object
    dZ: object
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError(f"Step length must be positive, got dt={self.dt}")
        if not (np.all(np.isfinite(self.dW)) and np.all(np.isfinite(self.dZ))):
            raise ParameterError("Increments must be finite")


def derive_stream(master_seed: int, path_index: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{int(master_seed)}:{int(path_index)}".encode("utf-8")).digest()
    key = np.frombuffer(digest[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def pair_from_normals(u1, u2, dt: float) -> Tuple[object, object]:
    """ΔW = √Δ·U₁, ΔZ = ½Δ^{3/2}(U₁ + U₂/√3)."""
    sqrt_dt = math.sqrt(dt)
    return sqrt_dt * u1, 0.5 * dt * sqrt_dt * (u1 + u2 / SQRT3)


def sample_increment_pair(stream, dt: float) -> IncrementPair:
    if not dt > 0:
        raise ParameterError(f"Step length must be positive, got dt={dt}")
    u1, u2 = stream.standard_normal(2)
    dW, dZ = pair_from_normals(float(u1), float(u2), dt)
    return IncrementPair(dW=dW, dZ=dZ, dt=dt)


def sample_increment_pairs(stream, dt: float, size: int) -> IncrementPair:
    """Draw ``size`` independent pairs at once (same stream order as repeated single draws)."""
    if not dt > 0:
        raise ParameterError(f"Step length must be positive, got dt={dt}")
    normals = stream.standard_normal((int(size), 2))
    dW, dZ = pair_from_normals(normals[:, 0], normals[:, 1], dt)
    return IncrementPair(dW=dW, dZ=dZ, dt=dt)


@dataclass(frozen=True, eq=False)
class PathIncrements:
    N: int
    T: float
    dW: np.ndarray
    dZ: np.ndarray
    seed_lineage: Tuple[int, int]

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def pairs(self) -> List[IncrementPair]:
        dt = self.dt
        return [IncrementPair(dW=float(w), dZ=float(z), dt=dt) for w, z in zip(self.dW, self.dZ)]

    def coarsen(self, N: int) -> "PathIncrements":
        """Aggregate this path down to ``N`` steps; N must divide self.N."""
        if N < 1 or self.N % N:
            raise ParameterError(f"Cannot aggregate {self.N} steps down to {N}")
        dW, dZ = coarsen(self.dW, self.dZ, self.dt, self.N // N)
        return PathIncrements(N=N, T=self.T, dW=dW, dZ=dZ, seed_lineage=self.seed_lineage)


def generate_path(master_seed: int, path_index: int, N: int, T: float) -> PathIncrements:
    if int(N) != N or N < 1:
        raise ParameterError(f"Number of steps must be a positive integer, got N={N}")
    if not T > 0:
        raise ParameterError(f"Time horizon must be positive, got T={T}")
    stream = derive_stream(master_seed, path_index)
    pairs = sample_increment_pairs(stream, T / N, int(N))
    return PathIncrements(
        N=int(N),
        T=float(T),
        dW=pairs.dW,
        dZ=pairs.dZ,
        seed_lineage=(int(master_seed), int(path_index)),
    )


def generate_batch(
    master_seed: int, path_indices: Sequence[int], N: int, T: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Stack independently seeded paths into (paths, N) arrays of ΔW and ΔZ."""
    paths = [generate_path(master_seed, index, N, T) for index in path_indices]
    if not paths:
        return np.empty((0, int(N))), np.empty((0, int(N)))
    return np.stack([p.dW for p in paths]), np.stack([p.dZ for p in paths])


def coarsen(dW: np.ndarray, dZ: np.ndarray, dt: float, factor: int) -> Tuple[np.ndarray, np.ndarray]:
    """Merge consecutive blocks of ``factor`` steps along the last axis.

    ΔW = Σᵢ ΔWᵢ and ΔZ = Σᵢ [ΔZᵢ + (Σ_{j<i} ΔW_j)·δ], the exact split of
    ∫∫dW ds over the union of the fine steps.
    """
    dW = np.asarray(dW, dtype=float)
    dZ = np.asarray(dZ, dtype=float)
    if factor < 1 or dW.shape[-1] % factor:
        raise ParameterError(f"Cannot aggregate {dW.shape[-1]} steps in blocks of {factor}")
    if factor == 1:
        return dW.copy(), dZ.copy()
    shape = dW.shape[:-1] + (dW.shape[-1] // factor, factor)
    w = dW.reshape(shape)
    z = dZ.reshape(shape)
    before = np.concatenate(
        [np.zeros(shape[:-1] + (1,)), np.cumsum(w, axis=-1)[..., :-1]], axis=-1
    )
    return w.sum(axis=-1), (z + before * dt).sum(axis=-1)


def aggregate(fine: Sequence[IncrementPair]) -> IncrementPair:
    if not fine:
        raise ParameterError("Cannot aggregate an empty list of increments")
    dt = fine[0].dt
    if any(pair.dt != dt for pair in fine):
        raise ParameterError("All fine increments must share the same step length")
    dW, dZ = coarsen(
        np.array([pair.dW for pair in fine], dtype=float),
        np.array([pair.dZ for pair in fine], dtype=float),
        dt,
        len(fine),
    )
    return IncrementPair(dW=float(dW[0]), dZ=float(dZ[0]), dt=dt * len(fine))
