"""Monte Carlo strong-error tables, log-log rate fits and moment probes.

Paths are processed in fixed-size chunks so that the per-path arrays (and
everything reduced from them) do not depend on how many workers ran the
chunks. Workers receive a chunk of path indices and return fresh arrays; the
reduction happens afterwards in path order.
"""

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from ..utils.errors import EstimationError, ExplosionError, FitError, ParameterError
from .brownian import coarsen, generate_batch
from .model import Problem
from .schemes import PathSolution, SchemeKind, integrate

logger = logging.getLogger(__name__)

CHUNK_SIZE = 250
DEFAULT_N_LIST = tuple(2**k for k in range(4, 10))
DEFAULT_N_REF = 2**13
DEFAULT_PATHS = 1000
DEFAULT_SEED = 42
TABLE_COLUMNS = ("N", "rms_error", "std_error", "explosions")


@dataclass
class ErrorRow:
    N: int
    rms_error: float
    std_error: float
    explosions: int


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    points: int

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class ErrorTable:
    problem: str
    scheme: str
    N_list: List[int]
    N_ref: int
    paths: int
    master_seed: int
    rows: List[ErrorRow] = field(default_factory=list)
    taming_enabled: bool = True

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.rows], columns=list(TABLE_COLUMNS))

    def metadata(self) -> Dict[str, object]:
        return {
            "problem": self.problem,
            "scheme": self.scheme,
            "taming_enabled": self.taming_enabled,
            "seed": self.master_seed,
            "N_ref": self.N_ref,
            "paths": self.paths,
        }

    def to_dict(self) -> Dict[str, object]:
        return {
            "problem": self.problem,
            "scheme": self.scheme,
            "taming_enabled": self.taming_enabled,
            "N_list": list(self.N_list),
            "N_ref": self.N_ref,
            "paths": self.paths,
            "master_seed": self.master_seed,
            "rows": [asdict(row) for row in self.rows],
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, object]) -> "ErrorTable":
        return cls(
            problem=payload["problem"],
            scheme=payload["scheme"],
            taming_enabled=bool(payload.get("taming_enabled", True)),
            N_list=[int(n) for n in payload["N_list"]],
            N_ref=int(payload["N_ref"]),
            paths=int(payload["paths"]),
            master_seed=int(payload["master_seed"]),
            rows=[
                ErrorRow(
                    N=int(row["N"]),
                    rms_error=float(row["rms_error"]),
                    std_error=float(row["std_error"]),
                    explosions=int(row["explosions"]),
                )
                for row in payload["rows"]
            ],
        )


@dataclass
class MomentRow:
    N: int
    moment: float
    explosions: int


@dataclass
class MomentTable:
    problem: str
    scheme: str
    p: int
    paths: int
    master_seed: int
    rows: List[MomentRow] = field(default_factory=list)
    taming_enabled: bool = True

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.rows], columns=["N", "moment", "explosions"])

    def metadata(self) -> Dict[str, object]:
        return {
            "problem": self.problem,
            "scheme": self.scheme,
            "taming_enabled": self.taming_enabled,
            "p": self.p,
            "seed": self.master_seed,
            "paths": self.paths,
        }

    def to_dict(self) -> Dict[str, object]:
        return {**self.metadata(), "rows": [asdict(r) for r in self.rows]}


@dataclass
class TerminalStatistics:
    N: int
    paths: int
    mean: np.ndarray
    variance: np.ndarray
    std_error: np.ndarray
    explosions: int

    def to_dict(self) -> Dict[str, object]:
        return {
            "N": self.N,
            "paths": self.paths,
            "mean": self.mean.tolist(),
            "variance": self.variance.tolist(),
            "std_error": self.std_error.tolist(),
            "explosions": self.explosions,
        }


def theoretical_rate(problem: Problem) -> float:
    """Strong order 1 + β/2 of the tamed order-1.5 scheme."""
    return 1.0 + problem.beta / 2.0


def path_chunks(paths: int, chunk_size: int = CHUNK_SIZE) -> List[range]:
    return [range(start, min(start + chunk_size, paths)) for start in range(0, paths, chunk_size)]


def run_chunks(
    work: Callable[[range], object],
    paths: int,
    threads: int = 1,
    executor=None,
    chunk_size: int = CHUNK_SIZE,
) -> List[object]:
    """Apply ``work`` to each chunk of path indices, returning results in chunk order.

    ``executor`` is anything with a ``map(fn, iterable)`` method; when omitted
    a thread pool of ``threads`` workers is used (or a plain loop for one).
    """
    chunks = path_chunks(paths, chunk_size)
    if executor is not None:
        return list(executor.map(work, chunks))
    if threads <= 1 or len(chunks) <= 1:
        return [work(chunk) for chunk in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, chunks))


def _validate_grid(N_list: Sequence[int], N_ref: int, paths: int) -> List[int]:
    N_list = sorted({int(n) for n in N_list})
    if any(n < 1 for n in N_list) or N_ref < 1:
        raise ParameterError("Step counts must be positive integers")
    bad = [n for n in N_list if N_ref % n]
    if bad:
        raise ParameterError(f"N_ref={N_ref} is not a multiple of N in {bad}")
    if paths < 2:
        raise ParameterError(f"At least two paths are required, got {paths}")
    return N_list


def strong_error(
    problem: Problem,
    scheme: SchemeKind,
    N_list: Sequence[int] = DEFAULT_N_LIST,
    N_ref: int = DEFAULT_N_REF,
    paths: int = DEFAULT_PATHS,
    master_seed: int = DEFAULT_SEED,
    threads: int = 1,
    executor=None,
) -> ErrorTable:
    """Estimate (E|X_T^ref − X_T^N|²)^{1/2} against the same scheme on the N_ref grid.

    Each coarse run consumes the aggregated increments of its own reference
    path. Exploded paths are excluded from a row and counted; with taming on
    any explosion aborts the estimate.
    """
    N_list = _validate_grid(N_list, int(N_ref), int(paths))
    T = problem.T
    dt_ref = T / N_ref

    def work(chunk: range) -> Dict[int, tuple]:
        dW, dZ = generate_batch(master_seed, chunk, N_ref, T)
        reference = integrate(problem, scheme, dW, dZ, T)
        out = {}
        for N in N_list:
            coarse_dW, coarse_dZ = coarsen(dW, dZ, dt_ref, N_ref // N)
            coarse = integrate(problem, scheme, coarse_dW, coarse_dZ, T)
            with np.errstate(invalid="ignore", over="ignore"):
                squared = np.sum((reference.terminal - coarse.terminal) ** 2, axis=-1)
            exploded = reference.exploded | coarse.exploded
            if scheme.taming_enabled and exploded.any():
                local = int(np.flatnonzero(exploded)[0])
                step = max(int(reference.exploded_at[local]), int(coarse.exploded_at[local]))
                raise ExplosionError(step, path=chunk[local])
            out[N] = (squared, exploded)
        logger.debug("Finished paths %d-%d of %s", chunk.start, chunk.stop - 1, problem.name)
        return out

    logger.info(
        "Strong error for %s with %s: N=%s, N_ref=%d, %d paths",
        problem.name, scheme.label, N_list, N_ref, paths,
    )
    results = run_chunks(work, paths, threads=threads, executor=executor)

    table = ErrorTable(
        problem=problem.name,
        scheme=scheme.label,
        taming_enabled=scheme.taming_enabled,
        N_list=N_list,
        N_ref=int(N_ref),
        paths=int(paths),
        master_seed=int(master_seed),
    )
    for N in N_list:
        squared = np.concatenate([chunk[N][0] for chunk in results])
        exploded = np.concatenate([chunk[N][1] for chunk in results])
        kept = squared[~exploded]
        if kept.size == 0:
            raise EstimationError(f"All {paths} paths exploded at N={N}")
        mean = float(np.mean(kept))
        std_error = float(np.std(kept, ddof=1) / math.sqrt(kept.size)) if kept.size > 1 else math.nan
        table.rows.append(
            ErrorRow(N=N, rms_error=math.sqrt(mean), std_error=std_error, explosions=int(exploded.sum()))
        )
        logger.info("N=%d rms_error=%.6e explosions=%d", N, table.rows[-1].rms_error, table.rows[-1].explosions)
    return table


def fit_rate(table: ErrorTable) -> RateFit:
    """Least squares of log₂ rms_error on log₂ N; the rate is the negated slope."""
    usable = [row for row in table.rows if row.rms_error > 0 and math.isfinite(row.rms_error)]
    dropped = [row.N for row in table.rows if not (row.rms_error > 0 and math.isfinite(row.rms_error))]
    if dropped:
        warnings.warn(f"Excluding rows with zero or non-finite error from the rate fit: N={dropped}")
    if len(usable) < 3:
        raise FitError(f"A rate fit needs at least 3 rows with positive error, got {len(usable)}")

    log_n = np.log2([row.N for row in usable])
    log_err = np.log2([row.rms_error for row in usable])
    result = stats.linregress(log_n, log_err)
    if not math.isfinite(result.slope):
        raise FitError("Rate regression produced a non-finite slope")
    return RateFit(
        slope=float(-result.slope),
        intercept=float(result.intercept),
        r_squared=float(result.rvalue**2),
        points=len(usable),
    )


def simulate_paths(
    problem: Problem,
    scheme: SchemeKind,
    N: int,
    paths: int,
    master_seed: int = DEFAULT_SEED,
    record_trajectory: bool = False,
    threads: int = 1,
    executor=None,
) -> PathSolution:
    """Run ``paths`` independently seeded paths on the N-step grid and stack the results."""
    if int(N) != N or N < 1:
        raise ParameterError(f"Number of steps must be a positive integer, got N={N}")
    if paths < 1:
        raise ParameterError(f"At least one path is required, got {paths}")

    def work(chunk: range) -> PathSolution:
        dW, dZ = generate_batch(master_seed, chunk, int(N), problem.T)
        return integrate(problem, scheme, dW, dZ, problem.T, record_trajectory=record_trajectory)

    parts = run_chunks(work, int(paths), threads=threads, executor=executor)
    return PathSolution(
        terminal=np.concatenate([part.terminal for part in parts]),
        exploded_at=np.concatenate([part.exploded_at for part in parts]),
        trajectory=np.concatenate([part.trajectory for part in parts]) if record_trajectory else None,
    )


def moment_probe(
    problem: Problem,
    scheme: SchemeKind,
    p: int,
    N_list: Iterable[int],
    paths: int = DEFAULT_PATHS,
    master_seed: int = DEFAULT_SEED,
    threads: int = 1,
    executor=None,
) -> MomentTable:
    """Empirical E|X_T|^p per N; a row with exploded paths reports +inf."""
    if int(p) != p or p < 2 or p % 2:
        raise ParameterError(f"Moment order must be an even integer >= 2, got p={p}")
    if paths < 100:
        raise ParameterError(f"Moment probes need at least 100 paths, got {paths}")

    table = MomentTable(
        problem=problem.name,
        scheme=scheme.label,
        taming_enabled=scheme.taming_enabled,
        p=int(p),
        paths=int(paths),
        master_seed=int(master_seed),
    )
    for N in sorted({int(n) for n in N_list}):
        solution = simulate_paths(problem, scheme, N, paths, master_seed, threads=threads, executor=executor)
        if solution.explosions:
            moment = math.inf
        else:
            moment = float(np.mean(np.linalg.norm(solution.terminal, axis=-1) ** p))
        table.rows.append(MomentRow(N=N, moment=moment, explosions=solution.explosions))
        logger.info("N=%d E|X_T|^%d=%.6e explosions=%d", N, p, moment, solution.explosions)
    return table


def terminal_statistics(
    problem: Problem,
    scheme: SchemeKind,
    N: int,
    paths: int = DEFAULT_PATHS,
    master_seed: int = DEFAULT_SEED,
    threads: int = 1,
    executor=None,
) -> TerminalStatistics:
    """Componentwise mean and variance of X_T over the paths that stayed finite."""
    solution = simulate_paths(problem, scheme, N, paths, master_seed, threads=threads, executor=executor)
    kept = solution.terminal[~solution.exploded]
    if kept.shape[0] < 2:
        raise EstimationError(f"Fewer than two finite paths at N={N}")
    variance = np.var(kept, axis=0, ddof=1)
    return TerminalStatistics(
        N=int(N),
        paths=int(paths),
        mean=np.mean(kept, axis=0),
        variance=variance,
        std_error=np.sqrt(variance / kept.shape[0]),
        explosions=solution.explosions,
    )
