import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

from ..core.experiments import DEFAULT_N_LIST, DEFAULT_N_REF, DEFAULT_PATHS, DEFAULT_SEED
from ..core.model import PROBLEM_KINDS, Problem, builtin_problem, load_problem_file
from ..core.schemes import SCHEME_ALIASES, SchemeKind
from ..core.taming import DEFAULT_THETA
from ..utils.errors import ParameterError
from ..utils.export import FORMATS

SEED_ENV = "TAMED_TAYLOR_SEED"
THREADS_ENV = "TAMED_TAYLOR_THREADS"
COMMANDS = ("rate", "simulate", "check", "moments")


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one subcommand; echoed into every output file."""

    command: str = "rate"
    problem: str = "ginzburg"
    xi: float = 0.02
    problem_file: Optional[str] = None
    scheme: str = "taylor15"
    taming: bool = True
    theta: float = DEFAULT_THETA
    n_list: Tuple[int, ...] = DEFAULT_N_LIST
    n_ref: int = DEFAULT_N_REF
    paths: int = DEFAULT_PATHS
    seed: int = DEFAULT_SEED
    threads: int = 1
    out: Optional[str] = None
    format: str = "csv"
    override: bool = False
    x0: Optional[float] = None
    p0: Optional[float] = None
    p1: float = 3.0
    p: int = 4
    steps: Optional[int] = None
    record_trajectory: bool = False

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(sorted({int(n) for n in self.n_list})))
        if self.command not in COMMANDS:
            raise ParameterError(f"Unknown command '{self.command}'; expected one of {COMMANDS}")
        if self.problem_file is None and self.problem not in PROBLEM_KINDS:
            raise ParameterError(f"Unknown problem '{self.problem}'; expected one of {sorted(PROBLEM_KINDS)}")
        if self.scheme not in SCHEME_ALIASES:
            raise ParameterError(f"Unknown scheme '{self.scheme}'; expected one of {sorted(SCHEME_ALIASES)}")
        if self.format not in FORMATS:
            raise ParameterError(f"Unknown format '{self.format}'; expected one of {FORMATS}")
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise ParameterError(f"--n-list needs positive step counts, got {list(self.n_list)}")
        if self.paths < 1 or self.threads < 1:
            raise ParameterError("--paths and --threads must be at least 1")
        if not self.theta > 0:
            raise ParameterError(f"--theta must be positive, got {self.theta}")
        if self.steps is not None and self.steps < 1:
            raise ParameterError(f"--steps must be at least 1, got {self.steps}")

        if self.command == "rate":
            bad = [n for n in self.n_list if self.n_ref % n]
            if bad:
                raise ParameterError(f"--n-ref {self.n_ref} is not a multiple of {bad}")
            if self.paths < 2:
                raise ParameterError("rate needs at least two paths")
        if self.command == "moments":
            if self.p < 2 or self.p % 2:
                raise ParameterError(f"--p must be an even integer >= 2, got {self.p}")
            if self.paths < 100:
                raise ParameterError("moments needs at least 100 paths")

    @property
    def output_path(self) -> Path:
        if self.out:
            return Path(self.out)
        return Path("results") / f"{self.command}_{self.problem_label}_{self.scheme}.{self.format}"

    @property
    def problem_label(self) -> str:
        return Path(self.problem_file).stem if self.problem_file else self.problem

    def build_problem(self) -> Problem:
        if self.problem_file:
            problem = load_problem_file(self.problem_file)
            return problem if self.x0 is None else problem.with_initial_state(self.x0)
        return builtin_problem(self.problem, self.xi, override=self.override, x0=self.x0)

    def scheme_kind(self, taming: Optional[bool] = None) -> SchemeKind:
        return SchemeKind(
            kind=self.scheme,
            taming_enabled=self.taming if taming is None else taming,
            theta=self.theta,
        )

    def to_metadata(self) -> Dict[str, object]:
        # worker count and destination never change the numbers
        data = {k: v for k, v in asdict(self).items() if k not in ("threads", "out")}
        data["n_list"] = list(self.n_list)
        return data


def load_config_file(path) -> Dict[str, object]:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ParameterError(f"Error reading config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ParameterError(f"Config file {path} must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ParameterError(f"Unknown keys in config file {path}: {', '.join(unknown)}")
    return data


def environment_defaults(environ: Mapping[str, str] = os.environ) -> Dict[str, object]:
    values: Dict[str, object] = {}
    try:
        if environ.get(SEED_ENV):
            values["seed"] = int(environ.get(SEED_ENV))
        if environ.get(THREADS_ENV):
            values["threads"] = int(environ.get(THREADS_ENV))
    except ValueError as exc:
        raise ParameterError(f"Invalid integer in {SEED_ENV}/{THREADS_ENV}: {exc}") from exc
    return values


def resolve_config(
    command: str,
    flags: Mapping[str, object],
    config_file: Optional[str] = None,
    environ: Mapping[str, str] = os.environ,
) -> RunConfig:
    """Merge flags > config file > environment > defaults into a validated RunConfig."""
    values: Dict[str, object] = {}
    values.update(environment_defaults(environ))
    if config_file:
        values.update(load_config_file(config_file))
    values.update({key: value for key, value in flags.items() if value is not None})
    values["command"] = command
    return RunConfig(**values)
