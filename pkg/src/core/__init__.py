"""Core numerics: problems, taming, Brownian increments, schemes and experiments"""

from .assumptions import check_assumptions, parameter_ranges
from .brownian import IncrementPair, PathIncrements, aggregate, generate_path
from .experiments import ErrorTable, RateFit, fit_rate, moment_probe, strong_error, terminal_statistics
from .model import Problem, builtin_problem, eval_operator_bundle
from .schemes import SchemeKind, simulate_path
from .taming import TamingConfig, tame, taming_factor

__all__ = [
    'Problem',
    'builtin_problem',
    'eval_operator_bundle',
    'TamingConfig',
    'taming_factor',
    'tame',
    'IncrementPair',
    'PathIncrements',
    'generate_path',
    'aggregate',
    'SchemeKind',
    'simulate_path',
    'ErrorTable',
    'RateFit',
    'strong_error',
    'fit_rate',
    'moment_probe',
    'terminal_statistics',
    'parameter_ranges',
    'check_assumptions',
]
