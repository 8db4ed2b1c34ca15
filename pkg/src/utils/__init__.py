"""Error types and result export helpers"""

from .errors import TamedTaylorError
from .export import read_results, write_results

__all__ = [
    'TamedTaylorError',
    'read_results',
    'write_results',
]
