"""Command-line configuration and subcommands"""

from .commands import main
from .config import RunConfig, resolve_config

__all__ = [
    'main',
    'RunConfig',
    'resolve_config',
]
