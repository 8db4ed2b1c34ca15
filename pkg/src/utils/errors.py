from typing import Optional


class TamedTaylorError(Exception):
    """Base class for every error raised by the simulation package."""


class ParameterError(TamedTaylorError, ValueError):
    """Invalid argument or configuration value."""


class OperatorRangeError(TamedTaylorError, ArithmeticError):
    def __init__(self, operator: str, message: Optional[str] = None):
        self.operator = operator
        super().__init__(message or f"Non-finite value while evaluating {operator}")


class DerivativeValidationError(TamedTaylorError):
    def __init__(self, evaluator: str, point, deviation: float, tolerance: float):
        self.evaluator = evaluator
        self.point = point
        self.deviation = deviation
        super().__init__(
            f"{evaluator} disagrees with finite differences at x={point}: "
            f"relative deviation {deviation:.3e} > {tolerance:.0e}"
        )


class ExplosionError(TamedTaylorError, RuntimeError):
    def __init__(self, step: int, path: Optional[int] = None, message: Optional[str] = None):
        self.step = step
        self.path = path
        where = f"step {step}" if path is None else f"step {step} of path {path}"
        super().__init__(message or f"Numerical explosion at {where}")


class EstimationError(TamedTaylorError, RuntimeError):
    """No usable paths were left for a strong-error row."""


class FitError(TamedTaylorError, ValueError):
    """Not enough usable rows for a rate regression."""


class BoundViolationError(TamedTaylorError):
    """A growth bound or assumption check failed."""


class ResultsIOError(TamedTaylorError, OSError):
    def __init__(self, path, reason: str, writing: bool = True):
        self.path = str(path)
        self.writing = writing
        where = f"writing results to {path}" if writing else f"reading results from {path}"
        super().__init__(f"Error {where}: {reason}")
