"""Exception hierarchy shared by the model, the solvers and the CLI.

Every error carries the process exit code the CLI uses when the error
escapes a run.
"""

from typing import Optional


class RolloverError(Exception):
    """Base class for all errors raised by this package"""

    exit_code = 1


class ConfigError(RolloverError):
    """Invalid configuration: bad YAML, bad field values, unknown names"""

    exit_code = 2

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field:
            location.append(f"field '{field}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)


class InvalidWeightError(RolloverError, ValueError):
    """Hull weights outside the unit simplex"""

    exit_code = 2


class AlphaParameterError(RolloverError, ValueError):
    """rho outside [0, 1)"""

    exit_code = 2


class StepError(RolloverError, ValueError):
    """Non-positive step size"""

    exit_code = 2


# Model singularities


class ModelSingularityError(RolloverError):
    """Model evaluated outside its domain; ``node`` is set for grid evaluations"""

    exit_code = 4

    def __init__(self, message: str, node: Optional[int] = None):
        self.node = node
        super().__init__(message)


class InvalidStateError(ModelSingularityError):
    pass


class DegenerateSpeedError(ModelSingularityError):
    pass


class TireSingularityError(ModelSingularityError):
    pass


class RollSingularityError(ModelSingularityError):
    pass


class GeometricSingularityError(ModelSingularityError):
    pass


class UndefinedIndexError(ModelSingularityError):
    pass


# Solver side


class SolverFailure(RolloverError):
    exit_code = 3


class BuildError(SolverFailure):
    pass


class ReferenceIntegrationError(SolverFailure):
    pass


class EvaluationError(SolverFailure):
    """Model evaluation failed inside the NLP; ``node`` is the offending grid node"""

    def __init__(self, message: str, node: Optional[int] = None, column: Optional[int] = None):
        self.node = node
        self.column = column
        if node is not None:
            message = f"{message} (node {node})"
        if column is not None:
            message = f"{message} (column {column})"
        super().__init__(message)


class StepFailureError(SolverFailure):
    """Implicit time step did not converge at grid index ``index``"""

    def __init__(self, message: str, index: int):
        self.index = index
        super().__init__(f"{message} (grid index {index})")
