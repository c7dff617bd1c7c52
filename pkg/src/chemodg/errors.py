"""Exception hierarchy shared by the solver modules."""


class ChemoError(Exception):
    """Base class for every error raised by chemodg."""


class MeshError(ChemoError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if lineno is not None:
            where += f":{lineno}" if where else f"line {lineno}"
        super().__init__(f"{where}: {message}" if where else message)


class DomainError(ChemoError, ValueError):
    """Input outside the domain of a pointwise operation (e.g. log of a negative density)."""


class SolverError(ChemoError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InvariantViolation(ChemoError):
    pass


class FixedPointError(SolverError):
    def __init__(self, message, last_iterate=None, iterations=0):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


class ConfigError(ChemoError, ValueError):
    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class SimulationError(ChemoError):
    """A time step failed; ``state`` holds the last accepted state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
