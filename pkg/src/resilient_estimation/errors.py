"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A plant, network or scenario is malformed or inconsistent."""


class UnsupportedMatrixError(ConfigurationError):
    """The built-in real block-diagonalization cannot handle this matrix."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class ScaleLimitError(RuntimeError):
    """An exponential search was requested on an instance above the size guard."""


class DesignPhaseError(RuntimeError):
    """MEDAG construction did not terminate for some eigenvalue block."""

    def __init__(self, message, block=None, counters=None):
        super().__init__(message)
        self.block = block
        self.counters = dict(counters or {})


class ScenarioParseError(ConfigurationError):
    """A scenario or spec file could not be parsed or validated."""

    def __init__(self, message, line=None, section=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.section = section


class SensorFaultError(RuntimeError):
    """A node received a non-finite measurement from its own sensor."""
