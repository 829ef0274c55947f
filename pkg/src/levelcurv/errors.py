"""Exception hierarchy shared by all levelcurv modules."""


class LevelcurvError(Exception):
    """Base class for every error raised by the library."""


class ArgError(LevelcurvError, ValueError):
    """An argument is outside the documented domain of an operation."""


class DomainError(LevelcurvError):
    """Convex ring geometry is invalid (inclusion, convexity, margins)."""


class OutOfBounds(LevelcurvError):
    """A query point lies outside the grid bounding box."""


class StencilError(LevelcurvError):
    """Not enough usable nodes to build a derivative stencil or fit."""


class FormatError(LevelcurvError):
    """Malformed field file."""


class CriticalPointError(LevelcurvError):
    """The spatial gradient is below the configured floor."""


class GeometryError(LevelcurvError):
    """Independent curvature computations disagree (implementation bug)."""


class LevelError(LevelcurvError):
    """A requested level set is empty or outside the field range."""


class StabilityError(LevelcurvError):
    """Explicit time step exceeds the stability bound."""


class BlowupError(LevelcurvError):
    """Time stepping produced non-finite values."""


class NumericsError(LevelcurvError):
    """Finite-difference evaluation produced non-finite values."""


class FitError(LevelcurvError):
    """No admissible bound constant exists in the search interval."""


class ConfigError(LevelcurvError):
    """Invalid configuration file; carries an optional line number."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
