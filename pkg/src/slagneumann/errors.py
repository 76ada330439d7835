"""Exception hierarchy shared by all modules."""


class SlagError(Exception):
    """Base class for every error raised by the package."""


# geometry
class GeometryError(SlagError):
    pass


class NonConvex(GeometryError):
    pass


class BadDimension(GeometryError):
    pass


class ProjectionDiverged(GeometryError):
    pass


class OutsideCollar(GeometryError):
    pass


# spectral operators
class SpectralError(SlagError):
    pass


class NotSymmetric(SpectralError):
    pass


class NonpositiveF(SpectralError):
    pass


class PhaseViolated(SpectralError):
    pass


class NotMeanZero(SpectralError):
    pass


# grid / assembly
class TooCoarse(SlagError):
    pass


class OutsideInterpolationDomain(SlagError):
    pass


class NonFiniteField(SlagError):
    pass


# solver
class SolverError(SlagError):
    pass


class LinearSolveFailed(SolverError):
    pass


class LineSearchStalled(SolverError):
    pass


class MaxIterExceeded(SolverError):
    pass


class PhaseGuardViolated(SolverError):
    pass


class StepUnderflow(SolverError):
    pass


class PathDiverged(SolverError):
    pass


class NotBall(SolverError):
    pass


# oracle
class BranchExit(SlagError):
    pass


class DomainMismatch(SlagError):
    pass


# harness
class HarnessError(SlagError):
    pass


class NotASolution(HarnessError):
    pass


class CollarTooThin(HarnessError):
    pass


class WrongBCMode(HarnessError):
    pass


class NonPositiveLogArgument(HarnessError):
    pass


class AdmissibilityExhausted(HarnessError):
    pass


class ConfigError(SlagError):
    """Malformed run configuration; ``key`` and ``line`` locate the problem."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
