"""Exception hierarchy shared across the package."""


class JointCalError(Exception):
    """Base class for all errors raised by jointcal."""


class InvalidParameters(JointCalError, ValueError):
    pass


class NonConvergent(JointCalError):
    """Iterative undistortion did not reach tolerance within its budget."""


class OutsideValidRadius(JointCalError):
    """A distorted point lies beyond the monotone region of the lens model."""


class BehindCamera(JointCalError):
    pass


class InsufficientCorrespondences(JointCalError):
    pass


class NumericalFailure(JointCalError):
    pass


class EmptyFrustum(JointCalError):
    """No scene point projects inside the image."""


class RejectionBudgetExceeded(JointCalError):
    pass


class NoValidRays(JointCalError):
    pass


class DimensionMismatch(JointCalError, ValueError):
    pass


class RefinementFailed(JointCalError):
    """A refinement iteration failed; carries the iteration index and partial trace."""

    def __init__(self, iteration, cause, trace):
        super().__init__(f"refinement iteration {iteration} failed: {cause}")
        self.iteration = iteration
        self.cause = cause
        self.trace = trace


class ParseError(JointCalError, ValueError):
    def __init__(self, message, line=None, path=None):
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}" if loc else f"line {line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.line = line
        self.path = path


class ValidationError(ParseError):
    pass


class MissingKey(ParseError, KeyError):
    def __str__(self):
        return ParseError.__str__(self)


class NonOrthonormalRotation(ValidationError):
    pass


class VersionError(ParseError):
    pass
