"""Exception types raised by the optimizers and channel builders."""


class PassError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(PassError, ValueError):
    """A physical or algorithmic parameter is outside its valid range."""


class SingularGeometryError(PassError, ValueError):
    """A user coincides with a radiating antenna (zero propagation distance)."""


class NumericalFailureError(PassError, ArithmeticError):
    """A linear-algebra routine failed or a bracket could not be established."""


class InfeasibleError(PassError):
    """No candidate position satisfies the placement constraints."""
