"""Exception hierarchy shared by the solvers and the harness."""


class APFVError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(APFVError, ValueError):
    """A state or parameter lies outside the admissible set."""


class PreconditionError(APFVError, ValueError):
    pass


class StructureError(APFVError):
    """A structural assumption (kernel/image splitting, rank) fails at a state."""


class UnsupportedError(APFVError, NotImplementedError):
    pass


class ConfigurationError(APFVError, ValueError):
    """Bad solver parameters, e.g. a singular parameter matrix."""


class HyperbolicityError(APFVError, ValueError):
    pass


class NumericalFailure(APFVError, RuntimeError):
    """CFL violation, failed scalar inversion, overflow."""


class InvariantViolation(APFVError, RuntimeError):
    """A discrete invariant (admissibility, entropy inequality) was broken.

    ``index`` carries the offending cell/element when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index
