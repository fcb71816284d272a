"""Exception hierarchy shared by all modules."""


class HDSpectralError(Exception):
    """Base class for every error raised by the package."""


class InvalidInput(HDSpectralError, ValueError):
    pass


class InvalidLag(HDSpectralError, ValueError):
    pass


class InvalidBandwidth(HDSpectralError, ValueError):
    pass


class InvalidOrder(HDSpectralError, ValueError):
    pass


class EmptyGrid(HDSpectralError, ValueError):
    pass


class SingularTransfer(HDSpectralError, ArithmeticError):
    pass


class DegenerateSpectrum(HDSpectralError, ArithmeticError):
    pass


class DegenerateInverse(HDSpectralError, ArithmeticError):
    pass


class InfeasiblePenalty(HDSpectralError, ArithmeticError):
    pass


class ConvergenceFailure(HDSpectralError, RuntimeError):
    """Iterative solver did not converge; ``last_iterate`` holds the final state."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class GenerationFailure(HDSpectralError, RuntimeError):
    pass
