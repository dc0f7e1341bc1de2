"""Exception hierarchy shared across the package."""


class EivArxError(Exception):
    """Base class for every error raised by eivarx."""


class UnstableModelError(EivArxError, ValueError):
    """AR polynomial has a root on or outside the unit circle."""


class InsufficientDataError(EivArxError, ValueError):
    pass


class NotPositiveDefiniteError(EivArxError, ValueError):
    pass


class DegenerateNoiseError(NotPositiveDefiniteError):
    """Constraint residuals vanish, so the noise variances are not identifiable."""


class WrongOrderError(EivArxError):
    """The assumed number of constraints is inconsistent with the data.

    Raised when the structural solve for the constraint rotation is
    singular or badly conditioned. The order search treats it as a
    rejection of the current guess.
    """


class NoStructureError(EivArxError):
    """The order search exhausted every guess without accepting one."""


class ConvergenceError(EivArxError):
    pass
