"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """Arguments violate a documented precondition."""


class NumericalError(ArithmeticError):
    """A computation produced non-finite values.

    ``partial_result`` carries whatever state the failing routine could
    salvage (e.g. the unlearning history up to the failing step), or None.
    """

    def __init__(self, message, partial_result=None):
        super().__init__(message)
        self.partial_result = partial_result
