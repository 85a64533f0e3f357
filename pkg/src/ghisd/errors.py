"""Exception types raised across the package."""


class ContractViolation(ValueError):
    """An argument violates an operation's stated contract (shape, metadata, range)."""


class PreconditionError(ContractViolation):
    """An operation was invoked in a state it does not accept."""


class UnsupportedOperation(TypeError):
    """The system does not provide the requested capability."""


class DegenerateFrameError(ArithmeticError):
    """Gram-Schmidt hit a (numerically) linearly dependent column."""

    def __init__(self, column, norm):
        self.column = column
        self.norm = norm
        super().__init__(
            f"degenerate frame: column {column} has post-projection norm {norm:.3e}"
        )
