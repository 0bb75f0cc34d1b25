"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class InputError(ValueError):
    """An argument is outside the accepted domain."""


class InvariantError(RuntimeError):
    """The simulator reached a state that its scheduling rules forbid."""


class DivergedError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, step, loss):
        super().__init__(f"loss became non-finite ({loss!r}) at step {step}")
        self.step = step
        self.loss = loss
