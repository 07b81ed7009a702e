"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    pass


class ParseError(ValueError):
    """Malformed binary input; ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class DegenerateGeometry(ArithmeticError):
    pass


class UnsupportedStrategy(ValueError):
    pass


class UnsupportedSize(ValueError):
    pass


class FixtureError(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass
