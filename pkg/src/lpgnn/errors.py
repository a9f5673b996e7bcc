"""Exception types shared across the package."""


class StructuralError(ValueError):
    """Shapes, ids or dimensions are inconsistent."""


class NumericalError(ArithmeticError):
    """A non-finite value appeared; ``path`` names where."""

    def __init__(self, message, path=None):
        super().__init__(message if path is None else f"{message} (at {path})")
        self.path = path


class ParseError(ValueError):
    def __init__(self, message, lineno=None):
        super().__init__(message if lineno is None else f"line {lineno}: {message}")
        self.lineno = lineno
