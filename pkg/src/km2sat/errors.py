"""Exception types shared across the toolkit."""


class Km2SatError(Exception):
    pass


class ParseError(Km2SatError, ValueError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{line}:{col}: {message}"
        super().__init__(message)


class DimacsError(Km2SatError, ValueError):
    pass


class BudgetExhausted(Km2SatError):
    """Raised when an encoding exceeds its clause, label or byte budget."""


class Timeout(Km2SatError):
    pass


class ModelCheckError(Km2SatError):
    """An extracted Kripke model failed to satisfy the input formula."""


class OracleGuardError(Km2SatError, ValueError):
    pass
