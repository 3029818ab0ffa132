"""Exception types shared across the package."""


class FermicritError(Exception):
    pass


class ConfigurationError(FermicritError, ValueError):
    pass


class DimensionError(FermicritError, ValueError):
    pass


class DomainError(FermicritError, ValueError):
    pass


class ContractError(FermicritError, ValueError):
    pass


class ResolutionError(FermicritError, ValueError):
    pass


class DiagnosticError(FermicritError, RuntimeError):
    pass


class RankDeficiencyError(FermicritError, ArithmeticError):
    """Gram matrix too close to singular; ``eigenvalue`` is the offending one."""

    def __init__(self, eigenvalue: float, message: str | None = None):
        self.eigenvalue = float(eigenvalue)
        super().__init__(message or f"Gram matrix near-singular (min eigenvalue {eigenvalue:.3e})")
