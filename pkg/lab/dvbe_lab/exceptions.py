"""Error hierarchy shared by every app; exit codes are read by the CLI."""


class DvbeError(Exception):
    """Base error carrying an optional machine-readable code"""
    exit_code = 2

    def __init__(self, message: str, error_code: str = None):
        super().__init__(message)
        self.error_code = error_code


class ValidationError(DvbeError):
    """Input data or configuration violates an invariant"""
    exit_code = 2


class DimensionError(ValidationError):
    """Tensor shapes do not fit the operation"""

    def __init__(self, message: str, shapes: tuple = ()):
        super().__init__(message, error_code="dimension")
        self.shapes = tuple(shapes)


class ContractError(DvbeError):
    """An operation was called in a state it does not accept"""
    exit_code = 2


class NumericError(DvbeError):
    """Non-finite values, zero norms, failed gradient checks"""
    exit_code = 3

    def __init__(self, message: str, component: str = None, error_code: str = None):
        super().__init__(message, error_code=error_code)
        self.component = component
