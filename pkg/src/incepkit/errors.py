class IncepkitError(Exception):
    pass


class ShapeError(IncepkitError, ValueError):
    """Raised when tensor or node shapes are inconsistent."""


class GraphError(IncepkitError, ValueError):
    """Raised for structurally malformed graphs or fragments."""


class ConfigError(IncepkitError, ValueError):
    pass


class NumericalError(IncepkitError, ArithmeticError):
    """Non-finite values appeared during training."""

    def __init__(self, message, node_id=None):
        super().__init__(message)
        self.node_id = node_id
