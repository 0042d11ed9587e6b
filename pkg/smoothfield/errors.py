class EngineError(Exception):
    """Root of every failure raised by the engine."""


class ExprError(EngineError):
    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class ExprSyntaxError(ExprError):
    pass


class UnknownIdentifierError(ExprError):
    pass


class VariableRangeError(ExprError):
    pass


class DomainError(EngineError):
    pass


class JetOrderError(EngineError):
    pass


class IntegrationError(EngineError):
    pass
