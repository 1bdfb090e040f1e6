"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class CarterError(Exception):
    """Base class for every error raised by carterkit."""


class ExprError(CarterError):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class UnknownFunctionError(ParseError):
    pass


class UnboundSymbolError(ExprError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound symbol {name!r}")


class DomainError(ExprError):
    """Evaluation left the real domain of an operation (sqrt(-1), log(0), 1/0, ...)."""

    def __init__(self, message: str, subexpr=None):
        self.subexpr = subexpr
        where = f" in {subexpr}" if subexpr is not None else ""
        super().__init__(f"{message}{where}")


class SchemaError(CarterError):
    pass


class InvariantError(CarterError):
    pass


class PreconditionError(CarterError):
    pass


class SingularJacobianError(CarterError):
    pass


class SamplerStarvation(CarterError):
    pass


class TransformError(CarterError):
    """Inverse chart map did not converge to an admissible point."""


class IntegrationError(CarterError):
    def __init__(self, message: str, step: int, reason: str, trajectory=None):
        self.step = step
        self.reason = reason
        self.trajectory = trajectory
        super().__init__(f"{message} (step {step}: {reason})")
