"""Exception hierarchy shared by the library and the CLI."""


class MsesError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(MsesError, ValueError):
    """An argument violates a documented precondition (shape, range, finiteness)."""


class InsufficientSamplesError(InvalidArgumentError):
    """Too few samples to fit a model (PCA needs at least two)."""


class BudgetExhaustedError(MsesError):
    """The fitness-evaluation budget is spent; ends the generation loop."""


class SpecError(InvalidArgumentError):
    """An experiment spec failed to parse or validate.

    Attributes:
        key (str | None): The offending key, when one can be named.
        line (int | None): 1-based line of the key in the spec file.
    """

    def __init__(
        self, message: str, key: str | None = None, line: int | None = None
    ) -> None:
        self.key = key
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
