class DomainError(ValueError):
    """Input outside the domain of an operation (wrong degree, cell outside the box, ...)."""


class CapacityError(RuntimeError):
    """A combinatorial or enumeration budget would be exceeded."""

    def __init__(self, message: str, required: int | None = None):
        super().__init__(message)
        self.required = required


class DegenerateInputError(ValueError):
    pass
