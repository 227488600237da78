"""Exception hierarchy.

The CLI maps these onto exit codes: :class:`UsageError` -> 2,
:class:`ResourceError` -> 3, :class:`PropertyFailure` -> 1.
"""


class IfsError(Exception):
    """Base class for all package errors."""


class UsageError(IfsError, ValueError):
    """Invalid arguments: bad dimensions, out-of-range parameters, wrong family."""


class ResourceError(IfsError, RuntimeError):
    """A search or grid exceeded its budget.

    ``partial`` carries whatever was computed before the budget ran out
    (best-so-far shadow, partial witness table, ...), or ``None``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class PropertyFailure(IfsError):
    """A checked property does not hold; ``result`` holds the evidence."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ShadowingFailure(PropertyFailure):
    pass


class UniquenessViolation(PropertyFailure):
    pass


class ConstructionFailure(PropertyFailure):
    pass
