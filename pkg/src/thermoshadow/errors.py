"""Exception taxonomy shared across the package.

Three failure classes: bad caller input, a construction whose preconditions
cannot be met, and numerical breakdown (conditioning, lost positivity).
"""


class InputError(ValueError):
    """Caller-supplied data violates a documented precondition."""


class ConstructionError(RuntimeError):
    """A channel or operator cannot be built with the requested parameters."""


class NumericError(ArithmeticError):
    """Numerical conditioning or positivity was lost beyond tolerance."""
