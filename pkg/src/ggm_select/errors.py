"""Exception types shared across the package.

Input validation raises plain ValueError; these classes mark failures of the
numerical machinery itself, so callers (and the CLI exit-code mapping) can
tell the two apart.
"""


class NumericalError(RuntimeError):
    """A numerical routine produced NaN/Inf or an otherwise unusable result."""


class IterationLimitError(NumericalError):
    """An iterative routine hit its iteration cap before converging."""
