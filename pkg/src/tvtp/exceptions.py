"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class TVTPError(Exception):
    """Base class for every error raised by this package."""


class DomainError(TVTPError, ValueError):
    """A parameter or input lies outside the admissible domain."""


class NumericError(TVTPError, ArithmeticError):
    """A computation produced non-finite or degenerate intermediate values."""


class SizeError(TVTPError, ValueError):
    """An enumeration would exceed its configured size guard."""


class EstimationError(TVTPError, RuntimeError):
    """Every optimization start failed.

    Parameters
    ----------
    message : str
        Summary of the failure.
    diagnostics : list of str, optional
        One entry per start describing why it failed.
    """

    def __init__(self, message: str, diagnostics: list[str] | None = None):
        self.diagnostics = list(diagnostics or [])
        if self.diagnostics:
            message = message + "\n" + "\n".join(
                f"  start {i}: {d}" for i, d in enumerate(self.diagnostics)
            )
        super().__init__(message)
