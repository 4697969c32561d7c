"""Shared exception types."""


class FormatError(ValueError):
    """An input file does not conform to its declared format.

    The message names the offending byte offset (binary files) or line
    number (text files).
    """


class NumericError(ArithmeticError):
    """A computation produced non-finite values and was aborted."""
