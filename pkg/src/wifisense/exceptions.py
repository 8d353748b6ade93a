"""Errors raised by :mod:`wifisense`.

Each error carries the exit status the command line interface uses for it.
"""

from __future__ import annotations

from typing import ClassVar

__all__ = [
    "ConfigurationError",
    "DataFormatError",
    "NumericalError",
    "ParameterError",
    "RangeError",
    "ShapeError",
    "UndefinedDivisionError",
    "WifiSenseError",
]


class WifiSenseError(Exception):
    """The base class for errors in :mod:`wifisense`."""

    #: The exit status used by :mod:`wifisense.cli`
    exit_code: ClassVar[int] = 1


class ConfigurationError(WifiSenseError, ValueError):
    """Raised when a configuration is internally inconsistent."""

    exit_code = 2


class ParameterError(WifiSenseError, ValueError):
    """Raised when an operation's arguments are outside its domain."""

    exit_code = 2


class ShapeError(WifiSenseError, ValueError):
    """Raised when array lengths, dimensions, or sample rates disagree."""

    exit_code = 3


class RangeError(WifiSenseError, ValueError):
    """Raised when a time or window falls outside the available data."""

    exit_code = 3


class DataFormatError(WifiSenseError):
    """Raised when a file on disk can not be parsed."""

    exit_code = 3


class UndefinedDivisionError(WifiSenseError, ZeroDivisionError, ValueError):
    """Raised when a channel estimate would divide by a zero reference value."""

    exit_code = 4


class NumericalError(WifiSenseError, ArithmeticError, ValueError):
    """Raised when a computation produces no finite answer."""

    exit_code = 4
