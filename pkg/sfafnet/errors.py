"""
Error types raised across sfafnet.

Library code raises these; the command-line boundary maps them to exit codes.
"""

from __future__ import annotations

from typing import Optional


class SfafError(Exception):
    """Base class for all sfafnet errors."""


class DimensionError(SfafError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigError(SfafError, ValueError):
    """A configuration value is out of range or inconsistent."""


class ContractError(SfafError, ValueError):
    """A documented precondition on an argument does not hold."""


class DegenerateError(SfafError, ArithmeticError):
    """A computation collapsed to a numerically meaningless value."""


class DecodeError(SfafError, ValueError):
    """An image or checkpoint file could not be decoded."""


class NonFiniteError(SfafError, FloatingPointError):
    """A NaN or Inf value appeared in a tensor."""

    def __init__(self, message: str, tensor_name: Optional[str] = None):
        super().__init__(message)
        self.tensor_name = tensor_name
