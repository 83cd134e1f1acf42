"""
Exception types raised across beacon-guard.
"""

from typing import Optional


class BeaconGuardError(Exception):
    """Base class for all library errors."""


class PanelFormatError(BeaconGuardError, ValueError):
    """Panel file or matrix does not match the documented format."""


class MinorAlleleError(PanelFormatError):
    """Reference AAF at or above 0.5 in beacon mode."""

    def __init__(self, snv: int, aaf: float):
        super().__init__(f"SNV {snv}: reference AAF {aaf:.4f} violates the minor-allele rule (< 0.5)")
        self.snv = snv
        self.aaf = aaf


class ModeMismatchError(BeaconGuardError, ValueError):
    """Operation called with a release of the wrong mode."""


class ClipBoundError(BeaconGuardError, ValueError):
    """Released AAF outside [0.0001, 0.9999]."""

    def __init__(self, snv: int, value: float):
        super().__init__(f"SNV {snv}: released AAF {value!r} outside clip bounds")
        self.snv = snv
        self.value = value


class ParameterError(BeaconGuardError, ValueError):
    """Parameter outside its valid range."""

    def __init__(self, name: str, value, expected: Optional[str] = None):
        msg = f"invalid {name}={value!r}"
        if expected:
            msg += f" (expected {expected})"
        super().__init__(msg)
        self.name = name
        self.value = value


class OracleLimitError(BeaconGuardError, ValueError):
    """Instance too large for exhaustive enumeration."""
