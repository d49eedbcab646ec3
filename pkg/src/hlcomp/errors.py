"""
Exception types raised by the hlcomp library.

The CLI maps these onto exit codes: input and configuration problems exit
with status 2, numerical failures with status 3.
"""


class HlcError(Exception):
    """Base class for all hlcomp errors."""


class InputError(HlcError, ValueError):
    """Invalid input values, shapes, or files."""


class ConfigurationError(HlcError, ValueError):
    """Invalid model or filterbank configuration."""


class SingularBinError(HlcError, ArithmeticError):
    """A frequency bin has a zero denominator and no regularization floor."""

    def __init__(self, bins):
        self.bins = list(bins)
        preview = ", ".join(str(b) for b in self.bins[:5])
        more = "..." if len(self.bins) > 5 else ""
        super().__init__(f"Singular compensation bins: {preview}{more}")


class AlgorithmStallError(HlcError, RuntimeError):
    """The center-frequency selection could not advance past a frequency."""

    def __init__(self, cf: float, reason: str, step=None):
        self.cf = cf
        self.reason = reason
        self.step = step
        super().__init__(f"Center-frequency selection stalled at {cf:.3f} Hz: {reason}")
