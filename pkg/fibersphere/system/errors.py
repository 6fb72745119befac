"""Exception types raised by the fiber-microsphere analysis pipeline."""

from typing import Optional


class SingularityError(ValueError):
    """The coupled-mode denominator vanished (lossless, uncoupled, on resonance)."""


class SpectrumPointError(ValueError):
    """A spectrum evaluation failed at one detuning sample."""

    def __init__(self, index: int, detuning_hz: float, cause: Exception):
        super().__init__(f"spectrum point {index} (detuning {detuning_hz:.6g} Hz) failed: {cause}")
        self.index = index
        self.detuning_hz = detuning_hz
        self.cause = cause


class NoDipError(ValueError):
    """The spectrum has no resonance dip below its baseline."""


class AmbiguousDipError(ValueError):
    """The spectrum crosses its half-depth level more than twice."""


class IndeterminatePhaseError(ValueError):
    """S2 and S3 are both too small to define a relative phase."""


class CountOverflowError(OverflowError):
    """Expected counts per bin exceed the configured cap."""


class InconsistentSpectraError(RuntimeError):
    """Transmittance and phase spectra cannot be fit by one parameter set."""


class RecordFormatError(ValueError):
    """A record or spectrum file does not match the expected columns."""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4
