"""Parameter recovery for transmittance, phase and gap-distance series."""

from .gap_series import GapFitResult, fit_gap_series, gap_curves, quality_curve
from .transmittance import FitResult, fit_joint, fit_transmittance, mirror_params

__all__ = [
    'FitResult',
    'GapFitResult',
    'fit_gap_series',
    'fit_joint',
    'fit_transmittance',
    'gap_curves',
    'mirror_params',
    'quality_curve',
]
