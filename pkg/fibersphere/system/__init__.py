"""Simulation and analysis components."""

from .cavity_types import CavityParams, ComplexTransmission, CouplingRegime, GapCouplingLaw
from .coupled_mode import coupling_regime, fwhm_hz, quality_factor, transmission, transmittance_spectrum
from .polarization import JonesField, StokesVector, extract_phase

__all__ = [
    'CavityParams',
    'ComplexTransmission',
    'CouplingRegime',
    'GapCouplingLaw',
    'JonesField',
    'StokesVector',
    'coupling_regime',
    'extract_phase',
    'fwhm_hz',
    'quality_factor',
    'transmission',
    'transmittance_spectrum',
]
