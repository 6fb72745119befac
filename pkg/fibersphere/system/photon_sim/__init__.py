"""Photon-counting simulation of the frequency-swept polarization measurement."""

from .detector import (
    DEFAULT_EFFICIENCY,
    DEFAULT_PROBE_POWER_W,
    DEFAULT_WAVELENGTH_M,
    DetectorModel,
    efficiency_for_count_rate,
    mean_photons_per_window,
)
from .streams import substream
from .sweep import (
    MODE_SEQUENTIAL,
    MODE_SIMULTANEOUS,
    SweepRecord,
    compensate_transmittance,
    expected_counts_array,
    reference_counts,
    simulate_sweep,
)

__all__ = [
    'DEFAULT_EFFICIENCY',
    'DEFAULT_PROBE_POWER_W',
    'DEFAULT_WAVELENGTH_M',
    'DetectorModel',
    'MODE_SEQUENTIAL',
    'MODE_SIMULTANEOUS',
    'SweepRecord',
    'compensate_transmittance',
    'efficiency_for_count_rate',
    'expected_counts_array',
    'mean_photons_per_window',
    'reference_counts',
    'simulate_sweep',
    'substream',
]
