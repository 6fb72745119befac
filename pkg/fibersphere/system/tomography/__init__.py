"""Single-qubit polarization tomography and purity spectra."""

from .density import (
    DensityMatrix,
    bloch_vector,
    fidelity,
    maximally_mixed,
    pairwise_stokes,
    project_to_physical,
    purity,
    rho_from_bloch,
    rho_from_stokes,
    trace_distance,
)
from .mle import MleConfig, TomographyResult, mle_reconstruct
from .spectrum import DetuningWindow, PurityPoint, PuritySpectrum, PuritySummary, purity_spectrum, summarize_purity

__all__ = [
    'DensityMatrix',
    'DetuningWindow',
    'MleConfig',
    'PurityPoint',
    'PuritySpectrum',
    'PuritySummary',
    'TomographyResult',
    'bloch_vector',
    'fidelity',
    'maximally_mixed',
    'mle_reconstruct',
    'pairwise_stokes',
    'project_to_physical',
    'purity',
    'purity_spectrum',
    'rho_from_bloch',
    'rho_from_stokes',
    'summarize_purity',
    'trace_distance',
]
