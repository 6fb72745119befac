"""Single-qubit polarization density matrices in the {X, Y} basis.

rho = 1/2 (I + s1 Z + s2 X - s3 Y) with normalized Stokes components, so
s1 = rho_00 - rho_11, s2 = 2 Re rho_01 and s3 = 2 Im rho_01.

Stokes vectors of a field use S3 = -Im(a_x a_y*), so rho_from_bloch of a
field's normalized Stokes vector is the complex conjugate of |psi><psi| for
psi = (a_x, a_y) / |a|. Purity and eigenvalues are unaffected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from ..polarization import StokesVector

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian unit-trace 2x2 matrix.

    Positivity is not enforced on construction because a linear inversion of
    noisy counts can land outside the Bloch ball; use is_physical() or
    project_to_physical() for that.
    """

    matrix: np.ndarray

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=complex)
        if matrix.shape != (2, 2):
            raise ValueError(f"density matrix must be 2x2, got {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("density matrix entries must be finite")
        if np.max(np.abs(matrix - matrix.conj().T)) > HERMITIAN_TOL:
            raise ValueError("density matrix must be Hermitian")
        if abs(np.trace(matrix) - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace must be 1, got {np.trace(matrix)}")
        # Exact Hermiticity from here on
        matrix = 0.5 * (matrix + matrix.conj().T)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def is_physical(self, tolerance: float = POSITIVITY_TOL) -> bool:
        return bool(self.eigenvalues().min() >= -tolerance)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "real": self.matrix.real.tolist(),
            "imag": self.matrix.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DensityMatrix":
        return cls(np.asarray(data["real"], dtype=float) + 1j * np.asarray(data["imag"], dtype=float))


def rho_from_bloch(bloch: Sequence[float]) -> DensityMatrix:
    s1, s2, s3 = (float(v) for v in bloch)
    return DensityMatrix(0.5 * np.array([[1.0 + s1, s2 + 1j * s3], [s2 - 1j * s3, 1.0 - s1]]))


def rho_from_stokes(stokes: StokesVector) -> DensityMatrix:
    """Linear inversion of a Stokes vector; may be unphysical for noisy data."""

    if stokes.s0 <= 0.0:
        raise ValueError(f"rho_from_stokes needs s0 > 0, got {stokes.s0}")
    return rho_from_bloch(stokes.normalized())


def pairwise_stokes(counts: Sequence[float], dark_counts: float = 0.0) -> StokesVector:
    """Unit-intensity Stokes vector with each component normalized by its own basis pair.

    Sequential measurements see a different flux per wave-plate setting, so
    S_k / S0 is estimated as (a - b) / (a + b) within each pair.
    """

    signal = np.clip(np.asarray(counts, dtype=float) - dark_counts, 0.0, None)
    components = []
    for first in (0, 2, 4):
        total = signal[first] + signal[first + 1]
        components.append((signal[first] - signal[first + 1]) / total if total > 0.0 else 0.0)
    return StokesVector(1.0, *components)


def bloch_vector(rho: DensityMatrix) -> Tuple[float, float, float]:
    m = rho.matrix
    return float((m[0, 0] - m[1, 1]).real), float(2.0 * m[0, 1].real), float(2.0 * m[0, 1].imag)


def purity(rho: DensityMatrix) -> float:
    """Tr(rho^2), between 0.5 and 1 for a physical qubit."""

    return float(np.real(np.trace(rho.matrix @ rho.matrix)))


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity, closed form for qubits: Tr(rho sigma) + 2 sqrt(det rho det sigma)."""

    overlap = float(np.real(np.trace(rho.matrix @ sigma.matrix)))
    dets = max(0.0, float(np.real(np.linalg.det(rho.matrix)))) * max(0.0, float(np.real(np.linalg.det(sigma.matrix))))
    return min(1.0, overlap + 2.0 * math.sqrt(dets))


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(rho.matrix - sigma.matrix))))


def project_to_physical(rho: DensityMatrix) -> DensityMatrix:
    """Clip negative eigenvalues and renormalize."""

    values, vectors = np.linalg.eigh(rho.matrix)
    values = np.clip(values, 0.0, None)
    values = values / values.sum()
    return DensityMatrix((vectors * values) @ vectors.conj().T)


def maximally_mixed() -> DensityMatrix:
    return DensityMatrix(0.5 * np.eye(2))
