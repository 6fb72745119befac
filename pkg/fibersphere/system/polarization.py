"""Jones fields, the polarization-selective cavity channel and Stokes analysis.

Only the X polarization couples to the resonator; Y passes as a reference.
The relative phase between the two is read out from the Stokes parameters
S2 = I_P - I_M and S3 = I_R - I_L.

Projection bases (all amplitudes divided by sqrt(2) before squaring):

    P = X + Y      M = X - Y      R = X - iY      L = X + iY

With this handedness S2 = Re(a_x a_y*) / eta and S3 = -Im(a_x a_y*) / eta.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np
from scipy import constants

from .cavity_types import CavityParams
from .coupled_mode import spectrum_arrays, transmission, wrap_phase
from .errors import IndeterminatePhaseError

logger = logging.getLogger('Polarization')

# Vacuum impedance; cancels from every ratio
ETA = math.sqrt(constants.mu_0 / constants.epsilon_0)

BASES = ("x", "y", "p", "m", "r", "l")
PHASE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class JonesField:
    a_x: complex
    a_y: complex
    frequency_hz: float = 0.0

    def __post_init__(self) -> None:
        for name in ("a_x", "a_y"):
            value = complex(getattr(self, name))
            if not (math.isfinite(value.real) and math.isfinite(value.imag)):
                raise ValueError(f"JonesField.{name} must be finite")

    @property
    def power(self) -> float:
        return abs(self.a_x) ** 2 + abs(self.a_y) ** 2

    def to_dict(self) -> Dict[str, Any]:
        return {
            "a_x": [complex(self.a_x).real, complex(self.a_x).imag],
            "a_y": [complex(self.a_y).real, complex(self.a_y).imag],
            "frequency_hz": self.frequency_hz,
        }


@dataclass(frozen=True)
class StokesVector:
    """Stokes parameters in intensity units.

    low_signal marks a basis pair with no counts left after dark subtraction;
    clamped marks any single projection that went negative and was set to 0.
    Count-derived vectors may slightly violate |S| <= S0 because S0 comes
    from the X/Y pair only.
    """

    s0: float
    s1: float
    s2: float
    s3: float
    low_signal: bool = False
    clamped: bool = False

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.s0, self.s1, self.s2, self.s3)):
            raise ValueError("Stokes parameters must be finite")
        if self.s0 < 0.0:
            raise ValueError(f"StokesVector.s0 must be >= 0, got {self.s0}")

    def normalized(self) -> Tuple[float, float, float]:
        if self.s0 <= 0.0:
            raise IndeterminatePhaseError("cannot normalize a Stokes vector with s0 = 0")
        return self.s1 / self.s0, self.s2 / self.s0, self.s3 / self.s0

    def degree_of_polarization(self) -> float:
        if self.s0 <= 0.0:
            return 0.0
        return math.sqrt(self.s1 ** 2 + self.s2 ** 2 + self.s3 ** 2) / self.s0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "s0": self.s0,
            "s1": self.s1,
            "s2": self.s2,
            "s3": self.s3,
            "low_signal": self.low_signal,
            "clamped": self.clamped,
        }


def balanced_probe(
    power_w: float,
    angle_rad: float = math.pi / 4,
    relative_phase_rad: float = 0.0,
    frequency_hz: float = 0.0,
) -> JonesField:
    """Linearly (or elliptically) polarized probe with |a_x|^2 + |a_y|^2 = power_w."""

    if power_w < 0.0:
        raise ValueError(f"probe power must be >= 0, got {power_w}")
    amplitude = math.sqrt(power_w)
    return JonesField(
        a_x=complex(amplitude * math.cos(angle_rad)),
        a_y=amplitude * math.sin(angle_rad) * complex(math.cos(relative_phase_rad), math.sin(relative_phase_rad)),
        frequency_hz=frequency_hz,
    )


def apply_cavity(field: JonesField, params: CavityParams, detuning_hz: float) -> JonesField:
    """Pass the field through the fiber and the X-coupled resonator.

    A_X = sqrt(T_all) sqrt(T_X) e^{i theta_X} A_0X and A_Y = sqrt(T_all) A_0Y.
    """

    result = transmission(params, detuning_hz)
    fiber = math.sqrt(params.t_all)
    x_factor = fiber * math.sqrt(result.transmittance) * complex(
        math.cos(result.phase_rad), math.sin(result.phase_rad)
    )
    return JonesField(
        a_x=x_factor * field.a_x,
        a_y=fiber * field.a_y,
        frequency_hz=params.f_res_hz + detuning_hz,
    )


def apply_birefringence(field: JonesField, offset_rad: float) -> JonesField:
    """Retard X relative to Y by a constant residual fiber birefringence."""

    if offset_rad == 0.0:
        return field
    return JonesField(
        a_x=field.a_x * complex(math.cos(offset_rad), math.sin(offset_rad)),
        a_y=field.a_y,
        frequency_hz=field.frequency_hz,
    )


def cavity_output_array(
    probe: JonesField,
    params: CavityParams,
    detunings_hz,
    *,
    include_birefringence: bool = True,
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized apply_cavity (and optionally apply_birefringence) over detunings."""

    t, theta = spectrum_arrays(params, np.ravel(np.asarray(detunings_hz, dtype=float)))
    if include_birefringence:
        theta = theta + params.theta_offset_rad
    fiber = math.sqrt(params.t_all)
    a_x = fiber * np.sqrt(t) * np.exp(1j * theta) * probe.a_x
    a_y = np.full_like(a_x, fiber * probe.a_y)
    return a_x, a_y


def depolarize_projections(projections: np.ndarray, strength) -> np.ndarray:
    """Shrink every Stokes component by (1 - strength), keeping each pair's total.

    projections is shaped (6, ...) in (X, Y, P, M, R, L) order.
    """

    projections = np.asarray(projections, dtype=float)
    keep = 1.0 - np.asarray(strength, dtype=float)
    if np.any(keep < 0.0) or np.any(keep > 1.0):
        raise ValueError("depolarizing strength must lie in [0, 1]")
    out = np.empty_like(projections)
    for first in (0, 2, 4):
        total = projections[first] + projections[first + 1]
        diff = keep * (projections[first] - projections[first + 1])
        out[first] = 0.5 * (total + diff)
        out[first + 1] = 0.5 * (total - diff)
    return out


def projection_array(a_x, a_y) -> np.ndarray:
    """Six projection intensities (X, Y, P, M, R, L) for arrays of amplitudes.

    Returns an array shaped (6,) + broadcast shape of the inputs.
    """

    a_x = np.asarray(a_x, dtype=complex)
    a_y = np.asarray(a_y, dtype=complex)
    return np.stack(
        [
            np.abs(a_x) ** 2 / (2.0 * ETA),
            np.abs(a_y) ** 2 / (2.0 * ETA),
            np.abs(a_x + a_y) ** 2 / (4.0 * ETA),
            np.abs(a_x - a_y) ** 2 / (4.0 * ETA),
            np.abs(a_x - 1j * a_y) ** 2 / (4.0 * ETA),
            np.abs(a_x + 1j * a_y) ** 2 / (4.0 * ETA),
        ]
    )


def projection_intensities(field: JonesField) -> Dict[str, float]:
    values = projection_array(field.a_x, field.a_y)
    return {basis: float(value) for basis, value in zip(BASES, values)}


def stokes_from_field(field: JonesField) -> StokesVector:
    i = projection_intensities(field)
    return StokesVector(
        s0=i["x"] + i["y"],
        s1=i["x"] - i["y"],
        s2=i["p"] - i["m"],
        s3=i["r"] - i["l"],
    )


def stokes_from_counts(counts: Sequence[float], dark_counts_per_bin: float = 0.0) -> StokesVector:
    """Stokes vector from six projection counts ordered (X, Y, P, M, R, L).

    The mean dark count per bin is subtracted from every projection and
    negative results are clamped to zero.
    """

    values = np.asarray(counts, dtype=float)
    if values.shape != (len(BASES),):
        raise ValueError(f"expected {len(BASES)} projection counts, got shape {values.shape}")
    if np.any(values < 0.0) or not np.all(np.isfinite(values)):
        raise ValueError("projection counts must be finite and nonnegative")
    if dark_counts_per_bin < 0.0:
        raise ValueError("dark counts per bin must be >= 0")

    signal = values - dark_counts_per_bin
    clamped = bool(np.any(signal < 0.0))
    signal = np.clip(signal, 0.0, None)
    x, y, p, m, r, l = signal
    low_signal = bool(x + y <= 0.0 or p + m <= 0.0 or r + l <= 0.0)
    if low_signal:
        logger.debug("Low signal after dark subtraction: %s", values.tolist())
    return StokesVector(
        s0=float(x + y),
        s1=float(x - y),
        s2=float(p - m),
        s3=float(r - l),
        low_signal=low_signal,
        clamped=clamped,
    )


def extract_phase(
    stokes: StokesVector,
    arg_a0x: float = 0.0,
    arg_a0y: float = 0.0,
    theta_offset_rad: float = 0.0,
    tolerance: float = PHASE_TOLERANCE,
) -> float:
    """Relative X phase shift from S2 and S3, wrapped to (-pi, pi].

    theta_X = atan2(-S3, S2) - Arg A_0X + Arg A_0Y - offset
    """

    transverse = math.hypot(stokes.s2, stokes.s3)
    scale = max(stokes.s0, abs(stokes.s1), transverse)
    if scale <= 0.0 or transverse <= tolerance * scale:
        raise IndeterminatePhaseError(
            f"S2={stokes.s2:.6g} and S3={stokes.s3:.6g} too small to define a phase (S0={stokes.s0:.6g})"
        )
    theta = math.atan2(-stokes.s3, stokes.s2) - arg_a0x + arg_a0y - theta_offset_rad
    return wrap_phase(theta)
