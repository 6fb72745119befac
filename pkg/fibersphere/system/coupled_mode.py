"""Coupled-mode transmission of a tapered fiber side-coupled to a microsphere.

The X-polarized field after the coupling region is

    A_X / A_0X = sqrt(1 - gamma) * (y - x e^{-i phi}) / (1 - x y e^{-i phi})
               = sqrt(T) e^{-i theta}

with phi = 2 pi detuning / FSR. The ratio is referenced to the sign of the
on-resonance field, so theta is 0 at resonance in every regime and tends to 0
(undercoupled) or +/-pi (overcoupled) far from it.
"""

from __future__ import annotations

import logging
import math
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import constants

from .cavity_types import CavityParams, ComplexTransmission, CouplingRegime, GapCouplingLaw
from .errors import AmbiguousDipError, NoDipError, SingularityError, SpectrumPointError

logger = logging.getLogger('CoupledMode')

DEFAULT_SINGULARITY_TOL = 1e-15
DEFAULT_CRITICAL_TOL = 1e-6
DEFAULT_REFRACTIVE_INDEX = 1.45
DEFAULT_SPHERE_DIAMETER_M = 43.3e-6


def wrap_phase(theta):
    """Wrap angles into (-pi, pi]."""

    wrapped = np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def round_trip_phase(params: CavityParams, detuning_hz):
    return 2.0 * np.pi * np.asarray(detuning_hz, dtype=float) / params.fsr_hz


def _loss_terms(params: CavityParams) -> Tuple[float, float, float]:
    """Return (1 - x, 1 - y, 1 - xy) without cancellation for x, y close to 1."""

    log_x = 0.5 * math.log1p(-params.gamma) - params.rho_l
    one_minus_y = 2.0 * math.sin(params.kappa / 2.0) ** 2
    log_y = math.log1p(-one_minus_y) if one_minus_y < 1.0 else -math.inf
    one_minus_x = -math.expm1(log_x)
    one_minus_xy = -math.expm1(log_x + log_y)
    return one_minus_x, one_minus_y, one_minus_xy


def coupling_regime(params: CavityParams, tolerance: float = DEFAULT_CRITICAL_TOL) -> CouplingRegime:
    """Classify the coupling from the sign of y - x."""

    one_minus_x, one_minus_y, _ = _loss_terms(params)
    y_minus_x = one_minus_x - one_minus_y
    if y_minus_x > tolerance:
        return CouplingRegime.UNDERCOUPLED
    if y_minus_x < -tolerance:
        return CouplingRegime.OVERCOUPLED
    return CouplingRegime.CRITICAL


def _field_ratio(
    params: CavityParams,
    detunings_hz: np.ndarray,
    singularity_tol: float,
    critical_tol: float,
) -> Tuple[np.ndarray, np.ndarray]:
    phi = round_trip_phase(params, detunings_hz)
    one_minus_x, one_minus_y, one_minus_xy = _loss_terms(params)
    x = 1.0 - one_minus_x
    xy = 1.0 - one_minus_xy
    # 1 - e^{-i phi}
    walk = 2.0 * np.sin(phi / 2.0) ** 2 + 1j * np.sin(phi)
    numerator = (one_minus_x - one_minus_y) + x * walk
    denominator = one_minus_xy + xy * walk
    singular = np.abs(denominator) < singularity_tol

    reference = -1.0 if coupling_regime(params, critical_tol) is CouplingRegime.OVERCOUPLED else 1.0
    safe_denominator = np.where(singular, 1.0, denominator)
    ratio = reference * math.sqrt(1.0 - params.gamma) * numerator / safe_denominator
    return ratio, singular


def _as_transmission(ratio: complex) -> ComplexTransmission:
    ratio = complex(ratio)
    return ComplexTransmission(
        amplitude_ratio=ratio,
        transmittance=ratio.real * ratio.real + ratio.imag * ratio.imag,
        phase_rad=wrap_phase(-math.atan2(ratio.imag, ratio.real)),
    )


def transmission(
    params: CavityParams,
    detuning_hz: float,
    *,
    singularity_tol: float = DEFAULT_SINGULARITY_TOL,
    critical_tol: float = DEFAULT_CRITICAL_TOL,
) -> ComplexTransmission:
    """Evaluate the complex X-mode transmission at one detuning."""

    if not math.isfinite(detuning_hz):
        raise ValueError(f"detuning must be finite, got {detuning_hz}")
    ratio, singular = _field_ratio(params, np.asarray([detuning_hz]), singularity_tol, critical_tol)
    if singular[0]:
        raise SingularityError(
            f"|1 - x y e^(-i phi)| below {singularity_tol:g} at detuning {detuning_hz:g} Hz "
            f"(x={params.x!r}, y={params.y!r})"
        )
    return _as_transmission(ratio[0])


def _grid_ratio(
    params: CavityParams,
    detunings_hz: Sequence[float],
    singularity_tol: float,
    critical_tol: float,
) -> np.ndarray:
    detunings = np.asarray(detunings_hz, dtype=float)
    if detunings.ndim != 1 or detunings.size == 0:
        raise ValueError("detunings must be a non-empty 1-D sequence")
    bad = np.flatnonzero(~np.isfinite(detunings))
    if bad.size:
        index = int(bad[0])
        raise SpectrumPointError(index, float(detunings[index]), ValueError("detuning is not finite"))

    ratio, singular = _field_ratio(params, detunings, singularity_tol, critical_tol)
    if singular.any():
        index = int(np.flatnonzero(singular)[0])
        raise SpectrumPointError(
            index,
            float(detunings[index]),
            SingularityError(f"|1 - x y e^(-i phi)| below {singularity_tol:g}"),
        )
    return ratio


def _observables(ratio: np.ndarray, unwrap: bool) -> Tuple[np.ndarray, np.ndarray]:
    transmittance = ratio.real ** 2 + ratio.imag ** 2
    phase = wrap_phase(-np.angle(ratio))
    if unwrap:
        phase = np.unwrap(phase)
    return transmittance, phase


def spectrum_arrays(
    params: CavityParams,
    detunings_hz: Sequence[float],
    *,
    unwrap: bool = False,
    singularity_tol: float = DEFAULT_SINGULARITY_TOL,
    critical_tol: float = DEFAULT_CRITICAL_TOL,
) -> Tuple[np.ndarray, np.ndarray]:
    """Return (transmittance, phase) arrays for a detuning grid."""

    return _observables(_grid_ratio(params, detunings_hz, singularity_tol, critical_tol), unwrap)


def transmittance_spectrum(
    params: CavityParams,
    detunings_hz: Sequence[float],
    *,
    unwrap: bool = False,
    singularity_tol: float = DEFAULT_SINGULARITY_TOL,
    critical_tol: float = DEFAULT_CRITICAL_TOL,
) -> List[ComplexTransmission]:
    """Element-wise transmission over a detuning grid, ordered like the input."""

    ratio = _grid_ratio(params, detunings_hz, singularity_tol, critical_tol)
    transmittance, phase = _observables(ratio, unwrap)
    logger.debug("Evaluated %d-point spectrum (x=%.12g, y=%.12g)", ratio.size, params.x, params.y)
    return [
        ComplexTransmission(amplitude_ratio=complex(r), transmittance=float(t), phase_rad=float(p))
        for r, t, p in zip(ratio, transmittance, phase)
    ]


def fwhm_hz(
    spectrum: Iterable[Tuple[float, float]],
    *,
    baseline: Optional[float] = None,
    tolerance: float = 1e-9,
) -> float:
    """Width between the two half-depth crossings of a resonance dip.

    The half-depth level is (baseline + minimum) / 2, with the baseline taken
    as the largest sample unless given. Crossings are linearly interpolated.
    """

    points = sorted((float(f), float(t)) for f, t in spectrum)
    if len(points) < 3:
        raise NoDipError("need at least three samples to locate a dip")
    freqs = np.array([p[0] for p in points])
    values = np.array([p[1] for p in points])
    base = float(values.max()) if baseline is None else float(baseline)
    minimum = float(values.min())
    if minimum >= base - tolerance:
        raise NoDipError(f"minimum {minimum:.6g} is not below baseline {base:.6g}")

    half = 0.5 * (base + minimum)
    above = values >= half
    crossings = np.flatnonzero(above[:-1] != above[1:])
    if crossings.size > 2:
        raise AmbiguousDipError(f"{crossings.size} half-depth crossings; expected 2")
    if crossings.size < 2:
        raise NoDipError("half-depth level is not crossed on both sides of the dip")

    edges = []
    for i in crossings:
        f0, f1 = freqs[i], freqs[i + 1]
        t0, t1 = values[i], values[i + 1]
        edges.append(f0 + (half - t0) * (f1 - f0) / (t1 - t0))
    return float(edges[1] - edges[0])


def quality_factor(f_res_hz: float, fwhm: float, *, paper_convention: bool = False) -> float:
    """Q = f0 / delta_f; paper_convention multiplies by 2 pi."""

    if not (f_res_hz > 0.0 and fwhm > 0.0):
        raise ValueError(f"quality factor needs positive inputs, got f0={f_res_hz}, fwhm={fwhm}")
    q = f_res_hz / fwhm
    return 2.0 * math.pi * q if paper_convention else q


def linewidth_hz(params: CavityParams) -> float:
    """Closed-form FWHM of the model dip relative to its far-detuned level."""

    _, _, one_minus_xy = _loss_terms(params)
    xy = 1.0 - one_minus_xy
    if xy <= 0.0:
        return params.fsr_hz
    half_angle = math.asin(min(1.0, one_minus_xy / (2.0 * math.sqrt(xy))))
    return 2.0 * half_angle * params.fsr_hz / math.pi


def minimum_transmittance(params: CavityParams) -> float:
    return transmission(params, 0.0).transmittance


def params_at_gap(base: CavityParams, law: GapCouplingLaw, d_nm: float) -> CavityParams:
    """Replace kappa with the gap law's value at d_nm."""

    return base.with_kappa(law.kappa_at(d_nm))


def critical_gap_nm(base: CavityParams, law: GapCouplingLaw) -> Optional[float]:
    """Gap at which y = x, or None if the law never reaches critical coupling."""

    one_minus_x, _, _ = _loss_terms(base)
    kappa_c = 2.0 * math.asin(math.sqrt(max(0.0, one_minus_x) / 2.0))
    if kappa_c <= 0.0 or law.kappa_0 < kappa_c:
        return None
    return law.decay_len_nm * math.log(law.kappa_0 / kappa_c)


def fsr_from_diameter(
    diameter_m: float = DEFAULT_SPHERE_DIAMETER_M,
    refractive_index: float = DEFAULT_REFRACTIVE_INDEX,
) -> float:
    """Free spectral range c / (pi n D) of a sphere's equatorial modes."""

    if diameter_m <= 0.0 or refractive_index <= 0.0:
        raise ValueError("diameter and refractive index must be positive")
    return constants.c / (math.pi * refractive_index * diameter_m)
