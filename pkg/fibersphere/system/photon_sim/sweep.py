"""Frequency-swept six-projection photon counting."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..cavity_types import CavityParams
from ..coupled_mode import transmission
from ..errors import CountOverflowError
from ..polarization import (
    BASES,
    ETA,
    JonesField,
    StokesVector,
    cavity_output_array,
    depolarize_projections,
    projection_array,
    stokes_from_counts,
)
from .detector import DEFAULT_WAVELENGTH_M, DetectorModel
from .streams import SWEEP_STREAM, substream

logger = logging.getLogger('PhotonSimulator')

MAX_COUNTS_PER_BIN = 1e9
MODE_SEQUENTIAL = "sequential"
MODE_SIMULTANEOUS = "simultaneous"
SIMULATION_MODES = (MODE_SEQUENTIAL, MODE_SIMULTANEOUS)

# Wave-plate settings in sequential mode, each read out on both PBS ports
SETTING_COLUMNS = ((0, 1), (2, 3), (4, 5))


@dataclass(frozen=True, eq=False)
class SweepRecord:
    """Counts per detuning and projection, columns ordered (X, Y, P, M, R, L).

    reference_counts holds the expected counts per bin for the bare probe
    (no fiber loss, no cavity, no dark counts) and is the normalization for
    transmittance spectra.
    """

    detunings_hz: np.ndarray
    counts: np.ndarray
    detector: DetectorModel
    probe: JonesField
    reference_counts: np.ndarray
    wavelength_m: float = DEFAULT_WAVELENGTH_M
    seed: Optional[int] = None
    params: Optional[CavityParams] = None
    mode: str = MODE_SEQUENTIAL
    depolarization: float = 0.0
    jitter_hz: float = 0.0
    compensated: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        detunings = np.asarray(self.detunings_hz, dtype=float)
        counts = np.asarray(self.counts)
        if detunings.ndim != 1 or detunings.size == 0:
            raise ValueError("detuning axis must be a non-empty 1-D array")
        if not np.all(np.isfinite(detunings)):
            raise ValueError("detuning axis must be finite")
        if detunings.size > 1 and not np.all(np.diff(detunings) > 0.0):
            raise ValueError("detuning axis must be strictly increasing")
        if counts.shape != (detunings.size, len(BASES)):
            raise ValueError(f"counts must be shaped ({detunings.size}, {len(BASES)}), got {counts.shape}")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.equal(np.mod(counts, 1), 0)):
                raise ValueError("counts must be integers")
            counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        reference = np.asarray(self.reference_counts, dtype=float)
        if reference.shape != (len(BASES),) or np.any(reference < 0.0):
            raise ValueError("reference_counts must be six nonnegative values")
        if self.mode not in SIMULATION_MODES:
            raise ValueError(f"unknown simulation mode {self.mode!r}")
        object.__setattr__(self, "detunings_hz", detunings)
        object.__setattr__(self, "counts", counts.astype(np.int64, copy=False))
        object.__setattr__(self, "reference_counts", reference)

    def __len__(self) -> int:
        return int(self.detunings_hz.size)

    @property
    def dark_counts_per_bin(self) -> float:
        return self.detector.dark_counts_per_bin

    def stokes_at(self, index: int) -> StokesVector:
        return stokes_from_counts(self.counts[index], self.dark_counts_per_bin)

    def normalized(self, t_all: float = 1.0) -> np.ndarray:
        """Dark-subtracted counts over the bare-probe reference, divided by t_all.

        Projections the probe never populates come back as NaN.
        """

        if not 0.0 < t_all <= 1.0:
            raise ValueError(f"t_all must lie in (0, 1], got {t_all}")
        signal = np.clip(self.counts - self.dark_counts_per_bin, 0.0, None)
        reference = self.reference_counts * t_all
        out = np.full(signal.shape, np.nan)
        np.divide(signal, reference, out=out, where=reference > 0.0)
        return out

    def transmittance(self, t_all: Optional[float] = None) -> np.ndarray:
        """X-projection transmittance spectrum.

        Without t_all the compensated spectrum is used when present.
        """

        if t_all is not None:
            return self.normalized(t_all)[:, 0]
        source = self.compensated if self.compensated is not None else self.normalized()
        return source[:, 0]

    def meta(self) -> Dict[str, Any]:
        return {
            "detector": self.detector.to_dict(),
            "probe": self.probe.to_dict(),
            "reference_counts": self.reference_counts.tolist(),
            "wavelength_m": self.wavelength_m,
            "seed": self.seed,
            "params": self.params.to_dict() if self.params is not None else None,
            "mode": self.mode,
            "depolarization": self.depolarization,
            "jitter_hz": self.jitter_hz,
        }


def reference_counts(probe: JonesField, detector: DetectorModel, wavelength_m: float = DEFAULT_WAVELENGTH_M) -> np.ndarray:
    """Expected counts per bin for the bare probe on each projection, dark excluded."""

    powers = projection_array(probe.a_x, probe.a_y) * 2.0 * ETA
    return detector.expected_counts(powers, wavelength_m) - detector.dark_counts_per_bin


def expected_counts_array(
    params: CavityParams,
    probe: JonesField,
    detector: DetectorModel,
    detunings_hz: np.ndarray,
    *,
    wavelength_m: float = DEFAULT_WAVELENGTH_M,
    depolarization: float = 0.0,
) -> np.ndarray:
    """Mean counts per bin, shaped (6,) + detunings_hz.shape."""

    detunings = np.asarray(detunings_hz, dtype=float)
    a_x, a_y = cavity_output_array(probe, params, detunings.ravel())
    powers = projection_array(a_x, a_y) * 2.0 * ETA
    if depolarization > 0.0 and abs(probe.a_x) > 0.0:
        # Channel strength follows the cavity interaction 1 - T / T_far
        t_far = transmission(params, params.fsr_hz / 2.0).transmittance
        t_here = np.abs(a_x) ** 2 / (params.t_all * abs(probe.a_x) ** 2)
        interaction = np.clip(1.0 - t_here / t_far, 0.0, 1.0)
        powers = depolarize_projections(powers, depolarization * interaction)
    expected = detector.expected_counts(powers, wavelength_m)
    return expected.reshape((len(BASES),) + detunings.shape)


def simulate_sweep(
    params: CavityParams,
    probe: JonesField,
    detector: DetectorModel,
    detunings_hz: Sequence[float],
    seed: int,
    *,
    wavelength_m: float = DEFAULT_WAVELENGTH_M,
    mode: str = MODE_SEQUENTIAL,
    depolarization: float = 0.0,
    jitter_hz: float = 0.0,
    max_counts_per_bin: float = MAX_COUNTS_PER_BIN,
) -> SweepRecord:
    """Draw Poisson counts for every detuning and projection.

    Each point (and each wave-plate setting in sequential mode) has its own
    substream keyed by (seed, index, setting). Laser jitter, when enabled, is
    drawn from the same substream before the counts.
    """

    detunings = np.asarray(detunings_hz, dtype=float)
    if detunings.ndim != 1 or detunings.size == 0:
        raise ValueError("detunings must be a non-empty 1-D sequence")
    if mode not in SIMULATION_MODES:
        raise ValueError(f"mode must be one of {SIMULATION_MODES}, got {mode!r}")
    if not 0.0 <= depolarization <= 1.0:
        raise ValueError(f"depolarization must lie in [0, 1], got {depolarization}")
    if not (math.isfinite(jitter_hz) and jitter_hz >= 0.0):
        raise ValueError(f"jitter_hz must be >= 0, got {jitter_hz}")

    settings = len(SETTING_COLUMNS) if mode == MODE_SEQUENTIAL else 1
    streams: List[List[np.random.Generator]] = [
        [substream(seed, SWEEP_STREAM, index, setting) for setting in range(settings)]
        for index in range(detunings.size)
    ]

    effective = np.repeat(detunings[:, None], settings, axis=1)
    if jitter_hz > 0.0:
        for index in range(detunings.size):
            for setting in range(settings):
                effective[index, setting] += jitter_hz * streams[index][setting].standard_normal()

    expected = expected_counts_array(
        params,
        probe,
        detector,
        effective,
        wavelength_m=wavelength_m,
        depolarization=depolarization,
    )
    peak = float(np.max(expected))
    if peak > max_counts_per_bin:
        raise CountOverflowError(
            f"expected {peak:.3g} counts per bin exceeds the cap of {max_counts_per_bin:.3g}; "
            "lower the probe power or the bin time"
        )

    counts = np.empty((detunings.size, len(BASES)), dtype=np.int64)
    for index in range(detunings.size):
        if mode == MODE_SEQUENTIAL:
            for setting, columns in enumerate(SETTING_COLUMNS):
                counts[index, list(columns)] = streams[index][setting].poisson(expected[list(columns), index, setting])
        else:
            counts[index] = streams[index][0].poisson(expected[:, index, 0])

    logger.info(
        "Simulated %d-point %s sweep (seed=%s, peak expectation %.1f counts/bin)",
        detunings.size,
        mode,
        seed,
        peak,
    )
    return SweepRecord(
        detunings_hz=detunings,
        counts=counts,
        detector=detector,
        probe=probe,
        reference_counts=reference_counts(probe, detector, wavelength_m),
        wavelength_m=wavelength_m,
        seed=seed,
        params=params,
        mode=mode,
        depolarization=depolarization,
        jitter_hz=jitter_hz,
    )


def compensate_transmittance(record: SweepRecord, t_all: float) -> SweepRecord:
    """Attach dark-subtracted, reference-normalized spectra scaled by 1/t_all.

    Raw integer counts are left untouched on the returned record.
    """

    return replace(record, compensated=record.normalized(t_all))
