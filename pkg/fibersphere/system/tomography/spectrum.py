"""Frequency-resolved purity from a swept six-projection record."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..photon_sim.detector import DetectorModel
from ..photon_sim.sweep import SweepRecord
from ..workers import map_ordered
from .density import DensityMatrix, purity
from .mle import MleConfig, mle_reconstruct

logger = logging.getLogger('Tomography')


@dataclass(frozen=True)
class DetuningWindow:
    """Band of absolute detunings, e.g. far-detuned wings or the resonance core."""

    min_abs_hz: float = 0.0
    max_abs_hz: float = math.inf

    def __post_init__(self) -> None:
        if self.min_abs_hz < 0.0 or not self.max_abs_hz >= self.min_abs_hz:
            raise ValueError(f"invalid detuning window [{self.min_abs_hz}, {self.max_abs_hz}]")

    def contains(self, detuning_hz: float) -> bool:
        return self.min_abs_hz <= abs(detuning_hz) <= self.max_abs_hz


@dataclass(frozen=True)
class PurityPoint:
    detuning_hz: float
    purity: Optional[float]
    rho: Optional[DensityMatrix]
    bloch: Optional[Tuple[float, float, float]]
    converged: bool
    low_signal: bool
    clamped: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "detuning_hz": self.detuning_hz,
            "purity": self.purity,
            "rho": self.rho.to_dict() if self.rho is not None else None,
            "converged": self.converged,
            "low_signal": self.low_signal,
            "clamped": self.clamped,
        }


@dataclass(frozen=True)
class PuritySummary:
    mean: Optional[float]
    std: Optional[float]
    count: int
    minimum: Optional[float]
    window: DetuningWindow

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean": self.mean,
            "std": self.std,
            "count": self.count,
            "minimum": self.minimum,
            "window_min_abs_hz": self.window.min_abs_hz,
            "window_max_abs_hz": self.window.max_abs_hz if math.isfinite(self.window.max_abs_hz) else None,
        }


@dataclass(frozen=True)
class PuritySpectrum:
    points: List[PurityPoint]
    summary: PuritySummary

    def purities(self) -> np.ndarray:
        return np.array([np.nan if p.purity is None else p.purity for p in self.points])

    def detunings(self) -> np.ndarray:
        return np.array([p.detuning_hz for p in self.points])


def summarize_purity(points: Sequence[PurityPoint], window: DetuningWindow) -> PuritySummary:
    """Mean, sample standard deviation and minimum over points inside the window.

    Low-signal points carry no purity and are left out.
    """

    values = np.array([p.purity for p in points if p.purity is not None and window.contains(p.detuning_hz)])
    if values.size == 0:
        return PuritySummary(mean=None, std=None, count=0, minimum=None, window=window)
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return PuritySummary(
        mean=float(values.mean()),
        std=std,
        count=int(values.size),
        minimum=float(values.min()),
        window=window,
    )


def purity_spectrum(
    record: SweepRecord,
    detector: Optional[DetectorModel] = None,
    config: Optional[MleConfig] = None,
    *,
    window: Optional[DetuningWindow] = None,
    workers: Optional[int] = None,
) -> PuritySpectrum:
    """Reconstruct rho and its purity at every detuning of the record."""

    detector = detector or record.detector
    config = config or MleConfig()
    window = window or DetuningWindow()

    def reconstruct(index: int) -> PurityPoint:
        detuning = float(record.detunings_hz[index])
        stokes = record.stokes_at(index)
        if stokes.low_signal:
            return PurityPoint(detuning, None, None, None, False, True, stokes.clamped)
        try:
            result = mle_reconstruct(record.counts[index], detector, config, stream_key=(index,))
        except ValueError as exc:
            logger.debug("Point %d treated as low signal: %s", index, exc)
            return PurityPoint(detuning, None, None, None, False, True, stokes.clamped)
        return PurityPoint(
            detuning_hz=detuning,
            purity=purity(result.rho),
            rho=result.rho,
            bloch=result.bloch,
            converged=result.converged,
            low_signal=False,
            clamped=stokes.clamped,
        )

    points = map_ordered(reconstruct, range(len(record)), workers)
    summary = summarize_purity(points, window)
    skipped = sum(1 for p in points if p.low_signal)
    unsettled = sum(1 for p in points if not p.low_signal and not p.converged)
    logger.info(
        "Purity spectrum: %d points, %d low-signal, %d unconverged, window mean %s",
        len(points),
        skipped,
        unsettled,
        "n/a" if summary.mean is None else f"{summary.mean:.5f}",
    )
    return PuritySpectrum(points=points, summary=summary)
