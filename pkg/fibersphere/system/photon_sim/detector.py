"""Photon-counting detector model and power-to-photon conversions."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict

from scipy import constants

DEFAULT_WAVELENGTH_M = 780e-9
DEFAULT_BIN_TIME_S = 1e-3
DEFAULT_DARK_RATE_HZ = 300.0
REFERENCE_WINDOW_S = 10e-9


def photon_energy_j(wavelength_m: float) -> float:
    if wavelength_m <= 0.0:
        raise ValueError(f"wavelength must be > 0, got {wavelength_m}")
    return constants.h * constants.c / wavelength_m


def mean_photons_per_window(power_w: float, wavelength_m: float, window_s: float) -> float:
    """Average photon number P * window * lambda / (h c)."""

    if power_w < 0.0 or window_s < 0.0:
        raise ValueError(f"power and window must be >= 0, got power={power_w}, window={window_s}")
    return power_w * window_s / photon_energy_j(wavelength_m)


def efficiency_for_count_rate(
    counts_per_bin: float,
    power_w: float,
    wavelength_m: float = DEFAULT_WAVELENGTH_M,
    bin_time_s: float = DEFAULT_BIN_TIME_S,
    projection_fraction: float = 0.5,
    t_all: float = 0.30,
) -> float:
    """Lumped efficiency that turns the given probe into counts_per_bin on one projection."""

    photons = mean_photons_per_window(power_w, wavelength_m, bin_time_s) * projection_fraction * t_all
    if photons <= 0.0:
        raise ValueError("probe delivers no photons; cannot calibrate efficiency")
    efficiency = counts_per_bin / photons
    if not 0.0 < efficiency <= 1.0:
        raise ValueError(f"calibrated efficiency {efficiency:.4g} is outside (0, 1]")
    return efficiency


# 10.5 pW balanced probe through a 30% fiber gives about 800 counts per 1 ms bin
DEFAULT_PROBE_POWER_W = 10.5e-12
DEFAULT_EFFICIENCY = efficiency_for_count_rate(800.0, DEFAULT_PROBE_POWER_W)


@dataclass(frozen=True)
class DetectorModel:
    bin_time_s: float = DEFAULT_BIN_TIME_S
    dark_rate_hz: float = DEFAULT_DARK_RATE_HZ
    efficiency: float = DEFAULT_EFFICIENCY

    def __post_init__(self) -> None:
        if not (math.isfinite(self.bin_time_s) and self.bin_time_s > 0.0):
            raise ValueError(f"DetectorModel.bin_time_s must be > 0, got {self.bin_time_s}")
        if not (math.isfinite(self.dark_rate_hz) and self.dark_rate_hz >= 0.0):
            raise ValueError(f"DetectorModel.dark_rate_hz must be >= 0, got {self.dark_rate_hz}")
        # 0 is allowed for all-dark test records
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"DetectorModel.efficiency must lie in [0, 1], got {self.efficiency}")

    @property
    def dark_counts_per_bin(self) -> float:
        return self.dark_rate_hz * self.bin_time_s

    def expected_counts(self, power_w, wavelength_m: float):
        """Mean counts per bin for optical power(s) reaching one detector."""

        return self.efficiency * power_w * self.bin_time_s / photon_energy_j(wavelength_m) + self.dark_counts_per_bin

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DetectorModel":
        return cls(**{key: float(data[key]) for key in ("bin_time_s", "dark_rate_hz", "efficiency") if key in data})
