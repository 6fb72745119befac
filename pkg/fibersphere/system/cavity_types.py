"""Physical parameter types for the fiber-coupled microsphere model."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Any


class CouplingRegime(str, Enum):
    UNDERCOUPLED = "undercoupled"
    CRITICAL = "critical"
    OVERCOUPLED = "overcoupled"


@dataclass(frozen=True)
class CavityParams:
    """Coupled-mode parameters of one whispering-gallery resonance.

    gamma is the coupling loss rate, rho_l the round-trip absorption exponent
    and kappa the fiber-to-cavity coupling efficiency in radians. The derived
    quantities x = sqrt(1 - gamma) * exp(-rho_l) and y = cos(kappa) fix the
    lineshape; fsr_hz maps detuning to round-trip phase.
    """

    gamma: float
    rho_l: float
    kappa: float
    fsr_hz: float
    f_res_hz: float
    t_all: float = 1.0
    theta_offset_rad: float = 0.0

    def __post_init__(self) -> None:
        for name in ("gamma", "rho_l", "kappa", "fsr_hz", "f_res_hz", "t_all", "theta_offset_rad"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"CavityParams.{name} must be finite")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"CavityParams.gamma must lie in [0, 1), got {self.gamma}")
        if self.rho_l < 0.0:
            raise ValueError(f"CavityParams.rho_l must be >= 0, got {self.rho_l}")
        if not 0.0 <= self.kappa <= math.pi / 2:
            raise ValueError(f"CavityParams.kappa must lie in [0, pi/2], got {self.kappa}")
        if self.fsr_hz <= 0.0:
            raise ValueError(f"CavityParams.fsr_hz must be > 0, got {self.fsr_hz}")
        if self.f_res_hz <= 0.0:
            raise ValueError(f"CavityParams.f_res_hz must be > 0, got {self.f_res_hz}")
        if not 0.0 < self.t_all <= 1.0:
            raise ValueError(f"CavityParams.t_all must lie in (0, 1], got {self.t_all}")

    @property
    def x(self) -> float:
        return math.sqrt(1.0 - self.gamma) * math.exp(-self.rho_l)

    @property
    def y(self) -> float:
        return math.cos(self.kappa)

    def with_kappa(self, kappa: float) -> "CavityParams":
        return replace(self, kappa=kappa)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CavityParams":
        fields = cls.__dataclass_fields__
        return cls(**{key: float(value) for key, value in data.items() if key in fields})


@dataclass(frozen=True)
class GapCouplingLaw:
    """Exponential fall-off of the coupling efficiency with fiber-sphere gap."""

    kappa_0: float
    decay_len_nm: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.kappa_0 <= math.pi / 2:
            raise ValueError(f"GapCouplingLaw.kappa_0 must lie in [0, pi/2], got {self.kappa_0}")
        if not self.decay_len_nm > 0.0:
            raise ValueError(f"GapCouplingLaw.decay_len_nm must be > 0, got {self.decay_len_nm}")

    def kappa_at(self, d_nm: float) -> float:
        if d_nm < 0.0:
            raise ValueError(f"gap distance must be >= 0, got {d_nm}")
        return self.kappa_0 * math.exp(-d_nm / self.decay_len_nm)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ComplexTransmission:
    """Field transmission of the X mode at one detuning."""

    amplitude_ratio: complex
    transmittance: float
    phase_rad: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "amplitude_real": self.amplitude_ratio.real,
            "amplitude_imag": self.amplitude_ratio.imag,
            "transmittance": self.transmittance,
            "phase_rad": self.phase_rad,
        }
