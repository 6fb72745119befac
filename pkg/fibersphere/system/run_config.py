"""Run configuration schema for the batch pipeline.

Configs are JSON files validated with pydantic. Unknown keys are rejected and
physical ranges are enforced at parse time, so a bad file fails with the
offending field path before any simulation runs.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import constants

from .cavity_types import CavityParams, GapCouplingLaw
from .coupled_mode import DEFAULT_REFRACTIVE_INDEX, DEFAULT_SPHERE_DIAMETER_M, fsr_from_diameter, params_at_gap
from .photon_sim.detector import (
    DEFAULT_BIN_TIME_S,
    DEFAULT_DARK_RATE_HZ,
    DEFAULT_EFFICIENCY,
    DEFAULT_PROBE_POWER_W,
    DEFAULT_WAVELENGTH_M,
    DetectorModel,
    efficiency_for_count_rate,
)
from .photon_sim.sweep import MODE_SEQUENTIAL
from .polarization import JonesField, balanced_probe
from .tomography.mle import MleConfig
from .tomography.spectrum import DetuningWindow

DEFAULT_F_RES_HZ = constants.c / DEFAULT_WAVELENGTH_M


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CavitySection(_Section):
    """Coupled-mode parameters. kappa may be replaced by a gap law at gap_nm."""

    gamma: float = Field(..., ge=0.0, lt=1.0, description="Coupling loss rate")
    rho_l: float = Field(..., ge=0.0, description="Round-trip absorption exponent")
    kappa: Optional[float] = Field(None, ge=0.0, le=math.pi / 2, description="Coupling efficiency (rad)")
    fsr_hz: Optional[float] = Field(None, gt=0.0, description="Free spectral range; derived from the sphere when absent")
    sphere_diameter_m: float = Field(DEFAULT_SPHERE_DIAMETER_M, gt=0.0)
    refractive_index: float = Field(DEFAULT_REFRACTIVE_INDEX, gt=0.0)
    f_res_hz: float = Field(DEFAULT_F_RES_HZ, gt=0.0)
    t_all: float = Field(1.0, gt=0.0, le=1.0, description="Fiber transmittance outside the coupling region")
    theta_offset_rad: float = Field(0.0, ge=-math.pi, le=math.pi, description="Residual fiber birefringence")

    def resolved_fsr_hz(self) -> float:
        return self.fsr_hz if self.fsr_hz is not None else fsr_from_diameter(self.sphere_diameter_m, self.refractive_index)


class GapLawSection(_Section):
    kappa_0: float = Field(..., gt=0.0, le=math.pi / 2)
    decay_len_nm: float = Field(..., gt=0.0)
    gap_nm: Optional[float] = Field(None, ge=0.0, description="Evaluate kappa from the law at this gap")

    def to_domain(self) -> GapCouplingLaw:
        return GapCouplingLaw(kappa_0=self.kappa_0, decay_len_nm=self.decay_len_nm)


class DetectorSection(_Section):
    bin_time_s: float = Field(DEFAULT_BIN_TIME_S, gt=0.0)
    dark_rate_hz: float = Field(DEFAULT_DARK_RATE_HZ, ge=0.0)
    efficiency: Optional[float] = Field(None, ge=0.0, le=1.0)
    calibrate_counts_per_bin: Optional[float] = Field(
        None,
        gt=0.0,
        description="Calibrate efficiency so the probe gives this many counts per bin on one projection",
    )

    @model_validator(mode="after")
    def _one_efficiency_source(self) -> "DetectorSection":
        if self.efficiency is not None and self.calibrate_counts_per_bin is not None:
            raise ValueError("set either efficiency or calibrate_counts_per_bin, not both")
        return self


class ProbeSection(_Section):
    power_w: float = Field(DEFAULT_PROBE_POWER_W, ge=0.0)
    wavelength_m: float = Field(DEFAULT_WAVELENGTH_M, gt=0.0)
    angle_rad: float = Field(math.pi / 4, ge=0.0, le=math.pi / 2, description="Linear polarization angle from X")
    relative_phase_rad: float = Field(0.0, ge=-math.pi, le=math.pi)

    def to_domain(self, f_res_hz: float) -> JonesField:
        return balanced_probe(self.power_w, self.angle_rad, self.relative_phase_rad, f_res_hz)


class SweepSection(_Section):
    center_hz: float = 0.0
    span_hz: float = Field(..., gt=0.0)
    points: int = Field(..., ge=2, le=100_000)

    def detunings(self) -> np.ndarray:
        half = 0.5 * self.span_hz
        return np.linspace(self.center_hz - half, self.center_hz + half, self.points)


class SimulationSection(_Section):
    mode: Literal["sequential", "simultaneous"] = MODE_SEQUENTIAL
    depolarization: float = Field(0.0, ge=0.0, le=1.0)
    jitter_hz: float = Field(0.0, ge=0.0)


class TomographySection(_Section):
    scaling_factor: float = Field(1.5, gt=0.0, lt=2.0)
    crossover_prob: float = Field(0.9, ge=0.0, le=1.0)
    population: int = Field(32, ge=8)
    max_generations: int = Field(500, ge=1)
    tolerance: float = Field(1e-10, ge=0.0)
    stall_generations: int = Field(50, ge=1)
    refine: bool = True
    window_min_abs_hz: float = Field(0.0, ge=0.0)
    window_max_abs_hz: Optional[float] = Field(None, gt=0.0)
    core_max_abs_hz: Optional[float] = Field(
        None,
        gt=0.0,
        description="On-resonance purity window half-width; by coupling regime when absent",
    )

    @model_validator(mode="after")
    def _ordered_window(self) -> "TomographySection":
        if self.window_max_abs_hz is not None and self.window_max_abs_hz < self.window_min_abs_hz:
            raise ValueError("window_max_abs_hz must be >= window_min_abs_hz")
        return self

    def to_domain(self, seed: int) -> MleConfig:
        return MleConfig(
            scaling_factor=self.scaling_factor,
            crossover_prob=self.crossover_prob,
            population=self.population,
            max_generations=self.max_generations,
            tolerance=self.tolerance,
            seed=seed,
            stall_generations=self.stall_generations,
            refine=self.refine,
        )

    def window(self) -> DetuningWindow:
        upper = math.inf if self.window_max_abs_hz is None else self.window_max_abs_hz
        return DetuningWindow(min_abs_hz=self.window_min_abs_hz, max_abs_hz=upper)


class FitSection(_Section):
    starts: int = Field(8, ge=1, le=256)
    joint: bool = Field(True, description="Fit phase together with transmittance")
    phase_weight: float = Field(1.0, gt=0.0)
    poisson_weights: bool = Field(True, description="Weight residuals by counting noise when counts are available")


class FigureCase(_Section):
    """One gap distance of the spectra figure; kappa comes from the gap law."""

    label: str = Field(..., min_length=1)
    gap_nm: float = Field(..., ge=0.0)
    sweep: SweepSection


class GapScanSection(_Section):
    """Simulated sweep per gap distance, sized in model linewidths."""

    span_widths: float = Field(8.0, gt=0.0)
    points: int = Field(81, ge=8, le=100_000)


class FigureSection(_Section):
    kind: Literal["fig2", "fig3"]
    cases: List[FigureCase] = Field(default_factory=list)
    distances_nm: List[float] = Field(default_factory=list)
    scan: Optional[GapScanSection] = Field(None, description="fig3: also simulate and fit every distance")

    @field_validator("distances_nm")
    @classmethod
    def _nonnegative(cls, values: List[float]) -> List[float]:
        if any(not math.isfinite(v) or v < 0.0 for v in values):
            raise ValueError("gap distances must be finite and >= 0")
        return values

    @model_validator(mode="after")
    def _kind_has_inputs(self) -> "FigureSection":
        if self.kind == "fig2" and not self.cases:
            raise ValueError("fig2 needs at least one entry in cases")
        if self.kind == "fig3" and not self.distances_nm:
            raise ValueError("fig3 needs a non-empty distances_nm list")
        return self


class RunConfig(_Section):
    name: str = Field("run", min_length=1)
    seed: int = Field(0, ge=0, lt=2 ** 63)
    output_dir: str = "output"
    cavity: CavitySection
    gap_law: Optional[GapLawSection] = None
    detector: DetectorSection = Field(default_factory=DetectorSection)
    probe: ProbeSection = Field(default_factory=ProbeSection)
    sweep: Optional[SweepSection] = None
    simulation: SimulationSection = Field(default_factory=SimulationSection)
    tomography: TomographySection = Field(default_factory=TomographySection)
    fit: FitSection = Field(default_factory=FitSection)
    figure: Optional[FigureSection] = None

    @model_validator(mode="after")
    def _coupling_is_defined(self) -> "RunConfig":
        if self.figure is not None:
            # Both figures take kappa from the gap law at each distance
            if self.gap_law is None:
                raise ValueError(f"{self.figure.kind} needs a gap_law section")
            return self
        if self.cavity.kappa is None and (self.gap_law is None or self.gap_law.gap_nm is None):
            raise ValueError("cavity.kappa is required unless gap_law.gap_nm selects it from the law")
        return self

    def params_at(self, gap_nm: float) -> CavityParams:
        """Cavity parameters with kappa from the gap law at gap_nm."""

        if self.gap_law is None:
            raise ValueError("config has no gap_law section")
        return params_at_gap(self.cavity_params(), self.gap_law.to_domain(), gap_nm)

    def cavity_params(self, kappa: Optional[float] = None) -> CavityParams:
        """Domain CavityParams; kappa precedence is argument, cavity.kappa, then the gap law."""

        c = self.cavity
        if kappa is None:
            kappa = c.kappa
        if kappa is None and self.gap_law is not None:
            kappa = self.gap_law.to_domain().kappa_at(self.gap_law.gap_nm or 0.0)
        return CavityParams(
            gamma=c.gamma,
            rho_l=c.rho_l,
            kappa=0.0 if kappa is None else kappa,
            fsr_hz=c.resolved_fsr_hz(),
            f_res_hz=c.f_res_hz,
            t_all=c.t_all,
            theta_offset_rad=c.theta_offset_rad,
        )

    def detector_model(self) -> DetectorModel:
        d = self.detector
        if d.efficiency is not None:
            efficiency = d.efficiency
        elif d.calibrate_counts_per_bin is not None:
            efficiency = efficiency_for_count_rate(
                d.calibrate_counts_per_bin,
                self.probe.power_w,
                wavelength_m=self.probe.wavelength_m,
                bin_time_s=d.bin_time_s,
                t_all=self.cavity.t_all,
            )
        else:
            efficiency = DEFAULT_EFFICIENCY
        return DetectorModel(bin_time_s=d.bin_time_s, dark_rate_hz=d.dark_rate_hz, efficiency=efficiency)

    def probe_field(self) -> JonesField:
        return self.probe.to_domain(self.cavity.f_res_hz)

    def mle_config(self) -> MleConfig:
        return self.tomography.to_domain(self.seed)

    def with_overrides(self, *, seed: Optional[int] = None, output_dir: Optional[Union[str, Path]] = None) -> "RunConfig":
        updates: Dict[str, Any] = {}
        if seed is not None:
            updates["seed"] = seed
        if output_dir is not None:
            updates["output_dir"] = str(output_dir)
        if not updates:
            return self
        return RunConfig.model_validate({**self.model_dump(), **updates})

    def digest(self) -> str:
        """sha256 of the canonical JSON form; identifies the run in provenance headers.

        output_dir is left out, so the same run written elsewhere keeps its digest.
        """

        payload = self.model_dump(mode="json", exclude={"output_dir"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_config(path: Union[str, Path]) -> RunConfig:
    """Parse and validate a JSON run config.

    Raises OSError when the file cannot be read, json.JSONDecodeError (a
    ValueError) on malformed JSON and pydantic.ValidationError on schema
    violations.
    """

    text = Path(path).read_text(encoding="utf-8")
    return RunConfig.model_validate(json.loads(text))


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    return RunConfig.model_validate(data)

