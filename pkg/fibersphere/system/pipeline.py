"""Batch commands: simulate, analyze, fit and figure bundles.

Each cmd_* function takes a validated RunConfig, writes its outputs under
config.output_dir and returns a CommandResult listing the files written.
Numerical non-convergence does not raise; it is reported through
CommandResult.converged so the caller can pick an exit code.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cavity_types import CavityParams, CouplingRegime
from .coupled_mode import (
    coupling_regime,
    critical_gap_nm,
    fwhm_hz,
    linewidth_hz,
    minimum_transmittance,
    quality_factor,
)
from .errors import AmbiguousDipError, IndeterminatePhaseError, InconsistentSpectraError, NoDipError
from .fitting import FitResult, fit_gap_series, fit_joint, fit_transmittance
from .photon_sim.sweep import SweepRecord, simulate_sweep
from .polarization import extract_phase
from .record_io import (
    FLAG_CLAMPED,
    FLAG_INDETERMINATE,
    FLAG_LOW_SIGNAL,
    FLAG_OK,
    FLAG_UNDEFINED,
    GAP_COLUMNS,
    Provenance,
    atomic_write_text,
    read_gap_series,
    read_spectrum,
    read_sweep_record,
    sniff_columns,
    write_density_matrices,
    write_gap_series,
    write_json,
    write_purity_spectrum,
    write_spectrum,
    write_sweep_record,
)
from .run_config import FigureCase, GapScanSection, RunConfig, SweepSection
from .tomography import DetuningWindow, PuritySpectrum, purity_spectrum, summarize_purity

logger = logging.getLogger('Pipeline')

PANEL_COLUMNS = ["detuning_hz", "value", "flag", "model"]
FIG2_QUANTITIES = ("transmittance", "phase", "purity")
# Half-width of the on-resonance purity window per regime
CORE_WINDOW_HZ = {
    CouplingRegime.UNDERCOUPLED: 15e6,
    CouplingRegime.CRITICAL: 15e6,
    CouplingRegime.OVERCOUPLED: 50e6,
}


@dataclass(frozen=True)
class CommandResult:
    outputs: Dict[str, Path]
    converged: bool = True
    summary: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Analysis:
    """Spectra extracted from one sweep record."""

    detunings_hz: np.ndarray
    transmittance: np.ndarray
    transmittance_flags: List[str]
    transmittance_sigma: np.ndarray
    phase: np.ndarray
    phase_flags: List[str]
    phase_sigma: np.ndarray
    purity: PuritySpectrum
    fit: Optional[FitResult]
    summary: Dict[str, Any]


def _output_dir(config: RunConfig) -> Path:
    path = Path(config.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _provenance(config: RunConfig, kind: str) -> Provenance:
    return Provenance(config_sha256=config.digest(), seed=config.seed, kind=kind)


def _case_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def simulate_from_config(
    config: RunConfig,
    *,
    params: Optional[CavityParams] = None,
    sweep: Optional[SweepSection] = None,
    seed: Optional[int] = None,
) -> SweepRecord:
    sweep = sweep or config.sweep
    if sweep is None:
        raise ValueError("config has no sweep section")
    return simulate_sweep(
        params or config.cavity_params(),
        config.probe_field(),
        config.detector_model(),
        sweep.detunings(),
        config.seed if seed is None else seed,
        wavelength_m=config.probe.wavelength_m,
        mode=config.simulation.mode,
        depolarization=config.simulation.depolarization,
        jitter_hz=config.simulation.jitter_hz,
    )


def cmd_simulate(config: RunConfig) -> CommandResult:
    """Simulate the configured sweep and write the record CSV plus its JSON sidecar."""

    record = simulate_from_config(config)
    out = _output_dir(config)
    csv_path, meta_path = write_sweep_record(out / f"{config.name}_record.csv", record, _provenance(config, "sweep record"))
    logger.info("Wrote %d-point record to %s", len(record), csv_path)
    return CommandResult(
        outputs={"record": csv_path, "sidecar": meta_path},
        summary={"points": len(record), "total_counts": int(record.counts.sum())},
    )


def _transmittance_spectrum(record: SweepRecord, t_all: float) -> Tuple[np.ndarray, List[str], np.ndarray]:
    values = record.transmittance(t_all)
    signal = record.counts[:, 0] - record.dark_counts_per_bin
    reference = record.reference_counts[0] * t_all
    flags = []
    for value, s in zip(values, signal):
        if not math.isfinite(value):
            flags.append(FLAG_UNDEFINED)
        elif s < 0.0:
            flags.append(FLAG_CLAMPED)
        else:
            flags.append(FLAG_OK)
    if reference > 0.0:
        sigma = np.sqrt(np.maximum(record.counts[:, 0], 1.0)) / reference
    else:
        sigma = np.full(values.shape, np.nan)
    return values, flags, sigma


def _phase_spectrum(record: SweepRecord, offset_rad: float) -> Tuple[np.ndarray, List[str], np.ndarray]:
    arg_x = cmath.phase(record.probe.a_x) if record.probe.a_x != 0 else 0.0
    arg_y = cmath.phase(record.probe.a_y) if record.probe.a_y != 0 else 0.0
    phases = np.full(len(record), np.nan)
    sigmas = np.full(len(record), np.nan)
    flags = []
    for index in range(len(record)):
        stokes = record.stokes_at(index)
        if stokes.low_signal:
            flags.append(FLAG_LOW_SIGNAL)
            continue
        try:
            phases[index] = extract_phase(stokes, arg_x, arg_y, offset_rad)
        except IndeterminatePhaseError:
            flags.append(FLAG_INDETERMINATE)
            continue
        # First-order propagation of Poisson variances through atan2(-S3, S2)
        _, _, p, m, r, l = record.counts[index]
        transverse = stokes.s2 ** 2 + stokes.s3 ** 2
        sigmas[index] = math.sqrt(stokes.s3 ** 2 * (p + m) + stokes.s2 ** 2 * (r + l)) / transverse
        flags.append(FLAG_CLAMPED if stokes.clamped else FLAG_OK)
    return phases, flags, sigmas


def _usable(detunings: np.ndarray, values: np.ndarray, flags: Sequence[str], sigma: np.ndarray):
    mask = np.array([f != FLAG_LOW_SIGNAL and f != FLAG_INDETERMINATE and f != FLAG_UNDEFINED for f in flags])
    mask &= np.isfinite(values)
    pairs = list(zip(detunings[mask], values[mask]))
    sig = sigma[mask]
    if not np.all(np.isfinite(sig) & (sig > 0.0)):
        sig = None
    return pairs, sig


def _run_fit(
    config: RunConfig,
    template: CavityParams,
    t_pairs,
    t_sigma,
    phase_pairs,
    phase_sigma,
) -> Optional[FitResult]:
    fit_cfg = config.fit
    if not fit_cfg.poisson_weights:
        t_sigma = phase_sigma = None
    try:
        if fit_cfg.joint and phase_pairs is not None and len(phase_pairs) >= 8:
            try:
                return fit_joint(
                    t_pairs,
                    phase_pairs,
                    base=template,
                    phase_weight=fit_cfg.phase_weight,
                    t_sigma=t_sigma,
                    phase_sigma=phase_sigma,
                    starts=fit_cfg.starts,
                    seed=config.seed,
                )
            except InconsistentSpectraError as exc:
                logger.warning("Joint fit rejected (%s); falling back to a transmittance-only fit", exc)
        return fit_transmittance(t_pairs, base=template, sigma=t_sigma, starts=fit_cfg.starts, seed=config.seed)
    except ValueError as exc:
        logger.warning("Transmittance fit skipped: %s", exc)
        return None


def _fit_summary(fit: FitResult, detunings: np.ndarray) -> Dict[str, Any]:
    params = fit.params
    width = linewidth_hz(params)
    _, model_phase = fit.model([detunings[0], detunings[-1]])
    return {
        "fit": fit.to_dict(),
        "T_min_fit": minimum_transmittance(params),
        "fwhm_fit_hz": width,
        "Q": quality_factor(params.f_res_hz, width),
        "Q_2pi": quality_factor(params.f_res_hz, width, paper_convention=True),
        "phase_at_edges_rad": [float(model_phase[0]), float(model_phase[-1])],
    }


def _purity_windows(config: RunConfig, purity: PuritySpectrum, regime: CouplingRegime) -> Dict[str, Any]:
    """Far-detuned (configured) and on-resonance core purity summaries."""

    core_hz = config.tomography.core_max_abs_hz
    if core_hz is None:
        core_hz = CORE_WINDOW_HZ[regime]
    core = summarize_purity(purity.points, DetuningWindow(min_abs_hz=0.0, max_abs_hz=core_hz))
    return {"purity": purity.summary.to_dict(), "purity_core": core.to_dict()}


def analyze_record(record: SweepRecord, config: RunConfig, *, template: Optional[CavityParams] = None) -> Analysis:
    """Transmittance, phase and purity spectra plus summary statistics.

    T_min, FWHM and Q come from the fit when there is one, else from the data.
    """

    template = template or record.params or config.cavity_params()
    detunings = record.detunings_hz
    t_values, t_flags, t_sigma = _transmittance_spectrum(record, template.t_all)
    phases, phase_flags, phase_sigma = _phase_spectrum(record, template.theta_offset_rad)
    purity = purity_spectrum(record, record.detector, config.mle_config(), window=config.tomography.window())

    summary: Dict[str, Any] = {"points": len(record)}
    finite = np.isfinite(t_values)
    summary["T_min_data"] = float(np.min(t_values[finite])) if finite.any() else None
    try:
        width = fwhm_hz(zip(detunings[finite], t_values[finite]))
        summary["fwhm_data_hz"] = width
        summary["Q_data"] = quality_factor(template.f_res_hz, width)
    except (NoDipError, AmbiguousDipError) as exc:
        logger.info("No direct FWHM from the data: %s", exc)
        summary["fwhm_data_hz"] = None
        summary["Q_data"] = None

    t_pairs, t_sig = _usable(detunings, t_values, t_flags, t_sigma)
    phase_pairs, phase_sig = _usable(detunings, phases, phase_flags, phase_sigma)
    fit = _run_fit(config, template, t_pairs, t_sig, phase_pairs, phase_sig)
    if fit is not None:
        summary.update(_fit_summary(fit, detunings))
        summary["T_min"] = summary["T_min_fit"]
        summary["fwhm_hz"] = summary["fwhm_fit_hz"]
        summary["fwhm_source"] = "fit"
    else:
        summary["T_min"] = summary["T_min_data"]
        summary["fwhm_hz"] = summary["fwhm_data_hz"]
        summary["fwhm_source"] = "data" if summary["fwhm_data_hz"] is not None else None
        summary["Q"] = summary["Q_data"]
    regime = fit.regime if fit is not None else coupling_regime(template)
    summary.update(_purity_windows(config, purity, regime))
    summary["low_signal_points"] = sum(1 for f in phase_flags if f == FLAG_LOW_SIGNAL)

    return Analysis(
        detunings_hz=detunings,
        transmittance=t_values,
        transmittance_flags=t_flags,
        transmittance_sigma=t_sigma,
        phase=phases,
        phase_flags=phase_flags,
        phase_sigma=phase_sigma,
        purity=purity,
        fit=fit,
        summary=summary,
    )


def cmd_analyze(record_path: Path, config: RunConfig) -> CommandResult:
    """Write transmittance, phase and purity spectra with a JSON summary."""

    record = read_sweep_record(
        record_path,
        detector=config.detector_model(),
        probe=config.probe_field(),
        wavelength_m=config.probe.wavelength_m,
    )
    analysis = analyze_record(record, config)
    out = _output_dir(config)
    stem = Path(record_path).stem
    provenance = _provenance(config, "analysis")
    outputs = {
        "transmittance": write_spectrum(
            out / f"{stem}_transmittance.csv",
            analysis.detunings_hz,
            analysis.transmittance,
            analysis.transmittance_flags,
            provenance,
        ),
        "phase": write_spectrum(
            out / f"{stem}_phase.csv",
            analysis.detunings_hz,
            analysis.phase,
            analysis.phase_flags,
            provenance,
        ),
        "purity": write_purity_spectrum(out / f"{stem}_purity.csv", analysis.purity, provenance),
        "density_matrices": write_density_matrices(out / f"{stem}_rho.json", analysis.purity, provenance),
        "summary": write_json(out / f"{stem}_summary.json", analysis.summary, provenance),
    }
    converged = analysis.fit is None or analysis.fit.converged
    return CommandResult(outputs=outputs, converged=converged, summary=analysis.summary)


def _sigma_from_record(record: SweepRecord, detunings: np.ndarray, column_sigma: np.ndarray) -> Optional[np.ndarray]:
    index = {float(f): i for i, f in enumerate(record.detunings_hz)}
    try:
        rows = [index[float(f)] for f in detunings]
    except KeyError:
        logger.warning("Spectrum detunings do not match the record; fitting unweighted")
        return None
    sigma = column_sigma[rows]
    if not np.all(np.isfinite(sigma) & (sigma > 0.0)):
        return None
    return sigma


def _cmd_fit_gap(series_path: Path, config: RunConfig) -> CommandResult:
    data = read_gap_series(series_path)
    base = config.cavity_params()
    if np.any(data[:, 2] <= 0.0):
        raise ValueError("Q values must be positive")
    series = [(d, t, base.f_res_hz / q) for d, t, q in data]
    result = fit_gap_series(series, base)
    out = _output_dir(config)
    path = write_json(out / f"{Path(series_path).stem}_gapfit.json", result.to_dict(), _provenance(config, "gap fit"))
    return CommandResult(outputs={"fit": path}, converged=result.converged, summary=result.to_dict())


def cmd_fit(
    spectrum_path: Path,
    config: RunConfig,
    *,
    phase_path: Optional[Path] = None,
    record_path: Optional[Path] = None,
) -> CommandResult:
    """Fit a transmittance spectrum (and optional phase spectrum) or a gap series.

    A gap-series CSV (d_nm, T_min, Q) is recognized from its header and
    fitted with the exponential gap law. With record_path, residuals are
    weighted by the record's counting noise.
    """

    if sniff_columns(spectrum_path) == GAP_COLUMNS:
        return _cmd_fit_gap(spectrum_path, config)

    template = config.cavity_params()
    detunings, values, _ = read_spectrum(spectrum_path)
    t_pairs = list(zip(detunings, values))
    phase_pairs = None
    phase_det = None
    if phase_path is not None:
        phase_det, phase_values, _ = read_spectrum(phase_path)
        phase_pairs = list(zip(phase_det, phase_values))

    t_sigma = phase_sigma = None
    if record_path is not None:
        record = read_sweep_record(record_path, detector=config.detector_model(), probe=config.probe_field())
        _, _, t_col = _transmittance_spectrum(record, template.t_all)
        t_sigma = _sigma_from_record(record, detunings, t_col)
        if phase_det is not None:
            _, _, phase_col = _phase_spectrum(record, template.theta_offset_rad)
            phase_sigma = _sigma_from_record(record, phase_det, phase_col)

    fit = _run_fit(config, template, t_pairs, t_sigma, phase_pairs, phase_sigma)
    if fit is None:
        raise ValueError(f"{spectrum_path} cannot be fitted")
    summary = _fit_summary(fit, np.sort(detunings))
    out = _output_dir(config)
    path = write_json(out / f"{Path(spectrum_path).stem}_fit.json", summary, _provenance(config, "fit"))
    return CommandResult(outputs={"fit": path}, converged=fit.converged, summary=summary)


def _panel_text(provenance: Provenance, rows: List[List[str]]) -> str:
    lines = provenance.header_lines() + [",".join(PANEL_COLUMNS)]
    lines.extend(",".join(row) for row in rows)
    return "\n".join(lines) + "\n"


def _fmt(value: Optional[float]) -> str:
    if value is None or not math.isfinite(value):
        return ""
    return format(float(value), ".17g")


def _fig2_panels(analysis: Analysis) -> Dict[str, List[List[str]]]:
    detunings = analysis.detunings_hz
    t_model = theta_model = np.full(detunings.shape, np.nan)
    if analysis.fit is not None:
        t_model, theta_model = analysis.fit.model(detunings)
    purity_flags = []
    for point in analysis.purity.points:
        if point.low_signal:
            purity_flags.append(FLAG_LOW_SIGNAL)
        else:
            purity_flags.append(FLAG_OK if point.converged else "not_converged")
    return {
        "transmittance": [
            [_fmt(f), _fmt(v), flag, _fmt(m)]
            for f, v, flag, m in zip(detunings, analysis.transmittance, analysis.transmittance_flags, t_model)
        ],
        "phase": [
            [_fmt(f), _fmt(v), flag, _fmt(m)]
            for f, v, flag, m in zip(detunings, analysis.phase, analysis.phase_flags, theta_model)
        ],
        "purity": [
            [_fmt(f), _fmt(v), flag, ""]
            for f, v, flag in zip(detunings, analysis.purity.purities(), purity_flags)
        ],
    }


def _figure_fig2(config: RunConfig, out: Path) -> CommandResult:
    cases: List[FigureCase] = config.figure.cases
    provenance = _provenance(config, "figure fig2")
    panels: Dict[str, Dict[str, List[List[str]]]] = {}
    summaries: Dict[str, Any] = {}
    converged = True
    for index, case in enumerate(cases):
        params = config.params_at(case.gap_nm)
        record = simulate_from_config(config, params=params, sweep=case.sweep, seed=_case_seed(config.seed, index))
        analysis = analyze_record(record, config, template=params)
        panels[case.label] = _fig2_panels(analysis)
        summaries[case.label] = {"gap_nm": case.gap_nm, "kappa": params.kappa, **analysis.summary}
        converged = converged and (analysis.fit is None or analysis.fit.converged)

    outputs: Dict[str, Path] = {}
    letter = ord("a")
    # Panels run case-fastest: (a) (b) transmittance, (c) (d) phase, (e) (f) purity
    for quantity in FIG2_QUANTITIES:
        for case in cases:
            key = chr(letter)
            path = out / f"{config.name}_fig2{key}_{quantity}_{case.label}.csv"
            outputs[key] = atomic_write_text(path, _panel_text(provenance, panels[case.label][quantity]))
            letter += 1

    widths = [summaries[c.label].get("fwhm_fit_hz") for c in cases]
    if len(cases) >= 2 and all(w for w in widths[:2]):
        summaries["fwhm_ratio"] = widths[1] / widths[0]
    outputs["summary"] = write_json(out / f"{config.name}_fig2_summary.json", summaries, provenance)
    return CommandResult(outputs=outputs, converged=converged, summary=summaries)


def gap_scan(config: RunConfig, distances_nm: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Model T_min and Q over gap distances under the configured law."""

    if len(distances_nm) == 0:
        raise ValueError("gap scan needs at least one distance")
    distances = np.asarray(distances_nm, dtype=float)
    t_min = np.empty(distances.size)
    q = np.empty(distances.size)
    for i, d in enumerate(distances):
        params = config.params_at(float(d))
        t_min[i] = minimum_transmittance(params)
        q[i] = quality_factor(params.f_res_hz, linewidth_hz(params))
    return distances, t_min, q


def measured_gap_scan(
    config: RunConfig,
    distances_nm: Sequence[float],
    scan: GapScanSection,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Simulate a sweep at every gap and fit its transmittance for T_min and Q.

    Each sweep spans scan.span_widths model linewidths around the resonance.
    Distances whose fit fails carry NaN.
    """

    if len(distances_nm) == 0:
        raise ValueError("gap scan needs at least one distance")
    distances = np.asarray(distances_nm, dtype=float)
    t_min = np.full(distances.size, np.nan)
    q = np.full(distances.size, np.nan)
    converged = True
    for i, d in enumerate(distances):
        params = config.params_at(float(d))
        sweep = SweepSection(span_hz=scan.span_widths * linewidth_hz(params), points=scan.points)
        seed = _case_seed(config.seed, i)
        record = simulate_from_config(config, params=params, sweep=sweep, seed=seed)
        values, flags, sigma = _transmittance_spectrum(record, params.t_all)
        pairs, sig = _usable(record.detunings_hz, values, flags, sigma)
        try:
            fit = fit_transmittance(
                pairs,
                base=params,
                sigma=sig if config.fit.poisson_weights else None,
                starts=config.fit.starts,
                seed=seed,
            )
        except ValueError as exc:
            logger.warning("Gap %.1f nm not fitted: %s", d, exc)
            converged = False
            continue
        t_min[i] = minimum_transmittance(fit.params)
        q[i] = quality_factor(params.f_res_hz, linewidth_hz(fit.params))
        converged = converged and fit.converged
    return distances, t_min, q, converged


def _figure_fig3(config: RunConfig, out: Path) -> CommandResult:
    distances, t_min, q = gap_scan(config, config.figure.distances_nm)
    provenance = _provenance(config, "figure fig3")
    outputs = {"series": write_gap_series(out / f"{config.name}_fig3.csv", distances, t_min, q, provenance)}
    base = config.cavity_params()
    law = config.gap_law.to_domain()
    summary: Dict[str, Any] = {
        "law": law.to_dict(),
        "d_c_nm": critical_gap_nm(base, law),
        "d_at_min_T_nm": float(distances[int(np.argmin(t_min))]),
        "T_min_min": float(np.min(t_min)),
        "Q_range": [float(np.min(q)), float(np.max(q))],
    }
    converged = True
    if distances.size >= 5:
        series = [(d, t, base.f_res_hz / v) for d, t, v in zip(distances, t_min, q)]
        gap_fit = fit_gap_series(series, base)
        summary["gap_fit"] = gap_fit.to_dict()
        converged = gap_fit.converged

    scan = config.figure.scan
    if scan is not None:
        _, measured_t, measured_q, scan_converged = measured_gap_scan(config, distances, scan)
        outputs["measured"] = write_gap_series(
            out / f"{config.name}_fig3_measured.csv", distances, measured_t, measured_q, provenance
        )
        fitted = np.isfinite(measured_t) & np.isfinite(measured_q)
        measured: Dict[str, Any] = {"fitted_points": int(fitted.sum())}
        if fitted.any():
            measured["d_at_min_T_nm"] = float(distances[fitted][int(np.argmin(measured_t[fitted]))])
            measured["T_min_min"] = float(np.min(measured_t[fitted]))
            measured["Q_range"] = [float(np.min(measured_q[fitted])), float(np.max(measured_q[fitted]))]
        summary["measured"] = measured
        converged = converged and scan_converged

    outputs["summary"] = write_json(out / f"{config.name}_fig3_summary.json", summary, provenance)
    return CommandResult(outputs=outputs, converged=converged, summary=summary)


def cmd_figure(kind: str, config: RunConfig) -> CommandResult:
    """Plot-ready data for the spectra figure (fig2) or the gap scan (fig3)."""

    if kind not in ("fig2", "fig3"):
        raise ValueError(f"unknown figure kind {kind!r}; expected fig2 or fig3")
    if config.figure is None or config.figure.kind != kind:
        raise ValueError(f"config has no figure section of kind {kind}")
    out = _output_dir(config)
    if kind == "fig2":
        return _figure_fig2(config, out)
    return _figure_fig3(config, out)
