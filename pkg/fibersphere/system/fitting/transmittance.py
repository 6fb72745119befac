"""Recover coupled-mode parameters from transmittance and phase spectra.

Fit variables (lmfit Parameters):

    gamma     coupling loss rate; sets the far-detuned level (1 - gamma) / y^2
    ln_loss   log of s = (1 - x) + (1 - y); the linewidth is s FSR / pi
    contrast  c = ((1 - x) - (1 - y)) / s; c > 0 undercoupled, c < 0 overcoupled
    shift     resonance offset in units of the estimated dip width

rho_l and kappa follow from (gamma, s, c). rho_l is held at 0 where the
requested 1 - x is smaller than the loss gamma alone allows.

Starts come from an algebraic Lorentzian fit of the dip (level, depth, width
and centre from one linear least-squares solve) taken in both regimes, plus
seeded perturbations. Each start runs a Nelder-Mead descent followed by a
Levenberg-Marquardt polish. When the best start still sits well above the
noise level of the data, a differential-evolution pass over the same bounds
is added.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import lmfit
import numpy as np
from scipy.ndimage import uniform_filter1d

from ..cavity_types import CavityParams, CouplingRegime
from ..coupled_mode import coupling_regime, spectrum_arrays
from ..errors import InconsistentSpectraError, NoDipError
from ..photon_sim.streams import FIT_STREAM, substream
from ..workers import map_ordered

logger = logging.getLogger('Fitting')

MIN_POINTS = 8
MAX_TRANSMITTANCE = 1.2
DEFAULT_STARTS = 8
NELDER_MAX_NFEV = 400
FALLBACK_FACTOR = 3.0
INCONSISTENCY_FACTOR = 10.0
RMS_FLOOR = 1e-6
DIP_TOLERANCE = 1e-9
LOSS_RANGE = 4.0
JOINT_WIDTH_SCALES = (1.0, 1.0 / 3.0, 3.0)
GAMMA_MAX = 0.5

_LN_LOSS_MIN = math.log(1e-12)
_LN_LOSS_MAX = math.log(2.0)
_MAX_ONE_MINUS_X = 1.0 - 1e-9
_SEED_GAMMA_FLOOR = 1e-7
_SEED_CONTRAST_MAX = 0.999
_BOUND_MARGIN = 1e-9
_MAD_SCALE = 1.4826
# MINPACK exits that mean the tolerance is below machine precision at the optimum
_PRECISION_LIMITED = (6, 7, 8)


@dataclass(frozen=True)
class FitResult:
    params: CavityParams
    residual_rms: float
    covariance_diag: Dict[str, float]
    converged: bool
    f_offset_hz: float = 0.0
    degenerate: bool = False
    regime: CouplingRegime = CouplingRegime.UNDERCOUPLED
    mirror_params: Optional[CavityParams] = None
    starts: int = 0
    method: str = "nelder+leastsq"
    chisqr: float = field(default=0.0, repr=False)

    def model(self, detunings_hz: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
        """Fitted (transmittance, phase) on the caller's detuning axis."""

        return spectrum_arrays(self.params, np.asarray(detunings_hz, dtype=float) - self.f_offset_hz)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params.to_dict(),
            "residual_rms": self.residual_rms,
            "covariance_diag": dict(self.covariance_diag),
            "converged": self.converged,
            "f_offset_hz": self.f_offset_hz,
            "degenerate": self.degenerate,
            "regime": self.regime.value,
            "mirror_params": self.mirror_params.to_dict() if self.mirror_params is not None else None,
            "starts": self.starts,
            "method": self.method,
        }


@dataclass(frozen=True)
class _Spectrum:
    detunings: np.ndarray
    values: np.ndarray
    sigma: Optional[np.ndarray]


@dataclass(frozen=True)
class _DipEstimate:
    """Rough dip shape used for starts, bounds and the shift unit."""

    centre_hz: float
    width_hz: float
    level: float
    depth_ratio: float


@dataclass(frozen=True)
class _Problem:
    residual: Callable[[lmfit.Parameters], np.ndarray]
    bounds_data: _Spectrum
    template: CavityParams
    dip: _DipEstimate
    noise: float


@dataclass
class _Candidate:
    index: int
    result: Any
    values: Dict[str, float]
    params: CavityParams
    shift_hz: float
    rms: float

    @property
    def chisqr(self) -> float:
        return float(self.result.chisqr)


def mirror_params(params: CavityParams) -> Optional[CavityParams]:
    """The x <-> y swapped parameter set, or None when it is not physical.

    Transmittance is symmetric under the swap; the phase asymptote is not.
    """

    x, y = params.x, params.y
    if y <= 0.0 or x >= 1.0:
        return None
    rho_l = 0.5 * math.log1p(-params.gamma) - math.log(y)
    if rho_l < 0.0:
        return None
    return replace(params, rho_l=rho_l, kappa=math.acos(min(1.0, x)))


def _as_spectrum(spectrum, name: str, sigma=None) -> _Spectrum:
    data = np.asarray([(float(f), float(v)) for f, v in spectrum], dtype=float)
    if data.ndim != 2 or data.shape[0] < MIN_POINTS:
        raise ValueError(f"{name} needs at least {MIN_POINTS} points")
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{name} contains non-finite values")
    sig = None
    if sigma is not None:
        sig = np.asarray(sigma, dtype=float)[order]
        if sig.shape != (data.shape[0],) or np.any(sig <= 0.0) or not np.all(np.isfinite(sig)):
            raise ValueError(f"{name} sigma must be positive and match the spectrum length")
    return _Spectrum(detunings=data[:, 0], values=data[:, 1], sigma=sig)


def _lorentzian_estimate(data: _Spectrum) -> Optional[_DipEstimate]:
    """Algebraic fit of T ((u - u0)^2 + w) = L (u - u0)^2 + K.

    Expanded, the relation is linear in five coefficients, so one lstsq call
    gives the centre, the squared half width, the far level and the depth
    without iterating. Returns None when the solution is not a dip.
    """

    f = data.detunings
    t = data.values
    mid = 0.5 * (f[0] + f[-1])
    half = 0.5 * (f[-1] - f[0])
    if half <= 0.0:
        return None
    u = (f - mid) / half
    design = np.column_stack([-t, 2.0 * t * u, u * u, -2.0 * u, np.ones_like(u)])
    coef, *_ = np.linalg.lstsq(design, t * u * u, rcond=None)
    u0 = coef[1]
    level = coef[2]
    w = coef[0] - u0 * u0
    k = coef[4] - level * u0 * u0
    if not np.all(np.isfinite(coef)) or level <= 0.0 or w <= 0.0 or abs(u0) > 1.0:
        return None
    width = 2.0 * math.sqrt(w) * half
    if width > f[-1] - f[0]:
        return None
    return _DipEstimate(
        centre_hz=float(mid + u0 * half),
        width_hz=float(width),
        level=float(level),
        depth_ratio=float(min(1.0, max(0.0, k / (level * w)))),
    )


def _crossing(f0: float, v0: float, f1: float, v1: float, level: float) -> float:
    return f0 + (level - v0) * (f1 - f0) / (v1 - v0)


def _crossing_estimate(detunings: np.ndarray, smoothed: np.ndarray) -> _DipEstimate:
    """Nearest half-depth crossings on each side of the smoothed minimum."""

    i = int(np.argmin(smoothed))
    floor = float(smoothed[i])
    level = float(np.max(smoothed))
    half = 0.5 * (level + floor)
    above = smoothed >= half

    left_hits = np.flatnonzero(above[:i])
    right_hits = np.flatnonzero(above[i + 1:]) + i + 1
    left = right = None
    if left_hits.size:
        j = int(left_hits[-1])
        left = _crossing(detunings[j], smoothed[j], detunings[j + 1], smoothed[j + 1], half)
    if right_hits.size:
        j = int(right_hits[0])
        right = _crossing(detunings[j - 1], smoothed[j - 1], detunings[j], smoothed[j], half)
    centre = float(detunings[i])
    if left is None and right is None:
        raise ValueError("spectrum does not span a resolved dip: no half-depth crossing")
    if left is None:
        width = 2.0 * (right - centre)
    elif right is None:
        width = 2.0 * (centre - left)
    else:
        width = right - left
    if width <= 0.0:
        raise ValueError("spectrum does not span a resolved dip")
    return _DipEstimate(centre_hz=centre, width_hz=float(width), level=level, depth_ratio=floor / level)


def _check_transmittance(data: _Spectrum) -> _DipEstimate:
    if np.any(data.values < 0.0) or np.any(data.values > MAX_TRANSMITTANCE):
        raise ValueError(f"transmittance values must lie in [0, {MAX_TRANSMITTANCE}]")
    window = max(1, data.values.size // 25) | 1
    smoothed = uniform_filter1d(data.values, size=window, mode="nearest")
    if float(np.max(smoothed) - np.min(smoothed)) <= DIP_TOLERANCE:
        raise NoDipError("spectrum does not span a resolved dip: transmittance is flat")
    estimate = _lorentzian_estimate(data)
    if estimate is None:
        logger.debug("Algebraic dip estimate failed; using half-depth crossings")
        estimate = _crossing_estimate(data.detunings, smoothed)
    return estimate


def _noise_level(data: _Spectrum, *, circular: bool = False) -> float:
    """Per-point noise from the spread of fourth differences, 1 for weighted data.

    Fourth differences of white noise have variance 70 sigma^2; the smooth dip
    contributes little at any usable sampling density.
    """

    if data.sigma is not None:
        return 1.0
    first = np.diff(data.values)
    if circular:
        first = _wrapped(first)
    fourth = np.diff(first, n=3)
    if fourth.size == 0:
        return 0.0
    return float(_MAD_SCALE * np.median(np.abs(fourth)) / math.sqrt(70.0))


def _cavity_from(values: Dict[str, float], template: CavityParams) -> CavityParams:
    gamma = float(values["gamma"])
    loss = math.exp(values["ln_loss"])
    contrast = float(values["contrast"])
    one_minus_x = min(0.5 * loss * (1.0 + contrast), _MAX_ONE_MINUS_X)
    one_minus_y = min(0.5 * loss * (1.0 - contrast), 1.0)
    rho_l = max(0.0, 0.5 * math.log1p(-gamma) - math.log1p(-one_minus_x))
    kappa = 2.0 * math.asin(math.sqrt(0.5 * one_minus_y))
    return replace(template, gamma=gamma, rho_l=rho_l, kappa=min(kappa, math.pi / 2))


def _values_from_cavity(params: CavityParams, shift: float) -> Dict[str, float]:
    one_minus_x = -math.expm1(0.5 * math.log1p(-params.gamma) - params.rho_l)
    one_minus_y = 2.0 * math.sin(params.kappa / 2.0) ** 2
    loss = one_minus_x + one_minus_y
    contrast = (one_minus_x - one_minus_y) / loss if loss > 0.0 else 0.0
    return {
        "gamma": params.gamma,
        "ln_loss": math.log(max(loss, 1e-14)),
        "contrast": contrast,
        "shift": shift,
    }


def _seed_values(dip: _DipEstimate, template: CavityParams, sign: float, scale: float = 1.0) -> Dict[str, float]:
    """Start for one regime from the dip estimate.

    Near resonance T ~ (1 - gamma) (c^2 s^2 + phi^2) / (s^2 + phi^2) / y^2 with
    phi = 2 pi detuning / FSR, so s = pi FWHM / FSR and c^2 = T_min / level.
    """

    loss = math.pi * dip.width_hz * scale / template.fsr_hz
    contrast = sign * min(_SEED_CONTRAST_MAX, max(1e-3, math.sqrt(dip.depth_ratio)))
    one_minus_y = 0.5 * loss * (1.0 - contrast)
    gamma = 1.0 - dip.level * (1.0 - one_minus_y) ** 2
    return {
        "gamma": min(0.99 * GAMMA_MAX, max(_SEED_GAMMA_FLOOR, gamma)),
        "ln_loss": math.log(max(loss, 1e-14)),
        "contrast": contrast,
        "shift": dip.centre_hz / dip.width_hz,
    }


def _build_starts(
    dip: _DipEstimate,
    template: CavityParams,
    initial: Optional[CavityParams],
    starts: int,
    seed: int,
    scales: Sequence[float] = (1.0,),
) -> List[Dict[str, float]]:
    base_starts: List[Dict[str, float]] = []
    if initial is not None:
        first = _values_from_cavity(initial, dip.centre_hz / dip.width_hz)
        first["gamma"] = max(first["gamma"], _SEED_GAMMA_FLOOR)
        base_starts.extend([first, {**first, "contrast": -first["contrast"]}])
    for scale in scales:
        for sign in (1.0, -1.0):
            base_starts.append(_seed_values(dip, template, sign, scale))

    result = list(base_starts)
    index = 0
    while len(result) < max(starts, len(base_starts)):
        rng = substream(seed, FIT_STREAM, index)
        anchor = base_starts[index % len(base_starts)]
        result.append(
            {
                "gamma": anchor["gamma"] * math.exp(0.5 * rng.standard_normal()),
                "ln_loss": anchor["ln_loss"] + 0.3 * rng.standard_normal(),
                "contrast": float(
                    np.clip(anchor["contrast"] + 0.15 * rng.standard_normal(), -_SEED_CONTRAST_MAX, _SEED_CONTRAST_MAX)
                ),
                "shift": anchor["shift"] + 0.1 * rng.standard_normal(),
            }
        )
        index += 1
    return result


def _inside(value: float, lo: float, hi: float) -> float:
    margin = _BOUND_MARGIN * (hi - lo)
    return min(max(value, lo + margin), hi - margin)


def _parameters(values: Dict[str, float], problem: _Problem) -> lmfit.Parameters:
    dip = problem.dip
    data = problem.bounds_data
    centre = math.log(math.pi * dip.width_hz / problem.template.fsr_hz)
    loss_lo = max(_LN_LOSS_MIN, centre - LOSS_RANGE)
    loss_hi = min(_LN_LOSS_MAX, centre + LOSS_RANGE)
    shift_lo = float(data.detunings[0]) / dip.width_hz
    shift_hi = float(data.detunings[-1]) / dip.width_hz

    params = lmfit.Parameters()
    params.add("gamma", value=_inside(values["gamma"], 0.0, GAMMA_MAX), min=0.0, max=GAMMA_MAX)
    params.add("ln_loss", value=_inside(values["ln_loss"], loss_lo, loss_hi), min=loss_lo, max=loss_hi)
    params.add("contrast", value=_inside(values["contrast"], -1.0, 1.0), min=-1.0, max=1.0)
    params.add("shift", value=_inside(values["shift"], shift_lo, shift_hi), min=shift_lo, max=shift_hi)
    return params


def _wrapped(diff: np.ndarray) -> np.ndarray:
    return np.angle(np.exp(1j * diff))


def _make_residual(
    template: CavityParams,
    width: float,
    t_data: Optional[_Spectrum],
    phase_data: Optional[_Spectrum],
    phase_weight: float,
) -> Callable[[lmfit.Parameters], np.ndarray]:
    def residual(params: lmfit.Parameters) -> np.ndarray:
        values = params.valuesdict()
        cavity = _cavity_from(values, template)
        shift_hz = values["shift"] * width
        parts = []
        if t_data is not None:
            t_model, _ = spectrum_arrays(cavity, t_data.detunings - shift_hz)
            diff = t_model - t_data.values
            parts.append(diff / t_data.sigma if t_data.sigma is not None else diff)
        if phase_data is not None:
            _, theta_model = spectrum_arrays(cavity, phase_data.detunings - shift_hz)
            diff = _wrapped(theta_model - phase_data.values)
            if phase_data.sigma is not None:
                diff = diff / phase_data.sigma
            parts.append(phase_weight * diff)
        return np.concatenate(parts)

    return residual


def _problem(
    template: CavityParams,
    dip: _DipEstimate,
    t_data: Optional[_Spectrum],
    phase_data: Optional[_Spectrum],
    phase_weight: float,
    bounds_data: _Spectrum,
) -> _Problem:
    weighted = []
    if t_data is not None:
        weighted.append((t_data.values.size, _noise_level(t_data)))
    if phase_data is not None:
        weighted.append((phase_data.values.size, phase_weight * _noise_level(phase_data, circular=True)))
    total = sum(n for n, _ in weighted)
    noise = math.sqrt(sum(n * level ** 2 for n, level in weighted) / total)
    return _Problem(
        residual=_make_residual(template, dip.width_hz, t_data, phase_data, phase_weight),
        bounds_data=bounds_data,
        template=template,
        dip=dip,
        noise=noise,
    )


def _physical(values: Dict[str, float], template: CavityParams, width: float) -> np.ndarray:
    cavity = _cavity_from(values, template)
    return np.array([cavity.gamma, cavity.rho_l, cavity.kappa, values["shift"] * width])


def _covariance(candidate: _Candidate, template: CavityParams, width: float) -> Dict[str, float]:
    """Variances of the physical parameters by first-order propagation."""

    keys = ("gamma", "rho_l", "kappa", "f_offset_hz")
    out = dict.fromkeys(keys, math.nan)
    result = candidate.result
    names = list(getattr(result, "var_names", None) or [])
    covar = getattr(result, "covar", None)
    if covar is None or not names:
        return out
    jacobian = np.empty((len(keys), len(names)))
    try:
        for j, name in enumerate(names):
            value = candidate.values[name]
            step = 1e-6 * max(abs(value), 1e-3)
            up = dict(candidate.values, **{name: value + step})
            low = max(value - step, 0.0) if name == "gamma" else value - step
            down = dict(candidate.values, **{name: low})
            jacobian[:, j] = (_physical(up, template, width) - _physical(down, template, width)) / (value + step - low)
    except ValueError as exc:
        logger.debug("Covariance propagation skipped: %s", exc)
        return out
    variances = np.einsum("ij,jk,ik->i", jacobian, np.asarray(covar), jacobian)
    return {key: float(v) for key, v in zip(keys, variances)}


def _candidate(index: int, result: Any, problem: _Problem) -> _Candidate:
    values = dict(result.params.valuesdict())
    return _Candidate(
        index=index,
        result=result,
        values=values,
        params=_cavity_from(values, problem.template),
        shift_hz=values["shift"] * problem.dip.width_hz,
        rms=float(np.sqrt(np.mean(np.square(result.residual)))),
    )


def _run_start(index: int, values: Dict[str, float], problem: _Problem) -> Optional[_Candidate]:
    minner = lmfit.Minimizer(problem.residual, _parameters(values, problem), nan_policy="raise")
    try:
        coarse = minner.minimize(method="nelder", max_nfev=NELDER_MAX_NFEV)
        fine = minner.minimize(method="leastsq", params=coarse.params, ftol=1e-15, xtol=1e-15, gtol=0.0, max_nfev=20000)
    except (ValueError, ArithmeticError) as exc:
        logger.debug("Fit start %d failed: %s", index, exc)
        return None
    return _candidate(index, fine if fine.chisqr <= coarse.chisqr else coarse, problem)


def _global_fallback(problem: _Problem, values: Dict[str, float], seed: int) -> Optional[_Candidate]:
    minner = lmfit.Minimizer(problem.residual, _parameters(values, problem), nan_policy="raise")
    try:
        coarse = minner.minimize(
            method="differential_evolution",
            mutation=1.5,
            recombination=0.9,
            seed=seed,
            maxiter=300,
            polish=False,
        )
        fine = minner.minimize(method="leastsq", params=coarse.params, ftol=1e-15, xtol=1e-15, gtol=0.0, max_nfev=20000)
    except (ValueError, ArithmeticError) as exc:
        logger.warning("Global fallback fit failed: %s", exc)
        return None
    return _candidate(-1, fine, problem)


def _multi_start(
    problem: _Problem,
    start_values: List[Dict[str, float]],
    seed: int,
    workers: Optional[int],
) -> Tuple[List[_Candidate], bool]:
    candidates = map_ordered(
        lambda item: _run_start(item[0], item[1], problem),
        list(enumerate(start_values)),
        workers,
    )
    candidates = [c for c in candidates if c is not None]
    used_fallback = False
    best = _pick(candidates)
    threshold = FALLBACK_FACTOR * max(problem.noise, RMS_FLOOR)
    if best is None or best.rms > threshold:
        logger.info(
            "Multi-start best rms %s above %.3g; running differential evolution fallback",
            None if best is None else f"{best.rms:.3g}",
            threshold,
        )
        fallback = _global_fallback(problem, best.values if best is not None else start_values[0], seed)
        if fallback is not None:
            candidates.append(fallback)
            used_fallback = True
    if not candidates:
        raise RuntimeError("every fit start failed")
    return candidates, used_fallback


def _pick(candidates: Sequence[_Candidate]) -> Optional[_Candidate]:
    if not candidates:
        return None
    # Lowest chi-square, ties to the lowest start index
    return min(candidates, key=lambda c: (c.chisqr, c.index))


def _is_degenerate(
    candidates: Sequence[_Candidate],
    best: _Candidate,
    n_points: int,
    swap_symmetric: bool,
) -> bool:
    """Both regimes fit the data equally well (delta chi-square within one noise unit).

    For swap-symmetric observables a feasible mirror is enough.
    """

    best_regime = coupling_regime(best.params)
    if best_regime is CouplingRegime.CRITICAL:
        return False
    if swap_symmetric and mirror_params(best.params) is not None:
        return True
    rivals = [c for c in candidates if coupling_regime(c.params) is not best_regime]
    if not rivals:
        return False
    rival = _pick(rivals)
    dof = max(1, n_points - 4)
    noise = max(best.chisqr / dof, 1e-30)
    return (rival.chisqr - best.chisqr) <= noise


def _finish(
    best: _Candidate,
    candidates: Sequence[_Candidate],
    problem: _Problem,
    n_points: int,
    used_fallback: bool,
    swap_symmetric: bool,
) -> FitResult:
    converged = (
        bool(getattr(best.result, "success", False))
        or getattr(best.result, "ier", None) in _PRECISION_LIMITED
        or best.rms <= RMS_FLOOR
    )
    degenerate = _is_degenerate(candidates, best, n_points, swap_symmetric)
    result = FitResult(
        params=best.params,
        residual_rms=best.rms,
        covariance_diag=_covariance(best, problem.template, problem.dip.width_hz),
        converged=converged,
        f_offset_hz=best.shift_hz,
        degenerate=degenerate,
        regime=coupling_regime(best.params),
        mirror_params=mirror_params(best.params),
        starts=len(candidates),
        method="nelder+leastsq" + ("+differential_evolution" if used_fallback else ""),
        chisqr=best.chisqr,
    )
    if not converged:
        logger.warning("Fit did not converge (rms %.3g)", best.rms)
    return result


def _template(base: Optional[CavityParams], initial: Optional[CavityParams]) -> CavityParams:
    template = initial or base
    if template is None:
        raise ValueError("fitting needs a base CavityParams for FSR, resonance frequency and fiber transmittance")
    return template


def fit_transmittance(
    spectrum: Sequence[Tuple[float, float]],
    initial: Optional[CavityParams] = None,
    *,
    base: Optional[CavityParams] = None,
    sigma: Optional[Sequence[float]] = None,
    starts: int = DEFAULT_STARTS,
    seed: int = 0,
    workers: Optional[int] = None,
) -> FitResult:
    """Least-squares fit of (detuning, transmittance) data to the coupled-mode model.

    FSR, f_res, t_all and the birefringence offset are taken from `initial`
    or `base` and held fixed. A transmittance-only fit cannot tell x from y;
    the result flags this as degenerate and reports the mirrored assignment.
    """

    template = _template(base, initial)
    data = _as_spectrum(spectrum, "transmittance spectrum", sigma)
    dip = _check_transmittance(data)
    start_values = _build_starts(dip, template, initial, starts, seed)
    problem = _problem(template, dip, data, None, 1.0, data)
    candidates, used_fallback = _multi_start(problem, start_values, seed, workers)
    best = _pick(candidates)
    result = _finish(best, candidates, problem, data.values.size, used_fallback, swap_symmetric=True)
    logger.info(
        "Transmittance fit: rms %.3g, regime %s%s",
        result.residual_rms,
        result.regime.value,
        " (degenerate)" if result.degenerate else "",
    )
    return result


def fit_joint(
    t_spectrum: Sequence[Tuple[float, float]],
    phase_spectrum: Sequence[Tuple[float, float]],
    initial: Optional[CavityParams] = None,
    *,
    base: Optional[CavityParams] = None,
    phase_weight: float = 1.0,
    t_sigma: Optional[Sequence[float]] = None,
    phase_sigma: Optional[Sequence[float]] = None,
    starts: int = DEFAULT_STARTS,
    seed: int = 0,
    workers: Optional[int] = None,
) -> FitResult:
    """Fit transmittance and phase together; the phase asymptote fixes the regime.

    Phase residuals are taken on the circle, so theta and theta + 2 pi agree.
    Starts also cover a third and three times the transmittance dip width.
    Raises InconsistentSpectraError when the joint residual is more than ten
    times the worse of the two single-observable fits.
    """

    if phase_weight <= 0.0:
        raise ValueError(f"phase_weight must be > 0, got {phase_weight}")
    template = _template(base, initial)
    t_data = _as_spectrum(t_spectrum, "transmittance spectrum", t_sigma)
    phase_data = _as_spectrum(phase_spectrum, "phase spectrum", phase_sigma)
    dip = _check_transmittance(t_data)
    start_values = _build_starts(dip, template, initial, starts, seed, scales=JOINT_WIDTH_SCALES)

    t_only, _ = _multi_start(_problem(template, dip, t_data, None, phase_weight, t_data), start_values, seed, workers)
    phase_only, _ = _multi_start(
        _problem(template, dip, None, phase_data, phase_weight, t_data), start_values, seed, workers
    )
    joint_problem = _problem(template, dip, t_data, phase_data, phase_weight, t_data)
    joint, used_fallback = _multi_start(joint_problem, start_values, seed, workers)
    best = _pick(joint)
    reference = max(_pick(t_only).rms, _pick(phase_only).rms, RMS_FLOOR)
    if best.rms > INCONSISTENCY_FACTOR * reference:
        raise InconsistentSpectraError(
            f"joint fit rms {best.rms:.3g} exceeds {INCONSISTENCY_FACTOR:g}x the single-spectrum fits ({reference:.3g})"
        )
    result = _finish(
        best,
        joint,
        joint_problem,
        t_data.values.size + phase_data.values.size,
        used_fallback,
        swap_symmetric=False,
    )
    logger.info("Joint fit: rms %.3g, regime %s", result.residual_rms, result.regime.value)
    return result
