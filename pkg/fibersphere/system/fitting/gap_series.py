"""Fit the exponential gap law to minimum-transmittance and linewidth series."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import lmfit
import numpy as np

from ..cavity_types import CavityParams, GapCouplingLaw
from ..coupled_mode import critical_gap_nm, linewidth_hz, minimum_transmittance, params_at_gap

logger = logging.getLogger('Fitting')

MIN_DISTANCES = 5
_KAPPA_MAX = math.pi / 2
_DECAY_BOUNDS_NM = (1.0, 1e5)


@dataclass(frozen=True)
class GapFitResult:
    law: GapCouplingLaw
    d_c_nm: Optional[float]
    has_critical_point: bool
    residual_rms: float
    covariance_diag: Dict[str, float]
    converged: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "law": self.law.to_dict(),
            "d_c_nm": self.d_c_nm,
            "has_critical_point": self.has_critical_point,
            "residual_rms": self.residual_rms,
            "covariance_diag": dict(self.covariance_diag),
            "converged": self.converged,
        }


def gap_curves(base: CavityParams, law: GapCouplingLaw, distances_nm: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Model (T_min, FWHM) at each gap distance."""

    t_min = []
    widths = []
    for d in distances_nm:
        params = params_at_gap(base, law, float(d))
        t_min.append(minimum_transmittance(params))
        widths.append(linewidth_hz(params))
    return np.array(t_min), np.array(widths)


def _parse_series(series: Sequence[Tuple[float, float, float]]) -> np.ndarray:
    data = np.asarray([(float(d), float(t), float(w)) for d, t, w in series], dtype=float)
    if data.ndim != 2 or data.shape[0] < MIN_DISTANCES:
        raise ValueError(f"gap series needs at least {MIN_DISTANCES} distances")
    if not np.all(np.isfinite(data)):
        raise ValueError("gap series contains non-finite values")
    data = data[np.argsort(data[:, 0], kind="stable")]
    if np.any(data[:, 0] < 0.0) or np.any(np.diff(data[:, 0]) <= 0.0):
        raise ValueError("gap distances must be distinct and nonnegative")
    if np.any(data[:, 2] <= 0.0):
        raise ValueError("FWHM values must be positive")
    return data


def _critical_kappa(base: CavityParams) -> float:
    return math.acos(min(1.0, base.x))


def _initial_guess(data: np.ndarray, base: CavityParams) -> Tuple[float, float]:
    """Coarse grid over decay lengths with kappa_0 pinned by the T_min turning point."""

    d = data[:, 0]
    kappa_c = max(_critical_kappa(base), 1e-9)
    d_turn = float(d[int(np.argmin(data[:, 1]))])
    best = None
    for decay in np.geomspace(10.0, 3000.0, 25):
        kappa_0 = min(_KAPPA_MAX, kappa_c * math.exp(d_turn / decay))
        law = GapCouplingLaw(kappa_0=kappa_0, decay_len_nm=float(decay))
        t_min, widths = gap_curves(base, law, d)
        cost = float(np.sum((t_min - data[:, 1]) ** 2) + np.sum(np.log(widths / data[:, 2]) ** 2))
        if best is None or cost < best[0]:
            best = (cost, kappa_0, float(decay))
    return best[1], best[2]


def _law_from(p: lmfit.Parameters) -> GapCouplingLaw:
    return GapCouplingLaw(
        kappa_0=min(_KAPPA_MAX, math.exp(p["ln_kappa_0"].value)),
        decay_len_nm=math.exp(p["ln_decay"].value),
    )


def fit_gap_series(series: Sequence[Tuple[float, float, float]], base: CavityParams) -> GapFitResult:
    """Fit kappa_0 and the decay length to (d_nm, T_min, fwhm_hz) triples.

    gamma and rho_l stay at their base values for every gap. Residuals are
    T_min differences and log-ratios of linewidths, so Q and depth weigh in
    on comparable scales. has_critical_point is False when the fitted law
    reaches x = y outside the measured distance range (or never).
    """

    data = _parse_series(series)
    kappa_0, decay = _initial_guess(data, base)

    params = lmfit.Parameters()
    params.add("ln_kappa_0", value=math.log(kappa_0), max=math.log(_KAPPA_MAX))
    params.add(
        "ln_decay",
        value=math.log(decay),
        min=math.log(_DECAY_BOUNDS_NM[0]),
        max=math.log(_DECAY_BOUNDS_NM[1]),
    )

    def residual(p: lmfit.Parameters) -> np.ndarray:
        law = _law_from(p)
        t_min, widths = gap_curves(base, law, data[:, 0])
        return np.concatenate([t_min - data[:, 1], np.log(widths / data[:, 2])])

    result = lmfit.minimize(residual, params, method="leastsq", ftol=1e-14, xtol=1e-14)
    law = _law_from(result.params)

    covariance = {"kappa_0": math.nan, "decay_len_nm": math.nan}
    if result.covar is not None:
        names = list(result.var_names)
        covariance["kappa_0"] = law.kappa_0 ** 2 * float(result.covar[names.index("ln_kappa_0"), names.index("ln_kappa_0")])
        covariance["decay_len_nm"] = law.decay_len_nm ** 2 * float(result.covar[names.index("ln_decay"), names.index("ln_decay")])

    d_c = critical_gap_nm(base, law)
    inside = d_c is not None and data[0, 0] <= d_c <= data[-1, 0]
    rms = float(np.sqrt(np.mean(np.square(result.residual))))
    if not inside:
        logger.warning(
            "Fitted gap law has no critical point inside [%.0f, %.0f] nm (d_c=%s)",
            data[0, 0],
            data[-1, 0],
            "none" if d_c is None else f"{d_c:.1f}",
        )
    logger.info(
        "Gap fit: kappa_0=%.5g, decay=%.4g nm, d_c=%s, rms %.3g",
        law.kappa_0,
        law.decay_len_nm,
        "none" if d_c is None else f"{d_c:.1f} nm",
        rms,
    )
    return GapFitResult(
        law=law,
        d_c_nm=d_c,
        has_critical_point=inside,
        residual_rms=rms,
        covariance_diag=covariance,
        converged=bool(result.success),
    )


def quality_curve(base: CavityParams, law: GapCouplingLaw, distances_nm: Sequence[float]) -> List[float]:
    """Standard Q = f0 / FWHM at each gap."""

    _, widths = gap_curves(base, law, distances_nm)
    return [base.f_res_hz / w for w in widths]
