"""Maximum-likelihood polarization tomography with differential evolution.

Candidates are parameterized by a lower-triangular factor

    G = [[t0, 0], [t2 + i t3, t1]],   rho = G^H G / Tr(G^H G)

so every candidate is Hermitian, unit trace and positive semidefinite. The
flux of each basis pair (X/Y, P/M, R/L) is fitted alongside, since the three
wave-plate settings are counted one after the other. Counts are scored with
the Poisson deviance 2 * sum(lam - n + n log(n / lam)), lam = flux * p + dark.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import differential_evolution, minimize
from scipy.special import xlogy

from ..photon_sim.detector import DetectorModel
from ..photon_sim.streams import TOMOGRAPHY_STREAM, substream
from .density import DensityMatrix, bloch_vector, pairwise_stokes, project_to_physical, rho_from_stokes

logger = logging.getLogger('Tomography')

_LAMBDA_FLOOR = 1e-300
_T_BOUNDS = ((0.0, 1.0), (0.0, 1.0), (-1.0, 1.0), (-1.0, 1.0))


@dataclass(frozen=True)
class MleConfig:
    scaling_factor: float = 1.5
    crossover_prob: float = 0.9
    population: int = 32
    max_generations: int = 500
    tolerance: float = 1e-10
    seed: int = 0
    stall_generations: int = 50
    refine: bool = True

    def __post_init__(self) -> None:
        # scipy's mutation constant lives in [0, 2)
        if not 0.0 < self.scaling_factor < 2.0:
            raise ValueError(f"MleConfig.scaling_factor must lie in (0, 2), got {self.scaling_factor}")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError(f"MleConfig.crossover_prob must lie in [0, 1], got {self.crossover_prob}")
        if self.population < 8:
            raise ValueError(f"MleConfig.population must be >= 8, got {self.population}")
        if self.max_generations < 1:
            raise ValueError("MleConfig.max_generations must be >= 1")
        if self.tolerance < 0.0:
            raise ValueError("MleConfig.tolerance must be >= 0")
        if self.seed < 0:
            raise ValueError("MleConfig.seed must be >= 0")
        if self.stall_generations < 1:
            raise ValueError("MleConfig.stall_generations must be >= 1")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class TomographyResult:
    rho: DensityMatrix
    converged: bool
    generations: int
    deviance: float
    fluxes: Tuple[float, float, float]
    linear_rho: Optional[DensityMatrix] = field(default=None, repr=False)

    @property
    def bloch(self) -> Tuple[float, float, float]:
        return bloch_vector(self.rho)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rho": self.rho.to_dict(),
            "converged": self.converged,
            "generations": self.generations,
            "deviance": self.deviance,
            "fluxes": list(self.fluxes),
        }


def rho_from_parameters(t: Sequence[float]) -> DensityMatrix:
    t0, t1, t2, t3 = (float(v) for v in t[:4])
    g = np.array([[t0, 0.0], [t2 + 1j * t3, t1]])
    m = g.conj().T @ g
    norm = float(np.real(np.trace(m)))
    if norm <= 0.0:
        return DensityMatrix(0.5 * np.eye(2))
    return DensityMatrix(m / norm)


def parameters_from_rho(rho: DensityMatrix) -> np.ndarray:
    """Invert rho_from_parameters for a physical rho (t1 >= 0, t0 >= 0)."""

    m = rho.matrix
    t1 = math.sqrt(max(0.0, float(m[1, 1].real)))
    c = np.conj(m[0, 1]) / t1 if t1 > 1e-150 else 0.0
    t0 = math.sqrt(max(0.0, float(m[0, 0].real) - abs(c) ** 2))
    return np.array([t0, t1, float(np.real(c)), float(np.imag(c))])


def projection_probabilities(t: np.ndarray) -> np.ndarray:
    """(X, Y, P, M, R, L) probabilities for parameter arrays shaped (4, ...)."""

    t0, t1, t2, t3 = t[0], t[1], t[2], t[3]
    norm = t0 * t0 + t1 * t1 + t2 * t2 + t3 * t3
    norm = np.where(norm > 0.0, norm, 1.0)
    s1 = (t0 * t0 + t2 * t2 + t3 * t3 - t1 * t1) / norm
    s2 = 2.0 * t2 * t1 / norm
    s3 = -2.0 * t3 * t1 / norm
    return 0.5 * np.stack([1.0 + s1, 1.0 - s1, 1.0 + s2, 1.0 - s2, 1.0 + s3, 1.0 - s3])


class _Deviance:
    def __init__(self, counts: np.ndarray, dark: float):
        self.counts = counts
        self.dark = dark

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        probabilities = projection_probabilities(x[:4])
        flux = np.repeat(x[4:7], 2, axis=0)
        lam = np.maximum(flux * probabilities + self.dark, _LAMBDA_FLOOR)
        n = self.counts.reshape((6,) + (1,) * (lam.ndim - 1))
        return 2.0 * np.sum(lam - n + xlogy(n, n / lam), axis=0)


class _StallMonitor:
    """Stops the search once the best deviance stops improving."""

    def __init__(self, objective: _Deviance, window: int, tolerance: float):
        self.objective = objective
        self.window = window
        self.tolerance = tolerance
        self.history: List[float] = []
        self.stalled = False

    def __call__(self, xk, convergence=None) -> bool:
        best = float(self.objective(xk))
        self.history.append(best)
        if len(self.history) > self.window:
            improvement = self.history[-1 - self.window] - best
            if improvement <= self.tolerance * max(abs(best), 1.0):
                self.stalled = True
                return True
        return False


def _flux_bounds(observed: np.ndarray, dark: float) -> List[Tuple[float, float]]:
    bounds = []
    for first in (0, 2, 4):
        total = float(observed[first] + observed[first + 1])
        centre = max(0.0, total - 2.0 * dark)
        spread = 5.0 * math.sqrt(total) + 1.0
        bounds.append((max(0.0, centre - spread), centre + spread))
    return bounds


def mle_reconstruct(
    counts: Sequence[float],
    detector: Optional[DetectorModel] = None,
    config: Optional[MleConfig] = None,
    *,
    bins: int = 1,
    stream_key: Tuple[int, ...] = (),
) -> TomographyResult:
    """Physical density matrix maximizing the Poisson likelihood of six projection counts.

    counts are ordered (X, Y, P, M, R, L) and may be pooled over `bins`
    counting bins, which scales the dark-count expectation.
    """

    config = config or MleConfig()
    observed = np.asarray(counts, dtype=float)
    if observed.shape != (6,) or not np.all(np.isfinite(observed)) or np.any(observed < 0.0):
        raise ValueError("mle_reconstruct needs six finite nonnegative projection counts")
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    dark = detector.dark_counts_per_bin * bins if detector is not None else 0.0
    if observed.sum() - 6.0 * dark <= 0.0:
        raise ValueError("no signal above the dark-count level")

    linear = rho_from_stokes(pairwise_stokes(observed, dark))
    start_rho = project_to_physical(linear)
    signal = np.clip(observed - dark, 0.0, None)

    objective = _Deviance(observed, dark)
    bounds = list(_T_BOUNDS) + _flux_bounds(observed, dark)
    lower = np.array([b[0] for b in bounds])
    upper = np.array([b[1] for b in bounds])

    rng = substream(config.seed, TOMOGRAPHY_STREAM, *stream_key)
    init = lower + (upper - lower) * rng.random((config.population, len(bounds)))
    fluxes0 = [max(0.0, signal[k] + signal[k + 1]) for k in (0, 2, 4)]
    init[0] = np.clip(np.concatenate([parameters_from_rho(start_rho), fluxes0]), lower, upper)

    monitor = _StallMonitor(objective, config.stall_generations, config.tolerance)
    result = differential_evolution(
        objective,
        bounds,
        strategy='rand1bin',
        maxiter=config.max_generations,
        init=init,
        mutation=config.scaling_factor,
        recombination=config.crossover_prob,
        tol=0.0,
        atol=0.0,
        polish=False,
        seed=rng,
        vectorized=True,
        updating='deferred',
        callback=monitor,
    )
    best_x = np.asarray(result.x, dtype=float)
    best_f = float(result.fun)

    if config.refine:
        refined = minimize(
            lambda v: float(objective(v)),
            best_x,
            method='L-BFGS-B',
            bounds=bounds,
            options={'ftol': 1e-15, 'gtol': 1e-10, 'maxiter': 1000},
        )
        if float(refined.fun) <= best_f:
            best_x, best_f = np.asarray(refined.x, dtype=float), float(refined.fun)

    # DE stops on its own (tol=0) only when the population has collapsed
    converged = monitor.stalled or bool(result.success)
    generations = int(result.nit)
    if not converged:
        logger.warning(
            "MLE did not settle within %d generations (deviance %.6g, key=%s)",
            config.max_generations,
            best_f,
            stream_key,
        )
    else:
        logger.debug("MLE converged after %d generations (deviance %.6g, key=%s)", generations, best_f, stream_key)

    return TomographyResult(
        rho=rho_from_parameters(best_x[:4]),
        converged=converged,
        generations=generations,
        deviance=best_f,
        fluxes=(float(best_x[4]), float(best_x[5]), float(best_x[6])),
        linear_rho=linear,
    )
