import math
import unittest

import numpy as np

from fibersphere.system.cavity_types import CavityParams, CouplingRegime, GapCouplingLaw
from fibersphere.system.coupled_mode import (
    coupling_regime,
    linewidth_hz,
    minimum_transmittance,
    spectrum_arrays,
)
from fibersphere.system.errors import InconsistentSpectraError
from fibersphere.system.fitting import (
    fit_gap_series,
    fit_joint,
    fit_transmittance,
    gap_curves,
    mirror_params,
    quality_curve,
)

UNDER_KAPPA = 2.9124e-3
OVER_KAPPA = 1.00333e-2


def _params(kappa: float) -> CavityParams:
    return CavityParams(
        gamma=1e-6,
        rho_l=1.83e-5,
        kappa=kappa,
        fsr_hz=1.52e12,
        f_res_hz=3.8435e14,
        t_all=0.3,
        theta_offset_rad=0.9,
    )


def _spectra(params: CavityParams, span_hz: float, points: int, shift_hz: float = 0.0):
    grid = np.linspace(-span_hz / 2, span_hz / 2, points)
    t, theta = spectrum_arrays(params, grid - shift_hz)
    return list(zip(grid, t)), list(zip(grid, theta))


class MirrorTests(unittest.TestCase):
    def test_mirror_swaps_x_and_y_and_keeps_transmittance(self):
        params = _params(OVER_KAPPA)
        mirrored = mirror_params(params)
        self.assertAlmostEqual(mirrored.x, params.y, places=12)
        self.assertAlmostEqual(mirrored.y, params.x, places=12)
        grid = np.linspace(-1e8, 1e8, 51)
        np.testing.assert_allclose(spectrum_arrays(mirrored, grid)[0], spectrum_arrays(params, grid)[0], atol=1e-9)
        self.assertIs(coupling_regime(mirrored), CouplingRegime.UNDERCOUPLED)

    def test_mirror_is_unavailable_without_absorption_room(self):
        params = CavityParams(gamma=0.5, rho_l=0.0, kappa=0.01, fsr_hz=1e12, f_res_hz=1e14)
        self.assertIsNone(mirror_params(params))


class TransmittanceFitTests(unittest.TestCase):
    def test_noiseless_undercoupled_spectrum(self):
        truth = _params(UNDER_KAPPA)
        t_pairs, _ = _spectra(truth, 60e6, 121)
        fit = fit_transmittance(t_pairs, base=truth.with_kappa(0.0), seed=1)
        self.assertTrue(fit.converged)
        self.assertLess(fit.residual_rms, 1e-9)
        self.assertAlmostEqual(minimum_transmittance(fit.params), minimum_transmittance(truth), delta=1e-6)
        self.assertAlmostEqual(linewidth_hz(fit.params) / linewidth_hz(truth), 1.0, delta=1e-5)
        self.assertAlmostEqual(fit.params.gamma, truth.gamma, delta=1e-8)
        self.assertTrue(fit.degenerate)
        self.assertIsNotNone(fit.mirror_params)

    def test_random_noiseless_spectra_are_reproduced(self):
        rng = np.random.default_rng(2026)
        for draw in range(100):
            truth = CavityParams(
                gamma=10.0 ** rng.uniform(-7.0, -3.0),
                rho_l=10.0 ** rng.uniform(-5.3, -4.3),
                kappa=10.0 ** rng.uniform(-3.0, -1.7),
                fsr_hz=1.52e12,
                f_res_hz=3.8435e14,
                t_all=0.3,
                theta_offset_rad=0.9,
            )
            width = linewidth_hz(truth)
            t_pairs, _ = _spectra(truth, 10.0 * width, 121, shift_hz=rng.uniform(-0.1, 0.1) * width)
            with self.subTest(draw=draw, gamma=truth.gamma, rho_l=truth.rho_l, kappa=truth.kappa):
                fit = fit_transmittance(t_pairs, base=truth, starts=2, seed=draw)
                self.assertLess(fit.residual_rms, 1e-9)

    def test_poisson_spectrum_recovers_depth_and_width(self):
        truth = _params(UNDER_KAPPA)
        t_pairs, _ = _spectra(truth, 60e6, 500)
        reference = 800.0
        for seed in (21, 22, 23):
            counts = np.random.default_rng(seed).poisson([t * reference for _, t in t_pairs])
            noisy = [(f, c / reference) for (f, _), c in zip(t_pairs, counts)]
            with self.subTest(seed=seed):
                fit = fit_transmittance(noisy, base=truth, seed=seed)
                self.assertTrue(fit.converged)
                self.assertAlmostEqual(minimum_transmittance(fit.params), minimum_transmittance(truth), delta=0.02)
                self.assertAlmostEqual(linewidth_hz(fit.params) / linewidth_hz(truth), 1.0, delta=0.05)

    def test_offset_resonance_is_recovered(self):
        truth = _params(UNDER_KAPPA)
        t_pairs, _ = _spectra(truth, 60e6, 121, shift_hz=2e6)
        fit = fit_transmittance(t_pairs, base=truth, seed=2)
        self.assertAlmostEqual(fit.f_offset_hz, 2e6, delta=5e4)

    def test_model_reproduces_data(self):
        truth = _params(UNDER_KAPPA)
        t_pairs, _ = _spectra(truth, 60e6, 61)
        fit = fit_transmittance(t_pairs, base=truth, seed=3)
        grid = [f for f, _ in t_pairs]
        t_model, _ = fit.model(grid)
        np.testing.assert_allclose(t_model, [t for _, t in t_pairs], atol=1e-9)

    def test_noisy_spectrum_with_counting_weights(self):
        truth = _params(UNDER_KAPPA)
        t_pairs, _ = _spectra(truth, 60e6, 500)
        reference = 800.0
        counts = np.random.default_rng(12).poisson([t * reference for _, t in t_pairs])
        noisy = [(f, c / reference) for (f, _), c in zip(t_pairs, counts)]
        sigma = np.sqrt(np.maximum(counts, 1.0)) / reference
        fit = fit_transmittance(noisy, base=truth, sigma=sigma, seed=4)
        self.assertTrue(fit.converged)
        self.assertAlmostEqual(minimum_transmittance(fit.params), minimum_transmittance(truth), delta=0.02)
        self.assertAlmostEqual(linewidth_hz(fit.params) / linewidth_hz(truth), 1.0, delta=0.05)
        # Weighted residuals are in noise units
        self.assertAlmostEqual(fit.residual_rms, 1.0, delta=0.2)

    def test_noisy_dip_with_many_half_depth_crossings_still_fits(self):
        truth = _params(UNDER_KAPPA)
        t_pairs, _ = _spectra(truth, 60e6, 500)
        rng = np.random.default_rng(5)
        noisy = [(f, max(0.0, t + rng.normal(0.0, 0.05))) for f, t in t_pairs]
        fit = fit_transmittance(noisy, base=truth, seed=5)
        self.assertTrue(fit.converged)
        self.assertAlmostEqual(linewidth_hz(fit.params) / linewidth_hz(truth), 1.0, delta=0.1)

    def test_too_few_points(self):
        with self.assertRaises(ValueError):
            fit_transmittance([(0.0, 0.4), (1.0, 0.9)], base=_params(UNDER_KAPPA))

    def test_flat_spectrum_has_no_dip(self):
        pairs = [(float(f), 0.9) for f in range(20)]
        with self.assertRaises(ValueError):
            fit_transmittance(pairs, base=_params(UNDER_KAPPA))

    def test_out_of_range_values(self):
        t_pairs, _ = _spectra(_params(UNDER_KAPPA), 60e6, 21)
        t_pairs[0] = (t_pairs[0][0], 2.0)
        with self.assertRaises(ValueError):
            fit_transmittance(t_pairs, base=_params(UNDER_KAPPA))

    def test_needs_a_template(self):
        t_pairs, _ = _spectra(_params(UNDER_KAPPA), 60e6, 21)
        with self.assertRaises(ValueError):
            fit_transmittance(t_pairs)


class JointFitTests(unittest.TestCase):
    def test_phase_fixes_the_overcoupled_regime(self):
        truth = _params(OVER_KAPPA)
        t_pairs, phase_pairs = _spectra(truth, 200e6, 201)
        fit = fit_joint(t_pairs, phase_pairs, base=truth.with_kappa(0.0), seed=5)
        self.assertIs(fit.regime, CouplingRegime.OVERCOUPLED)
        self.assertFalse(fit.degenerate)
        self.assertAlmostEqual(fit.params.kappa / OVER_KAPPA, 1.0, delta=0.01)
        self.assertAlmostEqual(linewidth_hz(fit.params) / linewidth_hz(truth), 1.0, delta=0.01)
        _, theta = fit.model([100e6])
        self.assertAlmostEqual(float(theta[0]), 2.9, delta=0.05)

    def test_phase_fixes_the_undercoupled_regime(self):
        truth = _params(UNDER_KAPPA)
        t_pairs, phase_pairs = _spectra(truth, 60e6, 121)
        fit = fit_joint(t_pairs, phase_pairs, base=truth, seed=6)
        self.assertIs(fit.regime, CouplingRegime.UNDERCOUPLED)
        self.assertAlmostEqual(fit.params.kappa / UNDER_KAPPA, 1.0, delta=0.01)

    def test_phase_branch_does_not_matter(self):
        truth = _params(OVER_KAPPA)
        t_pairs, phase_pairs = _spectra(truth, 200e6, 101)
        shifted = [(f, p + 2.0 * math.pi) for f, p in phase_pairs]
        fit = fit_joint(t_pairs, shifted, base=truth, seed=7)
        self.assertIs(fit.regime, CouplingRegime.OVERCOUPLED)

    def test_contradictory_spectra_are_rejected(self):
        under = _params(UNDER_KAPPA)
        t_pairs, _ = _spectra(under, 60e6, 61)
        # Phase of the three times wider overcoupled resonance on the same axis
        _, phase_pairs = _spectra(_params(OVER_KAPPA), 60e6, 61)
        with self.assertRaises(InconsistentSpectraError):
            fit_joint(t_pairs, phase_pairs, base=under, seed=8)

    def test_rejects_nonpositive_phase_weight(self):
        t_pairs, phase_pairs = _spectra(_params(OVER_KAPPA), 200e6, 21)
        with self.assertRaises(ValueError):
            fit_joint(t_pairs, phase_pairs, base=_params(OVER_KAPPA), phase_weight=0.0)


class GapSeriesTests(unittest.TestCase):
    LAW = GapCouplingLaw(kappa_0=0.0375, decay_len_nm=165.7)

    def _series(self, distances):
        base = _params(0.0)
        t_min, widths = gap_curves(base, self.LAW, distances)
        return base, list(zip(distances, t_min, widths))

    def test_recovers_law_and_critical_gap(self):
        base, series = self._series(np.arange(0.0, 801.0, 50.0))
        result = fit_gap_series(series, base)
        self.assertTrue(result.converged)
        self.assertTrue(result.has_critical_point)
        self.assertAlmostEqual(result.d_c_nm, 300.0, delta=5.0)
        self.assertAlmostEqual(result.law.decay_len_nm / 165.7, 1.0, delta=0.02)

    def test_flags_series_outside_critical_range(self):
        base, series = self._series(np.arange(400.0, 801.0, 50.0))
        result = fit_gap_series(series, base)
        self.assertFalse(result.has_critical_point)

    def test_quality_curve_is_monotone(self):
        q = quality_curve(_params(0.0), self.LAW, [0.0, 200.0, 400.0, 800.0])
        self.assertTrue(all(b > a for a, b in zip(q, q[1:])))

    def test_rejects_short_or_unsorted_series(self):
        base = _params(0.0)
        with self.assertRaises(ValueError):
            fit_gap_series([(0.0, 0.5, 1e8)] * 3, base)
        with self.assertRaises(ValueError):
            fit_gap_series([(d, 0.5, 1e8) for d in (0.0, 10.0, 10.0, 20.0, 30.0)], base)


if __name__ == "__main__":
    unittest.main()
