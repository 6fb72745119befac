import math
import unittest

import numpy as np

from fibersphere.system.cavity_types import CavityParams
from fibersphere.system.errors import CountOverflowError
from fibersphere.system.photon_sim import (
    DEFAULT_EFFICIENCY,
    MODE_SIMULTANEOUS,
    DetectorModel,
    compensate_transmittance,
    efficiency_for_count_rate,
    expected_counts_array,
    mean_photons_per_window,
    reference_counts,
    simulate_sweep,
    substream,
)
from fibersphere.system.photon_sim.detector import photon_energy_j
from fibersphere.system.polarization import balanced_probe

FSR_HZ = 1.52e12
F_RES_HZ = 3.8435e14


def _params(kappa: float = 2.9124e-3, **overrides) -> CavityParams:
    values = dict(gamma=1e-6, rho_l=1.83e-5, kappa=kappa, fsr_hz=FSR_HZ, f_res_hz=F_RES_HZ, t_all=0.3)
    values.update(overrides)
    return CavityParams(**values)


class PhotonNumberTests(unittest.TestCase):
    def test_probe_of_10_5_pw_gives_0_41_photons_per_10_ns(self):
        self.assertAlmostEqual(mean_photons_per_window(10.5e-12, 780e-9, 10e-9), 0.4123, delta=0.005)

    def test_zero_window_gives_zero(self):
        self.assertEqual(mean_photons_per_window(10.5e-12, 780e-9, 0.0), 0.0)

    def test_microwatt_probe(self):
        self.assertAlmostEqual(mean_photons_per_window(1e-6, 780e-9, 10e-9) / 3.9e4, 1.0, delta=0.02)

    def test_invalid_inputs_are_rejected(self):
        with self.assertRaises(ValueError):
            photon_energy_j(0.0)
        with self.assertRaises(ValueError):
            mean_photons_per_window(-1.0, 780e-9, 1e-9)

    def test_default_efficiency_gives_800_counts_per_bin(self):
        detector = DetectorModel()
        counts = reference_counts(balanced_probe(10.5e-12), detector)
        self.assertAlmostEqual(counts[0] * 0.3, 800.0, places=6)
        self.assertAlmostEqual(DEFAULT_EFFICIENCY, efficiency_for_count_rate(800.0, 10.5e-12), places=12)

    def test_unreachable_count_rate_is_rejected(self):
        with self.assertRaises(ValueError):
            efficiency_for_count_rate(1e9, 10.5e-12)

    def test_detector_validation(self):
        with self.assertRaises(ValueError):
            DetectorModel(bin_time_s=0.0)
        with self.assertRaises(ValueError):
            DetectorModel(dark_rate_hz=-1.0)
        self.assertAlmostEqual(DetectorModel().dark_counts_per_bin, 0.3)


class SweepTests(unittest.TestCase):
    def test_dark_free_zero_efficiency_detector_counts_nothing(self):
        detector = DetectorModel(dark_rate_hz=0.0, efficiency=0.0)
        record = simulate_sweep(_params(), balanced_probe(10.5e-12), detector, np.linspace(-3e7, 3e7, 11), seed=1)
        self.assertEqual(int(record.counts.sum()), 0)

    def test_same_seed_reproduces_record(self):
        grid = np.linspace(-3e7, 3e7, 31)
        first = simulate_sweep(_params(), balanced_probe(10.5e-12), DetectorModel(), grid, seed=42)
        second = simulate_sweep(_params(), balanced_probe(10.5e-12), DetectorModel(), grid, seed=42)
        other = simulate_sweep(_params(), balanced_probe(10.5e-12), DetectorModel(), grid, seed=43)
        np.testing.assert_array_equal(first.counts, second.counts)
        self.assertFalse(np.array_equal(first.counts, other.counts))

    def test_points_do_not_depend_on_grid_length(self):
        grid = np.linspace(-3e7, 3e7, 31)
        full = simulate_sweep(_params(), balanced_probe(10.5e-12), DetectorModel(), grid, seed=5)
        head = simulate_sweep(_params(), balanced_probe(10.5e-12), DetectorModel(), grid[:10], seed=5)
        np.testing.assert_array_equal(full.counts[:10], head.counts)

    def test_poisson_statistics_at_800_counts(self):
        # kappa = 0 makes the cavity an exact all-pass filter
        params = _params(0.0, t_all=1.0)
        power = 800.0 * photon_energy_j(780e-9) / 1e-3
        detector = DetectorModel(dark_rate_hz=0.0, efficiency=1.0)
        probe = balanced_probe(power, 0.0)
        bins = 10_000
        record = simulate_sweep(params, probe, detector, np.arange(bins, dtype=float), seed=9, mode=MODE_SIMULTANEOUS)
        x = record.counts[:, 0].astype(float)
        self.assertLess(abs(x.mean() - 800.0), 4.0 * math.sqrt(800.0 / bins))
        self.assertTrue(0.95 <= x.var(ddof=1) / x.mean() <= 1.05)

    def test_critical_null_leaves_dark_counts_on_x(self):
        rho_l = 1.83e-5
        params = CavityParams(
            gamma=0.0,
            rho_l=rho_l,
            kappa=math.acos(math.exp(-rho_l)),
            fsr_hz=FSR_HZ,
            f_res_hz=F_RES_HZ,
            t_all=0.3,
        )
        detector = DetectorModel()
        expected = expected_counts_array(params, balanced_probe(10.5e-12, 0.0), detector, np.array([0.0]))
        self.assertAlmostEqual(expected[0, 0], detector.dark_counts_per_bin, places=9)

    def test_sequential_and_simultaneous_share_expectations(self):
        grid = np.linspace(-3e7, 3e7, 5)
        for mode in ("sequential", "simultaneous"):
            record = simulate_sweep(_params(), balanced_probe(10.5e-12), DetectorModel(), grid, seed=3, mode=mode)
            self.assertEqual(record.counts.shape, (5, 6))
            self.assertEqual(record.mode, mode)

    def test_overflow_cap(self):
        with self.assertRaises(CountOverflowError):
            simulate_sweep(_params(), balanced_probe(1.0), DetectorModel(efficiency=1.0), [0.0, 1e6], seed=0)

    def test_invalid_arguments(self):
        probe = balanced_probe(10.5e-12)
        with self.assertRaises(ValueError):
            simulate_sweep(_params(), probe, DetectorModel(), [], seed=0)
        with self.assertRaises(ValueError):
            simulate_sweep(_params(), probe, DetectorModel(), [0.0], seed=0, mode="bogus")
        with self.assertRaises(ValueError):
            simulate_sweep(_params(), probe, DetectorModel(), [0.0], seed=0, depolarization=2.0)

    def test_record_rejects_unsorted_axis(self):
        record = simulate_sweep(_params(), balanced_probe(10.5e-12), DetectorModel(), [0.0, 1e6], seed=0)
        with self.assertRaises(ValueError):
            type(record)(
                detunings_hz=np.array([1e6, 0.0]),
                counts=record.counts,
                detector=record.detector,
                probe=record.probe,
                reference_counts=record.reference_counts,
            )

    def test_jittered_sweep_is_reproducible(self):
        grid = np.linspace(-1e7, 1e7, 11)
        a = simulate_sweep(_params(), balanced_probe(10.5e-12), DetectorModel(), grid, seed=8, jitter_hz=2e6)
        b = simulate_sweep(_params(), balanced_probe(10.5e-12), DetectorModel(), grid, seed=8, jitter_hz=2e6)
        np.testing.assert_array_equal(a.counts, b.counts)


class CompensationTests(unittest.TestCase):
    def setUp(self):
        self.record = simulate_sweep(
            _params(), balanced_probe(10.5e-12), DetectorModel(), np.linspace(-3e7, 3e7, 21), seed=4
        )

    def test_unit_transmittance_is_identity(self):
        compensated = compensate_transmittance(self.record, 1.0)
        np.testing.assert_array_equal(compensated.compensated, self.record.normalized())
        np.testing.assert_array_equal(compensated.counts, self.record.counts)

    def test_half_transmittance_doubles_values(self):
        compensated = compensate_transmittance(self.record, 0.5)
        np.testing.assert_allclose(compensated.compensated, 2.0 * self.record.normalized())

    def test_thirty_percent_fiber_maps_0_12_to_0_40(self):
        floor = 0.12 * self.record.reference_counts[0] + self.record.dark_counts_per_bin
        counts = self.record.counts.copy()
        counts[10, 0] = int(round(floor))
        record = type(self.record)(
            detunings_hz=self.record.detunings_hz,
            counts=counts,
            detector=self.record.detector,
            probe=self.record.probe,
            reference_counts=self.record.reference_counts,
        )
        self.assertAlmostEqual(compensate_transmittance(record, 0.3).transmittance()[10], 0.40, delta=0.002)

    def test_compensated_spectrum_tracks_model(self):
        t = compensate_transmittance(self.record, 0.3).transmittance()
        self.assertAlmostEqual(float(t[10]), 0.40, delta=0.08)
        self.assertGreater(float(t[0]), 0.8)

    def test_rejects_invalid_transmittance(self):
        with self.assertRaises(ValueError):
            compensate_transmittance(self.record, 0.0)


class SubstreamTests(unittest.TestCase):
    def test_keys_select_independent_streams(self):
        a = substream(1, 0, 5).random(4)
        b = substream(1, 0, 5).random(4)
        c = substream(1, 0, 6).random(4)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))

    def test_negative_seed_is_rejected(self):
        with self.assertRaises(ValueError):
            substream(-1)


if __name__ == "__main__":
    unittest.main()
