import json
import math
import tempfile
import unittest
from pathlib import Path

from pydantic import ValidationError

from fibersphere.system.coupled_mode import linewidth_hz
from fibersphere.system.photon_sim import reference_counts
from fibersphere.system.run_config import config_from_dict, load_config

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def _minimal(**overrides):
    data = {
        "cavity": {"gamma": 1e-6, "rho_l": 1.83e-5, "kappa": 2.9124e-3, "fsr_hz": 1.52e12},
        "sweep": {"span_hz": 60e6, "points": 11},
    }
    data.update(overrides)
    return data


class ShippedConfigTests(unittest.TestCase):
    def test_every_shipped_config_loads(self):
        names = sorted(p.name for p in CONFIG_DIR.glob("*.json"))
        self.assertIn("undercoupled.json", names)
        for name in names:
            with self.subTest(config=name):
                load_config(CONFIG_DIR / name)

    def test_undercoupled_config_calibrates_800_counts(self):
        config = load_config(CONFIG_DIR / "undercoupled.json")
        detector = config.detector_model()
        counts = reference_counts(config.probe_field(), detector, config.probe.wavelength_m)
        self.assertAlmostEqual(counts[0] * config.cavity.t_all, 800.0, places=6)
        self.assertAlmostEqual(detector.dark_counts_per_bin, 0.3)

    def test_gap_scan_config_takes_kappa_from_law(self):
        config = load_config(CONFIG_DIR / "fig3.json")
        self.assertAlmostEqual(config.cavity_params().kappa, 0.0375)
        self.assertEqual(config.figure.kind, "fig3")

    def test_figure_configs_share_one_gap_law(self):
        spectra = load_config(CONFIG_DIR / "fig2.json")
        scan = load_config(CONFIG_DIR / "fig3.json")
        self.assertEqual(spectra.gap_law, scan.gap_law)
        for case in spectra.figure.cases:
            with self.subTest(case=case.label):
                self.assertEqual(spectra.params_at(case.gap_nm), scan.params_at(case.gap_nm))
        self.assertAlmostEqual(spectra.params_at(500.0).kappa, 1.835e-3, delta=5e-6)
        self.assertAlmostEqual(spectra.params_at(100.0).kappa, 2.051e-2, delta=5e-5)

    def test_example_configs_give_width_ratio_three(self):
        under = load_config(CONFIG_DIR / "undercoupled.json").cavity_params()
        over = load_config(CONFIG_DIR / "overcoupled.json").cavity_params()
        self.assertAlmostEqual(linewidth_hz(over) / linewidth_hz(under), 3.0, delta=0.3)


class ValidationTests(unittest.TestCase):
    def test_unknown_keys_are_rejected(self):
        with self.assertRaises(ValidationError):
            config_from_dict(_minimal(colour="blue"))

    def test_out_of_range_kappa(self):
        data = _minimal()
        data["cavity"]["kappa"] = 2.0
        with self.assertRaises(ValidationError):
            config_from_dict(data)

    def test_kappa_is_required_without_gap_law(self):
        data = _minimal()
        del data["cavity"]["kappa"]
        with self.assertRaises(ValidationError):
            config_from_dict(data)

    def test_gap_law_can_select_kappa(self):
        data = _minimal(gap_law={"kappa_0": 0.0375, "decay_len_nm": 165.7, "gap_nm": 165.7})
        del data["cavity"]["kappa"]
        config = config_from_dict(data)
        self.assertAlmostEqual(config.cavity_params().kappa, 0.0375 / math.e)

    def test_efficiency_sources_are_exclusive(self):
        with self.assertRaises(ValidationError):
            config_from_dict(_minimal(detector={"efficiency": 0.5, "calibrate_counts_per_bin": 800.0}))

    def test_fig3_needs_gap_law(self):
        with self.assertRaises(ValidationError):
            config_from_dict(_minimal(figure={"kind": "fig3", "distances_nm": [0.0, 100.0]}))

    def test_fig2_needs_cases(self):
        with self.assertRaises(ValidationError):
            config_from_dict(_minimal(figure={"kind": "fig2"}))

    def test_fig2_needs_gap_law_and_rejects_case_kappa(self):
        case = {"label": "d500nm", "gap_nm": 500.0, "sweep": {"span_hz": 60e6, "points": 11}}
        with self.assertRaises(ValidationError):
            config_from_dict(_minimal(figure={"kind": "fig2", "cases": [case]}))
        law = {"kappa_0": 0.0375, "decay_len_nm": 165.7}
        with self.assertRaises(ValidationError):
            config_from_dict(_minimal(gap_law=law, figure={"kind": "fig2", "cases": [dict(case, kappa=2.9e-3)]}))
        config = config_from_dict(_minimal(gap_law=law, figure={"kind": "fig2", "cases": [case]}))
        self.assertAlmostEqual(config.params_at(0.0).kappa, 0.0375)

    def test_core_purity_window_must_be_positive(self):
        with self.assertRaises(ValidationError):
            config_from_dict(_minimal(tomography={"core_max_abs_hz": 0.0}))

    def test_unknown_simulation_mode(self):
        with self.assertRaises(ValidationError):
            config_from_dict(_minimal(simulation={"mode": "parallel"}))

    def test_inverted_purity_window(self):
        with self.assertRaises(ValidationError):
            config_from_dict(_minimal(tomography={"window_min_abs_hz": 5e6, "window_max_abs_hz": 1e6}))

    def test_malformed_json_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.json"
            path.write_text("{not json", encoding="utf-8")
            with self.assertRaises(ValueError):
                load_config(path)


class DomainConversionTests(unittest.TestCase):
    def test_fsr_defaults_to_sphere_geometry(self):
        data = _minimal()
        del data["cavity"]["fsr_hz"]
        params = config_from_dict(data).cavity_params()
        self.assertAlmostEqual(params.fsr_hz / 1.52e12, 1.0, delta=0.01)

    def test_sweep_grid(self):
        grid = config_from_dict(_minimal()).sweep.detunings()
        self.assertEqual(len(grid), 11)
        self.assertAlmostEqual(grid[0], -30e6)
        self.assertAlmostEqual(grid[-1], 30e6)

    def test_mle_config_uses_run_seed(self):
        config = config_from_dict(_minimal(seed=17, tomography={"population": 24}))
        mle = config.mle_config()
        self.assertEqual((mle.seed, mle.population, mle.scaling_factor), (17, 24, 1.5))

    def test_purity_window(self):
        config = config_from_dict(_minimal(tomography={"window_min_abs_hz": 20e6}))
        window = config.tomography.window()
        self.assertTrue(window.contains(-25e6))
        self.assertFalse(window.contains(1e6))

    def test_overrides_and_digest(self):
        config = config_from_dict(_minimal(seed=1))
        same = config_from_dict(json.loads(json.dumps(_minimal(seed=1))))
        self.assertEqual(config.digest(), same.digest())
        changed = config.with_overrides(seed=2, output_dir="elsewhere")
        self.assertEqual((changed.seed, changed.output_dir), (2, "elsewhere"))
        self.assertNotEqual(changed.digest(), config.digest())
        self.assertIs(config.with_overrides(), config)

    def test_output_directory_does_not_change_the_digest(self):
        config = config_from_dict(_minimal(seed=1))
        moved = config.with_overrides(output_dir="somewhere/else")
        self.assertEqual(moved.output_dir, "somewhere/else")
        self.assertEqual(moved.digest(), config.digest())


if __name__ == "__main__":
    unittest.main()
