import unittest
from unittest.mock import patch

import flask_app.app as app_module

CAVITY = {
    "gamma": 1e-6,
    "rho_l": 1.83e-5,
    "kappa": 2.9124e-3,
    "fsr_hz": 1.52e12,
    "t_all": 0.3,
    "theta_offset_rad": 0.9,
}


class HealthApiTests(unittest.TestCase):
    def setUp(self):
        self.client = app_module.app.test_client()

    def test_health_reports_service_and_limits(self):
        response = self.client.get("/api/health")
        self.assertEqual(response.status_code, 200)
        body = response.get_json()
        self.assertEqual(body["status"], "ok")
        self.assertEqual(body["service"], "fibersphere")
        self.assertEqual(body["max_points"], app_module.MAX_POINTS)


class TransmissionApiTests(unittest.TestCase):
    def setUp(self):
        self.client = app_module.app.test_client()

    def test_undercoupled_resonance(self):
        response = self.client.post(
            "/api/transmission",
            json={"cavity": CAVITY, "detunings_hz": [-1e8, 0.0, 1e8]},
        )
        self.assertEqual(response.status_code, 200)
        body = response.get_json()
        self.assertEqual(body["regime"], "undercoupled")
        self.assertAlmostEqual(body["T_min"], 0.399, delta=0.005)
        self.assertAlmostEqual(body["points"][1]["transmittance"], body["T_min"], places=9)
        self.assertAlmostEqual(body["fwhm_hz"] / 11.15e6, 1.0, delta=0.01)
        self.assertGreater(body["points"][0]["transmittance"], 0.9)

    def test_sweep_section_builds_the_grid(self):
        response = self.client.post(
            "/api/transmission",
            json={"cavity": CAVITY, "sweep": {"span_hz": 60e6, "points": 7}},
        )
        self.assertEqual(response.status_code, 200)
        self.assertEqual(len(response.get_json()["points"]), 7)

    def test_missing_kappa_is_rejected(self):
        cavity = {k: v for k, v in CAVITY.items() if k != "kappa"}
        response = self.client.post("/api/transmission", json={"cavity": cavity, "detunings_hz": [0.0]})
        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.get_json()["status"], "error")

    def test_missing_grid_is_rejected(self):
        response = self.client.post("/api/transmission", json={"cavity": CAVITY})
        self.assertEqual(response.status_code, 400)

    def test_unknown_field_lists_validation_details(self):
        response = self.client.post("/api/transmission", json={"cavity": CAVITY, "detunings_hz": [0.0], "colour": 1})
        self.assertEqual(response.status_code, 400)
        self.assertTrue(response.get_json()["details"])

    def test_non_json_body_is_rejected(self):
        response = self.client.post("/api/transmission", data="kappa=1", content_type="text/plain")
        self.assertEqual(response.status_code, 400)

    def test_nan_detuning_reports_the_point(self):
        response = self.client.post(
            "/api/transmission",
            data='{"cavity": %s, "detunings_hz": [0.0, NaN]}' % str(CAVITY).replace("'", '"'),
            content_type="application/json",
        )
        self.assertIn(response.status_code, (400, 422))
        self.assertEqual(response.get_json()["status"], "error")


class SimulateApiTests(unittest.TestCase):
    def setUp(self):
        self.client = app_module.app.test_client()

    def _config(self, points):
        return {"seed": 2, "cavity": CAVITY, "sweep": {"span_hz": 60e6, "points": points}}

    def test_small_sweep_returns_counts(self):
        response = self.client.post("/api/simulate", json=self._config(5))
        self.assertEqual(response.status_code, 200)
        body = response.get_json()
        self.assertEqual(body["columns"], ["x", "y", "p", "m", "r", "l"])
        self.assertEqual(len(body["counts"]), 5)
        self.assertTrue(all(len(row) == 6 for row in body["counts"]))
        self.assertEqual(body["record"]["seed"], 2)

    def test_same_seed_gives_same_counts(self):
        first = self.client.post("/api/simulate", json=self._config(5)).get_json()
        second = self.client.post("/api/simulate", json=self._config(5)).get_json()
        self.assertEqual(first["counts"], second["counts"])

    def test_too_many_points(self):
        with patch.object(app_module, "MAX_POINTS", 4):
            response = self.client.post("/api/simulate", json=self._config(5))
        self.assertEqual(response.status_code, 400)

    def test_config_without_sweep(self):
        response = self.client.post("/api/simulate", json={"cavity": CAVITY})
        self.assertEqual(response.status_code, 400)


class TomographyApiTests(unittest.TestCase):
    def setUp(self):
        self.client = app_module.app.test_client()

    def test_pure_horizontal_counts(self):
        response = self.client.post(
            "/api/tomography",
            json={"counts": [1000, 0, 500, 500, 500, 500], "tomography": {"population": 16, "max_generations": 200}},
        )
        self.assertEqual(response.status_code, 200)
        body = response.get_json()
        self.assertGreater(body["purity"], 0.98)
        self.assertGreater(body["bloch"][0], 0.98)

    def test_wrong_number_of_counts(self):
        response = self.client.post("/api/tomography", json={"counts": [1, 2, 3]})
        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.get_json()["status"], "error")

    def test_negative_counts(self):
        response = self.client.post("/api/tomography", json={"counts": [-1, 0, 0, 0, 0, 0]})
        self.assertEqual(response.status_code, 400)


if __name__ == "__main__":
    unittest.main()
