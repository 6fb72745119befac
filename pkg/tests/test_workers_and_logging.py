import io
import logging
import os
import tempfile
import threading
import unittest
from contextlib import redirect_stdout
from pathlib import Path
from unittest.mock import patch

from fibersphere.system.logging_config import LOG_DIR_ENV, resolve_log_dir, setup_logging
from fibersphere.system.workers import MAX_WORKERS, WORKERS_ENV, default_workers, env_int, map_ordered


class MapOrderedTests(unittest.TestCase):
    def test_results_keep_input_order_on_a_pool(self):
        self.assertEqual(map_ordered(lambda v: v * v, range(20), workers=4), [v * v for v in range(20)])

    def test_single_worker_runs_inline(self):
        threads = map_ordered(lambda _: threading.get_ident(), range(3), workers=1)
        self.assertEqual(set(threads), {threading.get_ident()})

    def test_empty_input(self):
        self.assertEqual(map_ordered(str, [], workers=8), [])

    def test_worker_count_comes_from_environment(self):
        with patch.dict(os.environ, {WORKERS_ENV: "6"}):
            self.assertEqual(default_workers(), 6)
        with patch.dict(os.environ, {WORKERS_ENV: "100000"}):
            self.assertEqual(default_workers(), MAX_WORKERS)
        with patch.dict(os.environ, {WORKERS_ENV: "many"}):
            self.assertEqual(default_workers(), 1)
        with patch.dict(os.environ, {WORKERS_ENV: ""}):
            self.assertEqual(default_workers(), 1)

    def test_env_int_clamps_and_falls_back(self):
        key = "FIBERSPHERE_TEST_LIMIT"
        with patch.dict(os.environ, {key: "1"}):
            self.assertEqual(env_int(key, 2001, 2), 2)
        with patch.dict(os.environ, {key: "5000"}):
            self.assertEqual(env_int(key, 2001, 2), 5000)
            self.assertEqual(env_int(key, 2001, 2, 4000), 4000)
        with patch.dict(os.environ, {key: "lots"}):
            self.assertEqual(env_int(key, 2001, 2), 2001)
        with patch.dict(os.environ, {}, clear=False):
            os.environ.pop(key, None)
            self.assertEqual(env_int(key, 7, 2), 7)


class LoggingSetupTests(unittest.TestCase):
    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.root = Path(self.temp_dir.name)

    def tearDown(self):
        for logger in (logging.getLogger("Tomography"), logging.getLogger()):
            for handler in logger.handlers[:]:
                logger.removeHandler(handler)
                handler.close()
        self.temp_dir.cleanup()

    def test_severity_files_and_separate_tomography_log(self):
        files = setup_logging(self.root, quiet=True)
        self.assertEqual(set(files), {"debug", "info", "warning", "error", "critical", "tomography"})

        logging.getLogger("Pipeline").warning("pipeline warning")
        logging.getLogger("Tomography").info("tomography detail")
        for handler in logging.getLogger().handlers + logging.getLogger("Tomography").handlers:
            handler.flush()

        self.assertIn("pipeline warning", files["warning"].read_text())
        self.assertNotIn("pipeline warning", files["error"].read_text())
        self.assertIn("tomography detail", files["tomography"].read_text())
        self.assertNotIn("tomography detail", files["debug"].read_text())
        self.assertFalse(logging.getLogger("Tomography").propagate)

    def test_repeated_setup_does_not_stack_tomography_handlers(self):
        setup_logging(self.root, quiet=True)
        setup_logging(self.root, quiet=True)
        self.assertEqual(len(logging.getLogger("Tomography").handlers), 1)

    def test_quiet_suppresses_the_banner(self):
        stdout = io.StringIO()
        with redirect_stdout(stdout):
            setup_logging(self.root, quiet=True)
        self.assertEqual(stdout.getvalue(), "")
        with redirect_stdout(stdout):
            setup_logging(self.root)
        self.assertIn("tomography.log", stdout.getvalue())

    def test_log_dir_falls_back_to_environment(self):
        with patch.dict(os.environ, {LOG_DIR_ENV: str(self.root / "env-logs")}):
            self.assertEqual(resolve_log_dir(), self.root / "env-logs")
        self.assertEqual(resolve_log_dir(self.root), self.root)


if __name__ == "__main__":
    unittest.main()
