"""
Test suite per la configurazione degli esperimenti
Copre: config loader (precedenze, schema, vincoli semantici), audit logger, report CSV.
"""

import json
import os
import shutil
import sys
import tempfile
import unittest
from pathlib import Path

import pandas as pd

# Aggiungi la root del progetto al path
PROJECT_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from core.experiments.audit_logger import RunAuditLogger
from core.experiments.config_loader import (
    DEFAULTS_PATH, SCHEMA_PATH, ConfigValidationError, ExperimentConfig, ExperimentConfigLoader,
    load_experiment_config,
)
from core.experiments.reporting import (
    BOUND_COLUMNS, DISTANCE_COLUMNS, RATE_COLUMNS, ReportWriter, read_rate_input,
)


# ======================================================================
# CONFIG LOADER
# ======================================================================

class TestExperimentConfigLoader(unittest.TestCase):
    """Precedenze flag > file > default, schema e vincoli semantici."""

    def setUp(self):
        self._tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self._tmpdir, ignore_errors=True)

    def _write(self, name: str, doc) -> str:
        path = os.path.join(self._tmpdir, name)
        with open(path, "w", encoding="utf-8") as f:
            if isinstance(doc, str):
                f.write(doc)
            else:
                json.dump(doc, f)
        return path

    def test_experiment_defaults(self):
        cfg = load_experiment_config("weighted_qv")
        self.assertEqual(cfg.experiment, "weighted_qv")
        self.assertEqual(cfg.hurst, 0.4)
        self.assertEqual(cfg.n_ladder, [64, 128, 256, 512, 1024])

    def test_file_then_overrides(self):
        path = self._write("exp.json", {"experiment": "quadratic_fbm", "hurst": 0.7, "replicas": 500})
        cfg = load_experiment_config(None, path, {"replicas": 800, "seed": None})
        self.assertEqual(cfg.experiment, "quadratic_fbm")
        self.assertEqual(cfg.hurst, 0.7)
        self.assertEqual(cfg.replicas, 800)
        self.assertIsInstance(cfg.seed, int)

    def test_cli_experiment_wins_over_file(self):
        path = self._write("exp.json", {"experiment": "quadratic_fbm", "hurst": 0.5})
        cfg = load_experiment_config("quadratic_bm", path)
        self.assertEqual(cfg.experiment, "quadratic_bm")

    def test_hurst_range_per_experiment(self):
        with self.assertRaises(ConfigValidationError) as ctx:
            load_experiment_config("weighted_qv", overrides={"hurst": 0.7})
        self.assertEqual(ctx.exception.field, "hurst")
        self.assertIn("1/4 < H ≤ 1/2", ctx.exception.reason)

    def test_brownian_only_experiment(self):
        with self.assertRaises(ConfigValidationError):
            load_experiment_config("quadratic_bm", overrides={"hurst": 0.6})

    def test_rough_only_experiment(self):
        with self.assertRaises(ConfigValidationError):
            load_experiment_config("lemma61", overrides={"hurst": 0.5})

    def test_ladder_must_increase(self):
        with self.assertRaises(ConfigValidationError) as ctx:
            load_experiment_config("quadratic_bm", overrides={"n_ladder": [16, 8]})
        self.assertEqual(ctx.exception.field, "n_ladder")

    def test_ito_grid_too_coarse(self):
        with self.assertRaises(ConfigValidationError) as ctx:
            load_experiment_config("quadratic_bm", overrides={"n_ladder": [8, 16], "grid_size": 64})
        self.assertEqual(ctx.exception.field, "grid_size")

    def test_schema_field_path(self):
        with self.assertRaises(ConfigValidationError) as ctx:
            load_experiment_config("constants", overrides={"replicas": 10})
        self.assertEqual(ctx.exception.field, "replicas")

    def test_alpha_one_accepted(self):
        cfg = load_experiment_config("bounds_prop36", overrides={"alpha": 1.0})
        self.assertEqual(cfg.alpha, 1.0)

    def test_alpha_above_one(self):
        with self.assertRaises(ConfigValidationError) as ctx:
            load_experiment_config("bounds_prop36", overrides={"alpha": 1.2})
        self.assertEqual(ctx.exception.field, "alpha")

    def test_unknown_field(self):
        path = self._write("exp.json", {"experiment": "constants", "colour": "blue"})
        with self.assertRaises(ConfigValidationError):
            load_experiment_config(None, path)

    def test_rate_fit_needs_input(self):
        with self.assertRaises(ConfigValidationError) as ctx:
            load_experiment_config("rate_fit")
        self.assertEqual(ctx.exception.field, "input_csv")

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_experiment_config("constants", os.path.join(self._tmpdir, "nope.json"))

    def test_invalid_json(self):
        path = self._write("broken.json", "{ not json")
        with self.assertRaises(ConfigValidationError) as ctx:
            load_experiment_config("constants", path)
        self.assertIn("JSON non valido", ctx.exception.reason)

    def test_effective_grid(self):
        cfg = ExperimentConfig(experiment="quadratic_bm")
        self.assertEqual(cfg.effective_grid(16), 128)
        cfg.grid_size = 1000
        self.assertEqual(cfg.effective_grid(16), 1000)

    def test_round_trip_dict(self):
        cfg = load_experiment_config("lemma61")
        self.assertEqual(ExperimentConfig.from_dict(cfg.to_dict()), cfg)

    def test_reload_keeps_state_on_error(self):
        schema = self._write("schema.json", SCHEMA_PATH.read_text(encoding="utf-8"))
        defaults = self._write("defaults.json", DEFAULTS_PATH.read_text(encoding="utf-8"))
        loader = ExperimentConfigLoader(schema, defaults)
        self._write("defaults.json", "{ broken")
        with self.assertRaises(ConfigValidationError):
            loader.reload()
        self.assertEqual(loader.build("constants").experiment, "constants")


# ======================================================================
# AUDIT LOGGER
# ======================================================================

class TestRunAuditLogger(unittest.TestCase):

    def setUp(self):
        self._tmpdir = tempfile.mkdtemp()
        cfg = load_experiment_config("constants", overrides={"output_path": self._tmpdir})
        self.audit = RunAuditLogger(cfg)

    def tearDown(self):
        self.audit.flush()
        shutil.rmtree(self._tmpdir, ignore_errors=True)

    def test_events_round_trip(self):
        self.audit.log_run_start()
        self.audit.log_acceptance("sigma_half", True)
        self.audit.log_truncated("constants")
        events = self.audit.read_events()
        self.assertEqual([e["type"] for e in events], ["run_start", "acceptance", "truncated"])
        self.assertTrue(events[1]["data"]["pass"])
        self.assertTrue(self.audit.truncated)

    def test_run_start_discards_previous_events(self):
        stale = Path(self._tmpdir) / RunAuditLogger.EVENTS_FILE
        stale.write_text('{"type": "run_end", "data": {}}\n', encoding="utf-8")
        self.audit.log_run_start()
        events = self.audit.read_events()
        self.assertEqual([e["type"] for e in events], ["run_start"])

    def test_manifest(self):
        self.audit.log_error("guasto", RuntimeError("boom"))
        path = self.audit.write_manifest(["distances.csv"], {"c_half": True}, 1.2345)
        manifest = json.loads(Path(path).read_text(encoding="utf-8"))
        self.assertEqual(manifest["experiment"], "constants")
        self.assertEqual(manifest["config"]["seed"], self.audit.cfg.seed)
        self.assertEqual(manifest["acceptance"], {"c_half": True})
        self.assertEqual(manifest["rng"]["bit_generator"], "Philox4x64-10")
        self.assertIn("numpy", manifest["versions"])
        events = self.audit.read_events()
        self.assertEqual(events[-1]["data"]["type"], "RuntimeError")


# ======================================================================
# REPORT CSV
# ======================================================================

class TestReportWriter(unittest.TestCase):

    def setUp(self):
        self._tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self._tmpdir, ignore_errors=True)

    def test_empty_files_have_headers(self):
        files = ReportWriter(self._tmpdir).write()
        self.assertEqual(files, ["distances.csv", "bounds.csv", "rate_fit.csv"])
        with open(os.path.join(self._tmpdir, "bounds.csv"), encoding="utf-8") as f:
            self.assertEqual(f.read().strip(), ",".join(BOUND_COLUMNS))

    def test_rows_and_extra_table(self):
        writer = ReportWriter(self._tmpdir)
        writer.add_distance("wasserstein_F", 8, 0.5, "quadratic_bm", 0.123456789012345, None)
        writer.add_rate("quadratic_bm", "wasserstein_F", -0.17, 0.1, 0.99, -1 / 6, True)
        writer.add_table("constants.csv", [{"hurst": 0.5, "c_H": 0.7}], ["hurst", "c_H"])
        files = writer.write()
        self.assertIn("constants.csv", files)
        frame = pd.read_csv(os.path.join(self._tmpdir, "distances.csv"))
        self.assertEqual(list(frame.columns), DISTANCE_COLUMNS)
        self.assertAlmostEqual(frame["estimate"][0], 0.123456789012, places=12)
        self.assertTrue(pd.isna(frame["std_error"][0]))
        rates = pd.read_csv(os.path.join(self._tmpdir, "rate_fit.csv"))
        self.assertEqual(list(rates.columns), RATE_COLUMNS)

    def test_read_distances_and_bounds(self):
        writer = ReportWriter(self._tmpdir)
        writer.add_distance("kolmogorov_F", 16, 0.5, "quadratic_bm", 0.05)
        writer.add_bound("lemma61", 32, 0.3, "sum_beta_q1", 2.5)
        writer.add_bound("lemma61", 32, 0.3, "note", None)
        writer.write()
        distances = read_rate_input(os.path.join(self._tmpdir, "distances.csv"))
        self.assertEqual(list(distances["metric"]), ["kolmogorov_F"])
        bounds = read_rate_input(os.path.join(self._tmpdir, "bounds.csv"))
        self.assertEqual(list(bounds["metric"]), ["sum_beta_q1"])

    def test_unknown_csv_schema(self):
        path = os.path.join(self._tmpdir, "other.csv")
        pd.DataFrame({"a": [1]}).to_csv(path, index=False)
        with self.assertRaises(ValueError):
            read_rate_input(path)


if __name__ == "__main__":
    unittest.main()
