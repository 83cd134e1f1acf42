"""Unit tests for configuration, logging and CSV output."""

import json
import logging
import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from src.processors.sweep import SweepRecord
from src.utils.config import CONFIG_ENV, load_config, section
from src.utils.csv_writer import SWEEP_COLUMNS, CsvWriter, read_records
from src.utils.logger import setup_logger


def record(**overrides):
    values = dict(method="spg-b", alpha=0.9, w=1.0, threat="fixed", theta=-250.0, k=float("nan"),
                  param=float("nan"), seed=7, runs=1, utility_pct=99.5, privacy_pct=40.0,
                  objective=-3.25, n_masked=2.0, n_flipped=3.0, noise_l1=3.0, wall_time=0.125)
    values.update(overrides)
    return SweepRecord(**values)


class TestConfig(unittest.TestCase):
    """Test config file resolution."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_default_config_has_sections(self):
        config = load_config()
        for name in ("dataset", "lrt", "threat", "ld", "spgb", "spgr", "baselines", "oracle", "sweep", "output"):
            self.assertIn(name, config)

    def test_explicit_path(self):
        path = self.dir / "c.json"
        path.write_text(json.dumps({"lrt": {"gamma": 0.01}}), encoding="utf-8")
        self.assertEqual(load_config(str(path))["lrt"]["gamma"], 0.01)

    def test_environment_override(self):
        path = self.dir / "env.json"
        path.write_text(json.dumps({"threat": {"theta": -5.0}}), encoding="utf-8")
        with patch.dict(os.environ, {CONFIG_ENV: str(path)}):
            self.assertEqual(load_config()["threat"]["theta"], -5.0)

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_config(str(self.dir / "missing.json"))

    def test_invalid_json(self):
        path = self.dir / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with self.assertRaises(ValueError):
            load_config(str(path))

    def test_section(self):
        config = {"spgb": {"alpha": 0.5}, "broken": 3}
        self.assertEqual(section(config, "spgb"), {"alpha": 0.5})
        self.assertEqual(section(config, "broken"), {})
        self.assertEqual(section(config, "absent"), {})


class TestLogger(unittest.TestCase):
    """Test logger setup."""

    def test_repeated_setup_does_not_stack_handlers(self):
        setup_logger("beacon_guard_test")
        logger = setup_logger("beacon_guard_test")
        self.assertEqual(len(logger.handlers), 1)

    def test_json_log_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            log_file = Path(tmp) / "logs" / "run.log"
            logger = setup_logger("beacon_guard_json", log_file=str(log_file), json_format=True)
            logger.info("sweep finished")
            for handler in logger.handlers:
                handler.flush()
            entry = json.loads(log_file.read_text(encoding="utf-8").splitlines()[0])
            self.assertEqual(entry["message"], "sweep finished")
            self.assertEqual(entry["levelname"], "INFO")
            for handler in list(logger.handlers):
                logger.removeHandler(handler)
                handler.close()

    def test_console_level(self):
        logger = setup_logger("beacon_guard_quiet", level=logging.WARNING)
        self.assertEqual(logger.handlers[0].level, logging.WARNING)


class TestCsvWriter(unittest.TestCase):
    """Test the sweep CSV layout."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_header_and_float_format(self):
        path = CsvWriter({}).write_records([record()], self.dir / "s.csv")
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        self.assertEqual(lines[0], ",".join(SWEEP_COLUMNS))
        self.assertIn("0.900000", lines[1])
        self.assertIn("-3.250000", lines[1])
        self.assertNotIn("wall_time", lines[0])

    def test_timing_column(self):
        writer = CsvWriter({"output": {"include_timing": True}})
        path = writer.write_records([record()], self.dir / "t.csv")
        header = Path(path).read_text(encoding="utf-8").splitlines()[0]
        self.assertTrue(header.endswith(",wall_time"))

    def test_default_output_path(self):
        writer = CsvWriter({"output": {"sweep_csv": str(self.dir / "out" / "sweep.csv")}})
        path = writer.write_records([record(), record(method="sf")])
        self.assertTrue(Path(path).exists())
        rows = read_records(path)
        self.assertEqual([r["method"] for r in rows], ["spg-b", "sf"])

    def test_read_missing(self):
        with self.assertRaises(FileNotFoundError):
            read_records(self.dir / "none.csv")


if __name__ == '__main__':
    unittest.main()
