"""Test run configuration loading."""

import json
import tempfile
import unittest
from pathlib import Path

from wifisense.config import MAX_SEED, RunConfig, child_seeds, load_run_config
from wifisense.exceptions import ConfigurationError


class TestRunConfig(unittest.TestCase):
    """Test loading and overriding run configurations."""

    def setUp(self) -> None:
        """Set up a temporary directory."""
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)

    def tearDown(self) -> None:
        """Remove the temporary directory."""
        self.directory.cleanup()

    def _write(self, data: object) -> Path:
        path = self.root / "config.json"
        path.write_text(json.dumps(data))
        return path

    def test_defaults(self) -> None:
        """Test the defaults use the sensing numerology."""
        config = load_run_config()
        self.assertEqual(RunConfig(), config)
        self.assertEqual(0, config.seed)
        self.assertEqual(500.0, config.waveform.sample_rate_hz)
        self.assertEqual(0.5, config.caf.batch_len_s)
        self.assertEqual((0.4, 0.7), (config.monitor.t1, config.monitor.t2))

    def test_partial(self) -> None:
        """Test missing sections and fields keep their defaults."""
        path = self._write({"seed": 9, "monitor": {"t1": 0.3}, "demo": {"n_per_class": 10}})
        config = load_run_config(path)
        self.assertEqual(9, config.seed)
        self.assertEqual(0.3, config.monitor.t1)
        self.assertEqual(0.7, config.monitor.t2)
        self.assertEqual(10, config.demo.n_per_class)
        self.assertEqual(RunConfig().caf, config.caf)

    def test_seed_override(self) -> None:
        """Test the command line seed wins over the file."""
        path = self._write({"seed": 9})
        self.assertEqual(4, load_run_config(path, seed=4).seed)
        self.assertEqual(MAX_SEED, load_run_config(seed=MAX_SEED).seed)

    def test_invalid(self) -> None:
        """Test unreadable, malformed, and inconsistent files."""
        for data in [
            {"monitor": {"t1": 0.9, "t2": 0.5}},
            {"unknown": 1},
            {"seed": -1},
            {"caf": {"batch_len_s": 0.5, "batch_hop_s": 2.0}},
        ]:
            with self.subTest(data=data), self.assertRaises(ConfigurationError):
                load_run_config(self._write(data))
        broken = self.root / "broken.json"
        broken.write_text("{")
        with self.assertRaises(ConfigurationError):
            load_run_config(broken)
        with self.assertRaises(ConfigurationError):
            load_run_config(self.root / "missing.json")

    def test_round_trip(self) -> None:
        """Test a dumped configuration loads back unchanged."""
        config = RunConfig(seed=3)
        path = self.root / "dumped.json"
        path.write_text(config.model_dump_json())
        self.assertEqual(config, load_run_config(path))


class TestSeeds(unittest.TestCase):
    """Test seed derivation."""

    def test_child_seeds(self) -> None:
        """Test children are reproducible, distinct, and depend on the parent."""
        seeds = child_seeds(7, 5)
        self.assertEqual(seeds, child_seeds(7, 5))
        self.assertEqual(5, len(set(seeds)))
        self.assertNotEqual(seeds, child_seeds(8, 5))
        self.assertEqual(seeds[:2], child_seeds(7, 2))
