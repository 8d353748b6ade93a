"""Test the on-disk formats."""

import json
import tempfile
import unittest
from pathlib import Path

import numpy as np

from wifisense.channel import GestureLabel, Scene, static_track
from wifisense.doppler import DopplerSpectrogram
from wifisense.exceptions import DataFormatError
from wifisense.formats import (
    atomic_output,
    read_iq,
    read_model,
    read_scene,
    read_spectrogram_csv,
    read_window_csv,
    read_windows,
    sidecar_path,
    write_iq,
    write_json,
    write_json_lines,
    write_pgm,
    write_scene,
    write_spectrogram_csv,
    write_table_csv,
    write_window_csv,
    write_windows,
)
from wifisense.recognition import GestureWindow
from wifisense.waveform import IqTrace


class TestFormats(unittest.TestCase):
    """Test reading and writing files."""

    def setUp(self) -> None:
        """Set up a temporary directory."""
        self.directory = tempfile.TemporaryDirectory()
        self.root = Path(self.directory.name)
        rng = np.random.default_rng(0)
        self.trace = IqTrace(
            samples=rng.standard_normal(100) + 1j * rng.standard_normal(100),
            sample_rate_hz=500.0,
            carrier_hz=2.4e9,
            t0_s=1.5,
        )
        self.spec = DopplerSpectrogram(
            magnitudes=rng.random((4, 5)),
            batch_times_s=[0.25, 0.5, 0.75, 1.0],
            doppler_axis_hz=[-4.0, -2.0, 0.0, 2.0, 4.0],
            resolution_hz=2.0,
        )

    def tearDown(self) -> None:
        """Remove the temporary directory."""
        self.directory.cleanup()

    def test_iq(self) -> None:
        """Test a trace survives the float32 file and its sidecar."""
        path = self.root / "surv.iq"
        write_iq(path, self.trace)
        self.assertEqual(800, path.stat().st_size)
        lines = sidecar_path(path).read_text().splitlines()
        self.assertIn("sample_rate_hz=500.0", lines)
        self.assertIn("n_samples=100", lines)
        trace = read_iq(path)
        np.testing.assert_allclose(self.trace.samples, trace.samples, rtol=1e-6, atol=1e-6)
        self.assertEqual(500.0, trace.sample_rate_hz)
        self.assertEqual(2.4e9, trace.carrier_hz)
        self.assertEqual(1.5, trace.t0_s)

    def test_iq_errors(self) -> None:
        """Test missing, truncated, and malformed sidecars."""
        path = self.root / "ref.iq"
        write_iq(path, self.trace)
        meta = sidecar_path(path)
        original = meta.read_text()
        for text in [
            original.replace("n_samples=100", "n_samples=99"),
            original + "unknown=1\n",
            original + "no separator\n",
            original.replace("sample_rate_hz=500.0", "sample_rate_hz=fast"),
        ]:
            with self.subTest(text=text), self.assertRaises(DataFormatError):
                meta.write_text(text)
                read_iq(path)
        meta.unlink()
        with self.assertRaises(DataFormatError):
            read_iq(path)

    def test_spectrogram_csv(self) -> None:
        """Test a spectrogram survives its CSV."""
        path = self.root / "spec.csv"
        write_spectrogram_csv(path, self.spec)
        header = path.read_text().splitlines()[0]
        self.assertEqual("time_s,-4.0,-2.0,0.0,2.0,4.0", header)
        spec = read_spectrogram_csv(path)
        np.testing.assert_allclose(self.spec.magnitudes, spec.magnitudes, rtol=1e-11)
        np.testing.assert_array_equal(self.spec.batch_times_s, spec.batch_times_s)
        np.testing.assert_array_equal(self.spec.doppler_axis_hz, spec.doppler_axis_hz)
        self.assertEqual(2.0, spec.resolution_hz)
        self.assertEqual(0.5, read_spectrogram_csv(path, resolution_hz=0.5).resolution_hz)

    def test_spectrogram_errors(self) -> None:
        """Test files that are not spectrograms."""
        for text in ["time_s,a,b\n0.1,1,2\n", "time_s,-1.0,1.0\n0.1,1,-2\n", ""]:
            with self.subTest(text=text), self.assertRaises(DataFormatError):
                path = self.root / "bad.csv"
                path.write_text(text)
                read_spectrogram_csv(path)
        with self.assertRaises(DataFormatError):
            read_spectrogram_csv(self.root / "missing.csv")

    def test_windows(self) -> None:
        """Test labeled windows survive their CSV files exactly."""
        rng = np.random.default_rng(4)
        windows = [
            GestureWindow(
                start_s=1.0 + i, end_s=2.5 + i, spec_slice=rng.random((6, 4)), label=label
            )
            for i, label in enumerate([GestureLabel.fall, GestureLabel.pick_up])
        ]
        labels = write_windows(self.root / "windows", windows)
        lines = labels.read_text().splitlines()
        self.assertEqual(["window,label", "window_0000.csv,g4"], lines[:2])
        restored = read_windows(self.root / "windows", labels)
        for window, other in zip(windows, restored, strict=True):
            np.testing.assert_array_equal(window.spec_slice, other.spec_slice)
            self.assertEqual(window.label, other.label)
            self.assertAlmostEqual(window.start_s, other.start_s)
            self.assertAlmostEqual(window.end_s, other.end_s)

    def test_window_errors(self) -> None:
        """Test unlabeled, short, missing, and mislabeled windows."""
        window = GestureWindow(start_s=0.0, end_s=1.0, spec_slice=np.ones((3, 2)))
        with self.assertRaises(DataFormatError):
            write_windows(self.root / "unlabeled", [window])
        short = GestureWindow(start_s=0.0, end_s=1.0, spec_slice=np.ones((1, 2)))
        with self.assertRaises(DataFormatError):
            write_window_csv(self.root / "short.csv", short)
        labels = self.root / "labels.csv"
        for text in ["window,label\nmissing.csv,g1\n", "window,label\n", "name\nw.csv\n"]:
            with self.subTest(text=text), self.assertRaises(DataFormatError):
                labels.write_text(text)
                read_windows(self.root, labels)
        write_window_csv(self.root / "w.csv", window)
        self.assertEqual((3, 2), read_window_csv(self.root / "w.csv").spec_slice.shape)
        labels.write_text("window,label\nw.csv,g7\n")
        with self.assertRaises(DataFormatError):
            read_windows(self.root, labels)

    def test_scene(self) -> None:
        """Test a scene with a scatterer survives its JSON."""
        scene = Scene(
            tx_pos=(0, 0, 1),
            ref_rx_pos=(0, 1, 1),
            surv_rx_pos=[(4, 0, 1)],
            scatterers=[static_track((2, 2, 1), (0, 5), reflectivity=0.5)],
            noise_power=0.01,
        )
        path = self.root / "scene.json"
        write_scene(path, scene)
        data = json.loads(path.read_text())
        keyframes = data["scatterers"][0]["keyframes"]
        self.assertEqual([[0.0, 2.0, 2.0, 1.0], [5.0, 2.0, 2.0, 1.0]], keyframes)
        restored = read_scene(path)
        np.testing.assert_array_equal(
            scene.scatterers[0].keyframes, restored.scatterers[0].keyframes
        )
        self.assertEqual(0.01, restored.noise_power)

    def test_model_errors(self) -> None:
        """Test invalid JSON and invalid models."""
        path = self.root / "scene.json"
        for text in ["{", json.dumps({"tx_pos": [0, 0, 0]})]:
            with self.subTest(text=text), self.assertRaises(DataFormatError):
                path.write_text(text)
                read_model(path, Scene)

    def test_json(self) -> None:
        """Test JSON output is sorted and newline-terminated."""
        path = self.root / "out.json"
        write_json(path, {"b": 1, "a": [1, 2]})
        text = path.read_text()
        self.assertTrue(text.endswith("}\n"))
        self.assertLess(text.index('"a"'), text.index('"b"'))
        lines_path = self.root / "out.jsonl"
        write_json_lines(lines_path, [{"x": 1}, {"x": 2}])
        self.assertEqual(['{"x": 1}', '{"x": 2}'], lines_path.read_text().splitlines())

    def test_table(self) -> None:
        """Test aligned columns with an index."""
        path = self.root / "table.csv"
        write_table_csv(path, {"t": [0.0, 0.5], "value": [1, 2]}, index="t")
        lines = path.read_text().splitlines()
        self.assertEqual("t,value", lines[0])
        self.assertEqual(["1", "2"], [line.split(",")[1] for line in lines[1:]])

    def test_pgm(self) -> None:
        """Test the image header, orientation, and scale."""
        magnitudes = np.zeros((3, 5))
        magnitudes[0, 4] = 100.0
        magnitudes[2, 0] = 1.0
        spec = self.spec.model_copy(
            update={"magnitudes": magnitudes, "batch_times_s": np.array([0.25, 0.5, 0.75])}
        )
        path = self.root / "spec.pgm"
        write_pgm(path, spec)
        data = path.read_bytes()
        header = b"P5\n3 5\n255\n"
        self.assertTrue(data.startswith(header))
        pixels = np.frombuffer(data[len(header) :], dtype=np.uint8).reshape(5, 3)
        self.assertEqual(255, pixels[0, 0])
        self.assertEqual(128, pixels[4, 2])
        self.assertEqual(0, pixels[2, 1])

    def test_atomic(self) -> None:
        """Test a failed write leaves nothing behind."""
        path = self.root / "partial.txt"
        with self.assertRaises(RuntimeError), atomic_output(path) as temporary:
            temporary.write_text("half")
            raise RuntimeError
        self.assertEqual([], list(self.root.iterdir()))
