"""Test the simulation and inference pipelines."""

import unittest

import numpy as np
import pytest

from wifisense.api import (
    Detection,
    SensingLayout,
    classify_spectrogram,
    evaluate_classifiers,
    gesture_window_from_clip,
    simulate_gesture_clip,
    simulate_respiration,
    simulate_session,
    smooth_detections,
    spectrograms,
    synthesize_gesture_dataset,
    train_gesture_model,
)
from wifisense.channel import GestureLabel
from wifisense.config import DemoConfig, RunConfig
from wifisense.exceptions import ParameterError
from wifisense.monitor import default_transition_model
from wifisense.waveform import WaveformConfig

WAVEFORM = WaveformConfig.sensing()


def _small_config(n_per_class: int = 6, seed: int = 0) -> RunConfig:
    return RunConfig(seed=seed, demo=DemoConfig(n_per_class=n_per_class))


def _detection(label: GestureLabel, start_s: float, margin: float = 0.9) -> Detection:
    residuals = dict.fromkeys(GestureLabel, 1.0)
    residuals[label] = 1.0 - margin
    return Detection(
        start_s=start_s, end_s=start_s + 2.0, label=label, residuals=residuals, feature_norm=1.0
    )


class TestLayout(unittest.TestCase):
    """Test the room layout."""

    def test_scene(self) -> None:
        """Test the noise level follows the requested SNR."""
        layout = SensingLayout()
        recording = simulate_respiration(layout, WAVEFORM, duration_s=1.0)
        self.assertEqual(2, len(recording.surv))
        quiet = layout.scene([], seed=1)
        self.assertEqual(0.0, quiet.noise_power)
        with self.assertRaises(ParameterError):
            layout.scene([], snr_db=10.0)

    def test_axes(self) -> None:
        """Test the gesture axis is a range gradient and the chest axis a unit vector."""
        layout = SensingLayout()
        norm = float(np.linalg.norm(layout.gesture_axis()))
        self.assertGreater(norm, 0.0)
        self.assertLessEqual(norm, 2.0)
        self.assertAlmostEqual(1.0, float(np.linalg.norm(layout.chest_axis())))


class TestGestures(unittest.TestCase):
    """Test gesture simulation and recognition."""

    def test_doppler_sign(self) -> None:
        """Test approaching and receding gestures land on opposite Doppler sides."""
        for label, sign in [(GestureLabel.stand_up, 1.0), (GestureLabel.fall, -1.0)]:
            with self.subTest(label=label):
                clip = simulate_gesture_clip(SensingLayout(), WAVEFORM, label, seed=4)
                self.assertEqual(label, clip.label)
                self.assertLess(clip.start_s, clip.end_s)
                spec = spectrograms(clip)[0]
                axis = spec.doppler_axis_hz
                positive = spec.magnitudes[:, axis > 2.0].sum()
                negative = spec.magnitudes[:, axis < -2.0].sum()
                self.assertGreater(sign * (positive - negative), 0.0)

    def test_window(self) -> None:
        """Test a clip yields a labeled window stacked over both receivers."""
        clip = simulate_gesture_clip(SensingLayout(), WAVEFORM, GestureLabel.pick_up, seed=2)
        window = gesture_window_from_clip(clip)
        self.assertEqual(GestureLabel.pick_up, window.label)
        self.assertEqual((32, 82), window.spec_slice.shape)
        self.assertLess(window.start_s, clip.end_s)
        self.assertGreater(window.end_s, clip.start_s)

    def test_small_evaluation(self) -> None:
        """Test a small stratified evaluation reports consistent counts."""
        windows = synthesize_gesture_dataset(_small_config(6), progress=False)
        self.assertEqual(36, len(windows))
        self.assertEqual(
            {label: 6 for label in GestureLabel},
            {label: sum(w.label == label for w in windows) for label in GestureLabel},
        )
        model, report = evaluate_classifiers(windows, holdout_fraction=1 / 3, seed=1)
        self.assertEqual(24, report.n_train)
        self.assertEqual(12, report.n_test)
        self.assertEqual(12, int(np.asarray(report.confusion.counts).sum()))
        self.assertEqual(24, model.dictionary.n_atoms)
        self.assertTrue(0.0 <= report.knn_accuracy <= 1.0)

    def test_unlabeled(self) -> None:
        """Test training needs labels."""
        windows = synthesize_gesture_dataset(_small_config(4), progress=False)
        windows[3] = windows[3].with_label(None)
        with self.assertRaises(ParameterError):
            train_gesture_model(windows)

    def test_classify_requires_spectrograms(self) -> None:
        """Test classification needs at least one receiver."""
        model = train_gesture_model(synthesize_gesture_dataset(_small_config(4), progress=False))
        with self.assertRaises(ParameterError):
            classify_spectrogram(model, [])

    @pytest.mark.slow
    def test_six_class_accuracy(self) -> None:
        """Test 50 clips per class at 10 dB SNR with a 20% holdout, SRC against k-NN."""
        config = RunConfig()
        windows = synthesize_gesture_dataset(config, progress=False)
        self.assertEqual(300, len(windows))
        _, report = evaluate_classifiers(
            windows, config.recognition, holdout_fraction=0.2, seed=config.seed
        )
        self.assertEqual(60, report.n_test)
        self.assertEqual((6, 6), np.asarray(report.confusion.counts).shape)
        self.assertGreaterEqual(report.src_accuracy, 0.9)
        self.assertGreaterEqual(report.src_accuracy, report.knn_accuracy - 0.02)


class TestSession(unittest.TestCase):
    """Test gesture sessions and label smoothing."""

    def test_session(self) -> None:
        """Test events are ordered with pauses and fit in the capture."""
        session = simulate_session(_small_config(), duration_s=60.0, n_gestures=4)
        self.assertEqual(4, len(session.events))
        starts = [start for _, start in session.events]
        self.assertGreaterEqual(starts[0], 2.0)
        self.assertEqual(sorted(starts), starts)
        self.assertLess(starts[-1], 58.0)
        self.assertAlmostEqual(60.0, session.ref.duration_s, delta=0.2)
        again = simulate_session(_small_config(), duration_s=60.0, n_gestures=4)
        self.assertEqual(session.events, again.events)
        np.testing.assert_array_equal(session.surv[1].samples, again.surv[1].samples)

    def test_session_too_long(self) -> None:
        """Test more gestures than fit are rejected."""
        with self.assertRaises(ParameterError):
            simulate_session(_small_config(), duration_s=10.0, n_gestures=5)

    def test_smoothing_records(self) -> None:
        """Test every detection gets a raw and a smoothed record."""
        detections = [
            _detection(GestureLabel.sit_down, 0.0),
            _detection(GestureLabel.stand_up, 5.0),
        ]
        records = smooth_detections(detections)
        self.assertEqual(4, len(records))
        self.assertEqual([False, True, False, True], [record.smoothed for record in records])
        self.assertEqual(["g2", "g2", "g3", "g3"], [record.label for record in records])
        self.assertEqual(5.0, records[2].t_start_s)
        self.assertEqual([], smooth_detections([]))

    def test_smoothing_corrects_forbidden_pair(self) -> None:
        """Test a fall directly followed by a normal stand-up is relabeled."""
        model = default_transition_model()
        detections = [
            _detection(GestureLabel.fall, 0.0),
            _detection(GestureLabel.stand_up, 5.0),
        ]
        records = smooth_detections(detections, model)
        raw = [record.label for record in records if not record.smoothed]
        smoothed = tuple(record.label for record in records if record.smoothed)
        self.assertEqual(["g4", "g3"], raw)
        self.assertNotIn(smoothed, model.forbidden)
        self.assertNotEqual(("g4", "g3"), smoothed)

    def test_smoothing_long_pause(self) -> None:
        """Test a pause of at least the idle gap lets a forbidden pair stand."""
        detections = [
            _detection(GestureLabel.fall, 0.0),
            _detection(GestureLabel.stand_up, 100.0),
        ]
        records = smooth_detections(detections, idle_gap_s=60.0)
        self.assertEqual(["g4", "g3"], [record.label for record in records if record.smoothed])
        with self.assertRaises(ParameterError):
            smooth_detections(detections, idle_gap_s=0.0)

    def test_session_allowed_order(self) -> None:
        """Test consecutive session gestures never form a forbidden pair."""
        forbidden = set(default_transition_model().forbidden)
        session = simulate_session(_small_config(seed=3), duration_s=120.0, n_gestures=12)
        labels = [label.value for label, _ in session.events]
        for pair in zip(labels, labels[1:]):
            self.assertNotIn(pair, forbidden)
