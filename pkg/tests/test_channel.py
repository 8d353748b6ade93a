"""Test bistatic scenes, propagation, and motion tracks."""

import unittest

import numpy as np
from pydantic import ValidationError

from wifisense.channel import (
    GESTURE_TEMPLATES,
    GestureLabel,
    ScattererTrack,
    Scene,
    apply_scene,
    bistatic_range,
    gesture_sequence_track,
    gesture_track,
    instantaneous_doppler,
    noise_power_for_snr,
    range_gradient,
    respiration_track,
    static_track,
)
from wifisense.doppler import caf_batch
from wifisense.exceptions import ParameterError, RangeError
from wifisense.waveform import SPEED_OF_LIGHT, WaveformConfig, gen_ofdm_stream

WAVELENGTH = 0.125
CONFIG = WaveformConfig.sensing(carrier_hz=SPEED_OF_LIGHT / WAVELENGTH)


def _linear_track(start, velocity, span=(0.0, 10.0)) -> ScattererTrack:
    """Get a scatterer moving at constant velocity over the span."""
    start = np.asarray(start, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    rows = [np.r_[t, start + velocity * (t - span[0])] for t in span]
    return ScattererTrack(keyframes=np.stack(rows))


def _scene(scatterers, **kwargs) -> Scene:
    """Get a scene with the transmitter at the origin and a receiver 1 m away on the x axis."""
    kwargs.setdefault("direct_leakage_db", None)
    return Scene(
        tx_pos=(0, 0, 0),
        ref_rx_pos=(0, 1, 0),
        surv_rx_pos=[(1, 0, 0)],
        scatterers=scatterers,
        **kwargs,
    )


class TestGeometry(unittest.TestCase):
    """Test bistatic range and Doppler."""

    def test_collinear(self) -> None:
        """Test a scatterer between transmitter and receiver."""
        scene = Scene(
            tx_pos=(0, 0, 0),
            ref_rx_pos=(0, 1, 0),
            surv_rx_pos=[(10, 0, 0)],
            scatterers=[static_track((5, 0, 0), (0, 1))],
        )
        self.assertAlmostEqual(10.0, bistatic_range(scene, 0, 0, 0.5))

    def test_symmetric(self) -> None:
        """Test a scatterer 5 m from both ends."""
        scene = Scene(
            tx_pos=(0, 0, 0),
            ref_rx_pos=(0, 1, 0),
            surv_rx_pos=[(8, 0, 0)],
            scatterers=[static_track((4, 3, 0), (0, 1))],
        )
        self.assertAlmostEqual(10.0, bistatic_range(scene, 0, 0, 0.0))

    def test_pythagoras(self) -> None:
        """Test the 3-4-5 triangle."""
        scene = Scene(
            tx_pos=(0, 0, 0),
            ref_rx_pos=(0, 1, 0),
            surv_rx_pos=[(4, 0, 0)],
            scatterers=[static_track((0, 3, 0), (0, 1))],
        )
        self.assertAlmostEqual(8.0, bistatic_range(scene, 0, 0, 1.0))
        with self.assertRaises(RangeError):
            bistatic_range(scene, 0, 0, 1.5)
        with self.assertRaises(ParameterError):
            bistatic_range(scene, 1, 0, 0.5)
        with self.assertRaises(ParameterError):
            bistatic_range(scene, 0, 1, 0.5)

    def test_static_doppler(self) -> None:
        """Test a static scatterer has no Doppler."""
        scene = _scene([static_track((2, 2, 0), (0, 1))])
        self.assertAlmostEqual(0.0, instantaneous_doppler(scene, 0, 0, 0.5, WAVELENGTH))

    def test_receding_doppler(self) -> None:
        """Test both legs growing at 0.5 m/s give -8 Hz at a 12.5 cm wavelength."""
        scene = _scene([_linear_track((2, 0, 0), (0.5, 0, 0))])
        self.assertAlmostEqual(-8.0, instantaneous_doppler(scene, 0, 0, 1.0, WAVELENGTH))
        approaching = _scene([_linear_track((8, 0, 0), (-0.5, 0, 0))])
        self.assertAlmostEqual(8.0, instantaneous_doppler(approaching, 0, 0, 1.0, WAVELENGTH))

    def test_doppler_boundary(self) -> None:
        """Test the finite difference needs interior times."""
        scene = _scene([_linear_track((2, 0, 0), (0.5, 0, 0))])
        with self.assertRaises(RangeError):
            instantaneous_doppler(scene, 0, 0, 0.0, WAVELENGTH)
        with self.assertRaises(ParameterError):
            instantaneous_doppler(scene, 0, 0, 1.0, 0.0)

    def test_range_gradient(self) -> None:
        """Test the gradient predicts the range rate of a small step."""
        scene = _scene([])
        point = np.array([2.0, 1.5, 0.3])
        gradient = range_gradient(scene, point)
        step = 1e-6 * np.array([0.3, -0.2, 0.5])
        tx, rx = np.zeros(3), np.array([1.0, 0.0, 0.0])

        def bistatic(p):
            return np.linalg.norm(p - tx) + np.linalg.norm(p - rx)

        self.assertAlmostEqual(
            (bistatic(point + step) - bistatic(point)) / 1e-6, gradient @ (step / 1e-6), places=5
        )


class TestPropagation(unittest.TestCase):
    """Test propagation through a scene."""

    def setUp(self) -> None:
        """Set up a four second transmission."""
        self.tx = gen_ofdm_stream(CONFIG, 4.0, 0)

    def test_leakage_only(self) -> None:
        """Test that an empty scene leaks the direct path into surveillance."""
        scene = _scene([], direct_leakage_db=30.0)
        ref, (surv,) = apply_scene(self.tx, scene)
        rotation = np.exp(-2j * np.pi * 1.0 / WAVELENGTH)
        np.testing.assert_allclose(10**-1.5 * rotation * self.tx.samples, surv.samples)
        np.testing.assert_allclose(rotation * self.tx.samples, ref.samples)

    def test_linearity(self) -> None:
        """Test that reflections add."""
        first = static_track((2, 2, 0), (0, 5), reflectivity=0.7)
        second = _linear_track((3, -1, 0), (0.4, 0.1, 0))
        _, (both,) = apply_scene(self.tx, _scene([first, second]))
        _, (only_first,) = apply_scene(self.tx, _scene([first]))
        _, (only_second,) = apply_scene(self.tx, _scene([second]))
        np.testing.assert_allclose(only_first.samples + only_second.samples, both.samples)

    def test_wall(self) -> None:
        """Test a 20 dB wall divides reflection amplitude by ten."""
        track = _linear_track((3, -1, 0), (0.4, 0.1, 0))
        _, (open_air,) = apply_scene(self.tx, _scene([track]))
        _, (walled,) = apply_scene(self.tx, _scene([track], wall_attenuation_db=20.0))
        np.testing.assert_allclose(open_air.samples / 10, walled.samples)

    def test_noise_determinism(self) -> None:
        """Test that noise is seeded by the scene."""
        scene = _scene([static_track((2, 2, 0), (0, 5))], noise_power=0.1, seed=3)
        ref, (surv,) = apply_scene(self.tx, scene)
        again, (surv_again,) = apply_scene(self.tx, scene)
        np.testing.assert_array_equal(ref.samples, again.samples)
        np.testing.assert_array_equal(surv.samples, surv_again.samples)

    def test_span(self) -> None:
        """Test that a track must cover the whole transmission."""
        with self.assertRaises(RangeError):
            apply_scene(self.tx, _scene([static_track((2, 2, 0), (0, 1))]))

    def test_static_caf(self) -> None:
        """Test a static reflection peaks at zero Doppler."""
        ref, (surv,) = apply_scene(self.tx, _scene([static_track((2, 2, 0), (0, 5))]))
        spec = caf_batch(ref, surv)
        peaks = spec.doppler_axis_hz[np.argmax(spec.magnitudes, axis=1)]
        np.testing.assert_array_equal(0.0, peaks)

    def test_receding_caf(self) -> None:
        """Test a range rate of 1 m/s peaks at -8 Hz in every batch."""
        scene = _scene([_linear_track((2, 0, 0), (0.5, 0, 0))])
        ref, (surv,) = apply_scene(self.tx, scene)
        spec = caf_batch(ref, surv)
        peaks = spec.doppler_axis_hz[np.argmax(spec.magnitudes, axis=1)]
        for time, peak in zip(spec.batch_times_s, peaks, strict=True):
            expected = instantaneous_doppler(scene, 0, 0, time, WAVELENGTH)
            self.assertLessEqual(abs(peak - expected), spec.resolution_hz)

    def test_snr(self) -> None:
        """Test the noise power for a reflection-to-noise ratio."""
        scene = _scene([static_track((2, 2, 0), (0, 5))])
        self.assertAlmostEqual(0.1, noise_power_for_snr(scene, 10.0))
        walled = _scene([static_track((2, 2, 0), (0, 5))], wall_attenuation_db=20.0)
        self.assertAlmostEqual(1e-3, noise_power_for_snr(walled, 10.0))
        with self.assertRaises(ParameterError):
            noise_power_for_snr(_scene([]), 10.0)


class TestTracks(unittest.TestCase):
    """Test motion tracks."""

    def test_validation(self) -> None:
        """Test that keyframe times must increase."""
        with self.assertRaises(ValidationError):
            ScattererTrack(keyframes=[[0, 0, 0, 0], [0, 1, 1, 1]])
        with self.assertRaises(ValidationError):
            ScattererTrack(keyframes=[[0, 0, 0, 0]])
        with self.assertRaises(ValidationError):
            static_track((0, 0, 0), (0, 1), reflectivity=-1.0)

    def test_padded(self) -> None:
        """Test that padding holds the end positions."""
        track = _linear_track((0, 0, 0), (1, 0, 0), span=(1.0, 2.0)).padded(0.0, 3.0)
        self.assertTrue(track.covers(0.0, 3.0))
        np.testing.assert_allclose([0, 0, 0], track.position(0.5))
        np.testing.assert_allclose([1, 0, 0], track.position(2.5))

    def test_templates(self) -> None:
        """Test that sitting down and standing up mirror each other."""
        self.assertEqual(6, len(GestureLabel))
        sit_down = GESTURE_TEMPLATES[GestureLabel.sit_down]
        stand_up = GESTURE_TEMPLATES[GestureLabel.stand_up]
        self.assertEqual(stand_up, tuple((d, -v) for d, v in reversed(sit_down)))
        self.assertEqual("fall", GestureLabel("g4").description)

    def test_pick_up_doppler(self) -> None:
        """Test picking up shows negative, then zero, then positive Doppler."""
        scene = Scene(tx_pos=(0, 0, 1), ref_rx_pos=(0, 0.5, 1), surv_rx_pos=[(4, 0, 1)])
        anchor = (2.5, 1.0, 1.0)
        track = gesture_track(
            GestureLabel.pick_up, 1.0, anchor, 5, axis=range_gradient(scene, anchor)
        )
        scene = scene.model_copy(update={"scatterers": [track]})
        knots = track.keyframes[:, 0]
        middles = (knots[:-1] + knots[1:]) / 2
        shifts = [instantaneous_doppler(scene, 0, 0, t, WAVELENGTH) for t in middles]
        self.assertLess(shifts[0], -3.0)
        self.assertAlmostEqual(0.0, shifts[1], places=6)
        self.assertGreater(shifts[2], 3.0)

    def test_gesture_determinism(self) -> None:
        """Test that the seed fixes the jitter."""
        first = gesture_track(GestureLabel.fall, 0.0, (1, 1, 1), 11)
        second = gesture_track(GestureLabel.fall, 0.0, (1, 1, 1), 11)
        other = gesture_track(GestureLabel.fall, 0.0, (1, 1, 1), 12)
        np.testing.assert_array_equal(first.keyframes, second.keyframes)
        self.assertFalse(np.array_equal(first.keyframes, other.keyframes))
        self.assertEqual(GestureLabel.fall, first.label)

    def test_sequence(self) -> None:
        """Test a gesture sequence returns to the anchor."""
        anchor = (2.0, 1.0, 1.0)
        track = gesture_sequence_track(
            [(GestureLabel.sit_down, 1.0), (GestureLabel.stand_up, 5.0)], anchor, (0.0, 10.0), 0
        )
        self.assertTrue(track.covers(0.0, 10.0))
        np.testing.assert_allclose(anchor, track.position(0.5))
        np.testing.assert_allclose(anchor, track.position(10.0))
        with self.assertRaises(ParameterError):
            gesture_sequence_track(
                [(GestureLabel.pick_up, 1.0), (GestureLabel.fall, 2.0)], anchor, (0.0, 10.0), 0
            )
        with self.assertRaises(ParameterError):
            gesture_sequence_track([(GestureLabel.pick_up, 8.0)], anchor, (0.0, 10.0), 0)

    def test_respiration(self) -> None:
        """Test the chest displacement is a sine along the axis."""
        anchor = np.array([2.0, 1.0, 1.0])
        track = respiration_track(0.3, 0.01, anchor, 20.0, axis=(0, 2, 0))
        times = np.linspace(0, 20, 4001)
        displacement = (track.position(times) - anchor)[:, 1]
        np.testing.assert_allclose(0.0, (track.position(times) - anchor)[:, [0, 2]], atol=1e-12)
        self.assertAlmostEqual(0.02, float(np.ptp(displacement)), places=5)
        np.testing.assert_allclose(anchor, track.position(0.0), atol=1e-12)
        np.testing.assert_allclose(
            track.position(1.0), track.position(1.0 + 1 / 0.3), atol=1e-5
        )
        self.assertEqual("respiration", track.label)

    def test_respiration_bounds(self) -> None:
        """Test physically implausible breathing is rejected."""
        respiration_track(0.3, 0.005, (0, 0, 0), 10.0)
        for rate, amplitude in [(0.3, 0.06), (0.3, 0.0), (1.0, 0.01), (0.05, 0.01)]:
            with self.subTest(rate=rate, amplitude=amplitude), self.assertRaises(ValueError):
                respiration_track(rate, amplitude, (0, 0, 0), 10.0)
