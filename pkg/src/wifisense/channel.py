"""Bistatic propagation scenes with moving scatterers.

A :class:`Scene` places one transmitter, a reference receiver that hears the direct
path, and one or more surveillance receivers that hear reflections from moving
scatterers. Scatterers follow piecewise-linear keyframed tracks. Path loss is folded
into each scatterer's reflectivity, so the only explicit loss on reflections is the
wall attenuation.
"""

from __future__ import annotations

import enum
import logging
import math
from collections.abc import Sequence
from typing import Literal, TypeAlias

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .arrays import FloatArray
from .exceptions import ParameterError, RangeError
from .waveform import SPEED_OF_LIGHT, IqTrace

__all__ = [
    "GESTURE_TEMPLATES",
    "GestureLabel",
    "Position",
    "Scene",
    "ScattererTrack",
    "apply_scene",
    "bistatic_range",
    "gesture_sequence_track",
    "gesture_track",
    "instantaneous_doppler",
    "noise_power_for_snr",
    "range_gradient",
    "respiration_track",
    "static_track",
]

logger = logging.getLogger(__name__)

#: A point in meters
Position: TypeAlias = tuple[float, float, float]

#: The step of the central finite difference used for Doppler, in seconds
DOPPLER_STEP_S = 1e-3

#: Slack on keyframe span checks, in seconds
_SPAN_EPS = 1e-9


class GestureLabel(str, enum.Enum):
    """The six daily-life activities recognized from Doppler signatures."""

    pick_up = "g1"
    sit_down = "g2"
    stand_up = "g3"
    fall = "g4"
    stand_after_fall = "g5"
    out_of_bed = "g6"

    @property
    def description(self) -> str:
        """Get a human-readable description."""
        return _DESCRIPTIONS[self]


_DESCRIPTIONS = {
    GestureLabel.pick_up: "pick up an item from the floor",
    GestureLabel.sit_down: "sit down",
    GestureLabel.stand_up: "stand up",
    GestureLabel.fall: "fall",
    GestureLabel.stand_after_fall: "stand up after a fall",
    GestureLabel.out_of_bed: "get up and out of bed",
}

#: Piecewise-constant Doppler velocity profiles, as (duration in s, velocity in m/s).
#: Positive velocity shortens the bistatic range, i.e., gives positive Doppler.
GESTURE_TEMPLATES: dict[GestureLabel, tuple[tuple[float, float], ...]] = {
    GestureLabel.pick_up: ((1.2, -0.8), (0.6, 0.0), (1.2, 0.8)),
    GestureLabel.sit_down: ((0.4, -0.5), (0.8, -0.9), (0.3, -0.3)),
    GestureLabel.stand_up: ((0.3, 0.3), (0.8, 0.9), (0.4, 0.5)),
    GestureLabel.fall: ((0.2, -1.2), (0.4, -2.2), (0.2, -1.0)),
    GestureLabel.stand_after_fall: ((0.5, 0.2), (1.5, 0.4), (0.5, 0.2)),
    GestureLabel.out_of_bed: ((0.8, 0.5), (0.4, -0.5), (1.8, 0.6)),
}

#: Bounds of the uniform jitter on segment durations and gesture speed
JITTER = (0.85, 1.15)

TrackLabel: TypeAlias = GestureLabel | Literal["respiration", "static", "gestures"] | None


class ScattererTrack(BaseModel):
    """A point scatterer moving along piecewise-linear keyframes."""

    model_config = ConfigDict(frozen=True)

    keyframes: FloatArray = Field(..., description="Rows of [t, x, y, z] in seconds and meters")
    reflectivity: float = Field(1.0, ge=0.0, description="Linear amplitude coefficient")
    label: TrackLabel = None

    @model_validator(mode="after")
    def _check_keyframes(self) -> ScattererTrack:
        if self.keyframes.ndim != 2 or self.keyframes.shape[1] != 4:
            raise ValueError("keyframes must have rows of [t, x, y, z]")
        if self.keyframes.shape[0] < 2:
            raise ValueError("a track needs at least two keyframes")
        if not np.all(np.isfinite(self.keyframes)):
            raise ValueError("keyframes must be finite")
        if np.any(np.diff(self.keyframes[:, 0]) <= 0):
            raise ValueError("keyframe times must be strictly increasing")
        return self

    @property
    def t_start(self) -> float:
        """Get the first keyframe time."""
        return float(self.keyframes[0, 0])

    @property
    def t_end(self) -> float:
        """Get the last keyframe time."""
        return float(self.keyframes[-1, 0])

    def covers(self, t_start: float, t_end: float) -> bool:
        """Check if the keyframes span the given interval."""
        return self.t_start - _SPAN_EPS <= t_start and t_end <= self.t_end + _SPAN_EPS

    def position(self, t: float | npt.ArrayLike) -> npt.NDArray[np.float64]:
        """Get the position at one time (shape 3) or many times (shape n x 3).

        :raises RangeError: if a time is outside the keyframe span
        """
        times = np.asarray(t, dtype=np.float64)
        if times.size and not self.covers(float(times.min()), float(times.max())):
            raise RangeError(
                f"time outside the track span [{self.t_start}, {self.t_end}] s"
            )
        knots = self.keyframes[:, 0]
        coordinates = [np.interp(times, knots, self.keyframes[:, axis]) for axis in (1, 2, 3)]
        return np.stack(coordinates, axis=-1)

    def padded(self, t_start: float, t_end: float) -> ScattererTrack:
        """Get a track that holds its end positions to cover ``[t_start, t_end]``."""
        rows = [self.keyframes]
        if t_start < self.t_start:
            rows.insert(0, np.r_[t_start, self.keyframes[0, 1:]][np.newaxis, :])
        if t_end > self.t_end:
            rows.append(np.r_[t_end, self.keyframes[-1, 1:]][np.newaxis, :])
        return ScattererTrack(
            keyframes=np.concatenate(rows), reflectivity=self.reflectivity, label=self.label
        )


class Scene(BaseModel):
    """A bistatic scene: one transmitter, a reference channel, and surveillance channels."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tx_pos: Position
    ref_rx_pos: Position
    surv_rx_pos: list[Position] = Field(..., min_length=1)
    scatterers: list[ScattererTrack] = Field(default_factory=list)
    wall_attenuation_db: float = Field(
        0.0, ge=0.0, description="Loss on every reflection, 0 for line of sight"
    )
    direct_leakage_db: float | None = Field(
        30.0, ge=0.0, description="Loss of the direct path leaking into surveillance, or null"
    )
    noise_power: float = Field(0.0, ge=0.0, description="Variance of complex white noise")
    seed: int = Field(0, ge=0, description="Seeds the noise")

    @model_validator(mode="after")
    def _check_finite(self) -> Scene:
        points = [self.tx_pos, self.ref_rx_pos, *self.surv_rx_pos]
        if not all(math.isfinite(value) for point in points for value in point):
            raise ValueError("positions must be finite")
        return self

    def surveillance_position(self, surv_index: int) -> npt.NDArray[np.float64]:
        """Get a surveillance receiver's position.

        :raises ParameterError: if the index is out of bounds
        """
        if not 0 <= surv_index < len(self.surv_rx_pos):
            raise ParameterError(f"no surveillance receiver {surv_index}")
        return np.asarray(self.surv_rx_pos[surv_index], dtype=np.float64)

    def scatterer(self, scatterer_index: int) -> ScattererTrack:
        """Get a scatterer's track.

        :raises ParameterError: if the index is out of bounds
        """
        if not 0 <= scatterer_index < len(self.scatterers):
            raise ParameterError(f"no scatterer {scatterer_index}")
        return self.scatterers[scatterer_index]

    @property
    def wall_factor(self) -> float:
        """Get the amplitude factor of the wall."""
        return float(10 ** (-self.wall_attenuation_db / 20))

    @property
    def leakage_factor(self) -> float:
        """Get the amplitude factor of direct leakage into surveillance."""
        if self.direct_leakage_db is None:
            return 0.0
        return float(10 ** (-self.direct_leakage_db / 20))


def _ranges(
    points: npt.NDArray[np.float64], tx: npt.NDArray[np.float64], rx: npt.NDArray[np.float64]
) -> npt.NDArray[np.float64]:
    return np.linalg.norm(points - tx, axis=-1) + np.linalg.norm(points - rx, axis=-1)


def bistatic_range(scene: Scene, scatterer_index: int, surv_index: int, t: float) -> float:
    """Get the transmitter to scatterer to receiver distance at a given time.

    >>> scene = Scene(
    ...     tx_pos=(0, 0, 0),
    ...     ref_rx_pos=(0, 1, 0),
    ...     surv_rx_pos=[(4, 0, 0)],
    ...     scatterers=[static_track((0, 3, 0), (0, 1))],
    ... )
    >>> bistatic_range(scene, 0, 0, 0.5)
    8.0

    :raises RangeError: if the time is outside the scatterer's keyframes
    """
    point = scene.scatterer(scatterer_index).position(t)
    rx = scene.surveillance_position(surv_index)
    return float(_ranges(point, np.asarray(scene.tx_pos, dtype=np.float64), rx))


def instantaneous_doppler(
    scene: Scene, scatterer_index: int, surv_index: int, t: float, wavelength_m: float
) -> float:
    """Get the bistatic Doppler shift, :math:`-\\frac{1}{\\lambda} \\frac{dR}{dt}`, in Hz.

    :raises RangeError: if a finite-difference step leaves the keyframe span
    :raises ParameterError: if the wavelength is not positive
    """
    if wavelength_m <= 0:
        raise ParameterError("wavelength_m must be positive")
    track = scene.scatterer(scatterer_index)
    if not track.covers(t - DOPPLER_STEP_S, t + DOPPLER_STEP_S):
        raise RangeError(f"t={t} s is not interior to the track span")
    after = bistatic_range(scene, scatterer_index, surv_index, t + DOPPLER_STEP_S)
    before = bistatic_range(scene, scatterer_index, surv_index, t - DOPPLER_STEP_S)
    return -(after - before) / (2 * DOPPLER_STEP_S) / wavelength_m


def range_gradient(
    scene: Scene, point: Sequence[float], surv_index: int = 0
) -> npt.NDArray[np.float64]:
    """Get the direction along which motion changes the bistatic range fastest.

    Its norm is between 0 and 2. Moving with velocity ``v`` changes the bistatic
    range at the rate of the dot product of the gradient with ``v``.
    """
    p = np.asarray(point, dtype=np.float64)
    tx = np.asarray(scene.tx_pos, dtype=np.float64)
    rx = scene.surveillance_position(surv_index)
    return _unit(p - tx) + _unit(p - rx)


def _unit(vector: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    norm = np.linalg.norm(vector)
    if norm == 0:
        raise ParameterError("a scatterer can not sit on a transmitter or receiver")
    return vector / norm


def _delayed(
    samples: npt.NDArray[np.complex128], delays: npt.NDArray[np.int64]
) -> npt.NDArray[np.complex128]:
    indices = np.arange(samples.size) - delays
    out = np.zeros_like(samples)
    valid = indices >= 0
    out[valid] = samples[indices[valid]]
    return out


def _noise(rng: np.random.Generator, power: float, size: int) -> npt.NDArray[np.complex128]:
    if power == 0:
        return np.zeros(size, dtype=np.complex128)
    scale = math.sqrt(power / 2)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def _direct_path(
    tx_signal: IqTrace, tx: npt.NDArray[np.float64], rx: npt.NDArray[np.float64]
) -> npt.NDArray[np.complex128]:
    distance = float(np.linalg.norm(rx - tx))
    delay = round(distance / SPEED_OF_LIGHT * tx_signal.sample_rate_hz)
    rotation = np.exp(-2j * np.pi * distance / tx_signal.wavelength_m)
    return rotation * _delayed(tx_signal.samples, np.full(tx_signal.n_samples, delay))


def _reflection(
    tx_signal: IqTrace,
    track: ScattererTrack,
    tx: npt.NDArray[np.float64],
    rx: npt.NDArray[np.float64],
) -> npt.NDArray[np.complex128]:
    ranges = _ranges(track.position(tx_signal.times_s), tx, rx)
    delays = np.rint(ranges / SPEED_OF_LIGHT * tx_signal.sample_rate_hz).astype(np.int64)
    rotation = np.exp(-2j * np.pi * ranges / tx_signal.wavelength_m)
    return track.reflectivity * rotation * _delayed(tx_signal.samples, delays)


def apply_scene(tx_signal: IqTrace, scene: Scene) -> tuple[IqTrace, list[IqTrace]]:
    """Propagate a transmission through a scene.

    Time-varying delays are applied to the nearest sample, and the carrier phase
    rotates continuously with the bistatic range.

    :param tx_signal: The transmitted baseband signal
    :param scene: The geometry, scatterers, and impairments
    :returns: The reference channel and one surveillance channel per receiver
    :raises RangeError: if the signal outlasts a scatterer's keyframes
    """
    times = tx_signal.times_s
    for index, track in enumerate(scene.scatterers):
        if not track.covers(float(times[0]), float(times[-1])):
            raise RangeError(
                f"scatterer {index} spans [{track.t_start}, {track.t_end}] s, which does not "
                f"cover the signal's [{times[0]}, {times[-1]}] s"
            )
    tx = np.asarray(scene.tx_pos, dtype=np.float64)
    rng = np.random.default_rng(scene.seed)

    ref_rx = np.asarray(scene.ref_rx_pos, dtype=np.float64)
    reference = _direct_path(tx_signal, tx, ref_rx) + _noise(
        rng, scene.noise_power, tx_signal.n_samples
    )

    surveillance = []
    for surv_index in range(len(scene.surv_rx_pos)):
        rx = scene.surveillance_position(surv_index)
        samples = np.zeros(tx_signal.n_samples, dtype=np.complex128)
        if scene.leakage_factor:
            samples += scene.leakage_factor * _direct_path(tx_signal, tx, rx)
        for track in scene.scatterers:
            samples += scene.wall_factor * _reflection(tx_signal, track, tx, rx)
        samples += _noise(rng, scene.noise_power, tx_signal.n_samples)
        surveillance.append(tx_signal.with_samples(samples))

    logger.debug(
        "propagated %d samples through %d scatterers to %d surveillance channels",
        tx_signal.n_samples,
        len(scene.scatterers),
        len(surveillance),
    )
    return tx_signal.with_samples(reference), surveillance


def noise_power_for_snr(scene: Scene, snr_db: float) -> float:
    """Get the noise variance that gives a reflection-to-noise ratio in surveillance.

    Reflection power is the sum of the scatterers' powers behind the wall, for a
    unit-power transmission.

    :raises ParameterError: if the scene has no reflecting scatterer
    """
    power = sum((scene.wall_factor * track.reflectivity) ** 2 for track in scene.scatterers)
    if power == 0:
        raise ParameterError("a scene without reflections has no defined SNR")
    return float(power / 10 ** (snr_db / 10))


def _axis_array(axis: Sequence[float]) -> npt.NDArray[np.float64]:
    array = np.asarray(axis, dtype=np.float64)
    if array.shape != (3,) or not np.any(array):
        raise ParameterError("axis must be a nonzero 3-vector")
    return array


def _gesture_keyframes(
    label: GestureLabel,
    start_s: float,
    origin: npt.NDArray[np.float64],
    axis: npt.NDArray[np.float64],
    rng: np.random.Generator,
) -> list[npt.NDArray[np.float64]]:
    speed = rng.uniform(*JITTER)
    durations = [duration * rng.uniform(*JITTER) for duration, _ in GESTURE_TEMPLATES[label]]
    step = axis / float(axis @ axis)
    rows = [np.r_[start_s, origin]]
    t, position = start_s, origin
    for duration, (_, velocity) in zip(durations, GESTURE_TEMPLATES[label], strict=True):
        t += duration
        position = position - speed * velocity * duration * step
        rows.append(np.r_[t, position])
    return rows


def gesture_track(
    label: GestureLabel,
    start_s: float,
    anchor: Sequence[float],
    rng_seed: int,
    *,
    axis: Sequence[float] = (1.0, 0.0, 0.0),
    reflectivity: float = 1.0,
) -> ScattererTrack:
    """Get a keyframed track performing one gesture.

    The scatterer moves along ``axis`` with velocity ``-v * axis / |axis|^2`` for each
    template velocity ``v``. When ``axis`` is the :func:`range_gradient` at the anchor,
    the bistatic range rate follows the template, so the Doppler velocity profile is
    reproduced. The seed jitters segment durations and the overall speed.

    :param label: The gesture
    :param start_s: The start time of the gesture
    :param anchor: The starting position
    :param rng_seed: Seeds the jitter
    :param axis: The direction of motion
    :param reflectivity: The linear amplitude coefficient
    :returns: A track covering exactly the gesture; see :meth:`ScattererTrack.padded`
    """
    label = GestureLabel(label)
    rows = _gesture_keyframes(
        label,
        start_s,
        np.asarray(anchor, dtype=np.float64),
        _axis_array(axis),
        np.random.default_rng(rng_seed),
    )
    return ScattererTrack(keyframes=np.stack(rows), reflectivity=reflectivity, label=label)


def gesture_sequence_track(
    events: Sequence[tuple[GestureLabel, float]],
    anchor: Sequence[float],
    span: tuple[float, float],
    seed: int,
    *,
    axis: Sequence[float] = (1.0, 0.0, 0.0),
    reflectivity: float = 1.0,
    recenter: bool = True,
) -> ScattererTrack:
    """Get one track performing several gestures, moving slowly or not at all between them.

    :param events: Pairs of gesture and start time, in chronological order
    :param anchor: The position at the start of the span
    :param span: The start and end time of the track
    :param seed: Seeds one independent jitter stream per event
    :param axis: The direction of motion
    :param reflectivity: The linear amplitude coefficient
    :param recenter: Glide back to the anchor during each pause so that a long session
        does not wander off. Otherwise hold still where the last gesture ended.
    :raises ParameterError: if gestures overlap or fall outside the span
    """
    t_start, t_end = span
    direction = _axis_array(axis)
    home = np.asarray(anchor, dtype=np.float64)
    position = home
    rows = [np.r_[t_start, position]]
    children = np.random.SeedSequence(seed).spawn(len(events))
    for (label, start), child in zip(events, children, strict=True):
        last = float(rows[-1][0])
        if start < last:
            raise ParameterError(f"gesture at {start} s starts before the previous one ends")
        origin = home if recenter and start > last else position
        segment = _gesture_keyframes(
            GestureLabel(label), start, origin, direction, np.random.default_rng(child)
        )
        rows.extend(segment if start > last else segment[1:])
        position = segment[-1][1:]
    if float(rows[-1][0]) > t_end:
        raise ParameterError("the last gesture ends after the span")
    if float(rows[-1][0]) < t_end:
        rows.append(np.r_[t_end, home if recenter else position])
    return ScattererTrack(keyframes=np.stack(rows), reflectivity=reflectivity, label="gestures")


def respiration_track(
    rate_hz: float,
    amplitude_m: float,
    anchor: Sequence[float],
    span_s: float,
    *,
    axis: Sequence[float] = (1.0, 0.0, 0.0),
    start_s: float = 0.0,
    reflectivity: float = 1.0,
) -> ScattererTrack:
    """Get a chest wall moving sinusoidally about the anchor.

    The displacement is ``amplitude_m * sin(2 pi rate_hz (t - start_s))`` along the
    unit vector of ``axis``, which should point along the transmitter to anchor line.

    :raises ParameterError: if the rate or amplitude is outside its physical range
    """
    if not 0 < amplitude_m <= 0.05:
        raise ParameterError("amplitude_m must be in (0, 0.05]")
    if not 0.05 < rate_hz < 1.0:
        raise ParameterError("rate_hz must be in (0.05, 1.0)")
    if span_s <= 0:
        raise ParameterError("span_s must be positive")
    direction = _axis_array(axis)
    direction = direction / np.linalg.norm(direction)
    step = min(0.02, 1 / (50 * rate_hz))
    times = start_s + np.linspace(0.0, span_s, math.ceil(span_s / step) + 1)
    displacement = amplitude_m * np.sin(2 * np.pi * rate_hz * (times - start_s))
    positions = np.asarray(anchor, dtype=np.float64) + displacement[:, np.newaxis] * direction
    return ScattererTrack(
        keyframes=np.column_stack([times, positions]),
        reflectivity=reflectivity,
        label="respiration",
    )


def static_track(
    point: Sequence[float], span: tuple[float, float], *, reflectivity: float = 1.0
) -> ScattererTrack:
    """Get a scatterer that does not move, such as furniture or a torso."""
    position = np.asarray(point, dtype=np.float64)
    return ScattererTrack(
        keyframes=np.stack([np.r_[span[0], position], np.r_[span[1], position]]),
        reflectivity=reflectivity,
        label="static",
    )
