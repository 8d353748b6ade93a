"""Doppler-time spectrograms from batched cross-ambiguity functions.

The reference channel carries the transmission and the surveillance channel its
reflections. Correlating the two per batch over a grid of Doppler hypotheses cancels
the unknown transmitted content and leaves the reflections' frequency shifts. An
STFT over CSI time series is included as the baseline the CAF improves upon.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from functools import partial
from typing import Literal

import numpy as np
import numpy.typing as npt
import scipy.signal
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator

from .arrays import FloatArray
from .exceptions import ParameterError, RangeError, ShapeError
from .waveform import CsiMatrix, IqTrace

__all__ = [
    "ActivityEnvelope",
    "CafConfig",
    "DopplerSpectrogram",
    "caf_batch",
    "doppler_envelope",
    "stft_csi",
]

logger = logging.getLogger(__name__)

Window = Literal["rect", "hann"]

_SCIPY_WINDOWS = {"rect": "boxcar", "hann": "hann"}


class CafConfig(BaseModel):
    """Batching and Doppler grid of the cross-ambiguity function."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    batch_len_s: PositiveFloat = 0.5
    batch_hop_s: PositiveFloat = 0.25
    max_doppler_hz: PositiveFloat = 60.0
    doppler_step_hz: PositiveFloat | None = Field(
        None, description="Spacing of Doppler hypotheses, defaulting to 1 / batch_len_s"
    )
    delay_bins: int = Field(
        1, ge=1, description="Delay hypotheses in samples, 1 is the zero-delay cut"
    )
    window: Window = "rect"
    n_workers: int = Field(1, ge=1, description="Threads evaluating batches")

    @model_validator(mode="after")
    def _check_grid(self) -> CafConfig:
        if self.batch_hop_s > self.batch_len_s:
            raise ValueError("batch_hop_s must not exceed batch_len_s")
        if self.step_hz > 2 * self.max_doppler_hz:
            raise ValueError("doppler_step_hz must not exceed twice max_doppler_hz")
        return self

    @property
    def resolution_hz(self) -> float:
        """Get the native Doppler resolution of one batch."""
        return 1.0 / self.batch_len_s

    @property
    def step_hz(self) -> float:
        """Get the spacing of the Doppler hypotheses."""
        return self.doppler_step_hz if self.doppler_step_hz is not None else self.resolution_hz

    def doppler_axis(self) -> npt.NDArray[np.float64]:
        """Get the Doppler hypotheses, symmetric about zero.

        >>> CafConfig().doppler_axis()[[0, 30, -1]].tolist()
        [-60.0, 0.0, 60.0]
        """
        n = math.floor(self.max_doppler_hz / self.step_hz + 1e-9)
        return self.step_hz * np.arange(-n, n + 1, dtype=np.float64)


class DopplerSpectrogram(BaseModel):
    """Linear power per batch (rows) and Doppler bin (columns)."""

    model_config = ConfigDict(frozen=True)

    magnitudes: FloatArray
    batch_times_s: FloatArray
    doppler_axis_hz: FloatArray
    resolution_hz: PositiveFloat

    @model_validator(mode="after")
    def _check_grid(self) -> DopplerSpectrogram:
        if self.magnitudes.ndim != 2:
            raise ValueError("magnitudes must be a batch x Doppler grid")
        if self.magnitudes.shape != (self.batch_times_s.size, self.doppler_axis_hz.size):
            raise ValueError("magnitudes do not match the time and Doppler axes")
        if not np.all(np.isfinite(self.magnitudes)) or np.any(self.magnitudes < 0):
            raise ValueError("magnitudes must be finite and non-negative")
        if not np.allclose(self.doppler_axis_hz, -self.doppler_axis_hz[::-1]):
            raise ValueError("the Doppler axis must be symmetric about zero")
        return self

    @property
    def n_batches(self) -> int:
        """Get the number of batches."""
        return int(self.batch_times_s.size)

    @property
    def batch_step_s(self) -> float:
        """Get the spacing of batch centers, or the resolution period for one batch."""
        if self.n_batches < 2:
            return 1.0 / self.resolution_hz
        return float(np.median(np.diff(self.batch_times_s)))

    def off_zero_energy(self, exclude_hz: float) -> npt.NDArray[np.float64]:
        """Get the energy per batch outside the band of ``±exclude_hz`` around zero."""
        return self.magnitudes[:, np.abs(self.doppler_axis_hz) > exclude_hz].sum(axis=1)


class ActivityEnvelope(BaseModel):
    """Normalized off-zero Doppler energy per batch."""

    model_config = ConfigDict(frozen=True)

    times_s: FloatArray
    intensity: FloatArray

    @model_validator(mode="after")
    def _check_intensity(self) -> ActivityEnvelope:
        if self.times_s.shape != self.intensity.shape or self.times_s.ndim != 1:
            raise ValueError("times_s and intensity must be aligned vectors")
        if np.any(self.intensity < 0) or np.any(self.intensity > 1):
            raise ValueError("intensity must be in [0, 1]")
        return self


def _window(name: Window, length: int) -> npt.NDArray[np.float64]:
    return np.asarray(scipy.signal.get_window(_SCIPY_WINDOWS[name], length), dtype=np.float64)


def _batch_magnitudes(
    product: npt.NDArray[np.complex128],
    starts: npt.NDArray[np.int64],
    steering: npt.NDArray[np.complex128],
) -> npt.NDArray[np.float64]:
    length = steering.shape[1]
    windows = sliding_window_view(product, length)[starts]
    return np.abs(windows @ steering.T) ** 2


def _advanced(samples: npt.NDArray[np.complex128], delay: int) -> npt.NDArray[np.complex128]:
    if delay == 0:
        return samples
    out = np.zeros_like(samples)
    out[: samples.size - delay] = samples[delay:]
    return out


def caf_batch(ref: IqTrace, surv: IqTrace, config: CafConfig | None = None) -> DopplerSpectrogram:
    """Compute a Doppler-time spectrogram with a batched cross-ambiguity function.

    For each batch and Doppler hypothesis :math:`f` the magnitude is
    :math:`|\\sum_t w(t) ref^*(t) surv(t + \\tau) e^{-j 2 \\pi f t}|^2`, maximized over
    the delay hypotheses :math:`\\tau`.

    :param ref: The reference channel
    :param surv: The surveillance channel
    :param config: The batching and Doppler grid
    :returns: A spectrogram whose rows are batches advancing by ``batch_hop_s``
    :raises ShapeError: if the channels differ in sample rate or length
    :raises RangeError: if a batch is longer than the signal
    """
    config = config or CafConfig()
    if ref.sample_rate_hz != surv.sample_rate_hz:
        raise ShapeError(
            f"sample rates differ: {ref.sample_rate_hz} Hz and {surv.sample_rate_hz} Hz"
        )
    if ref.n_samples != surv.n_samples:
        raise ShapeError(f"lengths differ: {ref.n_samples} and {surv.n_samples} samples")
    fs = ref.sample_rate_hz
    length = round(config.batch_len_s * fs)
    hop = max(1, round(config.batch_hop_s * fs))
    if length < 1 or length > ref.n_samples:
        raise RangeError(f"a {config.batch_len_s} s batch does not fit in {ref.duration_s} s")
    if config.delay_bins > ref.n_samples - length + 1:
        raise RangeError("more delay hypotheses than samples outside one batch")

    n_batches = (ref.n_samples - length) // hop + 1
    starts = hop * np.arange(n_batches, dtype=np.int64)
    axis = config.doppler_axis()
    steering = _window(config.window, length) * np.exp(
        -2j * np.pi * np.outer(axis, np.arange(length) / fs)
    )
    chunks = np.array_split(starts, min(config.n_workers, n_batches))

    magnitudes = np.zeros((n_batches, axis.size), dtype=np.float64)
    for delay in range(config.delay_bins):
        product = np.conj(ref.samples) * _advanced(surv.samples, delay)
        if config.n_workers == 1:
            cut = _batch_magnitudes(product, starts, steering)
        else:
            with ThreadPoolExecutor(max_workers=config.n_workers) as executor:
                evaluate = partial(_batch_magnitudes, product, steering=steering)
                cut = np.concatenate(list(executor.map(evaluate, chunks)))
        np.maximum(magnitudes, cut, out=magnitudes)

    logger.debug("computed %d CAF batches x %d Doppler bins", n_batches, axis.size)
    return DopplerSpectrogram(
        magnitudes=magnitudes,
        batch_times_s=ref.t0_s + (starts + length / 2) / fs,
        doppler_axis_hz=axis,
        resolution_hz=config.resolution_hz,
    )


def _check_uniform(times: npt.NDArray[np.float64]) -> float:
    if times.size < 2:
        raise ParameterError("at least two CSI snapshots are needed")
    steps = np.diff(times)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-6, atol=0):
        raise ParameterError("CSI snapshots must be uniformly sampled in time")
    return float(steps.mean())


def stft_csi(
    csi_series: Sequence[CsiMatrix],
    window_s: float,
    hop_s: float,
    *,
    antenna: int = 0,
    group: int | None = None,
    subtract_mean: bool = False,
    window: Window = "rect",
) -> DopplerSpectrogram:
    """Compute a spectrogram from CSI time series with a short-time Fourier transform.

    The stationary component stays in the zero bin unless ``subtract_mean`` removes
    the mean of every window, which is what limits STFT-on-CSI at separating moving
    reflections from static ones.

    :param csi_series: Snapshots, uniformly spaced in time
    :param window_s: The window length
    :param hop_s: The hop between windows
    :param antenna: The receive antenna
    :param group: One subcarrier group, or None to average the magnitudes over all groups
    :param subtract_mean: Remove each window's mean before the transform
    :param window: The taper
    :raises ParameterError: if the snapshots are not uniformly sampled
    :raises RangeError: if the window is longer than the series
    """
    times = np.array([snapshot.timestamp_s for snapshot in csi_series], dtype=np.float64)
    fs = 1.0 / _check_uniform(times)
    series = np.stack([snapshot.entries[antenna] for snapshot in csi_series])
    if group is not None:
        series = series[:, [group]]
    nperseg = round(window_s * fs)
    hop = max(1, round(hop_s * fs))
    if not 1 <= nperseg <= times.size:
        raise RangeError(f"a {window_s} s window does not fit in {times.size} snapshots")
    if hop > nperseg:
        raise ParameterError("hop_s must not exceed window_s")

    frequencies, offsets, transform = scipy.signal.stft(
        series.T,
        fs=fs,
        window=_SCIPY_WINDOWS[window],
        nperseg=nperseg,
        noverlap=nperseg - hop,
        detrend="constant" if subtract_mean else False,
        return_onesided=False,
        boundary=None,
        padded=False,
    )
    power = np.mean(np.abs(transform) ** 2, axis=0)
    frequencies = np.fft.fftshift(frequencies)
    power = np.fft.fftshift(power, axes=0)
    if nperseg % 2 == 0:
        # the Nyquist bin has no positive twin
        frequencies, power = frequencies[1:], power[1:]
    return DopplerSpectrogram(
        magnitudes=power.T,
        batch_times_s=times[0] + offsets,
        doppler_axis_hz=frequencies,
        resolution_hz=fs / nperseg,
    )


def doppler_envelope(
    spec: DopplerSpectrogram, exclude_hz: float = 1.0, normalizer: float | None = None
) -> ActivityEnvelope:
    """Get the per-batch activity intensity of a spectrogram.

    Intensity is the energy outside the zero-Doppler band of ``±exclude_hz`` divided by
    the normalizer and clipped to [0, 1].

    :param spec: The spectrogram
    :param exclude_hz: The half-width of the excluded band around zero Doppler
    :param normalizer: A fixed energy that maps to full intensity, so traces from
        different days are comparable. When None, the trace maximum is used.
    :raises ParameterError: if the band covers the whole Doppler axis or the
        normalizer is not positive
    """
    if not 0 <= exclude_hz < float(np.max(np.abs(spec.doppler_axis_hz))):
        raise ParameterError("exclude_hz must be non-negative and below the largest Doppler bin")
    energy = spec.off_zero_energy(exclude_hz)
    if normalizer is None:
        scale = float(energy.max(initial=0.0))
    elif normalizer <= 0:
        raise ParameterError("normalizer must be positive")
    else:
        scale = normalizer
    intensity = np.zeros_like(energy) if scale == 0 else np.clip(energy / scale, 0.0, 1.0)
    return ActivityEnvelope(times_s=spec.batch_times_s, intensity=intensity)
