"""Respiration rate from the phase of cross-correlated reference and surveillance signals."""

from __future__ import annotations

import logging
import math

import numpy as np
import numpy.typing as npt
import scipy.signal
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, computed_field, model_validator

from .arrays import FloatArray
from .exceptions import ParameterError, RangeError, ShapeError
from .waveform import IqTrace

__all__ = [
    "MAD_SCALE",
    "PhaseTrace",
    "RespirationConfig",
    "RespirationEstimate",
    "RespirationReport",
    "detect_respiration",
    "estimate_rate",
    "extract_phase",
    "hampel",
    "phase_sensitivity",
]

logger = logging.getLogger(__name__)

#: Scales the median absolute deviation to a Gaussian-consistent standard deviation
MAD_SCALE = 1.4826

#: The minimum number of samples coherently summed per epoch
MIN_EPOCH_SAMPLES = 10

#: Periodogram zero-padding factor
ZERO_PADDING = 8

#: In-band periodogram peaks at or below this are treated as silence
POWER_FLOOR = 1e-18

Band = tuple[float, float]


class RespirationConfig(BaseModel):
    """Parameters of the respiration pipeline."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epoch_s: PositiveFloat = 0.1
    hampel_window: int = Field(11, ge=3)
    hampel_k: PositiveFloat = 3.0
    band_hz: Band = (0.1, 0.5)

    @model_validator(mode="after")
    def _check(self) -> RespirationConfig:
        if self.hampel_window % 2 == 0:
            raise ValueError("hampel_window must be odd")
        _check_band(self.band_hz)
        return self


def _check_band(band: Band) -> None:
    lo, hi = band
    if not 0 < lo < hi:
        raise ParameterError(f"band must satisfy 0 < f_lo < f_hi, got {band}")


class PhaseTrace(BaseModel):
    """Unwrapped phase, one sample per epoch."""

    model_config = ConfigDict(frozen=True)

    phase_rad: FloatArray
    epoch_s: PositiveFloat
    t0_s: float = 0.0

    @model_validator(mode="after")
    def _check_phase(self) -> PhaseTrace:
        if self.phase_rad.ndim != 1:
            raise ValueError("phase_rad must be one-dimensional")
        if not np.all(np.isfinite(self.phase_rad)):
            raise ValueError("phase_rad must be finite")
        return self

    @property
    def times_s(self) -> npt.NDArray[np.float64]:
        """Get the center time of each epoch."""
        return self.t0_s + (np.arange(self.phase_rad.size) + 0.5) * self.epoch_s

    @property
    def duration_s(self) -> float:
        """Get the covered duration."""
        return self.phase_rad.size * self.epoch_s

    def with_phase(self, phase_rad: npt.ArrayLike) -> PhaseTrace:
        """Get a trace with the same timing and new values."""
        return PhaseTrace(phase_rad=phase_rad, epoch_s=self.epoch_s, t0_s=self.t0_s)


class RespirationEstimate(BaseModel):
    """A respiration rate, or a no-detection result with ``rate_hz`` of None."""

    model_config = ConfigDict(frozen=True)

    rate_hz: float | None
    peak_to_peak_rad: float
    band: Band
    detected: bool = True

    @model_validator(mode="after")
    def _check_rate(self) -> RespirationEstimate:
        if self.detected != (self.rate_hz is not None):
            raise ValueError("a detection needs a rate and a no-detection must not have one")
        lo, hi = self.band
        if self.rate_hz is not None and not lo <= self.rate_hz <= hi:
            raise ValueError("rate_hz must lie in the searched band")
        return self

    @computed_field  # type:ignore[prop-decorator]
    @property
    def rate_bpm(self) -> float | None:
        """Get the rate in breaths per minute."""
        return None if self.rate_hz is None else 60.0 * self.rate_hz


class RespirationReport(BaseModel):
    """The phase traces behind a respiration estimate."""

    model_config = ConfigDict(frozen=True)

    raw: PhaseTrace
    filtered: PhaseTrace
    estimate: RespirationEstimate


def phase_sensitivity(displacement_m: float, wavelength_m: float) -> float:
    """Get the phase change caused by a displacement, :math:`2 \\pi d / \\lambda`.

    >>> round(phase_sensitivity(0.005, 0.1249), 4)
    0.2515
    """
    if wavelength_m <= 0:
        raise ParameterError("wavelength_m must be positive")
    if displacement_m < 0:
        raise ParameterError("displacement_m must be non-negative")
    return 2 * math.pi * displacement_m / wavelength_m


def extract_phase(ref: IqTrace, surv: IqTrace, epoch_s: float = 0.1) -> PhaseTrace:
    """Get the unwrapped phase of the reference/surveillance correlation per epoch.

    :param ref: The reference channel
    :param surv: The surveillance channel
    :param epoch_s: The coherent integration time of one phase sample
    :raises ShapeError: if the channels differ in sample rate or length
    :raises ParameterError: if an epoch holds fewer than ten samples
    :raises RangeError: if an epoch is longer than the signal
    """
    if ref.sample_rate_hz != surv.sample_rate_hz or ref.n_samples != surv.n_samples:
        raise ShapeError("reference and surveillance must share sample rate and length")
    length = round(epoch_s * ref.sample_rate_hz)
    if length < MIN_EPOCH_SAMPLES:
        raise ParameterError(f"an epoch must hold at least {MIN_EPOCH_SAMPLES} samples")
    if length > ref.n_samples:
        raise RangeError(f"a {epoch_s} s epoch is longer than the {ref.duration_s} s signal")
    n_epochs = ref.n_samples // length
    product = np.conj(ref.samples[: n_epochs * length]) * surv.samples[: n_epochs * length]
    sums = product.reshape(n_epochs, length).sum(axis=1)
    return PhaseTrace(
        phase_rad=np.unwrap(np.angle(sums)),
        epoch_s=length / ref.sample_rate_hz,
        t0_s=ref.t0_s,
    )


def hampel(trace: PhaseTrace, window: int = 11, k: float = 3.0) -> PhaseTrace:
    """Replace outliers by the median of their window.

    A sample is an outlier when it deviates from its window's median by more than
    ``k`` scaled median absolute deviations. Windows are truncated at the edges.

    :raises ParameterError: if the window is even or smaller than three, or k is not positive
    """
    if window < 3 or window % 2 == 0:
        raise ParameterError("window must be odd and at least 3")
    if k <= 0:
        raise ParameterError("k must be positive")
    values = trace.phase_rad
    half = window // 2
    windows = sliding_window_view(np.pad(values, half, constant_values=np.nan), window)
    median = np.nanmedian(windows, axis=1)
    mad = np.nanmedian(np.abs(windows - median[:, np.newaxis]), axis=1)
    outliers = np.abs(values - median) > k * MAD_SCALE * mad
    logger.debug("hampel replaced %d of %d samples", int(outliers.sum()), values.size)
    return trace.with_phase(np.where(outliers, median, values))


def estimate_rate(trace: PhaseTrace, band: Band = (0.1, 0.5)) -> RespirationEstimate:
    """Estimate the respiration rate as the strongest in-band periodogram peak.

    The zero-mean trace is zero-padded and the peak refined by parabolic
    interpolation. The peak-to-peak phase is taken between the 2nd and 98th
    percentiles.

    :raises ParameterError: if the trace covers fewer than three periods of ``f_lo``
    """
    _check_band(band)
    lo, hi = band
    if trace.duration_s < 3 / lo:
        raise ParameterError(
            f"a {trace.duration_s} s trace is shorter than three periods at {lo} Hz"
        )
    values = trace.phase_rad - trace.phase_rad.mean()
    peak_to_peak = float(np.percentile(values, 98) - np.percentile(values, 2))
    frequencies, power = scipy.signal.periodogram(
        values, fs=1 / trace.epoch_s, nfft=ZERO_PADDING * values.size
    )
    in_band = np.flatnonzero((frequencies >= lo) & (frequencies <= hi))
    if in_band.size == 0 or power[in_band].max() <= POWER_FLOOR:
        logger.debug("no in-band energy, reporting no detection")
        return RespirationEstimate(
            rate_hz=None, peak_to_peak_rad=peak_to_peak, band=band, detected=False
        )
    peak = int(in_band[np.argmax(power[in_band])])
    rate = float(frequencies[peak])
    if 0 < peak < power.size - 1:
        left, center, right = power[peak - 1 : peak + 2]
        curvature = left - 2 * center + right
        if curvature < 0:
            rate += 0.5 * (left - right) / curvature * (frequencies[1] - frequencies[0])
    return RespirationEstimate(
        rate_hz=min(max(rate, lo), hi), peak_to_peak_rad=peak_to_peak, band=band
    )


def detect_respiration(
    ref: IqTrace, surv: IqTrace, config: RespirationConfig | None = None
) -> RespirationReport:
    """Run phase extraction, Hampel filtering, and rate estimation."""
    config = config or RespirationConfig()
    raw = extract_phase(ref, surv, config.epoch_s)
    filtered = hampel(raw, config.hampel_window, config.hampel_k)
    estimate = estimate_rate(filtered, config.band_hz)
    if estimate.detected:
        logger.info("respiration at %.3f Hz (%.1f bpm)", estimate.rate_hz, estimate.rate_bpm)
    return RespirationReport(raw=raw, filtered=filtered, estimate=estimate)
