"""802.11-style OFDM waveform synthesis and CSI estimation.

Waveforms are complex baseband only. The carrier frequency is metadata used for
wavelength and Doppler arithmetic; no RF upconversion is modelled.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from typing import Any

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator

from .arrays import ComplexArray
from .exceptions import ConfigurationError, ParameterError, ShapeError, UndefinedDivisionError

__all__ = [
    "SPEED_OF_LIGHT",
    "CsiMatrix",
    "IqTrace",
    "WaveformConfig",
    "beacon_schedule",
    "estimate_csi",
    "gen_beacon_train",
    "gen_ofdm_burst",
    "gen_ofdm_stream",
    "group_offsets",
    "preamble_spectrum",
    "subcarrier_offsets",
    "symbol_spectrum",
]

logger = logging.getLogger(__name__)

#: The speed of light in vacuum, in m/s
SPEED_OF_LIGHT = 299_792_458.0

#: Pilot polarity on the four 802.11 pilot subcarriers
PILOT_POLARITY = (1.0, 1.0, 1.0, -1.0)

#: Seed of the fixed BPSK training sequence. It is independent of every run seed
#: so receivers can regenerate the preamble.
_PREAMBLE_SEED = 80211

_QPSK = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j], dtype=np.complex128) / math.sqrt(2.0)

#: Count tolerance so that e.g. 10 symbol durations divided by one symbol duration
#: is not floored to 9 by rounding
_COUNT_EPS = 1e-9


class WaveformConfig(BaseModel):
    """OFDM numerology and beacon cadence.

    The defaults mirror 802.11a/g/n at 20 MHz: 64 subcarriers of which 52 are active,
    four pilots, and a cyclic prefix of a quarter symbol.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    carrier_hz: PositiveFloat = 2.4e9
    bandwidth_hz: float = 20e6
    n_subcarriers: int = 64
    n_active: int = 52
    pilot_offsets: tuple[int, ...] = (-21, -7, 7, 21)
    cyclic_prefix_fraction: float = Field(0.25, ge=0.0, lt=1.0)
    sample_rate_hz: float = 20e6
    beacon_interval_s: float = 0.1
    burst_duration_s: float = 8e-6

    @model_validator(mode="after")
    def _check_numerology(self) -> WaveformConfig:
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if self.sample_rate_hz < self.bandwidth_hz:
            raise ValueError("sample_rate_hz must be at least bandwidth_hz")
        if self.n_active % 2 or not 0 < self.n_active < self.n_subcarriers:
            raise ValueError("n_active must be even and smaller than n_subcarriers")
        half = self.n_active // 2
        if len(set(self.pilot_offsets)) != len(self.pilot_offsets) or any(
            offset == 0 or abs(offset) > half for offset in self.pilot_offsets
        ):
            raise ValueError("pilot offsets must be distinct active subcarriers")
        if not 0 < self.burst_duration_s < self.beacon_interval_s:
            raise ValueError("burst_duration_s must be positive and shorter than the interval")
        return self

    @classmethod
    def sensing(cls, sample_rate_hz: float = 500.0, carrier_hz: float = 2.4e9) -> WaveformConfig:
        """Get a scaled-baseband preset for desk-scale simulation.

        The bandwidth equals the sample rate so that minutes of signal stay small.
        A beacon burst of two symbols no longer fits in 100 ms at such rates, so the
        beacon interval is stretched to ten burst durations.
        """
        burst = 2 * (64 * 1.25) / sample_rate_hz
        return cls(
            carrier_hz=carrier_hz,
            bandwidth_hz=sample_rate_hz,
            sample_rate_hz=sample_rate_hz,
            burst_duration_s=burst,
            beacon_interval_s=max(0.1, 10 * burst),
        )

    @property
    def wavelength_m(self) -> float:
        """Get the carrier wavelength in meters."""
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def n_fft(self) -> int:
        """Get the IFFT size, which oversamples the subcarrier grid to the sample rate."""
        return round(self.n_subcarriers * self.sample_rate_hz / self.bandwidth_hz)

    @property
    def cyclic_prefix_length(self) -> int:
        """Get the cyclic prefix length in samples."""
        return round(self.n_fft * self.cyclic_prefix_fraction)

    @property
    def symbol_length(self) -> int:
        """Get the length of one OFDM symbol, cyclic prefix included, in samples."""
        return self.n_fft + self.cyclic_prefix_length

    @property
    def symbol_duration_s(self) -> float:
        """Get the duration of one OFDM symbol in seconds."""
        return self.symbol_length / self.sample_rate_hz

    @property
    def subcarrier_spacing_hz(self) -> float:
        """Get the subcarrier spacing in Hz."""
        return self.sample_rate_hz / self.n_fft


class IqTrace(BaseModel):
    """A complex baseband sample stream with its timing metadata."""

    model_config = ConfigDict(frozen=True)

    samples: ComplexArray
    sample_rate_hz: PositiveFloat
    carrier_hz: PositiveFloat
    t0_s: float = 0.0

    @model_validator(mode="after")
    def _check_samples(self) -> IqTrace:
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ValueError("samples must be a non-empty one-dimensional array")
        return self

    @property
    def n_samples(self) -> int:
        """Get the number of samples."""
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        """Get the duration, i.e., the number of samples over the sample rate."""
        return self.n_samples / self.sample_rate_hz

    @property
    def times_s(self) -> npt.NDArray[np.float64]:
        """Get the time stamp of each sample."""
        return self.t0_s + np.arange(self.n_samples) / self.sample_rate_hz

    @property
    def wavelength_m(self) -> float:
        """Get the carrier wavelength in meters."""
        return SPEED_OF_LIGHT / self.carrier_hz

    def with_samples(self, samples: npt.ArrayLike) -> IqTrace:
        """Get a trace with the same metadata and new samples."""
        return IqTrace(
            samples=samples,
            sample_rate_hz=self.sample_rate_hz,
            carrier_hz=self.carrier_hz,
            t0_s=self.t0_s,
        )


class CsiMatrix(BaseModel):
    """Channel state per receive antenna (rows) and subcarrier group (columns).

    Each entry is :math:`|h_{ij}| e^{j \\phi_{ij}}`.
    """

    model_config = ConfigDict(frozen=True)

    entries: ComplexArray
    timestamp_s: float = 0.0

    @model_validator(mode="after")
    def _check_entries(self) -> CsiMatrix:
        if self.entries.ndim != 2 or 0 in self.entries.shape:
            raise ValueError("entries must be a non-empty antenna x group matrix")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("entries must be finite")
        return self

    @property
    def n_antennas(self) -> int:
        """Get the number of receive antennas."""
        return int(self.entries.shape[0])

    @property
    def n_groups(self) -> int:
        """Get the number of subcarrier groups."""
        return int(self.entries.shape[1])

    @property
    def amplitude(self) -> npt.NDArray[np.float64]:
        """Get :math:`|h_{ij}|`."""
        return np.abs(self.entries)

    @property
    def phase(self) -> npt.NDArray[np.float64]:
        """Get :math:`\\phi_{ij}` in radians, wrapped to :math:`(-\\pi, \\pi]`."""
        return np.angle(self.entries)


def subcarrier_offsets(config: WaveformConfig) -> npt.NDArray[np.int64]:
    """Get the signed indices of the active subcarriers, DC excluded, in ascending order."""
    half = config.n_active // 2
    return np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)]).astype(np.int64)


def group_offsets(config: WaveformConfig, n_groups: int = 30) -> npt.NDArray[np.float64]:
    """Get the mean subcarrier index of each group of adjacent active subcarriers."""
    return np.array(
        [chunk.mean() for chunk in np.array_split(subcarrier_offsets(config), n_groups)]
    )


def preamble_spectrum(config: WaveformConfig) -> npt.NDArray[np.complex128]:
    """Get the fixed BPSK training symbol on the active subcarriers."""
    rng = np.random.default_rng(_PREAMBLE_SEED)
    return rng.choice([-1.0, 1.0], size=config.n_active).astype(np.complex128)


def _data_spectra(
    config: WaveformConfig, n_symbols: int, rng: np.random.Generator
) -> npt.NDArray[np.complex128]:
    offsets = subcarrier_offsets(config)
    spectra = _QPSK[rng.integers(0, 4, size=(n_symbols, offsets.size))]
    polarity = np.resize(np.asarray(PILOT_POLARITY), len(config.pilot_offsets))
    for offset, value in zip(config.pilot_offsets, polarity, strict=True):
        spectra[:, np.searchsorted(offsets, offset)] = value
    return spectra


def _modulate(
    config: WaveformConfig, spectra: npt.NDArray[np.complex128]
) -> npt.NDArray[np.complex128]:
    grid = np.zeros((spectra.shape[0], config.n_fft), dtype=np.complex128)
    grid[:, subcarrier_offsets(config) % config.n_fft] = spectra
    bodies = np.fft.ifft(grid, axis=1)
    cp = config.cyclic_prefix_length
    symbols = np.concatenate([bodies[:, config.n_fft - cp :], bodies], axis=1)
    return symbols.ravel()


def _trace(samples: npt.NDArray[np.complex128], config: WaveformConfig) -> IqTrace:
    return IqTrace(
        samples=samples, sample_rate_hz=config.sample_rate_hz, carrier_hz=config.carrier_hz
    )


def _unit_power(samples: npt.NDArray[np.complex128]) -> npt.NDArray[np.complex128]:
    return samples / math.sqrt(float(np.mean(np.abs(samples) ** 2)))


def _symbol_count(duration_s: float, config: WaveformConfig) -> int:
    return math.floor(duration_s / config.symbol_duration_s + _COUNT_EPS)


def gen_ofdm_burst(config: WaveformConfig, seed: int) -> IqTrace:
    """Generate one burst of OFDM data symbols lasting ``config.burst_duration_s``.

    :param config: The numerology; the burst holds as many whole symbols as fit.
    :param seed: Seeds the QPSK data subcarriers. Pilots are fixed.
    :returns: A trace with unit mean power
    :raises ConfigurationError: if the burst is shorter than one symbol
    """
    n_symbols = _symbol_count(config.burst_duration_s, config)
    if n_symbols < 1:
        raise ConfigurationError(
            f"burst of {config.burst_duration_s} s is shorter than one "
            f"{config.symbol_duration_s} s symbol"
        )
    rng = np.random.default_rng(seed)
    samples = _unit_power(_modulate(config, _data_spectra(config, n_symbols, rng)))
    return _trace(samples, config)


def gen_ofdm_stream(config: WaveformConfig, duration_s: float, seed: int) -> IqTrace:
    """Generate a continuous data transmission of whole OFDM symbols.

    :raises ParameterError: if the duration is shorter than one symbol
    """
    n_symbols = _symbol_count(duration_s, config)
    if n_symbols < 1:
        raise ParameterError(f"duration {duration_s} s is shorter than one OFDM symbol")
    rng = np.random.default_rng(seed)
    samples = _unit_power(_modulate(config, _data_spectra(config, n_symbols, rng)))
    logger.debug("generated %d OFDM symbols (%d samples)", n_symbols, samples.size)
    return _trace(samples, config)


def beacon_schedule(config: WaveformConfig, duration_s: float) -> npt.NDArray[np.float64]:
    """Get the start times of the beacon bursts within a transmission.

    >>> beacon_schedule(WaveformConfig(), 1.0).size
    10
    """
    if duration_s <= 0:
        raise ParameterError("duration_s must be positive")
    count = math.ceil(duration_s / config.beacon_interval_s - _COUNT_EPS)
    return config.beacon_interval_s * np.arange(count, dtype=np.float64)


def gen_beacon_train(config: WaveformConfig, duration_s: float, seed: int) -> IqTrace:
    """Generate beacon bursts at ``config.beacon_interval_s`` spacing with silence between.

    Each burst is the preamble symbol followed by data symbols filling
    ``config.burst_duration_s``, with at least one data symbol. Each burst is
    normalized to unit mean power on its own.
    """
    starts = beacon_schedule(config, duration_s)
    n_samples = round(duration_s * config.sample_rate_hz)
    samples = np.zeros(n_samples, dtype=np.complex128)
    n_symbols = max(2, _symbol_count(config.burst_duration_s, config))
    preamble = preamble_spectrum(config)[np.newaxis, :]
    rng = np.random.default_rng(seed)
    for start in starts:
        spectra = np.concatenate([preamble, _data_spectra(config, n_symbols - 1, rng)])
        burst = _unit_power(_modulate(config, spectra))
        index = round(start * config.sample_rate_hz)
        stop = min(n_samples, index + burst.size)
        samples[index:stop] = burst[: stop - index]
    logger.debug("generated %d beacon bursts over %.3f s", starts.size, duration_s)
    return _trace(samples, config)


def symbol_spectrum(symbol: IqTrace, config: WaveformConfig) -> npt.NDArray[np.complex128]:
    """Get the active-subcarrier values of one received or transmitted OFDM symbol.

    :raises ShapeError: if the trace does not hold exactly one symbol
    """
    if symbol.n_samples != config.symbol_length:
        raise ShapeError(
            f"expected one {config.symbol_length}-sample symbol, got {symbol.n_samples} samples"
        )
    body = symbol.samples[config.cyclic_prefix_length :]
    return np.fft.fft(body)[subcarrier_offsets(config) % config.n_fft]


def estimate_csi(
    received_symbol: IqTrace | Sequence[IqTrace],
    config: WaveformConfig,
    pilots: IqTrace | npt.ArrayLike,
    *,
    n_groups: int = 30,
    timestamp_s: float | None = None,
) -> CsiMatrix:
    """Estimate CSI from one received OFDM symbol per antenna.

    :param received_symbol: One trace per receive antenna, each exactly one symbol long
    :param config: The numerology the symbol was sent with
    :param pilots: The known transmitted symbol, either as a trace or as its values on
        the active subcarriers (see :func:`symbol_spectrum` and :func:`preamble_spectrum`)
    :param n_groups: The number of groups of adjacent active subcarriers to average.
        Pass ``config.n_active`` for per-subcarrier CSI.
    :param timestamp_s: The time stamp of the estimate, defaulting to the first trace's start
    :returns: An antenna x group matrix of received over transmitted values
    :raises ShapeError: if a trace is not one symbol long or the pilots have the wrong size
    :raises UndefinedDivisionError: if a transmitted value is zero
    :raises ParameterError: if the group count is outside ``[1, n_active]``
    """
    traces = [received_symbol] if isinstance(received_symbol, IqTrace) else list(received_symbol)
    if not traces:
        raise ShapeError("at least one received symbol is required")
    if not 1 <= n_groups <= config.n_active:
        raise ParameterError(f"n_groups must be in [1, {config.n_active}]")
    reference = _reference_values(pilots, config)
    if np.any(reference == 0):
        raise UndefinedDivisionError("transmitted symbol has a zero on an active subcarrier")
    rows = []
    for trace in traces:
        ratio = symbol_spectrum(trace, config) / reference
        rows.append([chunk.mean() for chunk in np.array_split(ratio, n_groups)])
    return CsiMatrix(
        entries=np.array(rows, dtype=np.complex128),
        timestamp_s=traces[0].t0_s if timestamp_s is None else timestamp_s,
    )


def _reference_values(pilots: Any, config: WaveformConfig) -> npt.NDArray[np.complex128]:
    if isinstance(pilots, IqTrace):
        return symbol_spectrum(pilots, config)
    reference = np.asarray(pilots, dtype=np.complex128)
    if reference.shape != (config.n_active,):
        raise ShapeError(f"expected {config.n_active} pilot values, got shape {reference.shape}")
    return reference
