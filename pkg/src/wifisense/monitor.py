"""Long-horizon activity monitoring.

Per-epoch activity intensity is binned into sedentary, moderate, and vigorous minutes,
and sequences of classifier outputs are smoothed with a hidden Markov model whose
transitions encode which activities can follow which.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping, Sequence

import numpy as np
import numpy.typing as npt
import scipy.special
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator

from .arrays import FloatArray
from .channel import GestureLabel
from .doppler import ActivityEnvelope
from .exceptions import NumericalError, ParameterError

__all__ = [
    "IDLE",
    "ActivitySummary",
    "IntensityTrace",
    "MonitorConfig",
    "TransitionModel",
    "build_transitions",
    "default_transition_model",
    "forward_backward",
    "intensity_from_envelope",
    "sample_sequence",
    "src_to_emission",
    "summarize",
    "table_one_trace",
    "viterbi",
]

logger = logging.getLogger(__name__)

#: The state between gestures
IDLE = "idle"


class MonitorConfig(BaseModel):
    """Parameters of activity monitoring."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    t1: float = Field(0.4, description="Lower bound of moderate intensity")
    t2: float = Field(0.7, description="Lower bound of vigorous intensity")
    epoch_len_s: PositiveFloat = 60.0
    beta: PositiveFloat = Field(5.0, description="Temperature turning residuals into emissions")
    idle_gap_s: PositiveFloat = Field(
        60.0, description="Shortest pause between detections that counts as an idle frame"
    )
    exclude_hz: float = Field(1.0, ge=0.0)
    normalizer: PositiveFloat | None = Field(
        None, description="Fixed envelope normalizer, or None for the trace maximum"
    )

    @model_validator(mode="after")
    def _check(self) -> MonitorConfig:
        _check_thresholds(self.t1, self.t2)
        return self


def _check_thresholds(t1: float, t2: float) -> None:
    if not 0 < t1 < t2 < 1:
        raise ParameterError(f"thresholds must satisfy 0 < t1 < t2 < 1, got {t1} and {t2}")


class IntensityTrace(BaseModel):
    """Activity intensity per contiguous epoch."""

    model_config = ConfigDict(frozen=True)

    t_start_s: FloatArray
    intensity: FloatArray
    epoch_len_s: PositiveFloat = 60.0

    @model_validator(mode="after")
    def _check(self) -> IntensityTrace:
        if self.t_start_s.ndim != 1 or self.t_start_s.shape != self.intensity.shape:
            raise ValueError("t_start_s and intensity must be aligned vectors")
        if np.any(self.intensity < 0) or np.any(self.intensity > 1):
            raise ValueError("intensity must be in [0, 1]")
        if not np.allclose(np.diff(self.t_start_s), self.epoch_len_s):
            raise ValueError("epochs must be contiguous and ordered")
        return self

    @property
    def n_epochs(self) -> int:
        """Get the number of epochs."""
        return int(self.intensity.size)

    @property
    def minutes(self) -> float:
        """Get the observed duration in minutes."""
        return self.n_epochs * self.epoch_len_s / 60.0


class ActivitySummary(BaseModel):
    """Minutes spent per activity level.

    ``total_active_minutes`` counts every observed minute, sedentary ones included.
    The ``*_excluding_longest_minutes`` fields leave out the longest unbroken
    sedentary run, which over a day is usually sleep.
    """

    model_config = ConfigDict(frozen=True)

    sedentary_minutes: float
    moderate_minutes: float
    vigorous_minutes: float
    total_active_minutes: float
    active_minutes: float = Field(..., description="Moderate plus vigorous minutes")
    longest_sedentary_minutes: float
    sedentary_excluding_longest_minutes: float
    total_excluding_longest_minutes: float
    thresholds: tuple[float, float]
    epoch_len_s: float


class TransitionModel(BaseModel):
    """Row-stochastic transitions between activity states."""

    model_config = ConfigDict(frozen=True)

    states: list[str]
    probabilities: FloatArray
    forbidden: list[tuple[str, str]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check(self) -> TransitionModel:
        n = len(self.states)
        if len(set(self.states)) != n:
            raise ValueError("states must be distinct")
        if self.probabilities.shape != (n, n):
            raise ValueError("probabilities must be a square matrix over the states")
        if np.any(self.probabilities < 0) or not np.allclose(
            self.probabilities.sum(axis=1), 1.0, rtol=0, atol=1e-9
        ):
            raise ValueError("rows must be probability distributions")
        for source, target in self.forbidden:
            if self.probabilities[self.index(source), self.index(target)] != 0:
                raise ValueError(f"forbidden transition {source} -> {target} is not zero")
        return self

    @property
    def n_states(self) -> int:
        """Get the number of states."""
        return len(self.states)

    def index(self, state: str) -> int:
        """Get the index of a state.

        :raises ParameterError: if the state is unknown
        """
        try:
            return self.states.index(state)
        except ValueError:
            raise ParameterError(f"unknown state: {state}") from None


def _runs_of(mask: npt.NDArray[np.bool_]) -> npt.NDArray[np.int64]:
    edges = np.diff(np.r_[0, mask.astype(np.int8), 0])
    return np.flatnonzero(edges == -1) - np.flatnonzero(edges == 1)


def summarize(
    trace: IntensityTrace, t1: float = 0.4, t2: float = 0.7
) -> ActivitySummary:
    """Bin epochs into ``[0, t1)`` sedentary, ``[t1, t2)`` moderate, and ``[t2, 1]`` vigorous.

    :raises ParameterError: if the trace is empty or the thresholds are not ordered in (0, 1)
    """
    _check_thresholds(t1, t2)
    if trace.n_epochs == 0:
        raise ParameterError("cannot summarize an empty trace")
    scale = trace.epoch_len_s / 60.0
    intensity = trace.intensity
    sedentary = intensity < t1
    vigorous = intensity >= t2
    n_sedentary = int(sedentary.sum())
    n_vigorous = int(vigorous.sum())
    n_moderate = trace.n_epochs - n_sedentary - n_vigorous
    longest = int(_runs_of(sedentary).max(initial=0))
    return ActivitySummary(
        sedentary_minutes=n_sedentary * scale,
        moderate_minutes=n_moderate * scale,
        vigorous_minutes=n_vigorous * scale,
        total_active_minutes=trace.n_epochs * scale,
        active_minutes=(n_moderate + n_vigorous) * scale,
        longest_sedentary_minutes=longest * scale,
        sedentary_excluding_longest_minutes=(n_sedentary - longest) * scale,
        total_excluding_longest_minutes=(trace.n_epochs - longest) * scale,
        thresholds=(t1, t2),
        epoch_len_s=trace.epoch_len_s,
    )


def intensity_from_envelope(
    envelope: ActivityEnvelope,
    epoch_len_s: float = 60.0,
    *,
    start_s: float = 0.0,
    duration_s: float | None = None,
) -> IntensityTrace:
    """Average batch intensities per epoch. Epochs without batches read zero.

    :param envelope: Per-batch intensity
    :param epoch_len_s: The epoch length
    :param start_s: The start of the first epoch
    :param duration_s: The observed duration, defaulting to the span of the batches
    """
    if epoch_len_s <= 0:
        raise ParameterError("epoch_len_s must be positive")
    times = envelope.times_s
    if duration_s is None:
        last = float(times.max()) if times.size else start_s
        n_epochs = math.floor((last - start_s) / epoch_len_s) + 1
    else:
        n_epochs = max(1, math.ceil(duration_s / epoch_len_s - 1e-9))
    index = np.floor((times - start_s) / epoch_len_s).astype(np.int64)
    keep = (index >= 0) & (index < n_epochs)
    sums = np.bincount(index[keep], weights=envelope.intensity[keep], minlength=n_epochs)
    counts = np.bincount(index[keep], minlength=n_epochs)
    means = np.divide(sums, counts, out=np.zeros(n_epochs), where=counts > 0)
    return IntensityTrace(
        t_start_s=start_s + epoch_len_s * np.arange(n_epochs),
        intensity=np.clip(means, 0.0, 1.0),
        epoch_len_s=epoch_len_s,
    )


def table_one_trace() -> IntensityTrace:
    """Get a 902 minute day of 30 second epochs with a known activity breakdown.

    It holds 662.5 sedentary minutes, 540 of them in one sleep block, 156.5 moderate
    minutes, and 83 vigorous minutes.

    >>> summary = summarize(table_one_trace())
    >>> summary.sedentary_minutes, summary.total_excluding_longest_minutes
    (662.5, 362.0)
    """
    blocks = [(1080, 0.05), (313, 0.55), (245, 0.2), (166, 0.85)]
    intensity = np.concatenate([np.full(count, level) for count, level in blocks])
    return IntensityTrace(
        t_start_s=30.0 * np.arange(intensity.size), intensity=intensity, epoch_len_s=30.0
    )


def build_transitions(
    states: Sequence[str],
    counts: npt.ArrayLike | None = None,
    forbidden: Iterable[tuple[str, str]] = (),
) -> TransitionModel:
    """Row-normalize prior transition counts after zeroing forbidden pairs.

    >>> build_transitions(["a", "b", "c"], [[2, 1, 1], [1, 1, 1], [1, 1, 1]]).probabilities[0]
    array([0.5 , 0.25, 0.25])

    :param states: The state names
    :param counts: Non-negative prior counts, defaulting to uniform
    :param forbidden: Pairs of (from, to) states that can not follow each other
    :raises ParameterError: if a pair names an unknown state or a row has no allowed entry
    """
    states = list(states)
    n = len(states)
    matrix = np.ones((n, n)) if counts is None else np.array(counts, dtype=np.float64)
    if matrix.shape != (n, n) or np.any(matrix < 0) or not np.all(np.isfinite(matrix)):
        raise ParameterError("counts must be a non-negative square matrix over the states")
    pairs = list(forbidden)
    for source, target in pairs:
        if source not in states or target not in states:
            raise ParameterError(f"forbidden pair ({source}, {target}) names an unknown state")
        matrix[states.index(source), states.index(target)] = 0.0
    totals = matrix.sum(axis=1)
    if np.any(totals == 0):
        empty = [states[i] for i in np.flatnonzero(totals == 0)]
        raise ParameterError(f"no allowed transition out of {empty}")
    return TransitionModel(
        states=states, probabilities=matrix / totals[:, np.newaxis], forbidden=pairs
    )


def default_transition_model() -> TransitionModel:
    """Get the gesture and idle model with sticky priors.

    Sitting down can not be followed by getting out of bed, a fall can not be followed
    by a normal stand-up, and standing up after a fall needs a fall first.
    """
    states = [label.value for label in GestureLabel] + [IDLE]
    counts = np.ones((len(states), len(states))) + 7 * np.eye(len(states))
    counts[:, -1] += 4
    counts[-1, :] += 2
    forbidden = [
        (GestureLabel.sit_down.value, GestureLabel.out_of_bed.value),
        (GestureLabel.fall.value, GestureLabel.stand_up.value),
        (GestureLabel.stand_up.value, GestureLabel.stand_after_fall.value),
    ]
    return build_transitions(states, counts, forbidden)


def src_to_emission(
    residuals: Mapping[object, float] | npt.ArrayLike, beta: float = 5.0
) -> npt.NDArray[np.float64]:
    """Turn per-class residuals into log-likelihoods with a softmax at temperature ``beta``.

    >>> np.exp(src_to_emission([0.0, 1.0])).round(4)
    array([0.9933, 0.0067])
    """
    values = np.asarray(
        list(residuals.values()) if isinstance(residuals, Mapping) else residuals,
        dtype=np.float64,
    )
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise ParameterError("residuals must be finite and non-negative")
    return np.asarray(scipy.special.log_softmax(-beta * values), dtype=np.float64)


def _log_inputs(
    emissions: npt.ArrayLike, model: TransitionModel, initial: npt.ArrayLike
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    log_emissions = np.asarray(emissions, dtype=np.float64)
    start = np.asarray(initial, dtype=np.float64)
    if log_emissions.ndim != 2 or log_emissions.shape[1] != model.n_states:
        raise ParameterError("emissions must be frames x states")
    if log_emissions.shape[0] == 0:
        raise ParameterError("emissions have no frames")
    if start.shape != (model.n_states,) or np.any(start < 0) or abs(start.sum() - 1) > 1e-9:
        raise ParameterError("initial must be a distribution over the states")
    if np.any(np.all(np.isneginf(log_emissions), axis=1)):
        raise ParameterError("a frame has zero likelihood under every state")
    with np.errstate(divide="ignore"):
        return log_emissions, np.log(model.probabilities), np.log(start)


def viterbi(
    emissions: npt.ArrayLike, model: TransitionModel, initial: npt.ArrayLike
) -> list[str]:
    """Get the most probable state path by dynamic programming in the log domain.

    Ties go to the lower state index.

    :param emissions: Log-likelihoods, frames x states
    :param model: The transitions
    :param initial: The distribution of the first state
    :raises ParameterError: if shapes disagree or a frame is impossible under every state
    :raises NumericalError: if no path has non-zero probability
    """
    log_emissions, log_transitions, log_initial = _log_inputs(emissions, model, initial)
    n_frames = log_emissions.shape[0]
    score = log_initial + log_emissions[0]
    back = np.zeros((n_frames, model.n_states), dtype=np.int64)
    for frame in range(1, n_frames):
        candidates = score[:, np.newaxis] + log_transitions
        back[frame] = np.argmax(candidates, axis=0)
        score = candidates[back[frame], np.arange(model.n_states)] + log_emissions[frame]
    if np.all(np.isneginf(score)):
        raise NumericalError("every state path has zero probability")
    path = [int(np.argmax(score))]
    for frame in range(n_frames - 1, 0, -1):
        path.append(int(back[frame, path[-1]]))
    return [model.states[index] for index in reversed(path)]


def forward_backward(
    emissions: npt.ArrayLike, model: TransitionModel, initial: npt.ArrayLike
) -> npt.NDArray[np.float64]:
    """Get the posterior probability of each state per frame given all frames.

    :raises NumericalError: if no path has non-zero probability
    """
    log_emissions, log_transitions, log_initial = _log_inputs(emissions, model, initial)
    n_frames = log_emissions.shape[0]
    alpha = np.empty_like(log_emissions)
    beta = np.zeros_like(log_emissions)
    alpha[0] = log_initial + log_emissions[0]
    with np.errstate(divide="ignore"):
        for frame in range(1, n_frames):
            alpha[frame] = (
                scipy.special.logsumexp(alpha[frame - 1][:, np.newaxis] + log_transitions, axis=0)
                + log_emissions[frame]
            )
        for frame in range(n_frames - 2, -1, -1):
            beta[frame] = scipy.special.logsumexp(
                log_transitions + log_emissions[frame + 1] + beta[frame + 1], axis=1
            )
        joint = alpha + beta
        evidence = scipy.special.logsumexp(joint, axis=1, keepdims=True)
    if np.any(np.isneginf(evidence)):
        raise NumericalError("every state path has zero probability")
    return np.exp(joint - evidence)


def sample_sequence(
    model: TransitionModel, initial: npt.ArrayLike, n_frames: int, seed: int
) -> list[str]:
    """Draw a state sequence from the model."""
    if n_frames < 1:
        raise ParameterError("n_frames must be positive")
    rng = np.random.default_rng(seed)
    state = int(rng.choice(model.n_states, p=np.asarray(initial, dtype=np.float64)))
    path = [state]
    for _ in range(n_frames - 1):
        state = int(rng.choice(model.n_states, p=model.probabilities[state]))
        path.append(state)
    return [model.states[index] for index in path]
