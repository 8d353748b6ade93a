"""Pipelines that chain simulation, Doppler processing, and inference."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import Any

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field
from sklearn.model_selection import train_test_split
from tqdm.auto import tqdm

from .channel import (
    GESTURE_TEMPLATES,
    JITTER,
    GestureLabel,
    Position,
    ScattererTrack,
    Scene,
    apply_scene,
    gesture_sequence_track,
    gesture_track,
    noise_power_for_snr,
    range_gradient,
    respiration_track,
    static_track,
)
from .config import RunConfig, child_seeds
from .doppler import CafConfig, DopplerSpectrogram, caf_batch
from .exceptions import ParameterError
from .monitor import (
    IDLE,
    TransitionModel,
    build_transitions,
    default_transition_model,
    sample_sequence,
    src_to_emission,
    viterbi,
)
from .recognition import (
    ConfusionReport,
    GestureModel,
    GestureWindow,
    RecognitionConfig,
    build_dictionary,
    confusion,
    cut_window,
    knn_classify,
    pca_fit,
    pca_project,
    segment,
    stack_windows,
)
from .waveform import IqTrace, WaveformConfig, gen_ofdm_stream

__all__ = [
    "Detection",
    "EvaluationReport",
    "GestureClip",
    "LabelRecord",
    "Recording",
    "SensingLayout",
    "Session",
    "classify_spectrogram",
    "evaluate_classifiers",
    "gesture_window_from_clip",
    "simulate_gesture_clip",
    "simulate_respiration",
    "simulate_session",
    "smooth_detections",
    "spectrograms",
    "synthesize_gesture_dataset",
    "train_gesture_model",
]

logger = logging.getLogger(__name__)


class SensingLayout(BaseModel):
    """A room with one access point, a reference receiver, and two surveillance receivers."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tx_pos: Position = (0.0, 0.0, 1.0)
    ref_rx_pos: Position = (0.0, 0.5, 1.0)
    surv_rx_pos: list[Position] = Field(
        default_factory=lambda: [(4.0, 0.0, 1.0), (4.0, 3.0, 1.0)], min_length=1
    )
    anchor: Position = Field((2.5, 1.0, 1.0), description="Where the subject stands")
    torso_reflectivity: float = Field(0.3, ge=0.0, description="Static reflection of the body")
    limb_reflectivity: float = Field(1.0, ge=0.0, description="Reflection of the moving body")
    direct_leakage_db: float | None = 30.0

    def scene(
        self,
        scatterers: Sequence[ScattererTrack],
        *,
        wall_attenuation_db: float = 0.0,
        snr_db: float | None = None,
        seed: int = 0,
    ) -> Scene:
        """Get a scene in this room, with noise set from an SNR if one is given."""
        scene = Scene(
            tx_pos=self.tx_pos,
            ref_rx_pos=self.ref_rx_pos,
            surv_rx_pos=self.surv_rx_pos,
            scatterers=list(scatterers),
            wall_attenuation_db=wall_attenuation_db,
            direct_leakage_db=self.direct_leakage_db,
            seed=seed,
        )
        if snr_db is None:
            return scene
        noise_power = noise_power_for_snr(scene, snr_db)
        return scene.model_copy(update={"noise_power": noise_power})

    def gesture_axis(self) -> npt.NDArray[np.float64]:
        """Get the motion direction that maps gesture templates onto the first receiver."""
        return range_gradient(self.scene([]), self.anchor, 0)

    def chest_axis(self) -> npt.NDArray[np.float64]:
        """Get the unit vector from the transmitter to the subject."""
        direction = np.subtract(self.anchor, self.tx_pos)
        return direction / np.linalg.norm(direction)


class Recording(BaseModel):
    """The reference and surveillance channels of one simulated capture."""

    model_config = ConfigDict(frozen=True)

    ref: IqTrace
    surv: list[IqTrace]


class GestureClip(Recording):
    """A capture of one gesture with idle time before and after."""

    label: GestureLabel
    start_s: float
    end_s: float


class Session(Recording):
    """A long capture of a gesture sequence."""

    events: list[tuple[GestureLabel, float]]


class Detection(BaseModel):
    """A segmented window and its classification."""

    model_config = ConfigDict(frozen=True)

    start_s: float
    end_s: float
    label: GestureLabel
    residuals: dict[GestureLabel, float]
    feature_norm: float = Field(..., description="Norm of the PCA features of the window")

    def record(self) -> dict[str, Any]:
        """Get the JSON line of this detection, with residuals keyed by gesture code."""
        return self.model_dump(mode="json", include={"start_s", "end_s", "label", "residuals"})


class LabelRecord(BaseModel):
    """One line of a label sequence file."""

    model_config = ConfigDict(frozen=True)

    t_start_s: float
    t_end_s: float
    label: str
    smoothed: bool


class EvaluationReport(BaseModel):
    """Holdout accuracy of SRC and k-NN on a gesture dataset."""

    model_config = ConfigDict(frozen=True)

    n_train: int
    n_test: int
    src_accuracy: float
    knn_accuracy: float
    confusion: ConfusionReport


def simulate_respiration(
    layout: SensingLayout,
    waveform: WaveformConfig,
    *,
    duration_s: float = 60.0,
    rate_hz: float = 0.25,
    amplitude_m: float = 0.01,
    wall_attenuation_db: float = 20.0,
    snr_db: float | None = 10.0,
    seed: int = 0,
) -> Recording:
    """Simulate a breathing subject, optionally behind a wall."""
    tx_seed, noise_seed = child_seeds(seed, 2)
    tx = gen_ofdm_stream(waveform, duration_s, tx_seed)
    chest = respiration_track(
        rate_hz,
        amplitude_m,
        layout.anchor,
        tx.duration_s,
        axis=layout.chest_axis(),
        reflectivity=layout.limb_reflectivity,
    )
    scene = layout.scene(
        [chest], wall_attenuation_db=wall_attenuation_db, snr_db=snr_db, seed=noise_seed
    )
    ref, surv = apply_scene(tx, scene)
    return Recording(ref=ref, surv=surv)


def _longest_duration(label: GestureLabel) -> float:
    return JITTER[1] * sum(duration for duration, _ in GESTURE_TEMPLATES[label])


def simulate_gesture_clip(
    layout: SensingLayout,
    waveform: WaveformConfig,
    label: GestureLabel,
    *,
    snr_db: float | None = 10.0,
    lead_s: float = 1.0,
    tail_s: float = 1.0,
    seed: int = 0,
) -> GestureClip:
    """Simulate one gesture in front of a static torso."""
    tx_seed, track_seed, noise_seed = child_seeds(seed, 3)
    limb = gesture_track(
        label,
        lead_s,
        layout.anchor,
        track_seed,
        axis=layout.gesture_axis(),
        reflectivity=layout.limb_reflectivity,
    )
    tx = gen_ofdm_stream(waveform, lead_s + _longest_duration(label) + tail_s, tx_seed)
    span = (0.0, tx.duration_s)
    torso = static_track(layout.anchor, span, reflectivity=layout.torso_reflectivity)
    scene = layout.scene([limb.padded(*span), torso], snr_db=snr_db, seed=noise_seed)
    ref, surv = apply_scene(tx, scene)
    return GestureClip(
        ref=ref, surv=surv, label=label, start_s=limb.t_start, end_s=limb.t_end
    )


def spectrograms(recording: Recording, config: CafConfig | None = None) -> list[DopplerSpectrogram]:
    """Get one CAF spectrogram per surveillance channel."""
    return [caf_batch(recording.ref, surv, config) for surv in recording.surv]


def _cut_all(
    specs: Sequence[DopplerSpectrogram],
    start_s: float,
    end_s: float,
    config: RecognitionConfig,
) -> GestureWindow:
    return stack_windows([cut_window(spec, start_s, end_s, config.window_shape) for spec in specs])


def _overlap(window: GestureWindow, start_s: float, end_s: float) -> float:
    return min(window.end_s, end_s) - max(window.start_s, start_s)


def gesture_window_from_clip(
    clip: GestureClip,
    caf: CafConfig | None = None,
    recognition: RecognitionConfig | None = None,
) -> GestureWindow:
    """Get the labeled, receiver-stacked window of the gesture in a clip.

    The window is the segment overlapping the gesture the most, or the gesture's
    own span if segmentation finds nothing.
    """
    recognition = recognition or RecognitionConfig()
    specs = spectrograms(clip, caf)
    found = segment(
        specs[0],
        recognition.threshold,
        recognition.min_len_s,
        recognition.min_gap_s,
        exclude_hz=recognition.exclude_hz,
        shape=recognition.window_shape,
    )
    start_s, end_s = clip.start_s, clip.end_s
    if found:
        best = max(found, key=lambda window: _overlap(window, clip.start_s, clip.end_s))
        if _overlap(best, clip.start_s, clip.end_s) > 0:
            start_s, end_s = best.start_s, best.end_s
    return _cut_all(specs, start_s, end_s, recognition).with_label(clip.label)


def synthesize_gesture_dataset(
    config: RunConfig,
    *,
    layout: SensingLayout | None = None,
    n_per_class: int | None = None,
    progress: bool = True,
) -> list[GestureWindow]:
    """Simulate labeled gesture windows, the same number for every class."""
    layout = layout or SensingLayout()
    n_per_class = n_per_class or config.demo.n_per_class
    labels = [label for label in GestureLabel for _ in range(n_per_class)]
    seeds = child_seeds(config.seed, len(labels))
    windows = []
    for label, seed in zip(
        tqdm(labels, desc="Simulating gestures", unit="clip", disable=not progress, leave=False),
        seeds,
        strict=True,
    ):
        clip = simulate_gesture_clip(
            layout, config.waveform, label, snr_db=config.demo.snr_db, seed=seed
        )
        windows.append(gesture_window_from_clip(clip, config.caf, config.recognition))
    logger.info("synthesized %d gesture windows", len(windows))
    return windows


def _labels(windows: Sequence[GestureWindow]) -> list[GestureLabel]:
    labels = [window.label for window in windows]
    if any(label is None for label in labels):
        raise ParameterError("every training window needs a label")
    return [GestureLabel(label) for label in labels if label is not None]


def train_gesture_model(
    windows: Sequence[GestureWindow], config: RecognitionConfig | None = None
) -> GestureModel:
    """Fit PCA on labeled windows and build the SRC dictionary from their projections."""
    config = config or RecognitionConfig()
    labels = _labels(windows)
    pca = pca_fit(windows, config.n_components)
    features = [pca_project(pca, window) for window in windows]
    return GestureModel(pca=pca, dictionary=build_dictionary(features, labels), config=config)


def evaluate_classifiers(
    windows: Sequence[GestureWindow],
    config: RecognitionConfig | None = None,
    *,
    holdout_fraction: float = 0.2,
    seed: int = 0,
) -> tuple[GestureModel, EvaluationReport]:
    """Train on a stratified split and compare SRC with k-NN on the held-out windows."""
    config = config or RecognitionConfig()
    labels = _labels(windows)
    train, test = train_test_split(
        list(windows),
        test_size=holdout_fraction,
        stratify=[label.value for label in labels],
        random_state=seed % 2**32,
    )
    model = train_gesture_model(train, config)
    train_features = np.stack([pca_project(model.pca, window).coefficients for window in train])
    train_labels = _labels(train)
    true = _labels(test)
    src_predicted = [model.classify(window).label for window in test]
    knn_predicted = [
        knn_classify(
            pca_project(model.pca, window),
            train_features,
            train_labels,
            k=min(config.knn_k, len(train_labels) - (1 - len(train_labels) % 2)),
        )
        for window in test
    ]
    counts = confusion(true, src_predicted)
    src_accuracy = float(np.trace(counts) / counts.sum())
    knn_accuracy = float(np.mean([a == b for a, b in zip(true, knn_predicted, strict=True)]))
    logger.info("holdout accuracy: SRC %.3f, k-NN %.3f", src_accuracy, knn_accuracy)
    report = EvaluationReport(
        n_train=len(train),
        n_test=len(test),
        src_accuracy=src_accuracy,
        knn_accuracy=knn_accuracy,
        confusion=ConfusionReport(counts=counts, accuracy=src_accuracy),
    )
    return model, report


def classify_spectrogram(
    model: GestureModel, specs: Sequence[DopplerSpectrogram]
) -> list[Detection]:
    """Segment the first receiver's spectrogram and classify each window.

    :param model: A model trained on windows stacked from as many receivers as given
    :param specs: One spectrogram per receiver, on the same batch times
    """
    if not specs:
        raise ParameterError("at least one spectrogram is required")
    config = model.config
    detections = []
    for window in segment(
        specs[0],
        config.threshold,
        config.min_len_s,
        config.min_gap_s,
        exclude_hz=config.exclude_hz,
        shape=config.window_shape,
    ):
        stacked = _cut_all(specs, window.start_s, window.end_s, config)
        result = model.classify(stacked)
        detections.append(
            Detection(
                start_s=window.start_s,
                end_s=window.end_s,
                label=result.label,
                residuals=result.residuals,
                feature_norm=float(np.linalg.norm(pca_project(model.pca, stacked).coefficients)),
            )
        )
    logger.info("classified %d windows", len(detections))
    return detections


def _gesture_chain(model: TransitionModel) -> TransitionModel:
    """Get the transitions between gestures that follow each other without a pause."""
    keep = [index for index, state in enumerate(model.states) if state != IDLE]
    return build_transitions(
        [model.states[index] for index in keep],
        model.probabilities[np.ix_(keep, keep)],
        [pair for pair in model.forbidden if IDLE not in pair],
    )


def _session_events(
    duration_s: float, n_gestures: int, model: TransitionModel, seed: int
) -> list[tuple[GestureLabel, float]]:
    order_seed, gap_seed = child_seeds(seed, 2)
    chain = _gesture_chain(model)
    initial = np.full(chain.n_states, 1.0 / chain.n_states)
    states = sample_sequence(chain, initial, n_gestures, order_seed)
    labels = [GestureLabel(state) for state in states]
    busy = [_longest_duration(label) for label in labels]
    # at least 2 s of pause before every gesture and after the last one
    slack = duration_s - sum(busy) - 2.0 * (n_gestures + 1)
    if slack < 0:
        raise ParameterError(f"{n_gestures} gestures do not fit in {duration_s} s")
    gaps = 2.0 + slack * np.random.default_rng(gap_seed).dirichlet(np.ones(n_gestures + 1))
    starts = np.cumsum(gaps[:-1]) + np.cumsum([0.0, *busy[:-1]])
    return list(zip(labels, starts.tolist(), strict=True))


def simulate_session(
    config: RunConfig,
    *,
    layout: SensingLayout | None = None,
    duration_s: float | None = None,
    n_gestures: int | None = None,
    model: TransitionModel | None = None,
) -> Session:
    """Simulate a subject performing a gesture sequence drawn from the transition model."""
    layout = layout or SensingLayout()
    duration_s = duration_s or config.demo.session_duration_s
    n_gestures = n_gestures or config.demo.n_session_gestures
    model = model or default_transition_model()
    event_seed, tx_seed, track_seed, noise_seed = child_seeds(config.seed, 4)
    events = _session_events(duration_s, n_gestures, model, event_seed)
    tx = gen_ofdm_stream(config.waveform, duration_s, tx_seed)
    span = (0.0, tx.duration_s)
    limb = gesture_sequence_track(
        events,
        layout.anchor,
        span,
        track_seed,
        axis=layout.gesture_axis(),
        reflectivity=layout.limb_reflectivity,
    )
    torso = static_track(layout.anchor, span, reflectivity=layout.torso_reflectivity)
    scene = layout.scene([limb, torso], snr_db=config.demo.snr_db, seed=noise_seed)
    ref, surv = apply_scene(tx, scene)
    logger.info("simulated a %.0f s session with %d gestures", tx.duration_s, len(events))
    return Session(ref=ref, surv=surv, events=events)


def smooth_detections(
    detections: Sequence[Detection],
    model: TransitionModel | None = None,
    *,
    beta: float = 5.0,
    idle_gap_s: float = 60.0,
) -> list[LabelRecord]:
    """Smooth a sequence of detections with the transition model.

    A pause of at least ``idle_gap_s`` between two detections becomes an idle frame,
    and shorter pauses chain the detections directly, so forbidden gesture pairs get
    corrected. Class residuals are divided by the feature norm so that the emission
    temperature does not depend on the signal level. The idle state has residual 1 on
    detection frames and 0 on pauses.

    :returns: A raw and a smoothed record per detection, in time order
    :raises ParameterError: if ``idle_gap_s`` is not positive
    """
    if idle_gap_s <= 0:
        raise ParameterError(f"idle_gap_s must be positive, got {idle_gap_s}")
    model = model or default_transition_model()
    if not detections:
        return []
    gestures = [state for state in model.states if state != IDLE]
    frames: list[npt.NDArray[np.float64]] = []
    window_frames: list[int] = []
    previous: Detection | None = None
    for detection in detections:
        if previous is not None and detection.start_s - previous.end_s >= idle_gap_s:
            frames.append(_idle_emission(model, beta))
        previous = detection
        scale = detection.feature_norm or 1.0
        residuals = {
            state: detection.residuals.get(GestureLabel(state), scale) / scale
            for state in gestures
        }
        residuals[IDLE] = 1.0
        window_frames.append(len(frames))
        frames.append(src_to_emission([residuals[state] for state in model.states], beta))
    initial = np.full(model.n_states, 1.0 / model.n_states)
    path = viterbi(np.stack(frames), model, initial)
    records = []
    for detection, frame in zip(detections, window_frames, strict=True):
        records.append(
            LabelRecord(
                t_start_s=detection.start_s,
                t_end_s=detection.end_s,
                label=detection.label.value,
                smoothed=False,
            )
        )
        records.append(
            LabelRecord(
                t_start_s=detection.start_s,
                t_end_s=detection.end_s,
                label=path[frame],
                smoothed=True,
            )
        )
    return records


def _idle_emission(model: TransitionModel, beta: float) -> npt.NDArray[np.float64]:
    return src_to_emission([0.0 if state == IDLE else 1.0 for state in model.states], beta)
