"""Passive WiFi sensing of breathing, gestures, and daily activity."""

from .api import (
    SensingLayout,
    classify_spectrogram,
    evaluate_classifiers,
    simulate_gesture_clip,
    simulate_respiration,
    simulate_session,
    smooth_detections,
    synthesize_gesture_dataset,
    train_gesture_model,
)
from .channel import GestureLabel, ScattererTrack, Scene, apply_scene
from .config import RunConfig, load_run_config
from .doppler import CafConfig, DopplerSpectrogram, caf_batch, doppler_envelope, stft_csi
from .exceptions import WifiSenseError
from .monitor import summarize, viterbi
from .recognition import GestureModel, segment, src_classify
from .respiration import detect_respiration, phase_sensitivity
from .waveform import IqTrace, WaveformConfig, estimate_csi, gen_beacon_train, gen_ofdm_burst

__all__ = [
    "CafConfig",
    "DopplerSpectrogram",
    "GestureLabel",
    "GestureModel",
    "IqTrace",
    "RunConfig",
    "ScattererTrack",
    "Scene",
    "SensingLayout",
    "WaveformConfig",
    "WifiSenseError",
    "apply_scene",
    "caf_batch",
    "classify_spectrogram",
    "detect_respiration",
    "doppler_envelope",
    "estimate_csi",
    "evaluate_classifiers",
    "gen_beacon_train",
    "gen_ofdm_burst",
    "load_run_config",
    "phase_sensitivity",
    "segment",
    "simulate_gesture_clip",
    "simulate_respiration",
    "simulate_session",
    "smooth_detections",
    "src_classify",
    "stft_csi",
    "summarize",
    "synthesize_gesture_dataset",
    "train_gesture_model",
    "viterbi",
]
