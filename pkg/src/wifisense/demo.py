"""End-to-end runs of the three sensing cases on synthetic data.

Each case writes an artifact directory holding every intermediate file and a
``manifest.json`` that lists them with their SHA-256 digests and the full run
configuration. Directories are staged next to their destination and renamed into
place, so a failed run leaves nothing behind. Given the same configuration, two runs
produce byte-identical directories.
"""

from __future__ import annotations

import hashlib
import logging
import shutil
import tempfile
from collections.abc import Callable
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from .api import (
    SensingLayout,
    classify_spectrogram,
    evaluate_classifiers,
    simulate_respiration,
    simulate_session,
    smooth_detections,
    spectrograms,
    synthesize_gesture_dataset,
    train_gesture_model,
)
from .channel import GestureLabel
from .config import RunConfig, child_seeds
from .doppler import doppler_envelope
from .exceptions import ConfigurationError
from .formats import (
    write_iq,
    write_json,
    write_json_lines,
    write_pgm,
    write_spectrogram_csv,
    write_table_csv,
)
from .monitor import default_transition_model, intensity_from_envelope, summarize
from .respiration import detect_respiration

__all__ = [
    "Case",
    "Manifest",
    "run_case_1",
    "run_case_2",
    "run_case_3",
    "run_demo",
]

logger = logging.getLogger(__name__)

Case = Literal[1, 2, 3]

MANIFEST_NAME = "manifest.json"


class Manifest(BaseModel):
    """The contents and parameters of a demo directory."""

    model_config = ConfigDict(frozen=True)

    case: int
    seed: int
    files: dict[str, str]
    parameters: RunConfig


def _digests(directory: Path) -> dict[str, str]:
    return {
        path.relative_to(directory).as_posix(): hashlib.sha256(path.read_bytes()).hexdigest()
        for path in sorted(directory.rglob("*"))
        if path.is_file() and path.name != MANIFEST_NAME
    }


def _finish(directory: Path, case: int, config: RunConfig) -> Manifest:
    manifest = Manifest(
        case=case, seed=config.seed, files=_digests(directory), parameters=config
    )
    write_json(directory / MANIFEST_NAME, manifest)
    return manifest


def run_case_1(directory: str | Path, config: RunConfig, *, progress: bool = False) -> Manifest:
    """Estimate the breathing rate of a subject behind a wall."""
    directory = Path(directory)
    demo = config.demo
    recording = simulate_respiration(
        SensingLayout(),
        config.waveform,
        duration_s=demo.respiration_duration_s,
        rate_hz=demo.respiration_rate_hz,
        amplitude_m=demo.respiration_amplitude_m,
        wall_attenuation_db=demo.wall_attenuation_db,
        snr_db=demo.snr_db,
        seed=config.seed,
    )
    write_iq(directory / "ref.iq", recording.ref)
    write_iq(directory / "surv.iq", recording.surv[0])
    report = detect_respiration(recording.ref, recording.surv[0], config.respiration)
    write_table_csv(
        directory / "phase.csv",
        {
            "time_s": report.raw.times_s,
            "raw_rad": report.raw.phase_rad,
            "filtered_rad": report.filtered.phase_rad,
        },
        index="time_s",
    )
    rate = report.estimate.rate_hz
    write_json(
        directory / "respiration.json",
        {
            "estimate": report.estimate.model_dump(mode="json"),
            "true_rate_hz": demo.respiration_rate_hz,
            "relative_error": None
            if rate is None
            else abs(rate - demo.respiration_rate_hz) / demo.respiration_rate_hz,
        },
    )
    return _finish(directory, 1, config)


def run_case_2(directory: str | Path, config: RunConfig, *, progress: bool = False) -> Manifest:
    """Train and evaluate the gesture recognizer on a synthetic six-class suite."""
    directory = Path(directory)
    windows = synthesize_gesture_dataset(config, progress=progress)
    write_table_csv(
        directory / "windows.csv",
        {
            "label": [window.label.value if window.label else "" for window in windows],
            "start_s": [window.start_s for window in windows],
            "end_s": [window.end_s for window in windows],
        },
    )
    model, report = evaluate_classifiers(
        windows,
        config.recognition,
        holdout_fraction=config.demo.holdout_fraction,
        seed=config.seed,
    )
    write_json(directory / "model.json", model)
    write_json(directory / "evaluation.json", report)
    order = [label.value for label in GestureLabel]
    counts = np.asarray(report.confusion.counts)
    write_table_csv(
        directory / "confusion.csv",
        {"true": order, **{label: counts[:, i] for i, label in enumerate(order)}},
        index="true",
    )
    return _finish(directory, 2, config)


def run_case_3(directory: str | Path, config: RunConfig, *, progress: bool = False) -> Manifest:
    """Recognize and smooth a gesture sequence, then summarize the activity levels."""
    directory = Path(directory)
    train_seed, session_seed = child_seeds(config.seed, 2)
    windows = synthesize_gesture_dataset(
        config.model_copy(update={"seed": train_seed}), progress=progress
    )
    model = train_gesture_model(windows, config.recognition)
    write_json(directory / "model.json", model)

    session = simulate_session(config.model_copy(update={"seed": session_seed}))
    write_table_csv(
        directory / "events.csv",
        {
            "label": [label.value for label, _ in session.events],
            "start_s": [start for _, start in session.events],
        },
    )
    specs = spectrograms(session, config.caf)
    for index, spec in enumerate(specs):
        write_spectrogram_csv(directory / f"spectrogram_{index}.csv", spec)
    write_pgm(directory / "spectrogram_0.pgm", specs[0])

    detections = classify_spectrogram(model, specs)
    write_json_lines(directory / "detections.jsonl", [item.record() for item in detections])
    records = smooth_detections(
        detections,
        default_transition_model(),
        beta=config.monitor.beta,
        idle_gap_s=config.monitor.idle_gap_s,
    )
    write_json_lines(directory / "labels.jsonl", records)

    monitor = config.monitor
    envelope = doppler_envelope(specs[0], monitor.exclude_hz, monitor.normalizer)
    trace = intensity_from_envelope(
        envelope, monitor.epoch_len_s, start_s=session.ref.t0_s, duration_s=session.ref.duration_s
    )
    write_table_csv(
        directory / "intensity.csv",
        {"t_start_s": trace.t_start_s, "intensity": trace.intensity},
        index="t_start_s",
    )
    write_json(directory / "summary.json", summarize(trace, monitor.t1, monitor.t2))
    return _finish(directory, 3, config)


CASES: dict[int, Callable[..., Manifest]] = {1: run_case_1, 2: run_case_2, 3: run_case_3}


def run_demo(
    case: Case, out_dir: str | Path, config: RunConfig, *, progress: bool = False
) -> Manifest:
    """Run a case into a staging directory and move it to ``out_dir`` when it succeeds.

    :raises ConfigurationError: if the case is unknown or ``out_dir`` exists and is
        not an empty directory
    """
    if case not in CASES:
        raise ConfigurationError(f"unknown case {case}, choose from {sorted(CASES)}")
    out_dir = Path(out_dir)
    if out_dir.exists() and (not out_dir.is_dir() or any(out_dir.iterdir())):
        raise ConfigurationError(f"{out_dir} exists and is not an empty directory")
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(dir=out_dir.parent, prefix=f".{out_dir.name}."))
    try:
        manifest = CASES[case](staging, config, progress=progress)
        if out_dir.exists():
            out_dir.rmdir()
        staging.rename(out_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    logger.info("case %d wrote %d files to %s", case, len(manifest.files), out_dir)
    return manifest
