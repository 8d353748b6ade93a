"""Command line interface for :mod:`wifisense`.

Every subcommand reads its inputs from files, writes its outputs atomically, and
exits with 2 on usage and validation errors, 3 on data format errors, and 4 on
numerical failures.
"""

from __future__ import annotations

import functools
import logging
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, TypeVar

import click
import pandas as pd
from pydantic import ValidationError

from .api import (
    classify_spectrogram,
    evaluate_classifiers,
    smooth_detections,
    synthesize_gesture_dataset,
    train_gesture_model,
)
from .channel import apply_scene
from .config import MAX_SEED, RunConfig, load_run_config
from .demo import run_demo
from .doppler import caf_batch, doppler_envelope
from .exceptions import DataFormatError, WifiSenseError
from .formats import (
    read_iq,
    read_model,
    read_scene,
    read_spectrogram_csv,
    read_windows,
    sidecar_path,
    write_iq,
    write_json,
    write_json_lines,
    write_pgm,
    write_spectrogram_csv,
    write_table_csv,
    write_windows,
)
from .monitor import (
    IntensityTrace,
    default_transition_model,
    intensity_from_envelope,
    summarize,
)
from .recognition import GestureModel
from .respiration import detect_respiration
from .version import get_version
from .waveform import gen_beacon_train, gen_ofdm_burst, gen_ofdm_stream

__all__ = [
    "main",
]

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., Any])

#: Exit status of usage and validation errors
USAGE_EXIT_CODE = 2

_input_file = click.Path(exists=True, dir_okay=False, path_type=Path)
_output_file = click.Path(dir_okay=False, writable=True, path_type=Path)


class WifiSenseClickError(click.ClickException):
    """A library error reported with its exit status."""

    def __init__(self, message: str, exit_code: int) -> None:
        super().__init__(message)
        self.exit_code = exit_code


def _reported(func: F) -> F:
    """Turn library and validation errors into clean exits."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except WifiSenseError as error:
            raise WifiSenseClickError(str(error), error.exit_code) from error
        except ValidationError as error:
            raise WifiSenseClickError(str(error), USAGE_EXIT_CODE) from error

    return wrapper  # type:ignore[return-value]


def _config(ctx: click.Context) -> RunConfig:
    config = ctx.find_object(RunConfig)
    if config is None:
        raise click.UsageError("the run configuration was not loaded")
    return config


config_option = click.option(
    "--config",
    "config_path",
    type=_input_file,
    help="A JSON run configuration. Missing sections keep their defaults.",
)
seed_option = click.option(
    "--seed", type=click.IntRange(0, MAX_SEED), help="Overrides the configured seed."
)
verbose_option = click.option("-v", "--verbose", count=True, help="Log INFO, or DEBUG with -vv.")


@click.group()
@click.version_option(version=get_version())
@config_option
@seed_option
@verbose_option
@click.pass_context
def main(ctx: click.Context, config_path: Path | None, seed: int | None, verbose: int) -> None:
    """Passive WiFi sensing of breathing, gestures, and daily activity."""
    if verbose:
        logging.basicConfig(
            level=logging.DEBUG if verbose > 1 else logging.INFO,
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
    try:
        ctx.obj = load_run_config(config_path, seed=seed)
    except WifiSenseError as error:
        raise WifiSenseClickError(str(error), error.exit_code) from error


@main.command()
@click.option("--duration", "duration_s", type=click.FloatRange(min=0, min_open=True), default=1.0)
@click.option(
    "--kind",
    type=click.Choice(["beacons", "stream", "burst"]),
    default="beacons",
    show_default=True,
    help=(
        "Beacon bursts with silence between, continuous data, or a single burst. The "
        "default sensing rate stretches the beacon interval to ten burst durations, so "
        "a 1 s beacon train holds one burst; a waveform section with the 20 MHz "
        "defaults gives the 100 ms cadence."
    ),
)
@click.option("--out", "out_path", type=_output_file, required=True, help="The .iq file.")
@click.pass_context
@_reported
def synth(ctx: click.Context, duration_s: float, kind: str, out_path: Path) -> None:
    """Synthesize a transmitted OFDM signal."""
    config = _config(ctx)
    if kind == "beacons":
        trace = gen_beacon_train(config.waveform, duration_s, config.seed)
    elif kind == "stream":
        trace = gen_ofdm_stream(config.waveform, duration_s, config.seed)
    else:
        trace = gen_ofdm_burst(config.waveform, config.seed)
    write_iq(out_path, trace)
    click.echo(f"wrote {trace.n_samples} samples ({trace.duration_s:.6g} s) to {out_path}")


@main.command()
@click.argument("scene_path", type=_input_file)
@click.argument("tx_path", type=_input_file)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory for ref.iq and surv_<i>.iq",
)
@_reported
def simulate(scene_path: Path, tx_path: Path, out_dir: Path) -> None:
    """Propagate a transmission through a scene."""
    scene = read_scene(scene_path)
    tx = read_iq(tx_path)
    ref, surveillance = apply_scene(tx, scene)
    written = [out_dir / "ref.iq"]
    try:
        write_iq(written[0], ref)
        for index, surv in enumerate(surveillance):
            written.append(out_dir / f"surv_{index}.iq")
            write_iq(written[-1], surv)
    except BaseException:
        _remove(written)
        raise
    click.echo(f"wrote {len(written)} channels to {out_dir}")


def _remove(paths: Sequence[Path]) -> None:
    for path in paths:
        path.unlink(missing_ok=True)
        sidecar_path(path).unlink(missing_ok=True)


@main.command()
@click.argument("ref_path", type=_input_file)
@click.argument("surv_path", type=_input_file)
@click.option("--out", "out_path", type=_output_file, required=True, help="Spectrogram CSV")
@click.option("--pgm", "pgm_path", type=_output_file, help="Also write a PGM image")
@click.pass_context
@_reported
def caf(
    ctx: click.Context, ref_path: Path, surv_path: Path, out_path: Path, pgm_path: Path | None
) -> None:
    """Compute the Doppler-time spectrogram of a surveillance channel."""
    spec = caf_batch(read_iq(ref_path), read_iq(surv_path), _config(ctx).caf)
    write_spectrogram_csv(out_path, spec)
    if pgm_path is not None:
        try:
            write_pgm(pgm_path, spec)
        except BaseException:
            out_path.unlink(missing_ok=True)
            raise
    click.echo(f"wrote {spec.n_batches} batches to {out_path}")


@main.command()
@click.argument("ref_path", type=_input_file)
@click.argument("surv_path", type=_input_file)
@click.option("--out", "out_path", type=_output_file, required=True, help="Rate JSON")
@click.option(
    "--phase",
    "phase_path",
    type=_output_file,
    help="Also write the raw and filtered phase as CSV",
)
@click.pass_context
@_reported
def respire(
    ctx: click.Context, ref_path: Path, surv_path: Path, out_path: Path, phase_path: Path | None
) -> None:
    """Estimate the respiration rate from a reference and a surveillance channel."""
    report = detect_respiration(read_iq(ref_path), read_iq(surv_path), _config(ctx).respiration)
    write_json(out_path, report.estimate)
    if phase_path is not None:
        try:
            write_table_csv(
                phase_path,
                {
                    "time_s": report.raw.times_s,
                    "raw_rad": report.raw.phase_rad,
                    "filtered_rad": report.filtered.phase_rad,
                },
                index="time_s",
            )
        except BaseException:
            out_path.unlink(missing_ok=True)
            raise
    estimate = report.estimate
    if estimate.detected:
        click.echo(f"{estimate.rate_hz:.4f} Hz ({estimate.rate_bpm:.1f} breaths per minute)")
    else:
        click.echo("no respiration detected")

@main.command()
@click.argument(
    "windows_dir", type=click.Path(exists=True, file_okay=False, path_type=Path), required=False
)
@click.argument("labels_path", type=_input_file, required=False)
@click.option("--simulate", is_flag=True, help="Train on simulated gestures instead of files")
@click.option(
    "--export",
    "export_dir",
    type=click.Path(file_okay=False, path_type=Path),
    help="Also write the training windows as CSV with a labels.csv index",
)
@click.option("--out", "out_path", type=_output_file, required=True, help="Model JSON")
@click.option("--evaluate", is_flag=True, help="Hold out windows and report accuracy")
@click.pass_context
@_reported
def train(
    ctx: click.Context,
    windows_dir: Path | None,
    labels_path: Path | None,
    simulate: bool,
    export_dir: Path | None,
    out_path: Path,
    evaluate: bool,
) -> None:
    """Train the gesture recognizer.

    WINDOWS_DIR holds one CSV per window, with times as the first column and Doppler
    bins as the others. LABELS lists the window file and gesture code of each one.
    """
    config = _config(ctx)
    if simulate:
        if windows_dir is not None:
            raise click.UsageError("give either --simulate or WINDOWS_DIR and LABELS")
        windows = synthesize_gesture_dataset(config)
    elif windows_dir is None or labels_path is None:
        raise click.UsageError("give WINDOWS_DIR and LABELS, or --simulate")
    else:
        windows = read_windows(windows_dir, labels_path)
    if export_dir is not None:
        write_windows(export_dir, windows)
    if evaluate:
        model, report = evaluate_classifiers(
            windows,
            config.recognition,
            holdout_fraction=config.demo.holdout_fraction,
            seed=config.seed,
        )
        click.echo(f"SRC accuracy {report.src_accuracy:.3f}, k-NN {report.knn_accuracy:.3f}")
    else:
        model = train_gesture_model(windows, config.recognition)
    write_json(out_path, model)
    click.echo(f"trained on {len(windows)} windows")


@main.command()
@click.argument("model_path", type=_input_file)
@click.argument("spectrogram_paths", type=_input_file, nargs=-1, required=True)
@click.option("--out", "out_path", type=_output_file, required=True, help="Detection JSON lines")
@click.option(
    "--smoothed",
    "smoothed_path",
    type=_output_file,
    help="Also write the raw and smoothed label sequence as JSON lines",
)
@click.pass_context
@_reported
def classify(
    ctx: click.Context,
    model_path: Path,
    spectrogram_paths: tuple[Path, ...],
    out_path: Path,
    smoothed_path: Path | None,
) -> None:
    """Segment and classify gestures, one spectrogram per receiver.

    Each detection is written with its window bounds, label, and class residuals.
    """
    config = _config(ctx).monitor
    model = read_model(model_path, GestureModel)
    specs = [read_spectrogram_csv(path) for path in spectrogram_paths]
    detections = classify_spectrogram(model, specs)
    write_json_lines(out_path, [detection.record() for detection in detections])
    if smoothed_path is not None:
        records = smooth_detections(
            detections,
            default_transition_model(),
            beta=config.beta,
            idle_gap_s=config.idle_gap_s,
        )
        try:
            write_json_lines(smoothed_path, records)
        except BaseException:
            out_path.unlink(missing_ok=True)
            raise
    click.echo(f"classified {len(detections)} windows")

def _read_intensity(path: Path, epoch_len_s: float) -> IntensityTrace:
    try:
        frame = pd.read_csv(path)
        return IntensityTrace(
            t_start_s=frame["t_start_s"].to_numpy(dtype=float),
            intensity=frame["intensity"].to_numpy(dtype=float),
            epoch_len_s=epoch_len_s,
        )
    except (OSError, KeyError, ValueError, pd.errors.ParserError) as error:
        raise DataFormatError(f"{path} is not an intensity CSV: {error}") from error


@main.command()
@click.argument("input_paths", type=_input_file, nargs=-1, required=True)
@click.option(
    "--intensity",
    is_flag=True,
    help="The input is an intensity CSV with t_start_s and intensity columns",
)
@click.option("--out", "out_path", type=_output_file, required=True, help="Summary JSON")
@click.pass_context
@_reported
def monitor(
    ctx: click.Context, input_paths: tuple[Path, ...], intensity: bool, out_path: Path
) -> None:
    """Summarize minutes per activity level.

    Spectrogram inputs are summed into one envelope, so several receivers or
    consecutive recordings on the same batch times can be combined.
    """
    config = _config(ctx).monitor
    if intensity:
        if len(input_paths) != 1:
            raise click.UsageError("--intensity takes exactly one CSV")
        trace = _read_intensity(input_paths[0], config.epoch_len_s)
    else:
        specs = [read_spectrogram_csv(path) for path in input_paths]
        combined = specs[0]
        for spec in specs[1:]:
            if spec.magnitudes.shape != combined.magnitudes.shape:
                raise DataFormatError("spectrograms must share batch times and Doppler axis")
            combined = combined.model_copy(
                update={"magnitudes": combined.magnitudes + spec.magnitudes}
            )
        envelope = doppler_envelope(combined, config.exclude_hz, config.normalizer)
        trace = intensity_from_envelope(envelope, config.epoch_len_s)
    summary = summarize(trace, config.t1, config.t2)
    write_json(out_path, summary)
    click.echo(
        f"sedentary {summary.sedentary_minutes:g} min, moderate {summary.moderate_minutes:g} min, "
        f"vigorous {summary.vigorous_minutes:g} min"
    )


@main.command()
@click.argument("case", type=click.IntRange(1, 3))
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="The artifact directory, which must not exist or be empty",
)
@click.option("--progress/--no-progress", default=False, help="Show progress bars")
@click.pass_context
@_reported
def demo(ctx: click.Context, case: int, out_dir: Path, progress: bool) -> None:
    """Run a sensing case end to end on synthetic data.

    1. breathing behind a wall; 2. six-class gesture recognition; 3. activity
    monitoring over a gesture session.
    """
    manifest = run_demo(case, out_dir, _config(ctx), progress=progress)  # type:ignore[arg-type]
    click.echo(f"wrote {len(manifest.files)} files to {out_dir}")


if __name__ == "__main__":
    main()
