"""Reading and writing the files exchanged between pipeline stages.

- ``.iq``: interleaved little-endian float32 I/Q pairs, with a ``.meta`` sidecar of
  the same stem holding ``key=value`` lines for the sample rate, carrier, start time,
  and sample count.
- Spectrogram CSV: the header row is the Doppler axis, the first column the batch
  time, and the cells linear power.
- Window CSV: the first column evenly spaced times from the window start to its end,
  the other columns the Doppler bins, with a ``labels.csv`` index of window files and
  gesture codes.
- Scenes, models, and summaries: JSON from their :mod:`pydantic` models.
"""

from __future__ import annotations

import contextlib
import json
import logging
import os
import tempfile
from collections.abc import Generator, Iterable, Sequence
from pathlib import Path
from typing import Any, TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, PositiveFloat, PositiveInt, ValidationError

from .channel import GestureLabel, Scene
from .doppler import DopplerSpectrogram
from .exceptions import DataFormatError
from .recognition import GestureWindow
from .waveform import IqTrace

__all__ = [
    "IqMetadata",
    "atomic_output",
    "read_iq",
    "read_model",
    "read_scene",
    "read_spectrogram_csv",
    "read_window_csv",
    "read_windows",
    "sidecar_path",
    "write_iq",
    "write_json",
    "write_json_lines",
    "write_pgm",
    "write_scene",
    "write_spectrogram_csv",
    "write_table_csv",
    "write_window_csv",
    "write_windows",
]

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)

#: Dynamic range of spectrogram images
PGM_DYNAMIC_RANGE_DB = 40.0

#: Name of the label index written next to exported windows
WINDOW_LABELS = "labels.csv"


class IqMetadata(BaseModel):
    """The sidecar of an ``.iq`` file."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sample_rate_hz: PositiveFloat
    carrier_hz: PositiveFloat
    t0_s: float = 0.0
    n_samples: PositiveInt


@contextlib.contextmanager
def atomic_output(path: str | Path) -> Generator[Path, None, None]:
    """Write to a temporary file next to ``path`` and move it into place on success.

    The temporary file is removed if the body raises.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    temporary = Path(name)
    try:
        yield temporary
        temporary.replace(path)
    except BaseException:
        temporary.unlink(missing_ok=True)
        raise
    logger.info("wrote %s", path)


def sidecar_path(path: str | Path) -> Path:
    """Get the metadata sidecar of an ``.iq`` file."""
    return Path(path).with_suffix(".meta")


def _write_metadata(path: Path, metadata: IqMetadata) -> None:
    lines = [f"{key}={value!r}" for key, value in metadata.model_dump().items()]
    with atomic_output(path) as temporary:
        temporary.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")


def _read_metadata(path: Path) -> IqMetadata:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as error:
        raise DataFormatError(f"can not read {path}: {error}") from error
    fields: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        key, separator, value = line.partition("=")
        if not separator:
            raise DataFormatError(f"{path}:{number} is not a key=value line")
        fields[key.strip()] = value.strip()
    try:
        return IqMetadata.model_validate(fields)
    except ValidationError as error:
        raise DataFormatError(f"{path} is not valid IQ metadata: {error}") from error


def write_iq(path: str | Path, trace: IqTrace) -> None:
    """Write a trace and its sidecar."""
    interleaved = np.empty(2 * trace.n_samples, dtype="<f4")
    interleaved[0::2] = trace.samples.real
    interleaved[1::2] = trace.samples.imag
    metadata = IqMetadata(
        sample_rate_hz=trace.sample_rate_hz,
        carrier_hz=trace.carrier_hz,
        t0_s=trace.t0_s,
        n_samples=trace.n_samples,
    )
    with atomic_output(path) as temporary:
        temporary.write_bytes(interleaved.tobytes())
    _write_metadata(sidecar_path(path), metadata)


def read_iq(path: str | Path) -> IqTrace:
    """Read a trace and its sidecar.

    :raises DataFormatError: if the sidecar is missing or invalid or the sample count
        does not match it
    """
    path = Path(path)
    metadata = _read_metadata(sidecar_path(path))
    try:
        raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    except OSError as error:
        raise DataFormatError(f"can not read {path}: {error}") from error
    if raw.size != 2 * metadata.n_samples:
        raise DataFormatError(
            f"{path} holds {raw.size // 2} samples but its sidecar declares {metadata.n_samples}"
        )
    logger.info("read %d samples from %s", metadata.n_samples, path)
    return IqTrace(
        samples=raw[0::2].astype(np.float64) + 1j * raw[1::2].astype(np.float64),
        sample_rate_hz=metadata.sample_rate_hz,
        carrier_hz=metadata.carrier_hz,
        t0_s=metadata.t0_s,
    )


def write_json(path: str | Path, model: BaseModel | dict[str, Any]) -> None:
    """Write a model or a plain dictionary as indented JSON with sorted keys."""
    data = model.model_dump(mode="json") if isinstance(model, BaseModel) else model
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    with atomic_output(path) as temporary:
        temporary.write_text(text, encoding="utf-8")


def write_json_lines(path: str | Path, records: Iterable[BaseModel | dict[str, Any]]) -> None:
    """Write one compact JSON object per line."""
    lines = [
        json.dumps(
            record.model_dump(mode="json") if isinstance(record, BaseModel) else record,
            sort_keys=True,
        )
        for record in records
    ]
    with atomic_output(path) as temporary:
        temporary.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")


def _read_model(path: Path, model: type[M]) -> M:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as error:
        raise DataFormatError(f"can not read {path}: {error}") from error
    try:
        return model.model_validate_json(text)
    except ValidationError as error:
        raise DataFormatError(f"{path} is not a valid {model.__name__}: {error}") from error


def read_model(path: str | Path, model: type[M]) -> M:
    """Read a JSON file into a model.

    :raises DataFormatError: if the file can not be read or does not validate
    """
    return _read_model(Path(path), model)


def read_scene(path: str | Path) -> Scene:
    """Read a scene description."""
    return _read_model(Path(path), Scene)


def write_scene(path: str | Path, scene: Scene) -> None:
    """Write a scene description, with keyframes as ``[t, x, y, z]`` rows."""
    write_json(path, scene)


def write_spectrogram_csv(path: str | Path, spec: DopplerSpectrogram) -> None:
    """Write a spectrogram with the Doppler axis as header and batch times as index."""
    frame = pd.DataFrame(
        spec.magnitudes,
        index=pd.Index(spec.batch_times_s, name="time_s"),
        columns=[repr(float(value)) for value in spec.doppler_axis_hz],
    )
    with atomic_output(path) as temporary:
        frame.to_csv(temporary, float_format="%.12g")


def read_spectrogram_csv(
    path: str | Path, resolution_hz: float | None = None
) -> DopplerSpectrogram:
    """Read a spectrogram CSV.

    :param path: The file
    :param resolution_hz: The Doppler resolution, defaulting to the axis spacing
    :raises DataFormatError: if the file is not a valid spectrogram
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, index_col=0)
        axis = np.array([float(column) for column in frame.columns])
        magnitudes = frame.to_numpy(dtype=np.float64)
        times = frame.index.to_numpy(dtype=np.float64)
    except (OSError, ValueError, pd.errors.ParserError) as error:
        raise DataFormatError(f"{path} is not a spectrogram CSV: {error}") from error
    if axis.size < 2 and resolution_hz is None:
        raise DataFormatError(f"{path} has too few Doppler bins to infer the resolution")
    try:
        spec = DopplerSpectrogram(
            magnitudes=magnitudes,
            batch_times_s=times,
            doppler_axis_hz=axis,
            resolution_hz=resolution_hz or float(np.median(np.diff(axis))),
        )
    except ValidationError as error:
        raise DataFormatError(f"{path} is not a valid spectrogram: {error}") from error
    logger.info("read %d batches from %s", spec.n_batches, path)
    return spec


def write_table_csv(path: str | Path, columns: dict[str, Any], index: str | None = None) -> None:
    """Write named, aligned columns as CSV."""
    frame = pd.DataFrame(columns)
    if index is not None:
        frame = frame.set_index(index)
    with atomic_output(path) as temporary:
        frame.to_csv(temporary, index=index is not None, float_format="%.12g")


def write_window_csv(path: str | Path, window: GestureWindow) -> None:
    """Write a gesture window with evenly spaced times as index and bins as columns."""
    n_rows, n_bins = window.spec_slice.shape
    if n_rows < 2:
        raise DataFormatError(f"a window needs two rows to carry its times, got {n_rows}")
    frame = pd.DataFrame(
        window.spec_slice,
        index=pd.Index(np.linspace(window.start_s, window.end_s, n_rows), name="time_s"),
        columns=[str(column) for column in range(n_bins)],
    )
    with atomic_output(path) as temporary:
        frame.to_csv(temporary, float_format="%.17g")


def read_window_csv(path: str | Path) -> GestureWindow:
    """Read an unlabeled gesture window.

    :raises DataFormatError: if the file is not a window CSV
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, index_col=0, float_precision="round_trip")
        values = frame.to_numpy(dtype=np.float64)
        times = frame.index.to_numpy(dtype=np.float64)
    except (OSError, ValueError, pd.errors.ParserError) as error:
        raise DataFormatError(f"{path} is not a window CSV: {error}") from error
    if times.size < 2:
        raise DataFormatError(f"{path} has fewer than two rows")
    try:
        return GestureWindow(start_s=times[0], end_s=times[-1], spec_slice=values)
    except ValidationError as error:
        raise DataFormatError(f"{path} is not a valid window: {error}") from error


def write_windows(directory: str | Path, windows: Sequence[GestureWindow]) -> Path:
    """Write labeled windows as one CSV each plus a ``labels.csv`` index.

    :returns: The path of the label index
    """
    directory = Path(directory)
    names, labels = [], []
    for number, window in enumerate(windows):
        if window.label is None:
            raise DataFormatError(f"window {number} has no label")
        names.append(f"window_{number:04d}.csv")
        labels.append(window.label.value)
        write_window_csv(directory / names[-1], window)
    labels_path = directory / WINDOW_LABELS
    write_table_csv(labels_path, {"window": names, "label": labels})
    return labels_path


def read_windows(directory: str | Path, labels_path: str | Path) -> list[GestureWindow]:
    """Read the windows named in a label index, resolving names against ``directory``.

    :raises DataFormatError: if the index is malformed, a window is missing, or a label
        is not a gesture code
    """
    directory, labels_path = Path(directory), Path(labels_path)
    try:
        index = pd.read_csv(labels_path, dtype=str, keep_default_na=False)
        rows = list(zip(index["window"], index["label"], strict=True))
    except (OSError, KeyError, ValueError, pd.errors.ParserError) as error:
        raise DataFormatError(f"{labels_path} is not a window label index: {error}") from error
    if not rows:
        raise DataFormatError(f"{labels_path} lists no windows")
    windows = []
    for name, code in rows:
        try:
            label = GestureLabel(code)
        except ValueError as error:
            raise DataFormatError(f"{labels_path}: unknown gesture label {code!r}") from error
        windows.append(read_window_csv(directory / name).with_label(label))
    logger.info("read %d windows from %s", len(windows), directory)
    return windows


def write_pgm(path: str | Path, spec: DopplerSpectrogram) -> None:
    """Write a spectrogram as an 8-bit binary PGM image on a decibel scale.

    Time runs left to right and positive Doppler is at the top.
    """
    power = spec.magnitudes.T[::-1]
    peak = float(power.max(initial=0.0))
    if peak > 0:
        with np.errstate(divide="ignore"):
            decibels = 10 * np.log10(power / peak)
        levels = np.clip(1 + decibels / PGM_DYNAMIC_RANGE_DB, 0.0, 1.0)
    else:
        levels = np.zeros_like(power)
    pixels = np.round(255 * levels).astype(np.uint8)
    height, width = pixels.shape
    with atomic_output(path) as temporary:
        temporary.write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes())
