"""Run configuration, loaded from the JSON file given to ``--config``."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError

from .doppler import CafConfig
from .exceptions import ConfigurationError
from .monitor import MonitorConfig
from .recognition import RecognitionConfig
from .respiration import RespirationConfig
from .waveform import WaveformConfig

__all__ = [
    "DemoConfig",
    "RunConfig",
    "child_seeds",
    "load_run_config",
]

logger = logging.getLogger(__name__)

#: The largest seed accepted on the command line
MAX_SEED = 2**64 - 1


class DemoConfig(BaseModel):
    """Sizes of the synthetic experiments."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    respiration_duration_s: PositiveFloat = 60.0
    respiration_rate_hz: float = Field(0.25, gt=0.05, lt=1.0)
    respiration_amplitude_m: float = Field(0.01, gt=0.0, le=0.05)
    wall_attenuation_db: float = Field(20.0, ge=0.0)
    snr_db: float = 10.0
    n_per_class: PositiveInt = 50
    holdout_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    session_duration_s: PositiveFloat = 600.0
    n_session_gestures: PositiveInt = 40


class RunConfig(BaseModel):
    """Every parameter of a run, one section per stage."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(0, ge=0, le=MAX_SEED)
    waveform: WaveformConfig = Field(default_factory=WaveformConfig.sensing)
    caf: CafConfig = Field(default_factory=CafConfig)
    respiration: RespirationConfig = Field(default_factory=RespirationConfig)
    recognition: RecognitionConfig = Field(default_factory=RecognitionConfig)
    monitor: MonitorConfig = Field(default_factory=MonitorConfig)
    demo: DemoConfig = Field(default_factory=DemoConfig)


def load_run_config(path: str | Path | None = None, *, seed: int | None = None) -> RunConfig:
    """Load a run configuration, falling back to defaults when no path is given.

    :param path: A JSON file with any subset of the sections
    :param seed: Overrides the file's seed
    :raises ConfigurationError: if the file can not be read or does not validate
    """
    config = RunConfig()
    if path is not None:
        path = Path(path)
        try:
            config = RunConfig.model_validate_json(path.read_text(encoding="utf-8"))
        except OSError as error:
            raise ConfigurationError(f"can not read configuration {path}: {error}") from error
        except ValidationError as error:
            raise ConfigurationError(f"invalid configuration {path}:\n{error}") from error
        logger.info("loaded configuration from %s", path)
    if seed is not None:
        config = config.model_copy(update={"seed": seed})
    return config


def child_seeds(seed: int, n: int) -> list[int]:
    """Derive independent seeds for ``n`` stochastic components.

    >>> child_seeds(7, 2) == child_seeds(7, 2)
    True
    """
    return [
        int(child.generate_state(1, dtype=np.uint64)[0])
        for child in np.random.SeedSequence(seed).spawn(n)
    ]
