"""
Configuration for hlcomp.

This module holds the model configuration (the JSON file accepted by
``--model``), the resolved experiment configuration written as a sidecar
next to every output, and helpers for the per-user data directory.
"""

import importlib.resources
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from platformdirs import user_data_dir

from .errors import ConfigurationError

APP_NAME = "hlcomp"
THREADS_ENV = "HLC_THREADS"
SPACING_STRATEGIES = ("log", "proposed")


def get_data_dir() -> Path:
    """Get the XDG compliant data directory for the app."""
    return Path(user_data_dir(APP_NAME))


def get_default_log_config_path() -> str:
    """Get the default path for the log config file in XDG compliant directory."""
    data_dir = get_data_dir()
    data_dir.mkdir(parents=True, exist_ok=True)
    return str(data_dir / "loguru_config.toml")


def ensure_default_log_config() -> str:
    """Ensure default log config exists, creating it if necessary.

    Returns:
        Path to the default log config file.
    """
    config_path = Path(get_default_log_config_path())
    if not config_path.exists():
        default_config = (
            importlib.resources.files("hlcomp")
            .joinpath("default_loguru_config.toml")
            .read_text()
        )
        config_path.write_text(default_config)
    return str(config_path)


def max_workers() -> int:
    """Number of worker threads allowed by ``HLC_THREADS`` (default: CPU count)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be at least 1, got {value}")
    return value


@dataclass(frozen=True)
class ModelConfig:
    """
    Parametric description of the normal-hearing auditory model.

    Normal-hearing Q rises linearly with frequency from ``q_min`` at
    ``cf_min_hz`` to ``q_max`` at ``cf_max_hz`` and is clamped to at least
    ``q_floor``. ``spacing`` is ``"log"``, ``"proposed"`` or an explicit list
    of center frequencies.
    """

    k: int = 128
    cf_min_hz: float = 100.0
    cf_max_hz: float = 10000.0
    spacing: Union[str, tuple] = "log"
    q_min: float = 0.0
    q_max: float = 10.0
    q_floor: float = 0.5
    order: int = 1
    sample_rate_hz: float = 32000.0
    nfft: int = 8192
    hl_max_db: float = 105.0
    plus_one: bool = True
    delta: float = 0.5
    grid_bins: int = 2**15
    smooth: bool = False

    def __post_init__(self):
        if isinstance(self.spacing, list):
            object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        self.validate()

    def validate(self) -> None:
        nyquist = self.sample_rate_hz / 2
        if self.sample_rate_hz <= 0:
            raise ConfigurationError("sample_rate_hz must be positive")
        if not 0 < self.cf_min_hz < self.cf_max_hz:
            raise ConfigurationError(
                f"need 0 < cf_min_hz < cf_max_hz, got {self.cf_min_hz} and {self.cf_max_hz}"
            )
        if self.cf_max_hz >= nyquist:
            raise ConfigurationError(
                f"cf_max_hz ({self.cf_max_hz}) must be below Nyquist ({nyquist})"
            )
        if isinstance(self.spacing, str):
            if self.spacing not in SPACING_STRATEGIES:
                raise ConfigurationError(
                    f"spacing must be one of {', '.join(SPACING_STRATEGIES)} "
                    f"or a list of frequencies, got {self.spacing!r}"
                )
        elif len(self.spacing) == 0:
            raise ConfigurationError("explicit spacing list must not be empty")
        if self.k < 1:
            raise ConfigurationError("k must be at least 1")
        if self.order < 1:
            raise ConfigurationError("order must be at least 1")
        if self.q_floor <= 0:
            raise ConfigurationError("q_floor must be positive")
        if self.q_min < 0 or self.q_max < 0:
            raise ConfigurationError("q_min and q_max must be nonnegative")
        if self.nfft < 2:
            raise ConfigurationError("nfft must be at least 2")
        if self.hl_max_db <= 0:
            raise ConfigurationError("hl_max_db must be positive")
        if not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie strictly between 0 and 1")
        if self.grid_bins < 16:
            raise ConfigurationError("grid_bins must be at least 16")

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"Unknown model config keys: {', '.join(unknown)}")
        kwargs: dict[str, Any] = dict(data)
        try:
            for name in ("k", "order", "nfft", "grid_bins"):
                if name in kwargs:
                    kwargs[name] = int(kwargs[name])
            for name in (
                "cf_min_hz",
                "cf_max_hz",
                "q_min",
                "q_max",
                "q_floor",
                "sample_rate_hz",
                "hl_max_db",
                "delta",
            ):
                if name in kwargs:
                    kwargs[name] = float(kwargs[name])
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"Invalid model config value: {e}")
        for name in ("plus_one", "smooth"):
            if name in kwargs and not isinstance(kwargs[name], bool):
                raise ConfigurationError(f"{name} must be true or false")
        return cls(**kwargs)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ModelConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Model config {path} is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise ConfigurationError(f"Model config {path} must contain a JSON object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "ModelConfig":
        data = self.to_dict()
        data.update(changes)
        return ModelConfig.from_dict(data)

    def to_dict(self) -> dict:
        data = asdict(self)
        if isinstance(self.spacing, tuple):
            data["spacing"] = list(self.spacing)
        return data

    def q_at(self, cf):
        """Normal-hearing Q at one or more center frequencies."""
        from .model import q_profile

        return q_profile(
            cf,
            cf_min=self.cf_min_hz,
            cf_max=self.cf_max_hz,
            q_min=self.q_min,
            q_max=self.q_max,
            q_floor=self.q_floor,
        )

    def channel_spec(self, cfs, gains=None):
        """Build a normal-hearing FilterbankSpec for the given center frequencies."""
        from .model import FilterbankSpec, GammatoneParams

        cfs = np.asarray(cfs, dtype=float)
        qs = np.atleast_1d(self.q_at(cfs))
        if gains is None:
            gains = np.ones_like(cfs)
        channels = tuple(
            GammatoneParams(cf=float(cf), order=self.order, q=float(q), gain=float(g))
            for cf, q, g in zip(cfs, qs, gains)
        )
        return FilterbankSpec(
            channels=channels, sample_rate=self.sample_rate_hz, nfft=self.nfft
        )


@dataclass
class ExperimentConfig:
    """Fully resolved configuration of a CLI run, written as a JSON sidecar."""

    command: str
    model: Optional[dict] = None
    audiogram: Optional[str] = None
    spacing: Optional[dict] = None
    welch: Optional[dict] = None
    outputs: Optional[str] = None
    seed: Optional[int] = None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        from importlib.metadata import PackageNotFoundError, version

        try:
            pkg_version = version("hlcomp")
        except PackageNotFoundError:
            pkg_version = "unknown"
        data = asdict(self)
        data["hlcomp_version"] = pkg_version
        return data
