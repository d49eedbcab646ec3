"""
Audiograms: per-frequency hearing thresholds in dB HL.

Audiograms are read from CSV (``freq_hz,hl_db``) or JSON
(``[{"freq_hz": ..., "hl_db": ...}, ...]``) files, or taken from the bundled
standard audiograms (N1-N7, S1-S3).
"""

import csv
import importlib.resources
import io
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Union

import numpy as np
from loguru import logger

from .errors import InputError

STANDARD_AUDIOGRAM_FILE = "bisgaard_audiograms.csv"


@dataclass(frozen=True)
class Audiogram:
    """Hearing level in dB HL at strictly increasing frequencies."""

    points: tuple

    def __post_init__(self):
        points = tuple((float(f), float(hl)) for f, hl in self.points)
        if not points:
            raise InputError("Audiogram has no points")
        for f, hl in points:
            if not (math.isfinite(f) and f > 0):
                raise InputError(f"Audiogram frequency must be positive and finite, got {f}")
            if not math.isfinite(hl):
                raise InputError(f"Audiogram level at {f} Hz is not finite")
        freqs = [f for f, _ in points]
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise InputError("Audiogram frequencies must be strictly increasing")
        object.__setattr__(self, "points", points)

    @classmethod
    def from_mapping(cls, mapping: dict) -> "Audiogram":
        return cls(tuple(sorted((float(f), float(hl)) for f, hl in mapping.items())))

    @property
    def freqs(self) -> np.ndarray:
        return np.array([f for f, _ in self.points])

    @property
    def levels(self) -> np.ndarray:
        return np.array([hl for _, hl in self.points])

    def hl_at(self, freqs) -> np.ndarray:
        """
        Hearing level at arbitrary frequencies.

        Linear interpolation in (log frequency, dB HL) with flat extrapolation
        beyond the first and last audiogram points.
        """
        query = np.asarray(freqs, dtype=float)
        if not np.all(np.isfinite(query)):
            raise InputError("Query frequencies must be finite")
        with np.errstate(divide="ignore"):
            log_query = np.log(np.where(query > 0, query, 0.0))
        return np.interp(log_query, np.log(self.freqs), self.levels)

    def scaled(self, factor: float) -> "Audiogram":
        return Audiogram(tuple((f, hl * factor) for f, hl in self.points))

    def to_rows(self) -> list[dict]:
        return [{"freq_hz": f, "hl_db": hl} for f, hl in self.points]


def _points_from_rows(rows: Iterable[dict], source: str) -> list:
    points = []
    for line_num, row in enumerate(rows, start=1):
        try:
            points.append((float(row["freq_hz"]), float(row["hl_db"])))
        except KeyError as e:
            raise InputError(f"{source}: entry {line_num} is missing {e}")
        except (TypeError, ValueError):
            raise InputError(f"{source}: entry {line_num} has a non-numeric value")
    return points


def parse_audiogram_csv(text: str, source: str = "<csv>") -> Audiogram:
    lines = [line for line in text.splitlines() if line.strip() and not line.startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(lines)))
    if reader.fieldnames is None or not {"freq_hz", "hl_db"} <= set(reader.fieldnames):
        raise InputError(f"{source}: expected a header with freq_hz,hl_db")
    return Audiogram(tuple(_points_from_rows(reader, source)))


def parse_audiogram_json(text: str, source: str = "<json>") -> Audiogram:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{source}: invalid JSON: {e}")
    if not isinstance(data, list):
        raise InputError(f"{source}: expected a JSON array of {{freq_hz, hl_db}} objects")
    if not all(isinstance(item, dict) for item in data):
        raise InputError(f"{source}: every entry must be an object")
    return Audiogram(tuple(_points_from_rows(data, source)))


def load_audiogram(path: Union[str, Path]) -> Audiogram:
    """Read an audiogram from a CSV or JSON file (chosen by extension, then content)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise InputError(f"Cannot read audiogram {path}: {e}")
    is_json = path.suffix.lower() == ".json" or text.lstrip().startswith("[")
    audiogram = (
        parse_audiogram_json(text, str(path)) if is_json else parse_audiogram_csv(text, str(path))
    )
    logger.debug("Loaded audiogram from {} with {} points", path, len(audiogram.points))
    return audiogram


@lru_cache(maxsize=1)
def _standard_table() -> dict:
    text = importlib.resources.files("hlcomp").joinpath("data", STANDARD_AUDIOGRAM_FILE).read_text()
    lines = [line for line in text.splitlines() if line.strip() and not line.startswith("#")]
    table: dict[str, list] = {}
    for row in csv.DictReader(io.StringIO("\n".join(lines))):
        table.setdefault(row["name"], []).append((float(row["freq_hz"]), float(row["hl_db"])))
    return table


def standard_audiogram_names() -> list[str]:
    return sorted(_standard_table())


def standard_audiogram(name: str) -> Audiogram:
    """Return a bundled standard audiogram such as ``"N3"``."""
    table = _standard_table()
    key = name.upper()
    if key not in table:
        raise InputError(
            f"Unknown standard audiogram {name!r}; choose from {', '.join(sorted(table))}"
        )
    return Audiogram(tuple(table[key]))

