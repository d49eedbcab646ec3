"""
Conventional prescription baselines: NAL-R insertion gain and the
half-gain audiogram transform.
"""

import csv
import hashlib
import importlib.resources
import io
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from loguru import logger

from .audiogram import Audiogram
from .compensation import CompensationGain
from .errors import ConfigurationError, InputError
from .model import hermitian_extend
from .spacing import GainCurve

NALR_CONSTANTS_FILE = "nalr_constants.csv"
NALR_CONSTANTS_SHA256 = "bd20f0f994c823b6cd6cf928d87171cdef42bd4adfb04513f09adaced7c88294"
NALR_FREQS = (250.0, 500.0, 750.0, 1000.0, 1500.0, 2000.0, 3000.0, 4000.0, 6000.0)
NALR_SLOPE = 0.31
NALR_PTA_WEIGHT = 0.05
NALR_PTA_FREQS = (500.0, 1000.0, 2000.0)


@dataclass(frozen=True, eq=False)
class PrescriptionGain:
    """Insertion gain in dB at audiometric frequencies."""

    freqs: np.ndarray
    insertion_gain_db: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float)
        gains = np.asarray(self.insertion_gain_db, dtype=float)
        if freqs.ndim != 1 or freqs.shape != gains.shape or freqs.size == 0:
            raise InputError("freqs and insertion_gain_db must be nonempty vectors of equal length")
        if not np.all(np.isfinite(gains)):
            raise InputError("Insertion gains must be finite")
        if np.any(np.diff(freqs) <= 0) or np.any(freqs <= 0):
            raise InputError("Prescription frequencies must be positive and increasing")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "insertion_gain_db", gains)

    def to_rows(self) -> list[dict]:
        return [
            {"freq_hz": float(f), "insertion_gain_db": float(g)}
            for f, g in zip(self.freqs, self.insertion_gain_db)
        ]


@lru_cache(maxsize=1)
def load_nalr_constants() -> dict:
    """
    Per-frequency NAL-R constants k(f) in dB, keyed by frequency.

    Raises:
        ConfigurationError: If the bundled table does not match its checksum.
    """
    resource = importlib.resources.files("hlcomp").joinpath("data", NALR_CONSTANTS_FILE)
    raw = resource.read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != NALR_CONSTANTS_SHA256:
        raise ConfigurationError(
            f"{NALR_CONSTANTS_FILE} checksum mismatch: expected {NALR_CONSTANTS_SHA256}, got {digest}"
        )
    lines = [
        line for line in raw.decode("utf-8").splitlines() if line.strip() and not line.startswith("#")
    ]
    return {
        float(row["freq_hz"]): float(row["k_db"])
        for row in csv.DictReader(io.StringIO("\n".join(lines)))
    }


def nalr_gain(audiogram: Audiogram) -> PrescriptionGain:
    """
    NAL-R insertion gain.

    IG(f) = 0.05 (HL500 + HL1000 + HL2000) + 0.31 HL(f) + k(f), clamped at
    0 dB, at 250, 500, 750, 1000, 1500, 2000, 3000, 4000 and 6000 Hz.
    Hearing levels between audiogram points are interpolated in log
    frequency and held flat beyond its ends.

    Raises:
        InputError: If the audiogram has no point reaching into 500-2000 Hz.
    """
    freqs = audiogram.freqs
    if freqs.max() < NALR_PTA_FREQS[0] or freqs.min() > NALR_PTA_FREQS[-1]:
        raise InputError(
            f"Audiogram ({freqs.min():g}-{freqs.max():g} Hz) does not cover 500-2000 Hz"
        )
    constants = load_nalr_constants()
    out_freqs = np.array(NALR_FREQS)
    k = np.array([constants[f] for f in NALR_FREQS])
    x = NALR_PTA_WEIGHT * float(np.sum(audiogram.hl_at(NALR_PTA_FREQS)))
    gain = x + NALR_SLOPE * audiogram.hl_at(out_freqs) + k
    if np.any(gain < 0):
        logger.debug("Clamping {} negative NAL-R gains to 0 dB", int(np.sum(gain < 0)))
    return PrescriptionGain(out_freqs, np.maximum(gain, 0.0))


def half_gain(audiogram: Audiogram) -> Audiogram:
    """Audiogram with every hearing level halved."""
    return audiogram.scaled(0.5)


def prescription_to_gaincurve(prescription: PrescriptionGain, grid) -> GainCurve:
    """
    Linear-magnitude gain on ``grid``.

    dB values are interpolated linearly in log frequency and held flat
    outside the prescription frequencies (also for a 0 Hz grid point).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise InputError("Frequency grid must be a nonempty vector")
    if not np.all(np.isfinite(grid)):
        raise InputError("Frequency grid must be finite")
    log_grid = np.log(np.maximum(grid, prescription.freqs[0]))
    gain_db = np.interp(log_grid, np.log(prescription.freqs), prescription.insertion_gain_db)
    return GainCurve(freqs=grid, gains=10.0 ** (gain_db / 20.0))


def prescription_bins(prescription: PrescriptionGain, sample_rate: float, nfft: int) -> CompensationGain:
    """Zero-phase CompensationGain on an nfft-point DFT grid, ready for ``fir_from_gain``."""
    curve = prescription_to_gaincurve(prescription, np.fft.rfftfreq(nfft, d=1.0 / sample_rate))
    half = curve.gains.astype(complex)
    return CompensationGain(bins=hermitian_extend(half, nfft), sample_rate=sample_rate)
