"""
Linear auditory models built from gammatone filterbanks.

A filterbank is a K x nfft complex matrix whose rows are gammatone
frequency responses sampled on the DFT grid. The normal-hearing model uses
the configured Q profile; the hearing-impaired model scales each channel by
its hearing loss and broadens it by lowering Q.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from loguru import logger
from scipy.ndimage import uniform_filter1d

from .audiogram import Audiogram
from .errors import ConfigurationError, InputError

DEFAULT_HL_MAX_DB = 105.0
DEFAULT_Q_FLOOR = 0.5

__all__ = [
    "Audiogram",
    "Filterbank",
    "FilterbankSpec",
    "GammatoneParams",
    "HearingLossProfile",
    "audiogram_to_profile",
    "broadened_q",
    "build_filterbank",
    "gammatone_response",
    "half_spectrum",
    "hermitian_extend",
    "impair_filterbank",
    "impaired_spec",
    "model_pair",
    "q_profile",
    "resonant_term",
]


@dataclass(frozen=True)
class GammatoneParams:
    """One auditory channel: center frequency, order, Q factor and linear gain."""

    cf: float
    order: int = 1
    q: float = 1.0
    gain: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.cf) or self.cf <= 0:
            raise ConfigurationError(f"cf must be positive, got {self.cf}")
        if int(self.order) != self.order or self.order < 1:
            raise ConfigurationError(f"order must be a positive integer, got {self.order}")
        if not np.isfinite(self.q) or self.q <= 0:
            raise ConfigurationError(f"q must be positive, got {self.q}")
        if not np.isfinite(self.gain) or self.gain < 0:
            raise ConfigurationError(f"gain must be nonnegative, got {self.gain}")

    @property
    def bandwidth(self) -> float:
        return self.cf / self.q


@dataclass(frozen=True)
class FilterbankSpec:
    channels: tuple
    sample_rate: float
    nfft: int

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.channels:
            raise ConfigurationError("A filterbank needs at least one channel")
        if self.nfft < 2:
            raise ConfigurationError(f"nfft must be at least 2, got {self.nfft}")
        if self.sample_rate <= 0:
            raise ConfigurationError("sample_rate must be positive")
        cfs = [ch.cf for ch in self.channels]
        if any(b <= a for a, b in zip(cfs, cfs[1:])):
            raise ConfigurationError("Channel center frequencies must be strictly increasing")
        nyquist = self.sample_rate / 2
        if cfs[-1] >= nyquist:
            raise ConfigurationError(
                f"Channel cf {cfs[-1]} Hz is not below Nyquist ({nyquist} Hz)"
            )

    @property
    def cfs(self) -> np.ndarray:
        return np.array([ch.cf for ch in self.channels])

    @property
    def num_channels(self) -> int:
        return len(self.channels)


@dataclass(frozen=True, eq=False)
class Filterbank:
    """Sampled frequency response of a filterbank (rows = channels, columns = DFT bins)."""

    spec: FilterbankSpec
    response: np.ndarray
    freq_grid: np.ndarray

    @property
    def nfft(self) -> int:
        return self.spec.nfft

    @property
    def sample_rate(self) -> float:
        return self.spec.sample_rate

    @property
    def num_channels(self) -> int:
        return self.spec.num_channels

    @property
    def cfs(self) -> np.ndarray:
        return self.spec.cfs

    @property
    def qs(self) -> np.ndarray:
        return np.array([ch.q for ch in self.spec.channels])

    @property
    def gains(self) -> np.ndarray:
        return np.array([ch.gain for ch in self.spec.channels])

    def impulse_responses(self, length: Optional[int] = None) -> np.ndarray:
        """Real impulse responses (K x nfft, or truncated to ``length`` samples)."""
        half = self.response[:, : self.nfft // 2 + 1]
        impulses = np.fft.irfft(half, n=self.nfft, axis=1)
        if length is not None:
            if not 1 <= length <= self.nfft:
                raise InputError(f"length must be in [1, {self.nfft}], got {length}")
            impulses = impulses[:, :length]
        return impulses


@dataclass(frozen=True, eq=False)
class HearingLossProfile:
    """
    Per-channel hearing loss.

    ``q_impaired`` is optional; when absent the impaired Q is derived from
    the normal-hearing Q of the bank being impaired.
    """

    per_cf_hl: np.ndarray
    hl_max: float = DEFAULT_HL_MAX_DB
    q_impaired: Optional[np.ndarray] = None
    plus_one: bool = True

    def __post_init__(self):
        hl = np.asarray(self.per_cf_hl, dtype=float)
        if hl.ndim != 1 or hl.size == 0:
            raise InputError("per_cf_hl must be a nonempty vector")
        if not np.all(np.isfinite(hl)) or np.any(hl < 0):
            raise InputError("per_cf_hl must be finite and nonnegative")
        if self.hl_max <= 0:
            raise InputError("hl_max must be positive")
        object.__setattr__(self, "per_cf_hl", hl)
        if self.q_impaired is not None:
            q = np.asarray(self.q_impaired, dtype=float)
            if q.shape != hl.shape:
                raise InputError("q_impaired must have one entry per channel")
            if np.any(q < 1):
                raise InputError("q_impaired entries must be at least 1")
            object.__setattr__(self, "q_impaired", q)


def q_profile(cf, cf_min: float, cf_max: float, q_min: float, q_max: float,
              q_floor: float = DEFAULT_Q_FLOOR):
    """
    Q rising linearly along the log-frequency axis from (cf_min, q_min) to
    (cf_max, q_max), floored at ``q_floor``.

    With log-spaced channels this is a linear ramp over channel index.
    """
    cf = np.asarray(cf, dtype=float)
    if np.any(cf <= 0):
        raise ConfigurationError("Center frequencies must be positive")
    position = np.log(cf / cf_min) / np.log(cf_max / cf_min)
    q = q_min + (q_max - q_min) * position
    q = np.maximum(q, q_floor)
    return float(q) if q.ndim == 0 else q


def resonant_term(freqs, cf: float, bandwidth: float, order: int = 1) -> np.ndarray:
    """(1 + j(f - cf)/b)^(-n), the resonant half of the gammatone response."""
    f = np.asarray(freqs, dtype=float)
    return (1.0 + 1j * (f - cf) / bandwidth) ** (-order)


def gammatone_response(params: GammatoneParams, freqs) -> np.ndarray:
    """
    Analytic gammatone frequency response scaled by the channel gain.

    n(f) = (1 + j(f - cf)/b)^(-n) + (1 + j(f + cf)/b)^(-n) with b = cf/q.
    """
    f = np.asarray(freqs, dtype=float)
    if not np.all(np.isfinite(f)):
        raise InputError("Frequencies must be finite")
    b = params.bandwidth
    lower = resonant_term(f, params.cf, b, params.order)
    image = resonant_term(f, -params.cf, b, params.order)
    return params.gain * (lower + image)


def half_spectrum(params: GammatoneParams, sample_rate: float, nfft: int) -> np.ndarray:
    """Response on the nonnegative DFT bins (nfft // 2 + 1 values)."""
    half = gammatone_response(params, np.fft.rfftfreq(nfft, d=1.0 / sample_rate))
    if nfft % 2 == 0:
        # Nyquist bin of a real sequence is real
        half[-1] = half[-1].real
    return half


def hermitian_extend(half: np.ndarray, nfft: int) -> np.ndarray:
    """Full DFT vector from its nonnegative-frequency half."""
    mirror = np.conj(half[..., 1 : (nfft + 1) // 2][..., ::-1])
    return np.concatenate([half, mirror], axis=-1)


def _channel_row(params: GammatoneParams, sample_rate: float, nfft: int) -> np.ndarray:
    return hermitian_extend(half_spectrum(params, sample_rate, nfft), nfft)


def build_filterbank(spec: FilterbankSpec, workers: int = 1) -> Filterbank:
    """
    Sample every channel on the DFT grid of length ``spec.nfft``.

    Rows are Hermitian so their inverse DFTs are real impulse responses.
    """
    def row(params):
        return _channel_row(params, spec.sample_rate, spec.nfft)

    if workers > 1 and spec.num_channels > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, spec.channels))
    else:
        rows = [row(params) for params in spec.channels]

    response = np.vstack(rows)
    response.setflags(write=False)
    freq_grid = np.fft.fftfreq(spec.nfft, d=1.0 / spec.sample_rate)
    freq_grid.setflags(write=False)
    logger.debug(
        "Built filterbank with {} channels, nfft={}, fs={}",
        spec.num_channels,
        spec.nfft,
        spec.sample_rate,
    )
    return Filterbank(spec=spec, response=response, freq_grid=freq_grid)


def broadened_q(q_nh, hl, hl_max: float, plus_one: bool = True):
    """
    Impaired Q from normal Q and hearing loss.

    plus_one=True:  Q_HI = max(Q_NH * (1 - HL/HL_max) + 1, 1)
    plus_one=False: Q_HI = max(Q_NH * (1 - HL/HL_max), 1)
    """
    q_nh = np.asarray(q_nh, dtype=float)
    hl = np.asarray(hl, dtype=float)
    if np.any(hl > hl_max):
        raise InputError(f"Hearing loss exceeds hl_max ({hl_max} dB): max is {hl.max()} dB")
    q = q_nh * (1.0 - hl / hl_max) + (1.0 if plus_one else 0.0)
    return np.maximum(q, 1.0)


def impaired_spec(spec: FilterbankSpec, profile: HearingLossProfile) -> FilterbankSpec:
    """Channel parameters of the impaired model: gain scaled by 10^(-HL/20), Q broadened."""
    hl = profile.per_cf_hl
    if hl.shape != (spec.num_channels,):
        raise InputError(
            f"Profile has {hl.size} channels but the filterbank has {spec.num_channels}"
        )
    if np.any(hl > profile.hl_max):
        worst = int(np.argmax(hl))
        raise InputError(
            f"Hearing loss {hl[worst]} dB at {spec.cfs[worst]:.1f} Hz exceeds "
            f"hl_max {profile.hl_max} dB"
        )
    if profile.q_impaired is not None:
        q_hi = profile.q_impaired
    else:
        q_normal = np.array([ch.q for ch in spec.channels])
        q_hi = broadened_q(q_normal, hl, profile.hl_max, profile.plus_one)
    attenuation = 10.0 ** (-hl / 20.0)
    channels = tuple(
        replace(ch, q=float(q), gain=float(ch.gain * a))
        for ch, q, a in zip(spec.channels, q_hi, attenuation)
    )
    return FilterbankSpec(channels=channels, sample_rate=spec.sample_rate, nfft=spec.nfft)


def impair_filterbank(bank: Filterbank, profile: HearingLossProfile, workers: int = 1) -> Filterbank:
    """Scale each channel by 10^(-HL/20) and replace its Q by the broadened Q."""
    return build_filterbank(impaired_spec(bank.spec, profile), workers=workers)


def audiogram_to_profile(
    audiogram: Audiogram,
    cfs,
    hl_max: float = DEFAULT_HL_MAX_DB,
    smooth: bool = False,
    q_normal=None,
    plus_one: bool = True,
) -> HearingLossProfile:
    """
    Hearing loss at each channel cf.

    Linear interpolation in log frequency with flat extrapolation, optionally
    smoothed by a 3-point moving average across channels (edges replicated).
    When ``q_normal`` is given the impaired Q values are filled in as well.
    """
    if audiogram is None or not audiogram.points:
        raise InputError("Audiogram is empty")
    cfs = np.asarray(cfs, dtype=float)
    hl = audiogram.hl_at(cfs)
    if smooth and hl.size > 1:
        hl = uniform_filter1d(hl, size=3, mode="nearest")
    if np.any(hl < 0):
        logger.warning("Clipping negative hearing levels to 0 dB HL")
        hl = np.maximum(hl, 0.0)
    q_hi = None
    if q_normal is not None:
        q_hi = broadened_q(q_normal, hl, hl_max, plus_one)
    return HearingLossProfile(per_cf_hl=hl, hl_max=hl_max, q_impaired=q_hi, plus_one=plus_one)


def model_pair(config, cfs, audiogram: Audiogram, workers: int = 1):
    """
    Normal-hearing and hearing-impaired filterbanks for one configuration.

    Returns (normal, impaired, profile).
    """
    normal = build_filterbank(config.channel_spec(cfs), workers=workers)
    profile = audiogram_to_profile(
        audiogram,
        normal.cfs,
        hl_max=config.hl_max_db,
        smooth=config.smooth,
        plus_one=config.plus_one,
    )
    impaired = impair_filterbank(normal, profile, workers=workers)
    logger.info(
        "Built model pair: {} channels, mean loss {:.1f} dB HL",
        normal.num_channels,
        float(profile.per_cf_hl.mean()),
    )
    return normal, impaired, profile
