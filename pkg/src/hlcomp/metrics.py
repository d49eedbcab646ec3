"""
Evaluation metrics for compensation strategies.

Long-term gain is estimated with Welch-style averaging of magnitude spectra.
The loss family compares auditory-model channel outputs: plain and
segmented mean absolute error, a low-frequency DFT penalty and their
weighted sum. FMAE and SER score an emulated auditory model against its
ground truth.
"""

import csv
import importlib.resources
import io
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
from loguru import logger
from scipy.signal import firwin2, get_window, lfilter, spectrogram

from .errors import InputError
from .spacing import GainCurve

FULL_SCALE_SPL_DB = 100.0
DEFAULT_SPL_DB = 65.0
INPUT_FLOOR = 1e-8
SER_CAP_DB = 300.0
COMPOSITE_SEGMENTS_MS = (1.0, 10.0, 100.0)
LTASS_FILE = "ltass_third_octave.csv"
NOISE_KINDS = ("white", "speech_shaped")


@dataclass(frozen=True, eq=False)
class SignalBuffer:
    """Mono audio samples with their sample rate and optional calibration level."""

    samples: np.ndarray
    sample_rate: float
    spl_db: Optional[float] = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise InputError(f"Expected a mono signal, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InputError("Signal contains non-finite samples")
        if not self.sample_rate > 0:
            raise InputError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True, eq=False)
class ChannelResponseSet:
    """K x T matrix of auditory-model channel outputs."""

    data: np.ndarray
    sample_rate: Optional[float] = None
    segment_lengths_ms: tuple = COMPOSITE_SEGMENTS_MS

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2 or 0 in data.shape:
            raise InputError(f"Channel responses must be a nonempty K x T matrix, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InputError("Channel responses contain non-finite values")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "segment_lengths_ms", tuple(self.segment_lengths_ms))

    @property
    def shape(self) -> tuple:
        return self.data.shape


@dataclass(frozen=True)
class WelchParams:
    segment_len: int = 8192
    overlap: float = 0.5
    window: str = "hann"
    nfft: Optional[int] = None

    def __post_init__(self):
        if self.segment_len < 2:
            raise InputError("segment_len must be at least 2")
        if not 0 <= self.overlap < 1:
            raise InputError(f"overlap must be in [0, 1), got {self.overlap}")
        if self.nfft is not None and self.nfft < self.segment_len:
            raise InputError("nfft must be at least segment_len")
        try:
            get_window(self.window, self.segment_len)
        except (ValueError, TypeError) as e:
            raise InputError(f"Unknown window {self.window!r}: {e}")

    @property
    def noverlap(self) -> int:
        return int(round(self.overlap * self.segment_len))


ResponsesLike = Union[ChannelResponseSet, np.ndarray]


def _responses(value: ResponsesLike) -> ChannelResponseSet:
    return value if isinstance(value, ChannelResponseSet) else ChannelResponseSet(value)


def _matching(a: ResponsesLike, b: ResponsesLike) -> tuple[np.ndarray, np.ndarray]:
    a, b = _responses(a), _responses(b)
    if a.shape != b.shape:
        raise InputError(f"Channel response shapes differ: {a.shape} vs {b.shape}")
    return a.data, b.data


def _same_rate(x: SignalBuffer, y: SignalBuffer) -> None:
    if x.sample_rate != y.sample_rate:
        raise InputError(f"Sample rates differ: {x.sample_rate} vs {y.sample_rate}")


def average_magnitude(signal: SignalBuffer, params: WelchParams) -> tuple[np.ndarray, np.ndarray]:
    """Frequencies and time-averaged |STFT| (amplitude, not power)."""
    if len(signal) < params.segment_len:
        raise InputError(
            f"Signal has {len(signal)} samples, fewer than one segment ({params.segment_len})"
        )
    freqs, _, mag = spectrogram(
        signal.samples,
        fs=signal.sample_rate,
        window=params.window,
        nperseg=params.segment_len,
        noverlap=params.noverlap,
        nfft=params.nfft,
        detrend=False,
        mode="magnitude",
    )
    return freqs, mag.mean(axis=-1)


def long_term_gain(inp: SignalBuffer, out: SignalBuffer, params: WelchParams = WelchParams()) -> GainCurve:
    """
    g = E[|W out|] / E[|W in|] per frequency bin.

    Signals are trimmed to their common length. Bins where the input
    estimate is below 1e-8 of its maximum are marked invalid with gain 0.

    Raises:
        InputError: On sample-rate mismatch or signals shorter than a segment.
    """
    _same_rate(inp, out)
    n = min(len(inp), len(out))
    if len(inp) != len(out):
        logger.info("Trimming signals to common length {} samples", n)
    x = SignalBuffer(inp.samples[:n], inp.sample_rate)
    y = SignalBuffer(out.samples[:n], out.sample_rate)
    freqs, ex = average_magnitude(x, params)
    _, ey = average_magnitude(y, params)
    valid = ex >= INPUT_FLOOR * ex.max() if ex.max() > 0 else np.zeros(ex.shape, dtype=bool)
    safe = np.where(valid, ex, 1.0)
    gains = np.where(valid, ey / safe, 0.0)
    if not valid.all():
        logger.debug("{} of {} bins below the input floor", int((~valid).sum()), valid.size)
    return GainCurve(freqs=freqs, gains=gains, valid=valid)


def mae(nh: ResponsesLike, hi: ResponsesLike) -> float:
    """Mean absolute error over all channels and samples."""
    a, b = _matching(nh, hi)
    return float(np.mean(np.abs(a - b)))


def segment_samples(segment_ms: float, sample_rate: float) -> int:
    return max(1, int(round(segment_ms * sample_rate / 1000.0)))


def segment_means(data: np.ndarray, seg: int) -> np.ndarray:
    """Per-channel means over consecutive segments; a short last segment uses its true length."""
    starts = np.arange(0, data.shape[1], seg)
    lengths = np.diff(np.append(starts, data.shape[1]))
    return np.add.reduceat(data, starts, axis=1) / lengths


def segmented_mae(
    nh: ResponsesLike,
    hi: ResponsesLike,
    segment_ms: float,
    sample_rate: Optional[float] = None,
) -> float:
    """
    MAE between segment-averaged channel outputs.

    A one-sample segment gives the plain ``mae``.

    Raises:
        InputError: On shape mismatch or when no sample rate is known.
    """
    a, b = _matching(nh, hi)
    if sample_rate is None:
        sample_rate = _responses(nh).sample_rate
    if sample_rate is None or sample_rate <= 0:
        raise InputError("segmented_mae needs a positive sample rate")
    if segment_ms <= 0:
        raise InputError(f"segment_ms must be positive, got {segment_ms}")
    seg = segment_samples(segment_ms, sample_rate)
    if seg == 1:
        return float(np.mean(np.abs(a - b)))
    return float(np.mean(np.abs(segment_means(a, seg) - segment_means(b, seg))))


def low_freq_penalty(x: SignalBuffer, y: SignalBuffer, cutoff_hz: float = 20.0) -> float:
    """Sum of |X_i - Y_i| over nonnegative DFT bins below ``cutoff_hz`` (DC included)."""
    _same_rate(x, y)
    if len(x) != len(y):
        raise InputError(f"Signal lengths differ: {len(x)} vs {len(y)}")
    spectrum_diff = np.fft.rfft(x.samples) - np.fft.rfft(y.samples)
    freqs = np.fft.rfftfreq(len(x), d=1.0 / x.sample_rate)
    return float(np.sum(np.abs(spectrum_diff[freqs < cutoff_hz])))


def composite_loss(
    nh: ResponsesLike,
    hi: ResponsesLike,
    x: SignalBuffer,
    y: SignalBuffer,
    gamma: float = 1.0,
    sample_rate: Optional[float] = None,
    segments_ms: Sequence[float] = COMPOSITE_SEGMENTS_MS,
    cutoff_hz: float = 20.0,
) -> float:
    """Segmented MAE at 1, 10 and 100 ms plus ``gamma`` times the low-frequency penalty."""
    rate = x.sample_rate if sample_rate is None else sample_rate
    total = sum(segmented_mae(nh, hi, ms, rate) for ms in segments_ms)
    if gamma:
        total += gamma * low_freq_penalty(x, y, cutoff_hz)
    return float(total)


def _weights(beta, alpha, k: int, level_index: int) -> tuple[np.ndarray, np.ndarray]:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (k,):
        raise InputError(f"beta must have {k} entries")
    if np.any(beta <= 0):
        raise InputError("beta must be strictly positive")
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim == 1:
        alpha = alpha[:, np.newaxis]
    if alpha.ndim != 2 or alpha.shape[0] != k:
        raise InputError(f"alpha must be a {k} x L matrix")
    if not 0 <= level_index < alpha.shape[1]:
        raise InputError(f"level_index {level_index} out of range for {alpha.shape[1]} levels")
    if np.any(alpha < 0):
        raise InputError("alpha must be nonnegative")
    return beta, alpha[:, level_index]


def fmae(
    truth: ResponsesLike,
    emulated: ResponsesLike,
    beta,
    alpha,
    level_index: int = 0,
) -> float:
    """
    Weighted normalized MAE of an emulated auditory model.

    (1 / TK) sum_k alpha[k, l] * ||beta_k f_k - fbar_k||_1, where ``truth``
    holds f and ``emulated`` holds the normalized emulation fbar.
    """
    f, f_bar = _matching(truth, emulated)
    k, t = f.shape
    beta, weights = _weights(beta, alpha, k, level_index)
    per_channel = np.sum(np.abs(beta[:, np.newaxis] * f - f_bar), axis=1)
    return float(np.sum(weights * per_channel) / (t * k))


def denormalize(emulated: ResponsesLike, beta) -> np.ndarray:
    """Undo the per-channel normalization: fhat_k = fbar_k / beta_k."""
    data = _responses(emulated).data
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (data.shape[0],) or np.any(beta <= 0):
        raise InputError("beta must be a positive vector with one entry per channel")
    return data / beta[:, np.newaxis]


def estimate_beta(calibration: ResponsesLike) -> np.ndarray:
    """Reciprocal per-channel RMS, so that beta_k f_k has unit RMS."""
    data = _responses(calibration).data
    rms = np.sqrt(np.mean(data**2, axis=1))
    if np.any(rms == 0):
        raise InputError("Cannot estimate beta for a silent channel")
    return 1.0 / rms


def estimate_alpha(responses_by_level: Sequence[ResponsesLike]) -> np.ndarray:
    """K x L matrix of reciprocal per-channel mean absolute outputs, one column per level."""
    if not responses_by_level:
        raise InputError("Need responses for at least one level")
    columns = []
    for level in responses_by_level:
        mean_abs = np.mean(np.abs(_responses(level).data), axis=1)
        if np.any(mean_abs == 0):
            raise InputError("Cannot estimate alpha for a silent channel")
        columns.append(1.0 / mean_abs)
    if len({c.size for c in columns}) != 1:
        raise InputError("Every level must have the same channel count")
    return np.column_stack(columns)


def ser(truth: ResponsesLike, estimate: ResponsesLike) -> np.ndarray:
    """
    Per-channel signal-to-error ratio in dB, capped at 300 dB.

    Channels whose ground truth has zero energy are NaN.
    """
    f, g = _matching(truth, estimate)
    signal = np.sum(f**2, axis=1)
    error = np.sum((f - g) ** 2, axis=1)
    out = np.full(signal.shape, np.nan)
    live = signal > 0
    exact = live & (error == 0)
    ratio = live & ~exact
    out[exact] = SER_CAP_DB
    out[ratio] = np.minimum(10.0 * np.log10(signal[ratio] / error[ratio]), SER_CAP_DB)
    if not live.all():
        logger.warning("{} channels have zero-energy ground truth", int((~live).sum()))
    return out


def rms_spl(signal: Union[SignalBuffer, np.ndarray], full_scale_db: float = FULL_SCALE_SPL_DB) -> float:
    """Level in dB SPL with a full-scale RMS of 1.0 mapped to ``full_scale_db``."""
    samples = signal.samples if isinstance(signal, SignalBuffer) else np.asarray(signal, dtype=float)
    rms = np.sqrt(np.mean(samples**2))
    if rms == 0:
        raise InputError("Cannot compute the level of a silent signal")
    return float(20.0 * np.log10(rms) + full_scale_db)


def normalize_spl(
    signal: SignalBuffer,
    target_db: float = DEFAULT_SPL_DB,
    full_scale_db: float = FULL_SCALE_SPL_DB,
) -> SignalBuffer:
    """Rescale so that ``rms_spl`` reads ``target_db``."""
    current = rms_spl(signal, full_scale_db)
    scale = 10.0 ** ((target_db - current) / 20.0)
    return SignalBuffer(signal.samples * scale, signal.sample_rate, spl_db=target_db)


@lru_cache(maxsize=1)
def ltass_table() -> tuple[np.ndarray, np.ndarray]:
    """Bundled one-third-octave speech spectrum as (freqs_hz, level_db)."""
    text = importlib.resources.files("hlcomp").joinpath("data", LTASS_FILE).read_text()
    lines = [line for line in text.splitlines() if line.strip() and not line.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(lines))))
    freqs = np.array([float(r["freq_hz"]) for r in rows])
    levels = np.array([float(r["level_db"]) for r in rows])
    return freqs, levels


def speech_shaping_filter(sample_rate: float, numtaps: int = 513) -> np.ndarray:
    """
    Linear-phase FIR following the bundled speech spectrum.

    Band levels are converted to relative amplitudes, extended flat to DC and
    Nyquist, and fed to ``scipy.signal.firwin2``.
    """
    if numtaps < 3 or numtaps % 2 == 0:
        raise InputError("numtaps must be an odd number of at least 3")
    nyquist = sample_rate / 2
    freqs, levels = ltass_table()
    inside = freqs < nyquist
    freqs, levels = freqs[inside], levels[inside]
    amplitude = 10.0 ** ((levels - levels.max()) / 20.0)
    band_freqs = np.concatenate([[0.0], freqs, [nyquist]])
    band_gains = np.concatenate([[amplitude[0]], amplitude, [amplitude[-1]]])
    return firwin2(numtaps, band_freqs, band_gains, fs=sample_rate)


def make_noise(
    kind: str,
    duration_s: float,
    sample_rate: float,
    seed: Optional[int] = None,
    spl_db: Optional[float] = DEFAULT_SPL_DB,
) -> SignalBuffer:
    """
    Gaussian test noise, white or speech shaped.

    The same seed always gives the same samples. With ``spl_db`` set the
    result is calibrated to that level.

    Raises:
        InputError: On an unknown kind or a nonpositive duration.
    """
    if kind not in NOISE_KINDS:
        raise InputError(f"Unknown noise kind {kind!r}; choose from {', '.join(NOISE_KINDS)}")
    if duration_s <= 0:
        raise InputError(f"duration must be positive, got {duration_s}")
    n = int(round(duration_s * sample_rate))
    if n < 1:
        raise InputError("duration is shorter than one sample")
    rng = np.random.default_rng(seed)
    if kind == "white":
        samples = rng.standard_normal(n)
    else:
        taps = speech_shaping_filter(sample_rate)
        # drop the filter start-up so the output is stationary
        white = rng.standard_normal(n + taps.size - 1)
        samples = lfilter(taps, 1.0, white)[taps.size - 1 :]
    logger.debug("Generated {} s of {} noise at {} Hz (seed={})", duration_s, kind, sample_rate, seed)
    buffer = SignalBuffer(samples, sample_rate)
    if spl_db is not None:
        buffer = normalize_spl(buffer, spl_db)
    return buffer
