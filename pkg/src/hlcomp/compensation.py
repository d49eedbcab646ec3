"""
MSE-optimal linear compensation.

Two solvers are provided:

* ``optimal_gain_freq`` computes the closed-form per-bin complex gain that
  makes the impaired filterbank output match the normal-hearing output as
  closely as possible in the mean-squared sense.
* ``optimal_filter_time`` solves the same problem for a finite FIR of
  ``filter_len`` taps, optionally weighted by a probe signal.

``fir_from_gain`` turns a per-bin gain into a linear-phase FIR that can be
applied to audio.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from loguru import logger
from scipy.signal import get_window

from .errors import InputError, SingularBinError
from .model import Filterbank, FilterbankSpec, half_spectrum, hermitian_extend

DEFAULT_FLOOR = 1e-12
DEFAULT_RIDGE = 1e-12
CONDITION_LIMIT = 1e10


@dataclass(frozen=True, eq=False)
class CompensationGain:
    """
    Complex compensation gain on a full DFT grid.

    ``bins`` is conjugate symmetric so its inverse DFT is real. When the gain
    came from the time-domain solver (or was realized as an FIR),
    ``derived_fir`` holds the real filter taps.
    """

    bins: np.ndarray
    sample_rate: float = 1.0
    derived_fir: Optional[np.ndarray] = None
    ill_conditioned: bool = False
    condition_number: Optional[float] = None

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=complex)
        if bins.ndim != 1 or bins.size < 2:
            raise InputError("Gain bins must be a vector of at least 2 values")
        if not np.all(np.isfinite(bins)):
            raise InputError("Gain bins contain non-finite values")
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)
        if self.derived_fir is not None:
            fir = np.asarray(self.derived_fir, dtype=float)
            if not np.all(np.isfinite(fir)):
                raise InputError("Derived FIR contains non-finite values")
            object.__setattr__(self, "derived_fir", fir)

    @property
    def nfft(self) -> int:
        return self.bins.size

    @property
    def freqs(self) -> np.ndarray:
        """Nonnegative bin frequencies in Hz."""
        return np.fft.rfftfreq(self.nfft, d=1.0 / self.sample_rate)

    @property
    def half(self) -> np.ndarray:
        return self.bins[: self.nfft // 2 + 1]

    def magnitude(self) -> np.ndarray:
        """|gain| on the nonnegative bins."""
        return np.abs(self.half)

    def to_rows(self) -> list[dict]:
        """Rows for the ``freq_hz,gain_linear,gain_db,phase_rad`` export."""
        mag = self.magnitude()
        with np.errstate(divide="ignore"):
            db = 20.0 * np.log10(mag)
        phase = np.angle(self.half)
        return [
            {
                "freq_hz": float(f),
                "gain_linear": float(m),
                "gain_db": float(d),
                "phase_rad": float(p),
            }
            for f, m, d, p in zip(self.freqs, mag, db, phase)
        ]


@dataclass(frozen=True, eq=False)
class ToeplitzOperator:
    """Lower-triangular Toeplitz matrix of a zero-padded source vector."""

    source: np.ndarray

    def __post_init__(self):
        source = np.asarray(self.source, dtype=float)
        if source.ndim != 1 or source.size == 0:
            raise InputError("Toeplitz source must be a nonempty vector")
        object.__setattr__(self, "source", source)

    @property
    def length(self) -> int:
        return self.source.size

    def matrix(self) -> np.ndarray:
        """Dense N x N matrix; column j is the source delayed by j samples."""
        first_row = np.zeros(self.length)
        first_row[0] = self.source[0]
        return scipy.linalg.toeplitz(self.source, first_row)

    def apply(self, vector) -> np.ndarray:
        """Linear convolution with ``vector``, truncated to N samples."""
        v = np.asarray(vector, dtype=float)
        if v.ndim != 1 or v.size > self.length:
            raise InputError(f"Vector must have at most {self.length} samples")
        return np.convolve(self.source, v)[: self.length]


def _check_pair(normal: Filterbank, impaired: Filterbank) -> None:
    if normal.response.shape != impaired.response.shape:
        raise InputError(
            f"Filterbank shapes differ: {normal.response.shape} vs {impaired.response.shape}"
        )
    if not np.array_equal(normal.freq_grid, impaired.freq_grid):
        raise InputError("Filterbanks are sampled on different frequency grids")


def _per_bin_quotient(numerator: np.ndarray, denominator: np.ndarray, floor: float) -> np.ndarray:
    peak = float(denominator.max()) if denominator.size else 0.0
    if floor > 0 and peak > 0:
        # floor, not additive: bins well inside the filter supports are untouched
        return numerator / np.maximum(denominator, floor * peak)
    singular = np.flatnonzero(denominator <= 0)
    if singular.size:
        raise SingularBinError(singular.tolist())
    return numerator / denominator


def _psd_weights(input_psd, nfft: int) -> np.ndarray:
    psd = np.asarray(input_psd, dtype=float)
    if psd.shape == (nfft // 2 + 1,):
        psd = hermitian_extend(psd, nfft).real
    if psd.shape != (nfft,):
        raise InputError(f"input_psd must have {nfft} or {nfft // 2 + 1} entries")
    if not np.all(np.isfinite(psd)) or np.any(psd <= 0):
        raise InputError("input_psd must be finite and strictly positive")
    return psd


def optimal_gain_freq(
    normal: Filterbank,
    impaired: Filterbank,
    input_psd=None,
    floor: float = DEFAULT_FLOOR,
) -> CompensationGain:
    """
    Closed-form per-bin compensation gain.

    bins[i] = sum_k conj(D[k, i]) N[k, i] / sum_k |D[k, i]|^2

    The denominator is floored at ``floor`` times its maximum; pass
    ``floor=0`` to get a SingularBinError on empty bins instead. A strictly
    positive ``input_psd`` weights numerator and denominator alike.

    Raises:
        InputError: If the banks do not share shape and frequency grid.
        SingularBinError: If ``floor`` is 0 and some bin has no support.
    """
    _check_pair(normal, impaired)
    n = normal.response
    d = impaired.response
    conj_d = np.conj(d)
    numerator = np.sum(conj_d * n, axis=0)
    denominator = np.sum((conj_d * d).real, axis=0)
    if input_psd is not None:
        weights = _psd_weights(input_psd, normal.nfft)
        numerator = numerator * weights
        denominator = denominator * weights
    bins = _per_bin_quotient(numerator, denominator, floor)
    return CompensationGain(bins=bins, sample_rate=normal.sample_rate)


def optimal_gain_from_specs(
    normal_spec: FilterbankSpec,
    impaired_spec: FilterbankSpec,
    floor: float = DEFAULT_FLOOR,
) -> CompensationGain:
    """
    Same result as ``optimal_gain_freq`` without materializing either bank.

    Channels are evaluated one at a time on the nonnegative bins, so memory
    stays at a few nfft-length vectors regardless of K.
    """
    if normal_spec.num_channels != impaired_spec.num_channels:
        raise InputError("Specs have different channel counts")
    if (normal_spec.nfft, normal_spec.sample_rate) != (impaired_spec.nfft, impaired_spec.sample_rate):
        raise InputError("Specs use different DFT grids")
    nfft = normal_spec.nfft
    fs = normal_spec.sample_rate
    numerator = np.zeros(nfft // 2 + 1, dtype=complex)
    denominator = np.zeros(nfft // 2 + 1)
    for n_params, d_params in zip(normal_spec.channels, impaired_spec.channels):
        n_half = half_spectrum(n_params, fs, nfft)
        conj_d = np.conj(half_spectrum(d_params, fs, nfft))
        numerator += conj_d * n_half
        denominator += (conj_d * np.conj(conj_d)).real
    half = _per_bin_quotient(numerator, denominator, floor)
    return CompensationGain(bins=hermitian_extend(half, nfft), sample_rate=fs)


def restoration_residual(normal: Filterbank, impaired: Filterbank, gain: CompensationGain) -> float:
    """||N - D diag(c)||_F^2 / ||N||_F^2 for a flat input spectrum."""
    _check_pair(normal, impaired)
    if gain.nfft != normal.nfft:
        raise InputError(f"Gain has {gain.nfft} bins but the filterbanks have {normal.nfft}")
    reference = np.sum(np.abs(normal.response) ** 2)
    if reference == 0:
        raise InputError("Normal-hearing filterbank has zero energy")
    error = np.sum(np.abs(normal.response - impaired.response * gain.bins) ** 2)
    return float(error / reference)


def optimal_filter_time(
    normal_ir,
    impaired_ir,
    probe=None,
    filter_len: int = 512,
    nfft: Optional[int] = None,
    sample_rate: float = 1.0,
    ridge: float = DEFAULT_RIDGE,
) -> CompensationGain:
    """
    Least-squares compensation FIR of ``filter_len`` taps.

    Minimizes sum_k ||h_k * x - d_k * (c * x)||^2 over c, where * is
    convolution on a common length-``nfft`` grid. Without a probe the unit
    impulse is used, which gives the probe-free solution C = D^+ N.

    The normal equations form a symmetric Toeplitz system built from the
    autocorrelation of the filtered probe. A small ridge is added; if the
    system is still badly conditioned the minimal-norm least-squares
    solution is returned and the result is flagged ``ill_conditioned``.

    Args:
        normal_ir: K x T normal-hearing impulse responses.
        impaired_ir: K x T hearing-impaired impulse responses.
        probe: Optional real probe signal.
        filter_len: Number of FIR taps M.
        nfft: Common padded length N; defaults to L + T + M - 2, the
            shortest length for which circular and linear convolution agree.
        sample_rate: Stored on the result for frequency labelling.
        ridge: Relative Tikhonov term added to the normal matrix diagonal.

    Returns:
        CompensationGain with ``derived_fir`` set to c and ``bins`` its
        length-N DFT.

    Raises:
        InputError: On bad shapes, nonpositive ``filter_len`` or ``nfft``
            shorter than the operands.
    """
    h = np.atleast_2d(np.asarray(normal_ir, dtype=float))
    d = np.atleast_2d(np.asarray(impaired_ir, dtype=float))
    if h.shape != d.shape or h.ndim != 2:
        raise InputError(f"Impulse-response matrices differ in shape: {h.shape} vs {d.shape}")
    if filter_len <= 0:
        raise InputError(f"filter_len must be positive, got {filter_len}")
    x = np.array([1.0]) if probe is None else np.asarray(probe, dtype=float)
    if x.ndim != 1 or x.size == 0 or not np.all(np.isfinite(x)):
        raise InputError("probe must be a nonempty finite vector")
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(d))):
        raise InputError("Impulse responses must be finite")

    taps = h.shape[1]
    full = x.size + taps + filter_len - 2
    n = full if nfft is None else int(nfft)
    if n < max(filter_len, taps, x.size):
        raise InputError(f"nfft={n} is shorter than the probe, the filters or the FIR")
    if n < full:
        logger.debug("nfft={} < {}: convolutions wrap around", n, full)

    x_f = np.fft.rfft(x, n)
    u = np.fft.rfft(d, n, axis=1) * x_f
    b = np.fft.rfft(h, n, axis=1) * x_f
    auto = np.fft.irfft(np.sum(np.abs(u) ** 2, axis=0), n)
    cross = np.fft.irfft(np.sum(np.conj(u) * b, axis=0), n)

    gram = scipy.linalg.toeplitz(auto[:filter_len])
    rhs = cross[:filter_len]
    cond = float(np.linalg.cond(gram))
    ill = not np.isfinite(cond) or cond > CONDITION_LIMIT
    if ill:
        logger.warning(
            "Normal matrix is ill-conditioned (cond={:.3g}); using the minimal-norm solution",
            cond,
        )
        fir = scipy.linalg.lstsq(gram, rhs)[0]
    else:
        lam = ridge * float(np.max(np.diag(gram)))
        fir = scipy.linalg.solve(gram + lam * np.eye(filter_len), rhs, assume_a="pos")

    logger.debug("Solved {}-tap compensation filter (cond={:.3g})", filter_len, cond)
    return CompensationGain(
        bins=np.fft.fft(fir, n),
        sample_rate=sample_rate,
        derived_fir=fir,
        ill_conditioned=ill,
        condition_number=cond,
    )


def fir_on_grid(fir, nfft: int, sample_rate: float = 1.0) -> CompensationGain:
    """
    Frequency response of a real FIR sampled on an ``nfft``-point DFT grid.

    Taps beyond ``nfft`` are folded back, so the bins are exact samples of
    the filter's response at k * fs / nfft.
    """
    fir = np.asarray(fir, dtype=float)
    if fir.ndim != 1 or fir.size == 0:
        raise InputError("FIR must be a nonempty vector")
    if nfft < 2:
        raise InputError(f"nfft must be at least 2, got {nfft}")
    padded = np.zeros(-(-fir.size // nfft) * nfft)
    padded[: fir.size] = fir
    folded = padded.reshape(-1, nfft).sum(axis=0)
    return CompensationGain(bins=np.fft.fft(folded), sample_rate=sample_rate, derived_fir=fir)


def fir_from_gain(gain: CompensationGain, taps: int, window: str = "hann") -> np.ndarray:
    """
    Linear-phase FIR whose magnitude follows ``|gain.bins|``.

    The zero-phase response is delayed by (taps - 1)/2 samples, truncated to
    ``taps`` samples and tapered with ``window``.

    Raises:
        InputError: If ``taps`` is not in [1, nfft] or the window is unknown.
    """
    nfft = gain.nfft
    if not 1 <= taps <= nfft:
        raise InputError(f"taps must be in [1, {nfft}], got {taps}")
    try:
        taper = get_window(window, taps, fftbins=False)
    except (ValueError, TypeError) as e:
        raise InputError(f"Unknown window {window!r}: {e}")
    magnitude = gain.magnitude()
    k = np.arange(magnitude.size)
    delay = (taps - 1) / 2.0
    linear_phase = np.exp(-2j * np.pi * k * delay / nfft)
    impulse = np.fft.irfft(magnitude * linear_phase, n=nfft)[:taps]
    return impulse * taper
