"""
Center-frequency placement and ripple measurement.

``log_cfs`` gives the conventional geometric spacing. ``propose_cfs`` walks
up from ``cf_min`` and, at each center frequency v, steps by the distance
between the probe filter's peak and the point above it where the magnitude
has decayed to ``delta`` times the peak. Sharper filters therefore get
closer neighbours, which flattens the ripple of the compensation gain.

``gnr`` scores a gain curve against a dense-channel reference and
``gnr_sweep`` tabulates it across channel counts and spacing strategies.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from loguru import logger

from .audiogram import Audiogram
from .compensation import optimal_gain_from_specs
from .config import SPACING_STRATEGIES, ModelConfig, max_workers
from .errors import AlgorithmStallError, InputError
from .model import GammatoneParams, audiogram_to_profile, gammatone_response, impaired_spec

GNR_CAP_DB = 300.0
DEFAULT_REF_K = 512
REF_K_MULTIPLE = 4
# bracket width on the log10(1 - delta) scale at which the threshold fit stops
FIT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SpacingRequest:
    """Inputs of the proposed spacing: frequency range, decay threshold and probe model."""

    cf_min: float
    cf_max: float
    delta: float
    config: ModelConfig = field(default_factory=ModelConfig)
    grid_bins: Optional[int] = None
    interpolate: bool = True

    def __post_init__(self):
        nyquist = self.config.sample_rate_hz / 2
        if not 0 < self.cf_min <= self.cf_max < nyquist:
            raise InputError(
                f"need 0 < cf_min <= cf_max < {nyquist}, got {self.cf_min} and {self.cf_max}"
            )
        if not 0 < self.delta < 1:
            raise InputError(f"delta must lie strictly between 0 and 1, got {self.delta}")
        if self.grid_bins is not None and self.grid_bins < 16:
            raise InputError("grid_bins must be at least 16")

    @property
    def bins(self) -> int:
        return self.grid_bins if self.grid_bins is not None else self.config.grid_bins

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.config.sample_rate_hz / 2, self.bins)

    def probe(self, cf: float) -> GammatoneParams:
        return GammatoneParams(cf=cf, order=self.config.order, q=float(self.config.q_at(cf)))


@dataclass(frozen=True, eq=False)
class GainCurve:
    """Linear magnitude gain sampled at ``freqs``; ``valid`` marks usable bins."""

    freqs: np.ndarray
    gains: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float)
        gains = np.asarray(self.gains, dtype=float)
        if freqs.ndim != 1 or freqs.shape != gains.shape:
            raise InputError(f"freqs and gains differ in shape: {freqs.shape} vs {gains.shape}")
        if not np.all(np.isfinite(gains)) or np.any(gains < 0):
            raise InputError("Gains must be finite and nonnegative")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "gains", gains)
        if self.valid is None:
            object.__setattr__(self, "valid", np.ones(freqs.shape, dtype=bool))
        else:
            valid = np.asarray(self.valid, dtype=bool)
            if valid.shape != freqs.shape:
                raise InputError("valid mask must match freqs")
            object.__setattr__(self, "valid", valid)

    @property
    def gains_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(self.gains)

    def band(self, fmin: float, fmax: float) -> "GainCurve":
        keep = (self.freqs >= fmin) & (self.freqs <= fmax)
        return GainCurve(self.freqs[keep], self.gains[keep], self.valid[keep])

    def to_rows(self) -> list[dict]:
        return [
            {"freq_hz": float(f), "gain_linear": float(g), "gain_db": float(d)}
            for f, g, d, ok in zip(self.freqs, self.gains, self.gains_db, self.valid)
            if ok
        ]


@dataclass(frozen=True)
class SweepRow:
    strategy: str
    k: int
    gnr_db: float


def log_cfs(cf_min: float, cf_max: float, k: int) -> np.ndarray:
    """``k`` geometrically spaced center frequencies, both endpoints included."""
    if k < 2:
        raise InputError(f"log spacing needs k >= 2, got {k}")
    if not 0 < cf_min < cf_max:
        raise InputError(f"need 0 < cf_min < cf_max, got {cf_min} and {cf_max}")
    cfs = np.geomspace(cf_min, cf_max, k)
    cfs[0], cfs[-1] = cf_min, cf_max
    return cfs


def _refine_peak(mag: np.ndarray, grid: np.ndarray, j: int) -> tuple[float, float]:
    if j == 0 or j == mag.size - 1:
        return float(grid[j]), float(mag[j])
    y0, y1, y2 = mag[j - 1], mag[j], mag[j + 1]
    curvature = y0 - 2.0 * y1 + y2
    if curvature >= 0:
        return float(grid[j]), float(y1)
    offset = 0.5 * (y0 - y2) / curvature
    step = grid[1] - grid[0]
    return float(grid[j] + offset * step), float(y1 - 0.25 * (y0 - y2) * offset)


def _next_step(req: SpacingRequest, grid: np.ndarray, v: float) -> float:
    mag = np.abs(gammatone_response(req.probe(v), grid))
    j = int(np.argmax(mag))
    if req.interpolate:
        peak_f, peak_val = _refine_peak(mag, grid, j)
    else:
        peak_f, peak_val = float(grid[j]), float(mag[j])
    threshold = req.delta * peak_val
    # search above the peak as well as above v: the peak sits slightly above cf
    start = max(v, peak_f)
    below = np.flatnonzero((grid > start) & (mag < threshold))
    if below.size == 0:
        raise AlgorithmStallError(v, f"response never falls below delta={req.delta} before Nyquist")
    i = int(below[0])
    cross_f = float(grid[i])
    if req.interpolate and i > 0 and mag[i - 1] >= threshold > mag[i]:
        frac = (mag[i - 1] - threshold) / (mag[i - 1] - mag[i])
        cross_f = max(float(grid[i - 1] + frac * (grid[i] - grid[i - 1])), start)
    step = cross_f - peak_f
    if step <= 0:
        raise AlgorithmStallError(v, f"nonpositive step {step:.6g} Hz", step=step)
    return step


def _walk(req: SpacingRequest, limit: Optional[int] = None) -> list[float]:
    grid = req.grid()
    cfs: list[float] = []
    v = float(req.cf_min)
    while v < req.cf_max:
        step = _next_step(req, grid, v)
        cfs.append(v)
        if limit is not None and len(cfs) > limit:
            break
        v += step
    return cfs


def propose_cfs(req: SpacingRequest) -> np.ndarray:
    """
    Ripple-reducing center frequencies in [cf_min, cf_max).

    Raises:
        AlgorithmStallError: If the probe never decays below ``delta`` above
            its peak, or the measured step is not positive.
    """
    cfs = np.array(_walk(req))
    logger.debug(
        "Proposed {} CFs between {} and {} Hz (delta={})",
        cfs.size,
        req.cf_min,
        req.cf_max,
        req.delta,
    )
    return cfs


def fit_proposed_cfs(req: SpacingRequest, k: int, max_iter: int = 60) -> np.ndarray:
    """
    Proposed spacing with exactly ``k`` channels spanning the whole range.

    Bisects the decay threshold on a log(1 - delta) scale for the coarsest
    threshold that still yields ``k`` channels: a delta closer to 1 gives
    smaller steps and more channels, and at the coarsest such delta the
    last channel sits just below ``cf_max``. If the count jumps past ``k``
    the first ``k`` CFs of the shortest longer list are returned.
    """
    if k < 1:
        raise InputError(f"k must be at least 1, got {k}")
    # log10(1 - delta) for delta = 0.01 (coarse) and delta = 1 - 1e-6 (fine)
    coarse, fine = np.log10(0.99), -6.0

    def walk(log_gap: float) -> tuple[Optional[list[float]], bool]:
        """CFs for one threshold (at most k + 1), and whether there are at least k."""
        delta = 1.0 - 10.0**log_gap
        trial = SpacingRequest(
            req.cf_min, req.cf_max, delta, req.config, req.grid_bins, req.interpolate
        )
        try:
            cfs = _walk(trial, limit=k)
        except AlgorithmStallError as e:
            # no crossing: steps too large; nonpositive step: finer than the grid resolves
            return None, e.step is not None
        return cfs, len(cfs) >= k

    best: Optional[list[float]] = None
    for _ in range(max_iter):
        if coarse - fine < FIT_TOLERANCE:
            break
        mid = 0.5 * (coarse + fine)
        cfs, enough = walk(mid)
        if enough:
            fine = mid
            if cfs is not None:
                best = cfs
        else:
            coarse = mid
    if best is None:
        raise InputError(
            f"cannot place {k} proposed CFs between {req.cf_min} and {req.cf_max} Hz"
        )
    if len(best) > k:
        logger.warning("No delta gives exactly {} proposed CFs; truncating a longer list", k)
    else:
        logger.debug("Fitted delta={:.8f} for {} proposed CFs", 1.0 - 10.0**fine, k)
    return np.array(best[:k])


def cfs_for_strategy(strategy: str, config: ModelConfig, k: Optional[int] = None,
                     delta: Optional[float] = None) -> np.ndarray:
    """
    Center frequencies for a named strategy over the config's frequency range.

    ``"proposed"`` with an explicit ``delta`` runs the walk as is; otherwise
    the threshold is fitted so that exactly ``k`` channels come out.
    """
    k = config.k if k is None else k
    if strategy == "log":
        return log_cfs(config.cf_min_hz, config.cf_max_hz, k)
    if strategy == "proposed":
        if delta is not None:
            return propose_cfs(SpacingRequest(config.cf_min_hz, config.cf_max_hz, delta, config))
        return fit_proposed_cfs(
            SpacingRequest(config.cf_min_hz, config.cf_max_hz, config.delta, config), k
        )
    raise InputError(
        f"Unknown spacing strategy {strategy!r}; choose from {', '.join(SPACING_STRATEGIES)}"
    )


def resolve_cfs(config: ModelConfig) -> np.ndarray:
    """Center frequencies described by ``config.spacing``."""
    if isinstance(config.spacing, tuple):
        return np.array(config.spacing, dtype=float)
    return cfs_for_strategy(config.spacing, config)


def gnr(g_ref: GainCurve, g: GainCurve) -> float:
    """
    Gain-to-ripple ratio in dB: 10 log10(||g_ref||^2 / ||g_ref - g||^2).

    The result is clipped to +/-300 dB so identical curves stay finite.
    """
    if g_ref.freqs.shape != g.freqs.shape or not np.allclose(g_ref.freqs, g.freqs, rtol=1e-12, atol=0):
        raise InputError("Gain curves are sampled on different frequency grids")
    reference = float(np.sum(g_ref.gains**2))
    error = float(np.sum((g_ref.gains - g.gains) ** 2))
    if error == 0:
        return GNR_CAP_DB
    if reference == 0:
        return -GNR_CAP_DB
    return float(np.clip(10.0 * np.log10(reference / error), -GNR_CAP_DB, GNR_CAP_DB))


def _unique(strategies: Iterable[str]) -> list[str]:
    seen: list[str] = []
    for s in strategies:
        if s not in SPACING_STRATEGIES:
            raise InputError(
                f"Unknown spacing strategy {s!r}; choose from {', '.join(SPACING_STRATEGIES)}"
            )
        if s in seen:
            logger.warning("Ignoring duplicate strategy {}", s)
            continue
        seen.append(s)
    return seen


def compensation_curve(cfs, audiogram: Audiogram, config: ModelConfig) -> GainCurve:
    """Magnitude of the optimal gain on the positive bins inside [cf_min, cf_max]."""
    normal = config.channel_spec(cfs)
    profile = audiogram_to_profile(
        audiogram, normal.cfs, hl_max=config.hl_max_db, smooth=config.smooth,
        plus_one=config.plus_one,
    )
    gain = optimal_gain_from_specs(normal, impaired_spec(normal, profile))
    curve = GainCurve(gain.freqs, gain.magnitude())
    return curve.band(config.cf_min_hz, config.cf_max_hz)


def gnr_sweep(
    k_values: Sequence[int],
    strategies: Sequence[str],
    audiogram: Audiogram,
    config: ModelConfig,
    ref_k: int = DEFAULT_REF_K,
    workers: Optional[int] = None,
    strict: bool = False,
) -> list[SweepRow]:
    """
    GNR of every (strategy, K) cell against a ``ref_k``-channel reference
    of the same strategy.

    Rows come back in input order (strategy-major) whatever order the
    worker threads finish in.

    With ``strict`` a reference below 4 x max(K) channels is an error
    instead of a warning.

    Raises:
        InputError: On unknown strategies, K < 2 or ``ref_k`` below max(K)
            (below 4 x max(K) when ``strict``).
    """
    strategies = _unique(strategies)
    k_values = [int(k) for k in k_values]
    if not k_values or not strategies:
        raise InputError("Need at least one K and one strategy")
    if min(k_values) < 2:
        raise InputError("Every K must be at least 2")
    if ref_k < max(k_values):
        raise InputError(f"ref_k ({ref_k}) must be at least max(K) ({max(k_values)})")
    if ref_k < REF_K_MULTIPLE * max(k_values):
        if strict:
            raise InputError(
                f"ref_k ({ref_k}) must be at least {REF_K_MULTIPLE} x max(K) ({REF_K_MULTIPLE * max(k_values)})"
            )
        logger.warning(
            "ref_k={} is below {} x max(K); the reference may still ripple",
            ref_k,
            REF_K_MULTIPLE,
        )
    workers = max_workers() if workers is None else workers

    def curve(cell):
        strategy, k = cell
        return compensation_curve(cfs_for_strategy(strategy, config, k=k), audiogram, config)

    cells = [(s, k) for s in strategies for k in k_values]
    jobs = [(s, ref_k) for s in strategies] + cells
    logger.info("GNR sweep: {} cells, reference K={}, {} workers", len(cells), ref_k, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        curves = list(pool.map(curve, jobs))
    references = dict(zip(strategies, curves[: len(strategies)]))

    rows = []
    for (strategy, k), g in zip(cells, curves[len(strategies):]):
        value = gnr(references[strategy], g)
        logger.debug("GNR {} K={}: {:.3f} dB", strategy, k, value)
        rows.append(SweepRow(strategy=strategy, k=k, gnr_db=value))
    return rows
