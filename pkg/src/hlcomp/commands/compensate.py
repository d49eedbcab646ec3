"""
Compensation command for hlcomp.

Builds the normal-hearing and hearing-impaired models for an audiogram,
solves for the MSE-optimal compensation, and writes the gain curve, a
linear-phase FIR, the relative residual and the resolved configuration.
"""

from pathlib import Path

import click
import numpy as np
from loguru import logger

from ..compensation import (
    fir_from_gain,
    fir_on_grid,
    optimal_filter_time,
    optimal_gain_freq,
    restoration_residual,
)
from ..audio import write_fir_wav
from ..config import ExperimentConfig, max_workers
from ..formats import format_output, format_summary_panel, write_json, write_text
from ..model import model_pair
from ..prescribe import half_gain
from ..spacing import resolve_cfs
from .common import (
    audiogram_options,
    console,
    handle_errors,
    load_model,
    model_option,
    resolve_audiogram,
)


@click.command()
@audiogram_options
@model_option
@click.option(
    "--half-gain",
    "use_half_gain",
    is_flag=True,
    default=False,
    help="Halve every hearing level before building the impaired model",
)
@click.option(
    "--method",
    type=click.Choice(["freq", "time"]),
    default="freq",
    show_default=True,
    help="Per-bin frequency-domain gain or least-squares FIR",
)
@click.option("--fir-taps", type=int, default=512, show_default=True, help="Length of the exported FIR")
@click.option("--window", default="hann", show_default=True, help="Window used to truncate the FIR")
@click.option("--k", "k", type=int, default=None, help="Number of channels (default: model k)")
@click.option(
    "--spacing",
    "spacing_strategy",
    type=click.Choice(["log", "proposed"]),
    default=None,
    help="Spacing strategy (default: model spacing)",
)
@click.option(
    "--plus-one/--no-plus-one",
    default=None,
    help="Impaired-Q variant (default: model plus_one)",
)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, dir_okay=True),
    required=True,
    help="Directory for gain.csv, fir.wav, fir.csv, residual.json and config.json",
)
@handle_errors
def compensate(audiogram_path, standard, model_path, use_half_gain, method, fir_taps, window, k,
               spacing_strategy, plus_one, out_dir):
    """
    Compute the optimal linear compensation for an audiogram.

    With --method freq (default) the per-bin gain minimizing the mean
    squared difference between normal and compensated impaired filterbank
    outputs is computed in closed form and realized as a --fir-taps
    linear-phase FIR. With --method time the FIR of --fir-taps taps is
    solved for directly by least squares on the impulse responses.

    Examples:

        # N3 loss, default model
        hlcomp compensate --standard N3 --out results/n3

        # 21 log-spaced channels, half-gain audiogram
        hlcomp compensate --audiogram me.csv --k 21 --half-gain --out results/me
    """
    if fir_taps < 1:
        raise click.BadParameter("must be at least 1", param_hint="'--fir-taps'")
    audiogram, source = resolve_audiogram(audiogram_path, standard)
    if use_half_gain:
        audiogram = half_gain(audiogram)
    config = load_model(model_path, k=k, spacing=spacing_strategy, plus_one=plus_one)

    cfs = resolve_cfs(config)
    normal, impaired, profile = model_pair(config, cfs, audiogram, workers=max_workers())

    gain = optimal_gain_freq(normal, impaired)
    residual = restoration_residual(normal, impaired, gain)
    fir_residual = None
    if method == "time":
        solved = optimal_filter_time(
            normal.impulse_responses(),
            impaired.impulse_responses(),
            filter_len=fir_taps,
            sample_rate=config.sample_rate_hz,
        )
        fir = solved.derived_fir
        export_gain = solved
        on_grid = fir_on_grid(fir, normal.nfft, config.sample_rate_hz)
        fir_residual = restoration_residual(normal, impaired, on_grid)
    else:
        fir = fir_from_gain(gain, fir_taps, window)
        export_gain = gain

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_text(format_output(export_gain.to_rows(), "csv"), out / "gain.csv")
    write_fir_wav(fir, config.sample_rate_hz, out / "fir.wav")
    write_text(
        format_output([{"index": i, "tap": float(t)} for i, t in enumerate(fir)], "csv"),
        out / "fir.csv",
    )
    report = {
        "method": method,
        "relative_residual": residual,
        "num_channels": int(normal.num_channels),
        "mean_hl_db": float(np.mean(profile.per_cf_hl)),
        "ill_conditioned": bool(export_gain.ill_conditioned),
        "condition_number": export_gain.condition_number,
    }
    if fir_residual is not None:
        report["solved_fir_residual"] = fir_residual
    write_json(report, out / "residual.json")
    experiment = ExperimentConfig(
        command="compensate",
        model=config.to_dict(),
        audiogram=source,
        spacing={"cfs_hz": [float(cf) for cf in cfs]},
        outputs=str(out),
        params={
            "half_gain": use_half_gain,
            "method": method,
            "fir_taps": fir_taps,
            "window": window,
            "audiogram_points": audiogram.to_rows(),
        },
    )
    write_json(experiment.to_dict(), out / "config.json")
    logger.info("Wrote compensation results to {}", out)

    summary = {
        "Channels": normal.num_channels,
        "Relative residual": residual,
        "Peak gain (dB)": float(np.max(20 * np.log10(np.maximum(gain.magnitude(), 1e-300)))),
        "FIR taps": len(fir),
    }
    if fir_residual is not None:
        summary["Solved FIR residual"] = fir_residual
    summary["Output"] = str(out)
    format_summary_panel(summary, console, title="Compensation")
