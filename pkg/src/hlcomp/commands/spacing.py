"""
Center-frequency commands for hlcomp.

This module provides:
- spacing: log-spaced or proposed center frequencies as ``index,cf_hz``
- gnr-sweep: gain-to-ripple ratio across channel counts and strategies
"""

import click

from ..config import SPACING_STRATEGIES, ExperimentConfig
from ..formats import format_rows_table, format_sweep_table
from ..spacing import DEFAULT_REF_K, SpacingRequest, gnr_sweep, log_cfs, propose_cfs
from .common import (
    audiogram_options,
    console,
    emit_rows,
    format_option,
    handle_errors,
    load_model,
    model_option,
    output_option,
    parse_int_list,
    resolve_audiogram,
    write_sidecar,
)


@click.command()
@click.option(
    "--strategy",
    type=click.Choice(SPACING_STRATEGIES),
    default="log",
    show_default=True,
    help="Spacing strategy",
)
@click.option("--cf-min", type=float, default=None, help="Lowest CF in Hz (default: model cf_min_hz)")
@click.option("--cf-max", type=float, default=None, help="Upper CF bound in Hz (default: model cf_max_hz)")
@click.option("--k", "k", type=int, default=None, help="Number of CFs for log spacing (default: model k)")
@click.option(
    "--delta",
    type=float,
    default=None,
    help="Decay threshold in (0, 1) for proposed spacing; 0.5 is a -6 dB decay",
)
@click.option("--grid-bins", type=int, default=None, help="Probe frequency grid size (default: model grid_bins)")
@click.option(
    "--no-interpolate",
    is_flag=True,
    default=False,
    help="Use the raw grid rule without peak/crossing interpolation",
)
@model_option
@output_option
@format_option
@handle_errors
def spacing(strategy, cf_min, cf_max, k, delta, grid_bins, no_interpolate, model_path, output, output_format):
    """
    Generate a list of center frequencies.

    Log spacing places K geometrically spaced CFs from --cf-min to --cf-max.
    Proposed spacing walks up from --cf-min, stepping by the distance at
    which the probe filter has decayed to --delta times its peak, and stops
    below --cf-max.

    Examples:

        # Three log-spaced CFs over two decades
        hlcomp spacing --strategy log --cf-min 100 --cf-max 10000 --k 3

        # Proposed spacing with a -6 dB decay threshold
        hlcomp spacing --strategy proposed --delta 0.5 -o cfs.csv
    """
    config = load_model(model_path, grid_bins=grid_bins)
    cf_min = config.cf_min_hz if cf_min is None else cf_min
    cf_max = config.cf_max_hz if cf_max is None else cf_max

    if strategy == "proposed":
        if delta is None:
            raise click.BadParameter("is required with --strategy proposed", param_hint="'--delta'")
        request = SpacingRequest(cf_min, cf_max, delta, config, interpolate=not no_interpolate)
        cfs = propose_cfs(request)
    else:
        k = config.k if k is None else k
        cfs = log_cfs(cf_min, cf_max, k)

    rows = [{"index": i, "cf_hz": float(cf)} for i, cf in enumerate(cfs)]
    path = emit_rows(rows, output, output_format)
    experiment = ExperimentConfig(
        command="spacing",
        model=config.to_dict(),
        spacing={
            "strategy": strategy,
            "cf_min_hz": cf_min,
            "cf_max_hz": cf_max,
            "k": None if strategy == "proposed" else k,
            "delta": delta,
            "interpolate": not no_interpolate,
        },
        outputs=str(path) if path else None,
    )
    write_sidecar(experiment, path)
    if path:
        format_rows_table(rows, console, title=f"{strategy} spacing ({len(rows)} CFs)")


@click.command(name="gnr-sweep")
@click.option(
    "--k",
    "k_values",
    default="24,32,48,64,96,128",
    show_default=True,
    help="Comma-separated channel counts",
)
@click.option(
    "--strategies",
    default="log,proposed",
    show_default=True,
    help="Comma-separated spacing strategies",
)
@click.option(
    "--ref-k",
    type=int,
    default=DEFAULT_REF_K,
    show_default=True,
    help="Channel count of the ripple-free reference",
)
@click.option(
    "--strict",
    is_flag=True,
    default=False,
    help="Fail instead of warning when --ref-k is below 4 x the largest K",
)
@click.option(
    "--plus-one/--no-plus-one",
    default=None,
    help="Impaired-Q variant (default: model plus_one)",
)
@click.option("--nfft", type=int, default=None, help="DFT length (default: model nfft)")
@audiogram_options
@model_option
@output_option
@format_option
@handle_errors
def gnr_sweep_command(k_values, strategies, ref_k, strict, plus_one, nfft, audiogram_path, standard,
                      model_path, output, output_format):
    """
    Tabulate the gain-to-ripple ratio of each spacing strategy.

    For every strategy and K, the optimal compensation gain is compared with
    the gain of the same strategy at --ref-k channels over the model's
    [cf_min, cf_max] band. Output columns: strategy, k, gnr_db.

    Examples:

        # Default sweep for the N3 standard audiogram
        hlcomp gnr-sweep --standard N3 -o sweep.csv

        # Two channel counts, log spacing only
        hlcomp gnr-sweep --audiogram n3.csv --k 24,48 --strategies log
    """
    ks = parse_int_list(k_values, "'--k'")
    names = [s.strip() for s in strategies.split(",") if s.strip()]
    for name in names:
        if name not in SPACING_STRATEGIES:
            raise click.BadParameter(
                f"unknown strategy {name!r}; choose from {', '.join(SPACING_STRATEGIES)}",
                param_hint="'--strategies'",
            )
    audiogram, source = resolve_audiogram(audiogram_path, standard)
    config = load_model(model_path, plus_one=plus_one, nfft=nfft)

    rows = [
        {"strategy": r.strategy, "k": r.k, "gnr_db": r.gnr_db}
        for r in gnr_sweep(ks, names, audiogram, config, ref_k=ref_k, strict=strict)
    ]
    path = emit_rows(rows, output, output_format)
    experiment = ExperimentConfig(
        command="gnr-sweep",
        model=config.to_dict(),
        audiogram=source,
        spacing={"strategies": list(dict.fromkeys(names)), "k": ks, "ref_k": ref_k},
        outputs=str(path) if path else None,
    )
    write_sidecar(experiment, path)
    if path:
        format_sweep_table(rows, console)
