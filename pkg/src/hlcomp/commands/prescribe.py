"""
Prescription command for hlcomp: NAL-R insertion gain, optionally realized
as an FIR.
"""

import click

from ..audio import write_fir_wav
from ..compensation import fir_from_gain
from ..config import ExperimentConfig
from ..formats import format_rows_table
from ..prescribe import half_gain, nalr_gain, prescription_bins
from .common import (
    audiogram_options,
    console,
    emit_rows,
    format_option,
    handle_errors,
    output_option,
    resolve_audiogram,
    write_sidecar,
)


@click.command()
@audiogram_options
@click.option(
    "--half-gain",
    "use_half_gain",
    is_flag=True,
    default=False,
    help="Halve every hearing level first",
)
@click.option(
    "--fir",
    "fir_path",
    type=click.Path(file_okay=True, dir_okay=False),
    default=None,
    help="Also write the prescription as a linear-phase FIR WAV",
)
@click.option("--fir-taps", type=int, default=512, show_default=True, help="FIR length")
@click.option("--window", default="hann", show_default=True, help="FIR window")
@click.option("--sample-rate", type=int, default=32000, show_default=True, help="FIR sample rate in Hz")
@click.option("--nfft", type=int, default=8192, show_default=True, help="DFT grid used to design the FIR")
@output_option
@format_option
@handle_errors
def nalr(audiogram_path, standard, use_half_gain, fir_path, fir_taps, window, sample_rate, nfft,
         output, output_format):
    """
    NAL-R insertion gain for an audiogram.

    IG(f) = 0.05 (HL500 + HL1000 + HL2000) + 0.31 HL(f) + k(f), clamped at
    0 dB, at the nine standard frequencies from 250 to 6000 Hz. Output
    columns: freq_hz, insertion_gain_db.

    Examples:

        hlcomp nalr --standard N3

        hlcomp nalr --audiogram me.csv --fir nalr.wav -o nalr.csv
    """
    audiogram, source = resolve_audiogram(audiogram_path, standard)
    if use_half_gain:
        audiogram = half_gain(audiogram)
    prescription = nalr_gain(audiogram)
    rows = prescription.to_rows()
    path = emit_rows(rows, output, output_format)

    if fir_path:
        taps = fir_from_gain(prescription_bins(prescription, sample_rate, nfft), fir_taps, window)
        write_fir_wav(taps, sample_rate, fir_path)

    experiment = ExperimentConfig(
        command="nalr",
        audiogram=source,
        outputs=str(path) if path else None,
        params={
            "half_gain": use_half_gain,
            "fir": fir_path,
            "fir_taps": fir_taps,
            "window": window,
            "sample_rate": sample_rate,
            "nfft": nfft,
        },
    )
    write_sidecar(experiment, path)
    if path:
        format_rows_table(rows, console, title="NAL-R insertion gain", limit=None)
