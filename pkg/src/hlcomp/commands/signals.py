"""
Signal-level commands for hlcomp.

This module provides:
- analyze-gain: long-term gain between an input and a processed WAV
- metrics: loss family and SER between two channel-response files
- noise: seeded white or speech-shaped test noise
- apply-fir: filter a WAV file with an exported FIR
"""

import csv
import hashlib
from pathlib import Path

import click
import numpy as np
from scipy.signal import lfilter

from ..audio import read_responses, read_wav, write_wav
from ..config import ExperimentConfig
from ..errors import InputError
from ..formats import format_float, format_summary_panel, to_json, write_text
from ..metrics import (
    COMPOSITE_SEGMENTS_MS,
    NOISE_KINDS,
    SignalBuffer,
    WelchParams,
    composite_loss,
    long_term_gain,
    low_freq_penalty,
    make_noise,
    mae,
    segmented_mae,
    ser,
)
from .common import console, emit_rows, format_option, handle_errors, output_option, write_sidecar


@click.command(name="analyze-gain")
@click.option(
    "--in",
    "input_path",
    type=click.Path(file_okay=True, dir_okay=False, exists=True),
    required=True,
    help="Unprocessed input WAV",
)
@click.option(
    "--out",
    "processed_path",
    type=click.Path(file_okay=True, dir_okay=False, exists=True),
    required=True,
    help="Processed WAV",
)
@click.option("--welch-seg", type=int, default=8192, show_default=True, help="Welch segment length in samples")
@click.option("--overlap", type=float, default=0.5, show_default=True, help="Segment overlap fraction")
@click.option("--window", default="hann", show_default=True, help="Welch window")
@click.option("--nfft", type=int, default=None, help="DFT length (default: segment length)")
@output_option
@format_option
@handle_errors
def analyze_gain(input_path, processed_path, welch_seg, overlap, window, nfft, output, output_format):
    """
    Estimate the long-term gain of a processing chain.

    The gain is the ratio of Welch-averaged magnitude spectra of the
    processed and unprocessed signals (trimmed to their common length).
    Output columns: freq_hz, gain_linear, gain_db; bins with negligible
    input energy are left out.

    Examples:

        hlcomp analyze-gain --in noise.wav --out processed.wav -o gain.csv
    """
    params = WelchParams(segment_len=welch_seg, overlap=overlap, window=window, nfft=nfft)
    x = read_wav(input_path)
    y = read_wav(processed_path)
    curve = long_term_gain(x, y, params)
    path = emit_rows(curve.to_rows(), output, output_format)
    experiment = ExperimentConfig(
        command="analyze-gain",
        welch={"segment_len": welch_seg, "overlap": overlap, "window": window, "nfft": nfft},
        outputs=str(path) if path else None,
        params={"input": str(input_path), "processed": str(processed_path)},
    )
    write_sidecar(experiment, path)


def _digest(*paths) -> str:
    sha = hashlib.sha256()
    for p in paths:
        sha.update(Path(p).read_bytes())
    return sha.hexdigest()


@click.command()
@click.argument("nh_file", type=click.Path(file_okay=True, dir_okay=False, exists=True))
@click.argument("hi_file", type=click.Path(file_okay=True, dir_okay=False, exists=True))
@click.option(
    "--x",
    "x_path",
    type=click.Path(file_okay=True, dir_okay=False, exists=True),
    default=None,
    help="Reference WAV for the low-frequency penalty",
)
@click.option(
    "--y",
    "y_path",
    type=click.Path(file_okay=True, dir_okay=False, exists=True),
    default=None,
    help="Processed WAV for the low-frequency penalty",
)
@click.option("--gamma", type=float, default=1.0, show_default=True, help="Weight of the low-frequency penalty")
@click.option("--cutoff", type=float, default=20.0, show_default=True, help="Low-frequency penalty cutoff in Hz")
@click.option("--sample-rate", type=float, default=None, help="Channel-response sample rate if the files lack one")
@output_option
@handle_errors
def metrics(nh_file, hi_file, x_path, y_path, gamma, cutoff, sample_rate, output):
    """
    Compare two channel-response files.

    Reports the plain MAE, segmented MAE at 1, 10 and 100 ms, the
    low-frequency penalty between --x and --y (when both are given), the
    composite loss and the per-channel SER (NH_FILE is the ground truth).

    Examples:

        hlcomp metrics nh.resp hi.resp --x clean.wav --y processed.wav -o report.json
    """
    if (x_path is None) != (y_path is None):
        raise click.UsageError("--x and --y must be given together")
    nh = read_responses(nh_file)
    hi = read_responses(hi_file)
    if nh.shape != hi.shape:
        raise InputError(f"Channel response shapes differ: {nh.shape} vs {hi.shape}")
    rate = sample_rate or nh.sample_rate
    if rate is None:
        raise click.BadParameter("the response files carry no sample rate", param_hint="'--sample-rate'")

    digest = _digest(nh_file, hi_file, *(p for p in (x_path, y_path) if p))
    report = [{"metric": "mae", "value": mae(nh, hi), "params": {}}]
    losses = []
    for ms in COMPOSITE_SEGMENTS_MS:
        value = segmented_mae(nh, hi, ms, rate)
        losses.append(value)
        report.append({"metric": "segmented_mae", "value": value, "params": {"segment_ms": ms}})

    if x_path is not None:
        x, y = read_wav(x_path), read_wav(y_path)
        penalty = low_freq_penalty(x, y, cutoff)
        composite = composite_loss(nh, hi, x, y, gamma, sample_rate=rate, cutoff_hz=cutoff)
        report.append({"metric": "low_freq_penalty", "value": penalty, "params": {"cutoff_hz": cutoff}})
    else:
        composite = float(sum(losses))
    report.append({"metric": "composite_loss", "value": composite,
                   "params": {"gamma": gamma if x_path else 0.0, "segments_ms": list(COMPOSITE_SEGMENTS_MS)}})
    report.append({"metric": "ser_db", "value": ser(nh, hi).tolist(), "params": {}})
    for entry in report:
        entry["inputs_digest"] = digest

    text = to_json({"sample_rate": rate, "metrics": report})
    if output is None:
        click.echo(text)
        return
    path = write_text(text, output)
    experiment = ExperimentConfig(
        command="metrics",
        outputs=str(path),
        params={"nh": str(nh_file), "hi": str(hi_file), "x": x_path, "y": y_path,
                "gamma": gamma, "cutoff_hz": cutoff, "sample_rate": rate},
    )
    write_sidecar(experiment, path)
    format_summary_panel(
        {"MAE": report[0]["value"], "Composite": composite,
         "Mean SER (dB)": format_float(float(np.nanmean(ser(nh, hi))))},
        console,
        title="Metrics",
    )


@click.command()
@click.option("--kind", type=click.Choice(NOISE_KINDS), default="white", show_default=True)
@click.option("--duration", type=float, default=10.0, show_default=True, help="Duration in seconds")
@click.option("--sample-rate", type=int, default=32000, show_default=True, help="Sample rate in Hz")
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed")
@click.option("--spl", type=float, default=65.0, show_default=True, help="Calibration level in dB SPL")
@click.option(
    "--subtype",
    type=click.Choice(["float", "pcm16"]),
    default="float",
    show_default=True,
    help="WAV sample format",
)
@click.option(
    "--output",
    "-o",
    type=click.Path(file_okay=True, dir_okay=False),
    required=True,
    help="WAV file to write",
)
@handle_errors
def noise(kind, duration, sample_rate, seed, spl, subtype, output):
    """
    Generate seeded Gaussian test noise.

    Speech-shaped noise is white noise filtered by an FIR following the
    bundled long-term average speech spectrum. A full-scale RMS of 1.0
    corresponds to 100 dB SPL.

    Examples:

        hlcomp noise --kind speech_shaped --duration 30 --seed 7 -o ssn.wav
    """
    signal = make_noise(kind, duration, sample_rate, seed=seed, spl_db=spl)
    path = write_wav(signal, output, subtype)
    write_sidecar(
        ExperimentConfig(
            command="noise",
            outputs=str(path),
            seed=seed,
            params={"kind": kind, "duration_s": duration, "sample_rate": sample_rate,
                    "spl_db": spl, "subtype": subtype},
        ),
        path,
    )


def _read_fir(path: str, sample_rate: float) -> np.ndarray:
    if Path(path).suffix.lower() == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "tap" not in reader.fieldnames:
                raise InputError(f"{path}: expected a 'tap' column")
            try:
                return np.array([float(row["tap"]) for row in reader])
            except (TypeError, ValueError) as e:
                raise InputError(f"{path}: bad FIR tap value: {e}")
    fir = read_wav(path)
    if fir.sample_rate != sample_rate:
        raise InputError(f"FIR sample rate {fir.sample_rate} differs from the input's {sample_rate}")
    return fir.samples


@click.command(name="apply-fir")
@click.argument("input_path", type=click.Path(file_okay=True, dir_okay=False, exists=True))
@click.argument("fir_path", type=click.Path(file_okay=True, dir_okay=False, exists=True))
@click.option(
    "--output",
    "-o",
    type=click.Path(file_okay=True, dir_okay=False),
    required=True,
    help="WAV file to write",
)
@click.option(
    "--subtype",
    type=click.Choice(["float", "pcm16"]),
    default="float",
    show_default=True,
    help="WAV sample format",
)
@handle_errors
def apply_fir(input_path, fir_path, output, subtype):
    """
    Filter INPUT_PATH with the FIR in FIR_PATH (a fir.wav or fir.csv export).

    The output has the same length as the input.

    Examples:

        hlcomp apply-fir noise.wav results/n3/fir.wav -o processed.wav
    """
    signal = read_wav(input_path)
    taps = _read_fir(fir_path, signal.sample_rate)
    if taps.size == 0:
        raise InputError(f"{fir_path} has no taps")
    filtered = lfilter(taps, 1.0, signal.samples)
    write_wav(SignalBuffer(filtered, signal.sample_rate), output, subtype)
