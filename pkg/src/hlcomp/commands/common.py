"""
Helpers shared by the hlcomp subcommands: error translation, model and
audiogram options, and output/sidecar writing.
"""

import functools
from pathlib import Path
from typing import Optional

import click
import numpy as np
from loguru import logger
from rich.console import Console

from ..audiogram import Audiogram, load_audiogram, standard_audiogram
from ..config import ExperimentConfig, ModelConfig
from ..errors import AlgorithmStallError, ConfigurationError, InputError, SingularBinError
from ..formats import OUTPUT_FORMATS, format_output, sidecar_path, write_json, write_text

console = Console()


class InvalidInput(click.ClickException):
    """Configuration or input problem (exit status 2)."""

    exit_code = 2


class NumericalFailure(click.ClickException):
    """The computation itself failed (exit status 3)."""

    exit_code = 3


def handle_errors(func):
    """Translate library exceptions raised by a command into exit codes."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (InputError, ConfigurationError) as e:
            logger.debug("Input error in {}: {}", func.__name__, e)
            raise InvalidInput(str(e))
        except (SingularBinError, AlgorithmStallError, np.linalg.LinAlgError) as e:
            logger.debug("Numerical failure in {}: {}", func.__name__, e)
            raise NumericalFailure(str(e))

    return wrapper


def model_option(func):
    return click.option(
        "--model",
        "model_path",
        type=click.Path(file_okay=True, dir_okay=False, exists=True),
        default=None,
        help="Model configuration JSON (default: built-in model)",
    )(func)


def audiogram_options(func):
    func = click.option(
        "--standard",
        default=None,
        metavar="NAME",
        help="Use a bundled standard audiogram (N1-N7, S1-S3)",
    )(func)
    func = click.option(
        "--audiogram",
        "audiogram_path",
        type=click.Path(file_okay=True, dir_okay=False, exists=True),
        default=None,
        help="Audiogram file (CSV freq_hz,hl_db or JSON)",
    )(func)
    return func


def format_option(func):
    return click.option(
        "--format",
        "-f",
        "output_format",
        type=click.Choice(OUTPUT_FORMATS),
        default="csv",
        show_default=True,
        help="Output format",
    )(func)


def output_option(func):
    return click.option(
        "--output",
        "-o",
        type=click.Path(file_okay=True, dir_okay=False),
        default=None,
        help="Write results to this file (default: stdout)",
    )(func)


def load_model(model_path: Optional[str], **overrides) -> ModelConfig:
    """Model from ``--model`` (or defaults) with non-None overrides applied."""
    config = ModelConfig.load(model_path) if model_path else ModelConfig()
    changes = {k: v for k, v in overrides.items() if v is not None}
    if changes:
        config = config.replace(**changes)
    return config


def resolve_audiogram(audiogram_path: Optional[str], standard: Optional[str]) -> tuple[Audiogram, str]:
    """The audiogram picked by ``--audiogram`` or ``--standard`` and a label for the sidecar."""
    if audiogram_path and standard:
        raise click.UsageError("Use either --audiogram or --standard, not both")
    if audiogram_path:
        return load_audiogram(audiogram_path), str(audiogram_path)
    if standard:
        return standard_audiogram(standard), f"standard:{standard.upper()}"
    raise click.UsageError("An audiogram is required: pass --audiogram FILE or --standard NAME")


def parse_int_list(value: str, param_hint: str) -> list[int]:
    try:
        items = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}", param_hint=param_hint)
    if not items:
        raise click.BadParameter("at least one value is required", param_hint=param_hint)
    return items


def emit_rows(rows: list[dict], output: Optional[str], output_format: str) -> Optional[Path]:
    """Write rows to ``output`` or echo them to stdout."""
    text = format_output(rows, output_format)
    if output is None:
        click.echo(text)
        return None
    path = write_text(text, output)
    logger.info("Wrote {} rows to {}", len(rows), path)
    return path


def write_sidecar(experiment: ExperimentConfig, output: Optional[Path]) -> Optional[Path]:
    """JSON sidecar next to a file output; nothing for stdout."""
    if output is None:
        return None
    path = sidecar_path(output)
    if path == Path(output):
        path = Path(output).with_suffix(".config.json")
    write_json(experiment.to_dict(), path)
    return path
