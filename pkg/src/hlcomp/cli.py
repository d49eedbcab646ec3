import json
import sys
from importlib.metadata import version as get_version
from pathlib import Path

import click
from loguru import logger
from loguru_config import LoguruConfig
from platformdirs import user_config_dir
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .audiogram import standard_audiogram, standard_audiogram_names
from .config import APP_NAME, ModelConfig, ensure_default_log_config, get_data_dir
from .commands import compensate as compensate_command
from .commands import prescribe as prescribe_command
from .commands import signals as signals_command
from .commands import spacing as spacing_command

console = Console()


def version_callback(ctx, param, value):
    """Callback to handle version option."""
    if not value or ctx.resilient_parsing:
        return
    click.echo(f"hlcomp, version {package_version()}")
    ctx.exit()


def package_version() -> str:
    try:
        return get_version("hlcomp")
    except Exception:
        return "unknown"


def configure_logging(log_config, verbose):
    """
    Set up loguru for a CLI run.

    An explicit --log-config wins; --verbose loads the default config from
    the user data directory; otherwise only warnings reach stderr.
    """
    if log_config:
        LoguruConfig.load(log_config)
    elif verbose:
        LoguruConfig.load(ensure_default_log_config())
    else:
        logger.remove()
        logger.add(sys.stderr, level="WARNING")


@click.group()
@click.option(
    "--log-config",
    type=click.Path(file_okay=True, dir_okay=False, exists=True),
    default=None,
    help="Path to loguru configuration file (JSON or TOML)",
)
@click.option(
    "--verbose",
    "-v",
    is_flag=True,
    default=False,
    help="Enable verbose logging output",
)
@click.option(
    "-V",
    "--version",
    is_flag=True,
    callback=version_callback,
    expose_value=False,
    is_eager=True,
    help="Show the version and exit.",
)
@click.pass_context
def cli(ctx, log_config, verbose):
    "Hearing-loss compensation with auditory filterbank models"
    ctx.ensure_object(dict)
    ctx.obj["log_config"] = log_config
    ctx.obj["verbose"] = verbose
    configure_logging(log_config, verbose)


cli.add_command(spacing_command.spacing)
cli.add_command(spacing_command.gnr_sweep_command)
cli.add_command(compensate_command.compensate)
cli.add_command(signals_command.analyze_gain)
cli.add_command(signals_command.metrics)
cli.add_command(signals_command.noise)
cli.add_command(signals_command.apply_fir)
cli.add_command(prescribe_command.nalr)


@click.group()
def config():
    """
    Configuration commands.

    Show where hlcomp keeps its files, print the default model
    configuration, and list the bundled standard audiograms.
    """
    pass


cli.add_command(config)


@config.command()
def location():
    """
    Display hlcomp configuration and data directory locations.

    Shows the OS-specific directories used by hlcomp, based on XDG Base
    Directory specifications.
    """
    data_dir = get_data_dir()
    config_dir_path = Path(user_config_dir(APP_NAME))

    table = Table(
        title="hlcomp Directory Locations",
        show_header=True,
        header_style="bold cyan",
    )
    table.add_column("Type", style="cyan", width=12)
    table.add_column("Path", style="white")
    table.add_column("Status", style="magenta", width=12)

    data_status = "✓ Exists" if data_dir.exists() else "Not created"
    table.add_row("Data", str(data_dir), data_status)
    config_status = "✓ Exists" if config_dir_path.exists() else "Not created"
    table.add_row("Config", str(config_dir_path), config_status)

    console.print()
    console.print(table)
    console.print()

    log_config = data_dir / "loguru_config.toml"
    console.print(
        Panel(
            f"Log config: [cyan]{log_config}[/cyan] "
            f"({'✓ Exists' if log_config.exists() else 'created on first --verbose run'})",
            border_style="blue",
            title="📁 Data Directory",
        )
    )


@config.command()
def model():
    """
    Print the default model configuration as JSON.

    Save the output, edit it and pass it back with --model.
    """
    click.echo(json.dumps(ModelConfig().to_dict(), indent=2, sort_keys=True))


@config.command()
@click.option("--show", "name", default=None, metavar="NAME", help="Print one audiogram as CSV")
def audiograms(name):
    """
    List the bundled standard audiograms, or print one with --show.
    """
    if name:
        try:
            audiogram = standard_audiogram(name)
        except ValueError as e:
            raise click.BadParameter(str(e), param_hint="'--show'")
        click.echo("freq_hz,hl_db")
        for f, hl in audiogram.points:
            click.echo(f"{f:g},{hl:g}")
        return
    for audiogram_name in standard_audiogram_names():
        click.echo(audiogram_name)


@cli.command()
def version():
    """
    Display the hlcomp version.
    """
    click.echo(f"hlcomp, version {package_version()}")
