"""
Output formatting utilities for hlcomp.

This module provides shared formatting for the CLI commands: CSV/TSV/JSON
export with fixed float precision, JSON sidecars, and Rich console
summaries.
"""

import csv as csv_module
import json
import math
from io import StringIO
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

OUTPUT_FORMATS = ("csv", "tsv", "json", "jsonl")


def format_float(value: float) -> str:
    """Floats are written with 9 significant digits so outputs are byte-stable."""
    return f"{value:.9g}"


def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays to JSON-friendly Python values; NaN becomes None."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        if math.isnan(value):
            return None
        return float(format_float(value))
    return value


def _cell(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    return value


def format_output(rows: list[dict], format: str = "csv") -> str:
    """
    Format rows according to specified format.

    Args:
        rows: List of dictionaries to format
        format: Output format - 'csv', 'tsv', 'json' or 'jsonl'

    Returns:
        Formatted string
    """
    if not rows:
        return "[]" if format == "json" else ""

    if format == "json":
        return json.dumps(_plain(rows), indent=2)

    elif format == "jsonl":
        return "\n".join(json.dumps(_plain(row)) for row in rows)

    elif format in ("csv", "tsv"):
        output = StringIO()
        delimiter = "\t" if format == "tsv" else ","
        writer = csv_module.DictWriter(
            output, fieldnames=list(rows[0].keys()), delimiter=delimiter, lineterminator="\n"
        )
        writer.writeheader()
        writer.writerows({k: _cell(v) for k, v in row.items()} for row in rows)
        return output.getvalue().rstrip("\n")

    else:
        raise ValueError(f"Unknown format: {format}")


def write_text(text: str, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n" if text and not text.endswith("\n") else text, encoding="utf-8")
    return path


def to_json(data: dict) -> str:
    return json.dumps(_plain(data), indent=2, sort_keys=True)


def write_json(data: dict, path: Union[str, Path]) -> Path:
    return write_text(to_json(data), path)


def sidecar_path(output: Union[str, Path]) -> Path:
    """``results/gain.csv`` -> ``results/gain.json``."""
    return Path(output).with_suffix(".json")


def format_rows_table(rows: list[dict], console: Console, title: str, limit: Optional[int] = 20) -> None:
    """
    Display the first ``limit`` rows in a Rich table.

    Args:
        rows: List of dictionaries with identical keys
        console: Rich Console instance for output
        title: Table title
        limit: Maximum rows to show (None = all)
    """
    if not rows:
        console.print("[yellow]No rows to display.[/yellow]")
        return

    table = Table(title=title)
    for i, name in enumerate(rows[0]):
        table.add_column(name, justify="right", style="cyan" if i == 0 else "yellow")

    shown = rows if limit is None else rows[:limit]
    for row in shown:
        table.add_row(*(str(_cell(v)) for v in row.values()))

    if limit is not None and len(rows) > limit:
        table.add_section()
        table.add_row(f"... {len(rows) - limit} more", *([""] * (len(rows[0]) - 1)), style="dim")

    console.print(table)


def format_sweep_table(rows: list[dict], console: Console) -> None:
    """
    Display a GNR sweep with one column per strategy.

    Args:
        rows: Dicts with strategy, k and gnr_db keys
        console: Rich Console instance for output
    """
    if not rows:
        console.print("[yellow]Empty sweep.[/yellow]")
        return

    strategies = list(dict.fromkeys(r["strategy"] for r in rows))
    ks = sorted({r["k"] for r in rows})
    values = {(r["strategy"], r["k"]): r["gnr_db"] for r in rows}

    table = Table(title="Gain-to-ripple ratio (dB)")
    table.add_column("K", justify="right", style="cyan")
    for strategy in strategies:
        table.add_column(strategy, justify="right", style="yellow")
    for k in ks:
        cells = [f"{values[(s, k)]:.2f}" if (s, k) in values else "-" for s in strategies]
        table.add_row(str(k), *cells)

    console.print(table)


def format_summary_panel(summary: dict, console: Console, title: str) -> None:
    """
    Display key/value results in a Rich panel.

    Args:
        summary: Mapping of label to value
        console: Rich Console instance for output
        title: Panel title
    """
    table = Table(show_header=False, box=None, padding=(0, 2))
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right", style="yellow")

    for label, value in summary.items():
        if isinstance(value, (float, np.floating)):
            value = format_float(float(value))
        table.add_row(str(label), str(value))

    console.print(Panel(table, title=title, border_style="blue"))
