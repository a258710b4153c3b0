"""Formatting helpers for the text exports (CSV reports, manifests, dumps)."""

import io
import math
import sys
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO, Union


def format_float(value: Optional[float]) -> str:
    """
    Shortest round-trip representation of a float.

    Missing values (None or NaN) become the empty string so they survive a
    pandas read as NaN.
    """
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return ""
    return repr(value)


def format_cell(value: object) -> str:
    if isinstance(value, float) or value is None:
        return format_float(value)
    if hasattr(value, "value"):  # enums
        return str(value.value)
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    """Render rows under a fixed header, one line per row, '\\n' line endings."""
    buffer = io.StringIO()
    buffer.write(",".join(header) + "\n")
    for row in rows:
        buffer.write(",".join(format_cell(cell) for cell in row) + "\n")
    return buffer.getvalue()


def write_text(text: str, out: Union[str, Path, None] = None, stream: Optional[TextIO] = None) -> None:
    """Write to a file when `out` is given, else to the stream (stdout by default)."""
    if out is None:
        (stream or sys.stdout).write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
