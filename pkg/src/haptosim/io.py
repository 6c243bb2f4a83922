"""CSV helpers with byte-reproducible float formatting."""
from __future__ import annotations

import csv
import os
from typing import Iterable, Sequence


def fmt(value) -> str:
    """Format a float with 17 significant digits."""
    return "%.17g" % float(value)


def write_rows(path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write ``rows`` under ``header``; floats get :func:`fmt`, everything else ``str``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if isinstance(v, float) else str(v) for v in row])


def read_rows(path: str | os.PathLike) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
