"""CSV ingestion of paired samples."""

from __future__ import annotations

import csv
import io
import logging
import math
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from locpoly.errors import SampleFormatError
from locpoly.models import PairedSample

logger = logging.getLogger(__name__)

_HEADERS = (["x", "y"], ["x"])


def read_sample_csv(
    path: Path,
    interval: Optional[tuple[float, float]] = None,
    margin: float = 0.1,
) -> PairedSample:
    """Read a sample from a UTF-8 CSV with header ``x,y`` or ``x``.

    Data rows are numbered from 1 (the header is row 0). When *interval*
    is not given, the observed range of x is used.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise SampleFormatError(f"cannot read {path}: {exc}") from exc

    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise SampleFormatError(f"{path} is empty")
    columns = [c.strip().lower() for c in header]
    if columns not in _HEADERS:
        raise SampleFormatError(f"header must be 'x,y' or 'x', found {header!r}", row=0)

    xs: list[float] = []
    ys: list[float] = []
    for row_number, row in enumerate(reader, start=1):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(columns):
            raise SampleFormatError(
                f"expected {len(columns)} field(s), found {len(row)}", row=row_number
            )
        try:
            values = [float(cell) for cell in row]
        except ValueError:
            raise SampleFormatError(f"non-numeric value in {row!r}", row=row_number) from None
        if not all(math.isfinite(v) for v in values):
            raise SampleFormatError(f"NaN or infinite value in {row!r}", row=row_number)
        xs.append(values[0])
        if len(values) == 2:
            ys.append(values[1])

    if not xs:
        raise SampleFormatError(f"{path} holds no observations")
    if interval is None:
        interval = (min(xs), max(xs))
    logger.debug("Read %d observation(s) from %s", len(xs), path)

    try:
        return PairedSample(
            xs=xs,
            ys=ys if len(columns) == 2 else None,
            interval=interval,
            margin=margin,
        )
    except ValidationError as exc:
        raise SampleFormatError(f"{path}: {exc.errors()[0]['msg']}") from exc


def write_sample_csv(sample: PairedSample, path: Path) -> None:
    """Write *sample* in the format read by :func:`read_sample_csv`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if sample.ys is None:
            writer.writerow(["x"])
            writer.writerows([repr(float(x))] for x in sample.xs)
        else:
            writer.writerow(["x", "y"])
            writer.writerows(
                [repr(float(x)), repr(float(y))] for x, y in zip(sample.xs, sample.ys)
            )
