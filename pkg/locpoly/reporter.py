"""CSV and SVG reporters for fits, scans and empirical-process checks."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel

from locpoly.models import (
    CoveringCurve,
    CurvePoint,
    MomentBoundRow,
    RademacherEstimate,
    RateReport,
    SummaryRow,
    SymmetrizationCheck,
    TailRow,
)

RATE_COLUMNS = [
    "n", "h", "target", "centering", "sup_dev", "rate_stat", "skipped_points", "seed", "replicate",
]

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def fmt(value: Optional[float]) -> str:
    """Fixed rendering of a float so repeated runs write identical bytes."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if not math.isfinite(value):
        return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
    return f"{value:.12g}"


class CsvTable(BaseModel):
    header: list[str]
    rows: list[list[str]]


class CSVReporter:
    """Turns result models into CSV tables."""

    # ------------------------------------------------------------------ #
    # Public API
    # ------------------------------------------------------------------ #

    def rate_table(self, reports: list[RateReport]) -> CsvTable:
        """One row per (report, bandwidth)."""
        rows = []
        for report in reports:
            for row in report.rows:
                rows.append(
                    [
                        str(report.n),
                        fmt(row.h),
                        report.target.label,
                        report.centering.value,
                        fmt(row.sup_dev),
                        fmt(row.rate_stat),
                        str(row.skipped_points),
                        "" if report.seed is None else str(report.seed),
                        "" if report.replicate is None else str(report.replicate),
                    ]
                )
        return CsvTable(header=list(RATE_COLUMNS), rows=rows)

    def summary_table(self, summary: list[SummaryRow]) -> CsvTable:
        header = ["n", "replicates", "p10", "median", "p90", "p99", "max", "mean_sup_dev"]
        rows = [
            [str(s.n), str(s.replicates), fmt(s.p10), fmt(s.median), fmt(s.p90),
             fmt(s.p99), fmt(s.maximum), fmt(s.mean_sup_dev)]
            for s in summary
        ]
        return CsvTable(header=header, rows=rows)

    def fit_table(
        self,
        points: list[CurvePoint],
        h: float,
        p: int,
        nw: Optional[list[Optional[float]]] = None,
    ) -> CsvTable:
        """Columns x0,h,p,beta0..betap,cond_A,n_in_window,status and, if given, nw."""
        header = ["x0", "h", "p", *[f"beta{k}" for k in range(p + 1)], "cond_A", "n_in_window", "status"]
        if nw is not None:
            header.append("nw")
        rows = []
        for i, point in enumerate(points):
            if point.fit is not None:
                coefficients = [fmt(b) for b in point.fit.beta]
                tail = [fmt(point.fit.cond_A), str(point.fit.n_in_window)]
            else:
                coefficients = [""] * (p + 1)
                tail = ["", ""]
            row = [fmt(point.x0), fmt(h), str(p), *coefficients, *tail, point.status]
            if nw is not None:
                row.append(fmt(nw[i]))
            rows.append(row)
        return CsvTable(header=header, rows=rows)

    def covering_table(self, curve: CoveringCurve) -> CsvTable:
        header = ["eps", "count", "members", "nu", "constant", "nu_stderr", "r_squared", "upper_bound"]
        rows = [
            [fmt(eps), str(count), str(curve.members), fmt(curve.nu), fmt(curve.constant),
             fmt(curve.nu_stderr), fmt(curve.r_squared), fmt(curve.upper_bound)]
            for eps, count in zip(curve.eps_grid, curve.counts)
        ]
        return CsvTable(header=header, rows=rows)

    def moment_bound_table(self, rows: list[MomentBoundRow]) -> CsvTable:
        header = ["n", "value", "stderr", "bound", "ratio", "envelope_condition", "sigma_admissible"]
        body = [
            [str(r.n), fmt(r.mu_hat), fmt(r.stderr), fmt(r.bound), fmt(r.ratio),
             fmt(r.envelope_condition), fmt(r.sigma_admissible)]
            for r in rows
        ]
        return CsvTable(header=header, rows=body)

    def rademacher_table(self, n: int, estimate: RademacherEstimate) -> CsvTable:
        header = ["n", "value", "stderr", "draws", "exhaustive"]
        row = [str(n), fmt(estimate.value), fmt(estimate.stderr), str(estimate.draws), fmt(estimate.exhaustive)]
        return CsvTable(header=header, rows=[row])

    def tail_table(self, rows: list[TailRow]) -> CsvTable:
        header = ["t", "empirical_prob", "bound_value"]
        body = [[fmt(r.t), fmt(r.empirical_prob), fmt(r.bound_value)] for r in rows]
        return CsvTable(header=header, rows=body)

    def symmetrization_table(self, check: SymmetrizationCheck) -> CsvTable:
        header = ["n", "centered", "centered_stderr", "value", "stderr", "holds"]
        row = [str(check.n), fmt(check.centered), fmt(check.centered_stderr),
               fmt(check.rademacher), fmt(check.rademacher_stderr), fmt(check.holds)]
        return CsvTable(header=header, rows=[row])

    def write(self, table: CsvTable, output_path: Path) -> None:
        """Serialize *table* to *output_path* with LF line endings."""
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        with output_path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(table.header)
            writer.writerows(table.rows)


class SVGChart:
    """Line chart of rate statistics against log2(h), one polyline per n.

    Replicates at the same n are merged by taking the median statistic at
    each bandwidth. Only path and polyline elements are emitted.
    """

    width = 640
    height = 400
    margin = 48

    def render(self, reports: list[RateReport]) -> str:
        series = self._series(reports)
        points = [pt for line in series.values() for pt in line]
        lines = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
        ]
        left, bottom = self.margin, self.height - self.margin
        right, top = self.width - self.margin, self.margin
        lines.append(
            f'<path d="M{left},{top} L{left},{bottom} L{right},{bottom}" '
            f'fill="none" stroke="#000000" stroke-width="1"/>'
        )
        if points:
            xs = [p[0] for p in points]
            ys = [p[1] for p in points]
            x_lo, x_hi = min(xs), max(xs)
            y_hi = max(ys) if max(ys) > 0 else 1.0
            x_span = x_hi - x_lo if x_hi > x_lo else 1.0

            for index, (n, line) in enumerate(series.items()):
                coords = " ".join(
                    f"{left + (x - x_lo) / x_span * (right - left):.2f},"
                    f"{bottom - y / y_hi * (bottom - top):.2f}"
                    for x, y in line
                )
                colour = _PALETTE[index % len(_PALETTE)]
                lines.append(
                    f'<polyline data-n="{n}" points="{coords}" fill="none" '
                    f'stroke="{colour}" stroke-width="2"/>'
                )
        lines.append("</svg>")
        return "\n".join(lines) + "\n"

    def write(self, svg: str, output_path: Path) -> None:
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)
        output_path.write_text(svg, encoding="utf-8")

    @staticmethod
    def _series(reports: list[RateReport]) -> dict[int, list[tuple[float, float]]]:
        by_n: dict[int, dict[float, list[float]]] = defaultdict(lambda: defaultdict(list))
        for report in reports:
            for row in report.rows:
                if row.status == "ok":
                    by_n[report.n][row.h].append(row.rate_stat)
        return {
            n: [(math.log2(h), float(np.median(values))) for h, values in sorted(by_h.items())]
            for n, by_h in sorted(by_n.items())
        }
