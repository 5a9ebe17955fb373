"""Typer CLI application for locpoly."""

from __future__ import annotations

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel
from rich.progress import SpinnerColumn, Progress, TextColumn
from rich.table import Table

from locpoly import __version__
from locpoly.config import EmpProcConfig, StudyConfig, load_config
from locpoly.empproc import (
    covering_estimate,
    moment_bound_check,
    rademacher_moment,
    symmetrization_check,
    talagrand_tail_check,
)
from locpoly.errors import ArgumentError, LocpolyError, SampleFormatError
from locpoly.estimators import nadaraya_watson, regression_curve
from locpoly.kernels import gram_matrix, get_kernel, kernel_moment, moment_fraction, quadrature_moment
from locpoly.loader import read_sample_csv
from locpoly.models import ClassKind, FunctionClassSpec
from locpoly.reporter import CSVReporter, SVGChart, fmt
from locpoly.scan import interval_grid, uib_scan
from locpoly.simulation import ReplicationPlan, draw_sample, get_scenario, run_study, study_grid
from locpoly.workers import THREADS_ENV, resolve_workers

app = typer.Typer(
    name="locpoly",
    help="Kernel and local polynomial estimators with uniform-in-bandwidth diagnostics",
    no_args_is_help=True,
)
console = Console()

EMPPROC_CHECKS = ("covering", "rademacher", "symmetrization", "moment-bound", "tail")


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log progress at DEBUG level"),
) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


@contextmanager
def _exit_codes() -> Iterator[None]:
    """Map library errors to exit codes: 2 for bad input, 3 for degenerate runs."""
    try:
        yield
    except (ValidationError, ArgumentError, SampleFormatError) as exc:
        console.print(f"[bold red]Error:[/bold red] {escape(str(exc))}")
        raise typer.Exit(code=2) from exc
    except LocpolyError as exc:
        console.print(f"[bold red]Degenerate:[/bold red] {escape(str(exc))}")
        raise typer.Exit(code=3) from exc


def _banner(subtitle: str) -> None:
    console.print(
        Panel.fit(
            f"[bold cyan]locpoly[/bold cyan] v{__version__}",
            subtitle=subtitle,
            border_style="cyan",
        )
    )


def _threads_option() -> Any:
    return typer.Option(
        None,
        "--threads",
        envvar=THREADS_ENV,
        help=f"Worker threads, 0 = one per CPU [env: {THREADS_ENV}]",
    )


def _with_flags(overrides: list[str], **flags: object) -> list[str]:
    """Append direct flags as overrides so they win over --set and the config file."""
    extra = [f"{key}={value}" for key, value in flags.items() if value is not None]
    return [*overrides, *extra]


# ---------------------------------------------------------------------- #
# moments
# ---------------------------------------------------------------------- #


@app.command()
def moments(
    kernel: str = typer.Option("uniform", "--kernel", "-k", help="Kernel name [config: kernel]"),
    p: int = typer.Option(1, "--p", help="Polynomial degree of the Gram matrix [config: p]"),
) -> None:
    """Print kernel moments mu_0..mu_2p and the Gram matrix."""
    with _exit_codes():
        k = get_kernel(kernel)
        gram = gram_matrix(k, p)

        table = Table(title=f"Moments of {k.name}", header_style="bold magenta")
        table.add_column("j", justify="right")
        table.add_column("mu_j", style="cyan")
        table.add_column("quadrature", style="dim")
        for j in range(2 * p + 1):
            table.add_row(str(j), moment_fraction(kernel_moment(k, j)), fmt(quadrature_moment(k, j)))
        console.print(table)

        rows = ", ".join(
            "[" + ", ".join(moment_fraction(v) for v in row) + "]" for row in gram.entries
        )
        console.print(f"Gram matrix: [{escape(rows)}]")
        console.print(f"Smallest eigenvalue: {fmt(gram.smallest_eigenvalue)}")


# ---------------------------------------------------------------------- #
# fit
# ---------------------------------------------------------------------- #


@app.command()
def fit(
    input_csv: Path = typer.Argument(..., help="CSV with header x,y"),
    kernel: str = typer.Option("uniform", "--kernel", "-k", help="Kernel name [config: kernel]"),
    h: float = typer.Option(..., "--h", help="Bandwidth in (0, 1)"),
    p: int = typer.Option(1, "--p", help="Local polynomial degree [config: p]"),
    xgrid: int = typer.Option(401, "--xgrid", help="Number of x-grid points [config: xgrid_points]"),
    interval: Optional[tuple[float, float]] = typer.Option(
        None, "--interval", help="Interval I; defaults to the range of x"
    ),
    margin: float = typer.Option(0.1, "--margin", help="Margin eta around I"),
    output_dir: Path = typer.Option(Path("."), "--output-dir", "-o", help="Directory for fit.csv"),
    threads: Optional[int] = _threads_option(),
) -> None:
    """Fit local polynomials of degree p on an x-grid over I and write fit.csv."""
    with _exit_codes():
        sample = read_sample_csv(input_csv, interval=interval, margin=margin)
        k = get_kernel(kernel)
        workers = resolve_workers(threads)
        points = interval_grid(sample.interval, xgrid)

        with Progress(SpinnerColumn(), TextColumn("{task.description}"), console=console) as progress:
            progress.add_task(f"Fitting p={p} at {len(points)} point(s)...", total=None)
            curve = regression_curve(sample, k, h, p, points, workers)

        nw: list[Optional[float]] = []
        for x0 in points:
            try:
                nw.append(nadaraya_watson(sample, k, h, float(x0)))
            except LocpolyError:
                nw.append(None)

        reporter = CSVReporter()
        output = output_dir / "fit.csv"
        reporter.write(reporter.fit_table(curve, h, p, nw), output)

        ok = sum(1 for point in curve if point.status == "ok")
        console.print(f"  {ok}/{len(curve)} fit(s) succeeded; written to [bold]{output}[/bold]")
        if ok == 0:
            raise typer.Exit(code=3)


# ---------------------------------------------------------------------- #
# scan and study
# ---------------------------------------------------------------------- #


@app.command()
def scan(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="JSON study config"),
    overrides: list[str] = typer.Option([], "--set", help="Override a config key, key=value"),
    input_csv: Optional[Path] = typer.Option(
        None, "--input", "-i", help="Sample CSV; defaults to replicate 0 of the scenario"
    ),
    target: Optional[str] = typer.Option(None, "--target", help="kde, ftilde:j, rtilde:j or regression [config: target]"),
    output_dir: Path = typer.Option(Path("."), "--output-dir", "-o", help="Directory for rate.csv"),
    svg: bool = typer.Option(True, "--svg/--no-svg", help="Also write rate_vs_h.svg"),
    threads: Optional[int] = _threads_option(),
) -> None:
    """Scan one sample over the bandwidth grid and write rate.csv."""
    with _exit_codes():
        cfg = load_config(StudyConfig, config, _with_flags(overrides, target=target))
        scenario = get_scenario(cfg.scenario)
        if input_csv is not None:
            sample = read_sample_csv(input_csv, interval=scenario.interval, margin=scenario.margin)
            console.print(
                f"[yellow]Centering {escape(input_csv.name)} against the {scenario.name} truth model; "
                "pick the matching scenario with --set scenario=...[/yellow]"
            )
        else:
            plan = ReplicationPlan.from_config(cfg)
            sample = draw_sample(plan, 0, cfg.sample_sizes[0])

        report = uib_scan(
            sample,
            get_kernel(cfg.kernel),
            study_grid(cfg, sample.n),
            cfg.scan_target,
            cfg.centering,
            xgrid=interval_grid(sample.interval, cfg.xgrid_points),
            model=scenario.truth(),
            workers=resolve_workers(threads),
            seed=None if input_csv is not None else cfg.master_seed,
            replicate=None if input_csv is not None else 0,
        )

        reporter = CSVReporter()
        reporter.write(reporter.rate_table([report]), output_dir / "rate.csv")
        if svg:
            chart = SVGChart()
            chart.write(chart.render([report]), output_dir / "rate_vs_h.svg")

        table = Table(title=f"{report.target.label} at n={report.n}", header_style="bold magenta")
        table.add_column("h", justify="right")
        table.add_column("sup_dev", justify="right")
        table.add_column("rate_stat", justify="right", style="cyan")
        table.add_column("skipped", justify="right", style="dim")
        for row in report.rows:
            table.add_row(fmt(row.h), fmt(row.sup_dev), fmt(row.rate_stat), str(row.skipped_points))
        console.print(table)
        console.print(f"  Overall rate statistic: [bold]{fmt(report.overall_rate_stat)}[/bold]")
        if not report.h0_admissible:
            console.print("[yellow]h0 exceeds (2*eta)^d for this interval[/yellow]")
        if report.degenerate:
            raise typer.Exit(code=3)


@app.command()
def study(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="JSON study config"),
    overrides: list[str] = typer.Option([], "--set", help="Override a config key, key=value"),
    scenario: Optional[str] = typer.Option(None, "--scenario", help="S1, S2 or S3 [config: scenario]"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed [config: master_seed]"),
    replicates: Optional[int] = typer.Option(None, "--replicates", help="Replicates per n [config: replicates]"),
    output_dir: Path = typer.Option(Path("."), "--output-dir", "-o", help="Directory for study CSVs"),
    svg: bool = typer.Option(True, "--svg/--no-svg", help="Also write rate_vs_h.svg"),
    threads: Optional[int] = _threads_option(),
) -> None:
    """Replicate scans across sample sizes and summarize the rate statistics."""
    with _exit_codes():
        cfg = load_config(
            StudyConfig,
            config,
            _with_flags(overrides, scenario=scenario, master_seed=seed, replicates=replicates),
        )
        plan = ReplicationPlan.from_config(cfg)
        _banner(f"study {plan.scenario.name}, {plan.replicates} replicate(s)")

        with Progress(SpinnerColumn(), TextColumn("{task.description}"), console=console) as progress:
            progress.add_task("Running replicates...", total=None)
            result = run_study(plan, cfg, resolve_workers(threads))

        reporter = CSVReporter()
        reporter.write(reporter.rate_table(result.reports), output_dir / "study_rates.csv")
        reporter.write(reporter.summary_table(result.summary), output_dir / "study_summary.csv")
        if svg:
            chart = SVGChart()
            chart.write(chart.render(result.reports), output_dir / "rate_vs_h.svg")

        table = Table(title=f"Rate statistics ({result.gamma_convention} floor)", header_style="bold")
        for column in ("n", "replicates", "median", "p90", "p99", "max", "mean sup_dev"):
            table.add_column(column, justify="right")
        for row in result.summary:
            table.add_row(
                str(row.n), str(row.replicates), fmt(row.median), fmt(row.p90),
                fmt(row.p99), fmt(row.maximum), fmt(row.mean_sup_dev),
            )
        console.print(table)
        for flag in result.flags:
            console.print(f"[yellow]FLAG[/yellow] {escape(flag)}")
        for failure in result.failures:
            console.print(f"[red]FAILED[/red] {escape(failure)}")

        if result.failures or not result.reports or all(r.degenerate for r in result.reports):
            raise typer.Exit(code=3)


# ---------------------------------------------------------------------- #
# empproc
# ---------------------------------------------------------------------- #


def _class_spec(cfg: EmpProcConfig) -> FunctionClassSpec:
    if cfg.class_kind is ClassKind.KERNEL_TRANSLATES:
        return FunctionClassSpec.kernel_translates(
            cfg.kernel, cfg.order, cfg.h_range, cfg.x_range, cfg.h_count, cfg.x_count
        )
    windows = FunctionClassSpec.indicator_windows(cfg.h_range, cfg.x_range, cfg.h_count, cfg.x_count)
    if cfg.class_kind is ClassKind.PRODUCT:
        return FunctionClassSpec.product(windows, windows)
    return windows


@app.command()
def empproc(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="JSON empproc config"),
    overrides: list[str] = typer.Option([], "--set", help="Override a config key, key=value"),
    class_kind: Optional[ClassKind] = typer.Option(
        None, "--class", help="Function class [config: class_kind]"
    ),
    checks: list[str] = typer.Option(
        ["covering", "rademacher"], "--check", help=f"Checks to run: {', '.join(EMPPROC_CHECKS)}"
    ),
    output_dir: Path = typer.Option(Path("."), "--output-dir", "-o", help="Directory for result CSVs"),
    threads: Optional[int] = _threads_option(),
) -> None:
    """Covering numbers, Rademacher moments and bound checks for a function class."""
    with _exit_codes():
        unknown = [c for c in checks if c not in EMPPROC_CHECKS]
        if unknown:
            raise ArgumentError(f"unknown check(s) {', '.join(unknown)}")
        cfg = load_config(
            EmpProcConfig,
            config,
            _with_flags(overrides, class_kind=class_kind.value if class_kind else None),
        )
        spec = _class_spec(cfg)
        scenario = get_scenario(cfg.scenario)
        workers = resolve_workers(threads)
        reporter = CSVReporter()
        measure = draw_sample(
            ReplicationPlan(master_seed=cfg.master_seed, replicates=1, sample_sizes=[cfg.n], scenario=scenario),
            0,
            cfg.n,
        )

        if "covering" in checks:
            curve = covering_estimate(spec, measure, cfg.eps_grid)
            reporter.write(reporter.covering_table(curve), output_dir / "covering.csv")
            console.print(
                f"  Covering counts {curve.counts} over eps {curve.eps_grid}; "
                f"nu = {fmt(curve.nu)} (R^2 = {fmt(curve.r_squared)})"
            )
        if "rademacher" in checks:
            estimate = rademacher_moment(spec, measure, cfg.draws, cfg.master_seed, workers=workers)
            reporter.write(reporter.rademacher_table(cfg.n, estimate), output_dir / "rademacher.csv")
            console.print(f"  Rademacher moment {fmt(estimate.value)} +/- {fmt(estimate.stderr)}")
        if "symmetrization" in checks:
            check = symmetrization_check(spec, scenario, cfg.n, cfg.draws, cfg.master_seed, workers)
            reporter.write(reporter.symmetrization_table(check), output_dir / "symmetrization.csv")
            console.print(f"  Symmetrization holds: {check.holds}")
        if "moment-bound" in checks:
            rows = moment_bound_check(
                spec, scenario, cfg.sample_sizes, cfg.sigma, cfg.master_seed,
                eps_grid=cfg.eps_grid, workers=workers,
            )
            reporter.write(reporter.moment_bound_table(rows), output_dir / "moment_bound.csv")
            ratios = [r.ratio for r in rows]
            console.print(f"  Moment bound ratios {fmt(min(ratios))}..{fmt(max(ratios))}")
        if "tail" in checks:
            tail = talagrand_tail_check(
                spec, scenario, cfg.n, cfg.t_grid, cfg.replicates, cfg.master_seed, workers=workers
            )
            reporter.write(reporter.tail_table(tail), output_dir / "tail.csv")
            console.print(f"  Tail frequencies {[fmt(r.empirical_prob) for r in tail]}")


if __name__ == "__main__":
    app()
