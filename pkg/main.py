import logging
from pathlib import Path
from typing import Callable, Optional

import click
import typer
from rich import print as rprint
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from dimf.errors import ConfigError, DimfError, ToleranceFailure, UnderResolvedGridError
from dimf.logs import configure_logging
from dimf.models.config import ExperimentConfig
from dimf.models.summary import SweepSummary
from dimf.services.bridge_check import run_bridge_check
from dimf.services.gauss_convergence import run_gauss_convergence
from dimf.services.grid_convergence import run_grid_convergence
from dimf.services.oracle_check import run_oracle_check
from dimf.types import ExperimentMode

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_TOLERANCE = 2

# Create Typer app
app = typer.Typer(help="Exact discrete-time iterative Markovian fitting for Schrodinger bridges")
console = Console()
logger = logging.getLogger("sbridge")

ConfigOption = typer.Option(None, "--config", "-c", help="Flat YAML config file")
OutOption = typer.Option(None, "--out", "-o", help="Output directory (overrides output_dir)")
SeedOption = typer.Option(None, "--seed", min=0, help="Base seed (overrides seed)")
JobsOption = typer.Option(1, "--jobs", "-j", min=1, help="Runs executed concurrently")
ThresholdOption = typer.Option(None, "--threshold", help="KL threshold (overrides threshold)")


@app.callback()
def setup():
    """
    Log level comes from SBRIDGE_LOG (DEBUG, INFO, WARNING, ERROR)
    """
    configure_logging()


def _load(mode: ExperimentMode, config: Optional[Path], out: Optional[Path], seed: Optional[int], threshold: Optional[float]) -> ExperimentConfig:
    try:
        return ExperimentConfig.load(
            config,
            mode,
            output_dir=str(out) if out is not None else None,
            seed=seed,
            threshold=threshold,
        )
    except ConfigError as e:
        rprint(f"[bold red]ERROR: {e}[/bold red]")
        raise typer.Exit(code=EXIT_USAGE)


def _run(mode: ExperimentMode, cfg: ExperimentConfig, runner: Callable[[], SweepSummary]) -> SweepSummary:
    rprint(Panel.fit(
        f"[bold blue]{mode.value}[/bold blue]\noutput: {cfg.output_dir}",
        title="sbridge-dimf",
        border_style="blue",
    ))
    try:
        with console.status(f"[bold yellow]Running {mode.value}...[/bold yellow]", spinner="dots"):
            summary = runner()
    except UnderResolvedGridError as e:
        rprint(f"[bold red]ERROR: under-resolved grid: {e}[/bold red]")
        raise typer.Exit(code=EXIT_USAGE)
    except DimfError as e:
        logger.debug("run failed", exc_info=True)
        rprint(f"[bold red]ERROR: {e}[/bold red]")
        raise typer.Exit(code=EXIT_USAGE)

    _show(summary)
    try:
        summary.raise_for_failures()
    except ToleranceFailure as e:
        rprint(f"[bold red]FAILED: {e}[/bold red]")
        raise typer.Exit(code=EXIT_TOLERANCE)

    rprint(f"[bold green]All checks passed. Results written to {cfg.output_dir}[/bold green]")
    return summary


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.3e}"


def _show(summary: SweepSummary) -> None:
    if summary.runs:
        table = Table(title="Gaussian D-IMF runs")
        for column in ("eps", "N", "iters", "to threshold", "final KL", "log-KL slope", "R2", "monotone"):
            table.add_column(column)
        for run in summary.runs:
            table.add_row(
                f"{run.eps:g}",
                str(run.n_inner),
                str(run.iterations_executed),
                str(run.iterations_to_threshold or "not reached"),
                _fmt(run.final_kl),
                _fmt(run.log_kl_slope),
                "-" if run.log_kl_r2 is None else f"{run.log_kl_r2:.4f}",
                "yes" if run.monotone else "[red]no[/red]",
            )
        console.print(table)

    if summary.grid_runs:
        table = Table(title="Grid D-IMF runs")
        for column in ("eps", "N", "outer iters", "TV to oracle", "asymmetry", "Pythagorean", "discretization gap"):
            table.add_column(column)
        for run in summary.grid_runs:
            table.add_row(
                f"{run.eps:g}",
                str(run.n_inner),
                str(run.iterations_executed),
                _fmt(run.final_tv),
                _fmt(run.asymmetry),
                _fmt(max(run.pythagorean_markov_residual, run.pythagorean_reciprocal_residual)),
                _fmt(run.discretization_gap),
            )
        console.print(table)

    if summary.diagnostics is not None:
        d = summary.diagnostics
        rprint(
            f"eps ratio at N={d.eps_ratio_n_inner}: {'-' if d.eps_ratio is None else f'{d.eps_ratio:.2f}'}   "
            f"N saturation (8 vs 32): {'-' if d.n_saturation_ratio is None else f'{d.n_saturation_ratio:.2f}'}"
        )

    table = Table(title="Checks")
    for column in ("check", "residual", "tolerance", "status"):
        table.add_column(column)
    for check in summary.checks:
        status = "[green]pass[/green]" if check.passed else "[bold red]FAIL[/bold red]"
        table.add_row(check.name, _fmt(check.residual), f"{check.tolerance:g}", status)
    console.print(table)


@app.command()
def gauss_convergence(
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    jobs: int = JobsOption,
    threshold: Optional[float] = ThresholdOption,
):
    """
    Gaussian D-IMF sweep over (eps, N) against the closed-form SB plan
    """
    mode = ExperimentMode.GAUSS_CONVERGENCE
    cfg = _load(mode, config, out, seed, threshold)
    _run(mode, cfg, lambda: run_gauss_convergence(cfg, jobs=jobs))


@app.command()
def grid_convergence(
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    jobs: int = JobsOption,
    threshold: Optional[float] = ThresholdOption,
):
    """
    Exact grid D-IMF against Sinkhorn, with Pythagorean-identity residuals
    """
    mode = ExperimentMode.GRID_CONVERGENCE
    cfg = _load(mode, config, out, seed, threshold)
    _run(mode, cfg, lambda: run_grid_convergence(cfg, jobs=jobs))


@app.command()
def oracle_check(
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    jobs: int = JobsOption,
    threshold: Optional[float] = ThresholdOption,
):
    """
    Closed-form plan vs Gaussian IPF vs grid Sinkhorn
    """
    mode = ExperimentMode.ORACLE_CHECK
    cfg = _load(mode, config, out, seed, threshold)
    _run(mode, cfg, lambda: run_oracle_check(cfg))


@app.command()
def bridge_check(
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    jobs: int = JobsOption,
    threshold: Optional[float] = ThresholdOption,
):
    """
    Monte-Carlo and brute-force checks of both projections
    """
    mode = ExperimentMode.BRIDGE_CHECK
    cfg = _load(mode, config, out, seed, threshold)
    _run(mode, cfg, lambda: run_bridge_check(cfg))


def main():
    """
    Console entry point; command-line usage errors exit with status 1
    """
    try:
        status = app(standalone_mode=False)
    except click.exceptions.UsageError as e:
        e.show()
        raise SystemExit(EXIT_USAGE)
    except click.exceptions.Abort:
        raise SystemExit(EXIT_USAGE)
    raise SystemExit(status or EXIT_OK)


if __name__ == "__main__":
    main()
