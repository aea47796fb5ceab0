"""Entry-point CLI for the estimate lab."""
from __future__ import annotations

from pathlib import Path

import typer
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from campaigns import Campaign, CampaignResult, ConfigError, LabSettings, run_campaign

console = Console()
app = typer.Typer(help="Verify the estimates of a convex-integration step on the 2D torus")

ConfigOption = typer.Option(None, "--config", help="key=value campaign file (defaults to $LAB_CONFIG)")
SeedOption = typer.Option(None, "--seed", min=0, help="RNG seed for random-field trials")
OutOption = typer.Option(None, "--out", help="Directory for CSV, manifest and summary")
GridOption = typer.Option(None, "--grid", help="Spatial grid points per axis (power of two)")
LambdaOption = typer.Option(None, "--lambda", help="Comma separated λ values, e.g. 8,16,32,64")


def _ensure_dir(path: Path) -> None:
    path.mkdir(parents=True, exist_ok=True)


def _load_campaign(
    kind: str,
    settings: LabSettings,
    config: Path | None,
    seed: int | None,
    out: Path | None,
    grid: int | None,
    lambdas: str | None,
) -> Campaign:
    path = config or settings.config
    overrides = {"kind": kind, "seed": seed, "output": out, "grid_n": grid, "lambda": lambdas}
    try:
        if path is not None:
            return Campaign.from_file(path, overrides)
        return Campaign.from_values({}, overrides)
    except ConfigError as exc:
        hint = "--config" if exc.key is None else f"--config ({exc.key})"
        raise typer.BadParameter(str(exc), param_hint=hint) from exc


def _execute(
    kind: str,
    config: Path | None,
    seed: int | None,
    out: Path | None,
    grid: int | None,
    lambdas: str | None,
) -> None:
    try:
        settings = LabSettings.from_env()
    except ConfigError as exc:
        raise typer.BadParameter(str(exc), param_hint="LAB_THREADS") from exc
    campaign = _load_campaign(kind, settings, config, seed, out, grid, lambdas)
    output = out or campaign.output
    _ensure_dir(output)

    console.log(f"Running {kind} campaign (seed {campaign.seed}, {settings.threads} thread(s))...")
    code, result = run_campaign(campaign, output, settings)
    for note in result.notes:
        console.log(note)
    _print_summary(result)
    for failure in result.failures:
        console.print(f"[bold red]{failure['kind']} failure[/bold red]: {failure['cause']}")
        console.print(f"  recommendation: {failure['recommendation']}")
    if code == 0:
        console.print(f"\n[bold green]{kind} passed[/bold green] -> {output}")
    elif code == 1:
        console.print(f"\n[bold yellow]{kind} failed a check[/bold yellow] -> {output}")
    raise typer.Exit(code=code)


@app.callback()
def main() -> None:
    load_dotenv()


@app.command()
def identities(
    config: Path | None = ConfigOption,
    seed: int | None = SeedOption,
    out: Path | None = OutOption,
    grid: int | None = GridOption,
    lambdas: str | None = LambdaOption,
):
    """Operator, dyad-decomposition, jet and temporal identities."""
    _execute("identities", config, seed, out, grid, lambdas)


@app.command()
def sweep(
    config: Path | None = ConfigOption,
    seed: int | None = SeedOption,
    out: Path | None = OutOption,
    grid: int | None = GridOption,
    lambdas: str | None = LambdaOption,
):
    """λ-sweeps of building-block norms with slope regression."""
    _execute("sweep", config, seed, out, grid, lambdas)


@app.command()
def lemma64(
    config: Path | None = ConfigOption,
    seed: int | None = SeedOption,
    out: Path | None = OutOption,
    grid: int | None = GridOption,
    lambdas: str | None = LambdaOption,
):
    """Decorrelation rate of ‖f g(σ·)‖_p against σ."""
    _execute("lemma64", config, seed, out, grid, lambdas)


@app.command()
def lemma65(
    config: Path | None = ConfigOption,
    seed: int | None = SeedOption,
    out: Path | None = OutOption,
    grid: int | None = GridOption,
    lambdas: str | None = LambdaOption,
):
    """Stationary-phase rate of |∇|^{-1}ℙ_{≠0}(a ℙ_{≥λ} f) against λ."""
    _execute("lemma65", config, seed, out, grid, lambdas)


@app.command()
def step(
    config: Path | None = ConfigOption,
    seed: int | None = SeedOption,
    out: Path | None = OutOption,
    grid: int | None = GridOption,
    lambdas: str | None = LambdaOption,
):
    """One or more iteration steps from a seeded initial velocity."""
    _execute("step", config, seed, out, grid, lambdas)


@app.command()
def constraints(
    config: Path | None = ConfigOption,
    seed: int | None = SeedOption,
    out: Path | None = OutOption,
    grid: int | None = GridOption,
    lambdas: str | None = LambdaOption,
):
    """Parameter inequalities and exponent identities of the scheme."""
    _execute("constraints", config, seed, out, grid, lambdas)


def _print_summary(result: CampaignResult) -> None:
    table = Table(title=f"{result.kind} summary")
    table.add_column("Group")
    table.add_column("Check")
    table.add_column("Value", justify="right")
    table.add_column("Budget", justify="right")
    table.add_column("Status")

    for row in result.checks:
        if not row.gated:
            continue
        status = "[green]pass[/green]" if row.passed else "[red]fail[/red]"
        table.add_row(row.group, row.name, f"{row.value:.3e}", f"{row.budget:.1e}", status)
    for name, fit in result.regressions.items():
        status = "[green]pass[/green]" if fit.passed else "[red]fail[/red]"
        table.add_row(
            f"slope ({fit.mode})",
            name,
            f"{fit.fitted:+.4f}",
            f"{fit.predicted:+.4f} ± {fit.tolerance:g}",
            status,
        )

    console.print(table)


if __name__ == "__main__":
    app()
