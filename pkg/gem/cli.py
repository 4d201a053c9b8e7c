import typer
from dataclasses import replace
from typing import Callable, List, Optional
from rich.console import Console
from rich.table import Table

from gem.config import RunConfig, apply_overrides, default_config_path, load_config
from gem.errors import GemError
from gem.reports import RunSummary, run_analyze, run_demo_pca_vs_pls, run_fit
from gem.simulate import load_synth_spec, plant_effects, save_synthetic
from gem.utils import n_jobs, setup_logging

app = typer.Typer(help="General effect modelling of designed multivariate data.")
demo_app = typer.Typer(help="Built-in demonstrations.")
app.add_typer(demo_app, name="demo")
console = Console()

USAGE_ERROR = 2


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Show debug logging.")):
    setup_logging(console, verbose)


def _usage_error(message: str):
    console.print(f"[red]Usage error:[/red] {message}")
    raise typer.Exit(code=USAGE_ERROR)


def _build_config(config_path: Optional[str], overrides: dict) -> RunConfig:
    try:
        n_jobs()
        config_path = config_path or default_config_path()
        config = load_config(config_path) if config_path else RunConfig()
        config = apply_overrides(config, overrides)
        config.validate()
    except ValueError as exc:
        _usage_error(str(exc))
    return config


def _run(action: Callable[[], RunSummary]) -> RunSummary:
    try:
        return action()
    except GemError as exc:
        console.print(f"[red]Error:[/red] {exc}")
        raise typer.Exit(code=1)


def _report(summary: RunSummary):
    if summary.table is not None:
        table = Table(show_header=True, header_style="bold")
        for column in summary.table.columns:
            table.add_column(str(column))
        for row in summary.table.itertuples(index=False):
            table.add_row(*(f"{v:.4g}" if isinstance(v, float) else str(v) for v in row))
        console.print(table)
    for key, value in summary.metrics.items():
        console.print(f"  {key}: [cyan]{value:.4g}[/cyan]" if isinstance(value, float) else f"  {key}: [cyan]{value}[/cyan]")
    for note in summary.notes:
        console.print(f"[yellow]{note}[/yellow]")
    console.print(f"[green]Wrote {len(summary.files)} files to '{summary.out}'.[/green]")


@app.command()
def fit(
    data: Optional[str] = typer.Option(None, "--data", help="CSV file with a header row."),
    responses: Optional[str] = typer.Option(None, "--responses", help="Response columns: prefix, first:last or a comma list."),
    id_column: Optional[str] = typer.Option(None, "--id-column", help="Sample id column."),
    categorical: Optional[List[str]] = typer.Option(None, "--categorical", help="Categorical design variable (repeatable)."),
    continuous: Optional[List[str]] = typer.Option(None, "--continuous", help="Continuous design variable (repeatable)."),
    model: Optional[str] = typer.Option(None, "--model", help="Formula such as 'y ~ a + b + a:b'."),
    out: Optional[str] = typer.Option(None, "--out", help="Output directory."),
    log: Optional[bool] = typer.Option(None, "--log/--no-log", help="Natural-log transform the responses."),
    center: Optional[bool] = typer.Option(None, "--center/--no-center", help="Center the responses before fitting."),
    embed_matrices: Optional[bool] = typer.Option(None, "--embed-matrices/--no-embed-matrices", help="Store effect and residual matrices in gemfit.json."),
    export_er: Optional[bool] = typer.Option(None, "--export-er/--no-export-er", help="Write one ER matrix CSV per term."),
    config: Optional[str] = typer.Option(None, "--config", help="YAML or JSON run configuration."),
):
    """
    Decompose the responses into effect matrices and residuals.
    """
    run = _build_config(
        config,
        dict(
            data=data,
            responses=responses,
            id_column=id_column,
            categorical=categorical,
            continuous=continuous,
            model=model,
            out=out,
            log=log,
            center=center,
            embed_matrices=embed_matrices,
            export_er=export_er,
        ),
    )
    console.print("[bold]Fitting effect model...[/bold]")
    _report(_run(lambda: run_fit(run)))


@app.command()
def analyze(
    data: Optional[str] = typer.Option(None, "--data", help="CSV file with a header row."),
    responses: Optional[str] = typer.Option(None, "--responses", help="Response columns: prefix, first:last or a comma list."),
    id_column: Optional[str] = typer.Option(None, "--id-column", help="Sample id column."),
    categorical: Optional[List[str]] = typer.Option(None, "--categorical", help="Categorical design variable (repeatable)."),
    continuous: Optional[List[str]] = typer.Option(None, "--continuous", help="Continuous design variable (repeatable)."),
    model: Optional[str] = typer.Option(None, "--model", help="Formula such as 'y ~ a + b + a:b'."),
    fit_path: Optional[str] = typer.Option(None, "--fit", help="Existing gemfit.json instead of fitting inline."),
    effect: Optional[List[str]] = typer.Option(None, "--effect", help="Effect term to analyse (repeat to combine)."),
    analysis: Optional[str] = typer.Option(None, "--analysis", help="pca, pls or enet."),
    ncomp: Optional[int] = typer.Option(None, "--ncomp", help="Number of components."),
    cv: Optional[str] = typer.Option(None, "--cv", help="loo or kfold:K."),
    alpha: Optional[float] = typer.Option(None, "--alpha", help="Elastic-net mixing parameter."),
    family: Optional[str] = typer.Option(None, "--family", help="gaussian or binomial (default from the target)."),
    nlambda: Optional[int] = typer.Option(None, "--nlambda", help="Length of the lambda grid."),
    shave: Optional[bool] = typer.Option(None, "--shave/--no-shave", help="Run sMC shaving after PLS; set the step size with --shave-fraction."),
    shave_fraction: Optional[float] = typer.Option(None, "--shave-fraction", help="Fraction of variables dropped per shaving step (default 0.2)."),
    jackknife: Optional[bool] = typer.Option(None, "--jackknife/--no-jackknife", help="Jackknife p-values for PLS coefficients."),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for k-fold splits."),
    out: Optional[str] = typer.Option(None, "--out", help="Output directory."),
    log: Optional[bool] = typer.Option(None, "--log/--no-log", help="Natural-log transform the responses."),
    center: Optional[bool] = typer.Option(None, "--center/--no-center", help="Center the responses before fitting."),
    scale: Optional[bool] = typer.Option(None, "--scale/--no-scale", help="Autoscale the ER matrix columns."),
    add_intercept: Optional[bool] = typer.Option(None, "--add-intercept/--no-add-intercept", help="Add the fitted intercept back to the ER matrix."),
    config: Optional[str] = typer.Option(None, "--config", help="YAML or JSON run configuration."),
):
    """
    Run PCA, PLS or elastic net on the ER matrix of an effect.
    """
    run = _build_config(
        config,
        dict(
            data=data,
            responses=responses,
            id_column=id_column,
            categorical=categorical,
            continuous=continuous,
            model=model,
            fit=fit_path,
            effects=effect,
            analysis=analysis,
            ncomp=ncomp,
            cv=cv,
            alpha=alpha,
            family=family,
            nlambda=nlambda,
            shave=shave,
            shave_fraction=shave_fraction,
            jackknife=jackknife,
            seed=seed,
            out=out,
            log=log,
            center=center,
            scale=scale,
            add_intercept=add_intercept,
        ),
    )
    console.print(f"[bold]Running {run.analysis.upper()} on the ER matrix...[/bold]")
    _report(_run(lambda: run_analyze(run)))


@app.command()
def simulate(
    spec: str = typer.Option(..., "--spec", help="JSON or YAML simulation spec."),
    out: str = typer.Option(..., "--out", help="CSV file to write; the ground truth goes next to it."),
    seed: Optional[int] = typer.Option(None, "--seed", help="Override the seed in the spec."),
):
    """
    Write a seeded synthetic dataset with planted effects.
    """
    try:
        synth = load_synth_spec(spec)
        if seed is not None:
            synth = replace(synth, seed=seed)
        data = plant_effects(synth)
    except ValueError as exc:
        _usage_error(str(exc))
    sidecar = save_synthetic(data, out)
    console.print(f"[green]Wrote {data.dataset.n} samples x {data.dataset.N} responses to '{out}' (truth in '{sidecar}').[/green]")


@demo_app.command("pca-vs-pls")
def pca_vs_pls(
    out: str = typer.Option("gem_demo", "--out", help="Output directory."),
    seed: int = typer.Option(7, "--seed", help="Seed of the toy data."),
):
    """
    Compare the first PCA and PLS components on a two-variable toy problem.
    """
    _report(_run(lambda: run_demo_pca_vs_pls(out, seed)))


if __name__ == "__main__":
    app()
