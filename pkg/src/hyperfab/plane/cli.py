"""Command line: run a search, check status, render reports, serve the API."""

from __future__ import annotations

import sys
import time
from pathlib import Path

import click

from .jobs import Engine, JobSpec, UnknownJobError
from .reporting import render_figures, render_report


@click.group()
def main() -> None:
    """Distributed, steerable hyperparameter and architecture search."""


@main.command()
@click.argument("spec_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--data-dir", default="./hyperfab-data", show_default=True,
              help="State directory (event logs, artifacts, reports).")
@click.option("--report/--no-report", "write_report", default=True, show_default=True,
              help="Write the CSV report and figures when the job finishes.")
@click.option("--quiet", is_flag=True, help="Suppress per-iteration progress output.")
def run(spec_file: str, data_dir: str, write_report: bool, quiet: bool) -> None:
    """Run a job spec to completion and print the best candidate."""
    spec = JobSpec.from_text(Path(spec_file).read_text())
    engine = Engine(data_dir)
    job_id = engine.submit(spec)
    click.echo(f"job {job_id} submitted ({spec.name})")
    last_iteration = -1
    while True:
        state = engine.status(job_id)
        if not quiet and state.iteration != last_iteration and state.iteration > 0:
            last_iteration = state.iteration
            best = state.best
            best_txt = f"best={best['reward']:.6g}" if best else "best=n/a"
            click.echo(f"  iteration {state.iteration}: "
                       f"{len(state.observations)} observations, {best_txt}")
        if state.status in ("COMPLETE", "FAILED", "STOPPED"):
            break
        time.sleep(0.2)
    state = engine.wait(job_id)
    space = engine.spaces.get(state.space_id, state.space_version)
    click.echo(render_report(state, space, "text"), nl=False)
    if write_report:
        report_dir = Path(data_dir) / "jobs" / job_id / "report"
        report_dir.mkdir(parents=True, exist_ok=True)
        (report_dir / "report.csv").write_text(render_report(state, space, "csv"))
        figures = render_figures(engine, job_id, report_dir)
        click.echo(f"report written to {report_dir} "
                   f"({1 + len(figures)} files)")
    if state.status != "COMPLETE":
        sys.exit(1)


@main.command()
@click.argument("job_id")
@click.option("--data-dir", default="./hyperfab-data", show_default=True)
def status(job_id: str, data_dir: str) -> None:
    """Print a job's current state (exit code 2 for an unknown id)."""
    engine = Engine(data_dir)
    try:
        state = engine.status(job_id)
    except UnknownJobError:
        click.echo(f"unknown job {job_id!r}", err=True)
        sys.exit(2)
    for key, value in state.summary().items():
        click.echo(f"{key}: {value}")


@main.command()
@click.argument("job_id")
@click.option("--data-dir", default="./hyperfab-data", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["text", "document", "csv"]),
              default="text", show_default=True)
@click.option("--out", type=click.Path(), default=None,
              help="Output directory; figures are rendered alongside the report.")
@click.option("--figures/--no-figures", default=True, show_default=True)
def report(job_id: str, data_dir: str, fmt: str, out: str | None, figures: bool) -> None:
    """Render a job report; with --out, figures land next to the delimited file."""
    engine = Engine(data_dir)
    try:
        state = engine.status(job_id)
    except UnknownJobError:
        click.echo(f"unknown job {job_id!r}", err=True)
        sys.exit(2)
    space = engine.spaces.get(state.space_id, state.space_version)
    rendered = render_report(state, space, fmt)
    if out is None:
        click.echo(rendered, nl=False)
        return
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    suffix = {"csv": "csv", "text": "txt", "document": "json"}[fmt]
    target = outdir / f"report.{suffix}"
    target.write_text(rendered)
    written = [target]
    if figures:
        written += render_figures(engine, job_id, outdir)
    for path in written:
        click.echo(str(path))


@main.command()
@click.option("--data-dir", default="./hyperfab-data", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True, type=int)
def serve(data_dir: str, host: str, port: int) -> None:
    """Start the HTTP control plane (and the steering UI's API)."""
    from .server import serve as run_server

    click.echo(f"serving on http://{host}:{port} (data: {data_dir})")
    run_server(data_dir, host=host, port=port)


if __name__ == "__main__":
    main()
