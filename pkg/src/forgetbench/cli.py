"""Command-line entry points: run one experiment, sweep a grid, render reports."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .harness import (
    ExperimentError,
    load_config_documents,
    load_config_file,
    load_records,
    persist_records,
    resolve_cache_dir,
    run_experiment,
    run_grid,
)
from .report import emit_report


@click.group()
def main() -> None:
    """Benchmark unlearning methods and emit comparison tables."""


@main.command()
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override scenario and metric seeds.")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None,
              help="Baseline cache directory (env: FORGETBENCH_CACHE_DIR).")
@click.option("--out", type=click.Path(dir_okay=False), default="records.jsonl",
              show_default=True, help="Records file to append to.")
def run(config_path: str, seed: int | None, cache_dir: str | None, out: str) -> None:
    """Run the single experiment described by CONFIG_PATH."""
    config = load_config_file(config_path)
    if seed is not None:
        config = config.with_seed(seed)
    try:
        record = run_experiment(config, cache_dir=resolve_cache_dir(cache_dir))
    except Exception as exc:
        raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc
    persist_records([record], out)
    click.echo(emit_report([record]), nl=False)
    click.echo(f"appended 1 record to {out}")


@main.command()
@click.argument("configs_path", type=click.Path(exists=True))
@click.option("--parallelism", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=None, help="Override scenario and metric seeds.")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None,
              help="Baseline cache directory (env: FORGETBENCH_CACHE_DIR).")
@click.option("--out", type=click.Path(dir_okay=False), default="records.jsonl",
              show_default=True, help="Records file to append to.")
def grid(configs_path: str, parallelism: int, seed: int | None,
         cache_dir: str | None, out: str) -> None:
    """Run every config in CONFIGS_PATH (a directory or a multi-document YAML file)."""
    configs = load_config_documents(configs_path)
    if seed is not None:
        configs = [c.with_seed(seed) for c in configs]
    outcomes = run_grid(configs, parallelism=parallelism, cache_dir=resolve_cache_dir(cache_dir))
    records = [o for o in outcomes if not isinstance(o, ExperimentError)]
    failures = [o for o in outcomes if isinstance(o, ExperimentError)]
    if records:
        persist_records(records, out)
        click.echo(emit_report(records), nl=False)
        click.echo(f"appended {len(records)} records to {out}")
    for failure in failures:
        click.echo(
            f"FAILED {failure.config.method} on {failure.config.dataset_name}: "
            f"{failure.error_type}: {failure.message}",
            err=True,
        )
    if failures:
        sys.exit(1)


@main.command()
@click.argument("records_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["markdown", "csv"]), default="markdown",
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the table here instead of stdout.")
def report(records_path: str, fmt: str, out: str | None) -> None:
    """Render persisted records as a comparison table."""
    records = load_records(records_path)
    table = emit_report(records, format=fmt)
    if out is None:
        click.echo(table, nl=False)
    else:
        Path(out).write_text(table, encoding="utf-8")
        click.echo(f"wrote {len(records)} rows to {out}")


if __name__ == "__main__":
    main()
