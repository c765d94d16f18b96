"""Command-line entry points.

Subcommands mirror the pipeline stages; global flags select the config
file, seed, output directory, and thread count.  Exit codes: 0 success,
1 validation error, 2 stage failure, 3 success with diagnostic warnings.
"""

from __future__ import annotations

import sys

import click

from .errors import ConfigError, PumpcausalError, StageError
from .pipeline import (
    PipelineConfig,
    build_report,
    load_config,
    run_discover,
    run_features,
    run_fit,
    run_group,
    run_pipeline,
    run_synth,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_STAGE = 2
EXIT_WARNINGS = 3


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="INI config file; omitted keys use documented defaults.")
@click.option("--seed", type=int, default=None, help="Global seed override.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory override.")
@click.option("--threads", type=int, default=None,
              help="Within-stage parallelism (chains, bootstrap).")
@click.pass_context
def main(ctx, config_path, seed, out_dir, threads):
    """Deterioration analytics: hazard fit, features, groups, causal discovery."""
    ctx.obj = {
        "config_path": config_path,
        "seed": seed,
        "out_dir": out_dir,
        "threads": threads,
    }


def _config(ctx) -> PipelineConfig:
    opts = ctx.obj
    try:
        return load_config(
            opts["config_path"],
            seed=opts["seed"],
            out_dir=opts["out_dir"],
            threads=opts["threads"],
        )
    except ConfigError as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)


def _execute(stage_fn, cfg) -> list[str]:
    try:
        return stage_fn(cfg) or []
    except ConfigError as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except (StageError, PumpcausalError) as exc:
        click.echo(f"stage failure: {exc}", err=True)
        sys.exit(EXIT_STAGE)


@main.command()
@click.pass_context
def synth(ctx):
    """Generate synthetic inspections, timeseries, and ground truth."""
    cfg = _config(ctx)
    _execute(run_synth, cfg)
    click.echo(f"synthetic data written to {cfg.out_dir}")


@main.command()
@click.pass_context
def fit(ctx):
    """Fit the hazard model and extract per-pump random effects."""
    cfg = _config(ctx)
    flags = _execute(run_fit, cfg)
    click.echo(f"fit artifacts written to {cfg.out_dir}")
    if flags:
        for flag in flags:
            click.echo(f"warning: {flag}", err=True)
        sys.exit(EXIT_WARNINGS)


@main.command()
@click.pass_context
def features(ctx):
    """Extract the time-series feature matrix."""
    cfg = _config(ctx)
    _execute(run_features, cfg)
    click.echo(f"features written to {cfg.out_dir}")


@main.command()
@click.pass_context
def group(ctx):
    """Assign pumps to sign-based groups."""
    cfg = _config(ctx)
    _execute(run_group, cfg)
    click.echo(f"groups written to {cfg.out_dir}")


@main.command()
@click.pass_context
def discover(ctx):
    """Run per-group causal discovery and write the run report."""
    cfg = _config(ctx)
    _execute(run_discover, cfg)
    click.echo(f"discovery artifacts written to {cfg.out_dir}")


@main.command()
@click.option("--no-cache", is_flag=True, default=False,
              help="Re-run every stage even when cached outputs are valid.")
@click.pass_context
def pipeline(ctx, no_cache):
    """Run all stages in sequence with artifact caching."""
    cfg = _config(ctx)
    flags = _execute(lambda c: run_pipeline(c, use_cache=not no_cache), cfg)
    click.echo(f"pipeline artifacts written to {cfg.out_dir}")
    if flags:
        for flag in flags:
            click.echo(f"warning: {flag}", err=True)
        sys.exit(EXIT_WARNINGS)


@main.command()
@click.pass_context
def report(ctx):
    """Recompute the run report from persisted stage artifacts."""
    cfg = _config(ctx)

    def _build(c):
        run_report = build_report(c)
        click.echo(f"groups: {run_report.groups}")
        if run_report.gap_ratio is not None:
            click.echo(f"effect magnitude gap ratio: {run_report.gap_ratio}")
        if run_report.skipped_groups:
            click.echo(f"skipped groups: {', '.join(run_report.skipped_groups)}")
        return []

    _execute(_build, cfg)
    click.echo(f"report written to {cfg.path('report')}")


if __name__ == "__main__":
    main()
