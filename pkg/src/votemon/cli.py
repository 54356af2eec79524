"""Command line: ``votemon run | audit | gen``."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .audit import ORACLE_MODES, audit_transcript
from .experiment import load_config, run_experiment, write_outputs
from .harness import load_transcript
from .workloads import dumps_stream, generate, load_generator_spec


@click.group()
def main() -> None:
    """Simulate and audit distributed winner-tracking protocols."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--trials", type=int, default=None, help="Override the config's trial count.")
@click.option("--seed", type=int, default=None, help="Override the config's root seed.")
@click.option("--oracle", type=click.Choice(ORACLE_MODES), default=None)
@click.option("--workers", type=int, default=1, show_default=True)
def run(config_path, out, trials, seed, oracle, workers):
    """Run an experiment grid and write report.csv plus transcripts."""
    try:
        config = load_config(config_path)
        rows, transcripts = run_experiment(config, trials, seed, oracle, workers)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    write_outputs(Path(out), rows, transcripts)
    failures = sum(r.failures for r in rows)
    errors = sum(1 for r in rows if r.error)
    click.echo(f"{len(rows)} rows, {failures} audit failures, {errors} invalid cells -> {out}")


@main.command()
@click.option("--transcript", "path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--oracle", type=click.Choice(ORACLE_MODES), default="witness", show_default=True)
def audit(path, oracle):
    """Re-audit a transcript; exits 1 if any declaration fails."""
    transcript = load_transcript(Path(path).read_text())
    try:
        summary = audit_transcript(transcript, oracle)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    click.echo(json.dumps(summary.as_dict(), sort_keys=True))
    sys.exit(1 if summary.failures else 0)


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def gen(spec_path, out):
    """Generate a stream from a JSON generator spec into the text format."""
    try:
        spec, policy = load_generator_spec(spec_path)
        events = generate(spec, policy)
    except (ValueError, TypeError) as exc:
        raise click.UsageError(str(exc)) from exc
    Path(out).write_text(dumps_stream(spec.m, spec.ballot_kind, events))
    click.echo(f"wrote {len(events)} events to {out}")
