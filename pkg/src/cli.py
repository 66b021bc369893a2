#!/usr/bin/env python3
"""
SourceLoc CLI - Main Command Line Interface

Runs the TMS-EEG source-localization pipeline through subcommands:
- sourceloc simulate: Synthetic recording from a scenario
- sourceloc preprocess: Artifact interpolation, filters, epoch, noise covariance
- sourceloc localize: One inverse method (mne, dspm, sloreta, wmem)
- sourceloc scouts / connectivity / zones: Individual comparison metrics
- sourceloc compare: Full comparison bundle for several estimates
- sourceloc report: The whole chain into one bundle
"""

import sys
import click
from functools import wraps
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple

from . import __version__
from .errors import SourceLocError
from .inverse_linear import Method
from .pipeline import (
    cmd_compare,
    cmd_connectivity,
    cmd_localize,
    cmd_preprocess,
    cmd_report,
    cmd_scouts,
    cmd_simulate,
    cmd_zones,
    load_config,
)
from .utils import configure_logging

# Logo for SourceLoc
LOGO = """\033[34m
  ____                           _
 / ___|  ___  _   _ _ __ ___ ___| |    ___   ___
 \\___ \\ / _ \\| | | | '__/ __/ _ \\ |   / _ \\ / __|
  ___) | (_) | |_| | | | (_|  __/ |__| (_) | (__
 |____/ \\___/ \\__,_|_|  \\___\\___|_____\\___/ \\___|
\033[0m"""


class LogoGroup(click.Group):
    """Custom Click Group that displays logo before help text and commands."""

    def format_help(self, ctx, formatter):
        """Override to display logo before help."""
        click.echo(LOGO, err=True)
        super().format_help(ctx, formatter)

    def invoke(self, ctx):
        """Override to display logo before running subcommands."""
        # Only show logo if not showing help (help is handled by format_help)
        if not ctx.protected_args or '--help' not in ctx.protected_args:
            if ctx.invoked_subcommand is not None:
                click.echo(LOGO, err=True)
        return super().invoke(ctx)


@click.group(cls=LogoGroup, invoke_without_command=True)
@click.version_option(version=__version__, prog_name="sourceloc")
@click.option('-v', '--verbose', is_flag=True, help='Debug-level logging')
@click.pass_context
def cli(ctx, verbose: bool):
    """
    SourceLoc - EEG source localization for TMS-EEG

    MNE, dSPM, sLORETA and wavelet MEM inverse methods on a spherical head
    model, compared by cross-correlation connectivity, Kansky indices and
    k-means active-zone detection rates.
    """
    configure_logging(verbose)
    # Show help when no command is given
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


# =============================================================================
# Shared options
# =============================================================================

def pipeline_options(func: Callable) -> Callable:
    """--config, --out, --seed and --n-jobs, shared by every subcommand."""
    func = click.option('--n-jobs', default=None, type=click.IntRange(1, None),
                        help='Worker threads (overrides the config)')(func)
    func = click.option('--seed', default=None, type=click.IntRange(0, None),
                        help='Master seed (overrides the config)')(func)
    func = click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False, path_type=Path),
                        help='Bundle directory for inputs and outputs')(func)
    func = click.option('--config', 'config_path', default=None, type=click.Path(dir_okay=False, path_type=Path),
                        help='YAML config merged over the packaged defaults')(func)
    return func


def _load(config_path: Optional[Path], seed: Optional[int], n_jobs: Optional[int]):
    overrides: Dict[str, Any] = {}
    if seed is not None:
        overrides["seed"] = seed
    if n_jobs is not None:
        overrides["n_jobs"] = n_jobs
    return load_config(config_path, overrides)


def handle_errors(func: Callable) -> Callable:
    """Turn SourceLocError into a one-line message and the family exit code."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except SourceLocError as e:
            click.echo(f"❌ {type(e).__name__}: {e}", err=True)
            sys.exit(e.exit_code)
    return wrapper


# =============================================================================
# Subcommands
# =============================================================================

@cli.command(name="simulate")
@pipeline_options
@handle_errors
def simulate_command(config_path: Optional[Path], out_dir: Path, seed: Optional[int], n_jobs: Optional[int]):
    """
    Simulate a TMS-EEG recording and its lead field.

    Examples:

      # Default coupling scenario:
      sourceloc simulate --out run1

      # Custom config and seed:
      sourceloc simulate --config my.yaml --seed 7 --out run2
    """
    paths = cmd_simulate(_load(config_path, seed, n_jobs), out_dir)
    click.echo(f"✅ Recording written to {paths['recording']}")


@cli.command(name="preprocess")
@pipeline_options
@click.option('--recording', default=None, type=click.Path(path_type=Path),
              help='Recording JSON (default: <out>/recording.json)')
@handle_errors
def preprocess_command(config_path: Optional[Path], out_dir: Path, seed: Optional[int], n_jobs: Optional[int],
                       recording: Optional[Path]):
    """
    Interpolate the pulse artifact, filter, epoch and estimate the noise covariance.

    Examples:

      sourceloc preprocess --out run1
    """
    paths = cmd_preprocess(_load(config_path, seed, n_jobs), out_dir, recording)
    click.echo(f"✅ Epoch written to {paths['epoch']}")


@cli.command(name="localize")
@pipeline_options
@click.option('--method', required=True, type=click.Choice([m.value for m in Method]),
              help='Inverse method')
@click.option('--epoch', 'epoch_path', default=None, type=click.Path(path_type=Path),
              help='Epoch JSON (default: <out>/epoch.json)')
@click.option('--gain', 'gain_path', default=None, type=click.Path(path_type=Path),
              help='Gain matrix JSON (default: <out>/gain.json)')
@click.option('--noise-cov', 'noise_path', default=None, type=click.Path(path_type=Path),
              help='Noise covariance JSON (default: <out>/noise_cov.json)')
@handle_errors
def localize_command(config_path: Optional[Path], out_dir: Path, seed: Optional[int], n_jobs: Optional[int],
                     method: str, epoch_path: Optional[Path], gain_path: Optional[Path], noise_path: Optional[Path]):
    """
    Localize the epoch with one inverse method.

    Examples:

      sourceloc localize --method sloreta --out run1
      sourceloc localize --method wmem --n-jobs 4 --out run1
    """
    path = cmd_localize(_load(config_path, seed, n_jobs), method, out_dir, epoch_path, gain_path, noise_path)
    click.echo(f"✅ Estimate written to {path}")


def _estimate_arguments(func: Callable) -> Callable:
    return click.argument('estimates', nargs=-1, required=True, type=click.Path(path_type=Path))(func)


@cli.command(name="scouts")
@pipeline_options
@_estimate_arguments
@handle_errors
def scouts_command(config_path: Optional[Path], out_dir: Path, seed: Optional[int], n_jobs: Optional[int],
                   estimates: Tuple[Path, ...]):
    """
    Place scouts on each estimate and extract their time courses.

    Examples:

      sourceloc scouts --out run1 run1/estimate_mne.json
    """
    paths = cmd_scouts(_load(config_path, seed, n_jobs), out_dir, list(estimates))
    click.echo(f"✅ Wrote {len(paths)} scout files")


@cli.command(name="connectivity")
@pipeline_options
@_estimate_arguments
@handle_errors
def connectivity_command(config_path: Optional[Path], out_dir: Path, seed: Optional[int], n_jobs: Optional[int],
                         estimates: Tuple[Path, ...]):
    """
    Correlation graphs and Kansky indices before and after the pulse.

    Examples:

      sourceloc connectivity --out run1 run1/estimate_mne.json run1/estimate_wmem.json
    """
    report = cmd_connectivity(_load(config_path, seed, n_jobs), out_dir, list(estimates))
    click.echo(report.format_table("inter"))


@cli.command(name="zones")
@pipeline_options
@_estimate_arguments
@handle_errors
def zones_command(config_path: Optional[Path], out_dir: Path, seed: Optional[int], n_jobs: Optional[int],
                  estimates: Tuple[Path, ...]):
    """
    k-means active-zone detection rates per estimate and window.

    Examples:

      sourceloc zones --out run1 run1/estimate_*.json
    """
    comparison = cmd_zones(_load(config_path, seed, n_jobs), out_dir, list(estimates))
    click.echo(comparison.format_table())


@cli.command(name="compare")
@pipeline_options
@_estimate_arguments
@handle_errors
def compare_command(config_path: Optional[Path], out_dir: Path, seed: Optional[int], n_jobs: Optional[int],
                    estimates: Tuple[Path, ...]):
    """
    Compare two or more estimates of one configuration.

    Writes connectivity graphs, Kansky tables, the zone table, chord
    diagrams, source maps and summary.json.

    Examples:

      sourceloc compare --out run1 run1/estimate_mne.json run1/estimate_dspm.json \\
          run1/estimate_sloreta.json run1/estimate_wmem.json
    """
    path = cmd_compare(_load(config_path, seed, n_jobs), out_dir, list(estimates))
    click.echo(f"✅ Summary written to {path}")


@cli.command(name="report")
@pipeline_options
@handle_errors
def report_command(config_path: Optional[Path], out_dir: Path, seed: Optional[int], n_jobs: Optional[int]):
    """
    Run simulate -> preprocess -> localize (all methods) -> compare.

    Examples:

      sourceloc report --out bundle
      sourceloc report --config small.yaml --n-jobs 4 --out bundle
    """
    path = cmd_report(_load(config_path, seed, n_jobs), out_dir)
    click.echo(f"✅ Report written to {path}")


def main():
    """Main entry point for the CLI."""
    cli()


if __name__ == '__main__':
    main()
