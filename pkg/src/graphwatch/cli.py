"""``graphwatch simulate|calibrate|train|monitor|report``."""
from __future__ import annotations

import logging
import sys
import warnings

import click
import numpy as np

from . import pipeline, spc
from .dataset import DatasetFormatError
from .graph import TopologyFormatError


def _common(f):
    f = click.option("--out", type=click.Path(file_okay=False), default=None,
                     help="Output directory (default: out).")(f)
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="JSON pipeline config; flags override it.")(f)
    f = click.option("--seed", type=int, default=None, help="Master seed.")(f)
    return f


def _config(seed, config_path, out, **extra):
    try:
        return pipeline.load_config(config_path, seed=seed, out=out, **extra)
    except (ValueError, TypeError) as exc:
        raise click.UsageError(f"bad configuration: {exc}") from None


def _fail(exc):
    raise click.ClickException(str(exc))


@click.group()
@click.option("-v", "--verbose", count=True, help="Log progress (-vv for debug).")
def main(verbose):
    """Quantile control chart and GCN diagnosis for an ambulance road network."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_common
@click.option("--topology", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Topology JSON (default: bundled reference layout).")
@click.option("--phase1-days", type=int, default=None)
def simulate(seed, config_path, out, topology, phase1_days):
    """Write calibration days and the training / validation scenes."""
    cfg = _config(seed, config_path, out, topology=topology, phase1_days=phase1_days)
    try:
        paths = pipeline.cmd_simulate(cfg)
    except (OSError, TopologyFormatError) as exc:
        _fail(exc)
    for name, p in paths.items():
        click.echo(f"{name}: {p}")


@main.command()
@_common
@click.option("--arl", type=float, default=None, help="In-control average run length.")
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Calibration day file (default: <out>/calibration.jsonl).")
def calibrate(seed, config_path, out, arl, input_path):
    """Estimate the in-control quantile mean and covariance."""
    cfg = _config(seed, config_path, out, arl=arl)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", spc.RegularizationWarning)
        try:
            state = pipeline.cmd_calibrate(cfg, input_path)
        except (OSError, DatasetFormatError, ValueError) as exc:
            _fail(exc)
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
    with np.printoptions(precision=6, suppress=True):
        click.echo(f"q0: {np.asarray(state.q0)}")
        click.echo(f"sigma0:\n{np.asarray(state.sigma0)}")
    click.echo(f"control limit: {state.control_limit:.6f}")


@main.command()
@_common
@click.option("--max-epochs", type=int, default=None)
@click.option("--patience", type=int, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--lr", type=float, default=None)
def train(seed, config_path, out, max_epochs, patience, batch_size, lr):
    """Fit the classifier with early stopping on the validation F-score."""
    cfg = _config(seed, config_path, out, train_max_epochs=max_epochs, train_patience=patience,
                  train_batch_size=batch_size, train_lr=lr)

    def progress(rec):
        click.echo(f"epoch {rec.epoch:3d}  loss {rec.train_loss:.4f}  val_loss {rec.val_loss:.4f}  "
                   f"train_f {rec.train_f:.4f}  val_f {rec.val_f:.4f}", err=True)

    try:
        result = pipeline.cmd_train(cfg, on_epoch=progress)
    except (OSError, DatasetFormatError, ValueError, FloatingPointError) as exc:
        _fail(exc)
    click.echo(f"best epoch {result.best_epoch}, val F {result.best_val_f:.4f}, stopped at {result.stopped_epoch}")


@main.command()
@_common
@click.option("--diagnose-all/--diagnose-signals", default=None,
              help="Classify every Phase II day, not only signal days.")
@click.option("--no-plot", is_flag=True, help="Skip the SVG chart.")
def monitor(seed, config_path, out, diagnose_all, no_plot):
    """Run the 100-day Phase II schedule against the frozen chart."""
    cfg = _config(seed, config_path, out, diagnose_all=diagnose_all)
    try:
        report = pipeline.cmd_monitor(cfg, plot=not no_plot)
    except (OSError, ValueError) as exc:
        _fail(exc)
    s = report["summary"]
    click.echo(f"signals {s['signals']} / {s['days']} days, false alarms {s['false_alarms']}")


@main.command()
@_common
@click.argument("report_file", required=False, type=click.Path(dir_okay=False))
def report(seed, config_path, out, report_file):
    """Print the summary of a monitoring report."""
    cfg = _config(seed, config_path, out)
    path = report_file or cfg.out_dir / pipeline.REPORT_FILE
    try:
        text = pipeline.cmd_report(path)
    except pipeline.ReportError as exc:
        _fail(exc)
    click.echo(text, nl=False)


if __name__ == "__main__":
    sys.exit(main())
