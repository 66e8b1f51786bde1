"""
dvbe command line.

Exit codes: 0 success, 1 usage error, 2 invalid input or contract violation,
3 numeric failure.
"""
import logging
from pathlib import Path
from typing import List, Optional

import attrs
import click
import pandas as pd
from decouple import Csv

from amse.models import EmbeddingVariant, MarginMode
from autos2v.models import SemanticHead
from autos2v.search import cell_summary
from autos2v.serializers import load_cell, save_cell
from dataio.serializers import load_dataset_dir, write_dataset_dir
from dataio.synth import synth_gzsl
from dvbe_lab.conf import settings
from dvbe_lab.exceptions import ContractError, DvbeError, NumericError, ValidationError
from dvbe_lab.logging_setup import configure_logging
from gate.serializers import write_entropy_histogram
from gate.services import (
    calibrate_from_validation,
    classifier_accuracy,
    entropy_statistics,
    evaluate,
    evaluate_generalized,
    tau_sweep,
)
from metrics.serializers import write_report, write_reports
from trainer.ablation import run_ablation
from trainer.diagnostics import all_passed, gradient_suite, summarize
from trainer.serializers import load_checkpoint, save_checkpoint, write_ablation, write_trainlog
from trainer.tasks import fix_architecture, init_models, run_pipeline, train_stage1, train_stage2

from .config import Resolver, RunConfig, build_run_config

logger = logging.getLogger(__name__)

CHECKPOINT = "model.ckpt"
CELL = "cell.txt"


def _options(*options):
    def decorator(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return decorator


common_options = _options(
    click.option("--config", "config_path", type=click.Path(dir_okay=False), help="key = value file of defaults."),
    click.option("--seed", type=int, help="Seed for synthesis, initialization and shuffling (default DVBE_SEED)."),
)

train_options = _options(
    click.option("--lr", type=float),
    click.option("--momentum", type=float),
    click.option("--epochs-stage1", type=int),
    click.option("--epochs-stage2", type=int),
    click.option("--batch-size", type=int),
    click.option("--gamma", type=float, help="Weight of the cross-entropy term on seen class embeddings."),
    click.option("--sigma", type=float),
    click.option("--margin-mode", type=click.Choice([m.value for m in MarginMode])),
    click.option("--fixed-lambda", type=float),
    click.option("--cet-temperature", type=float),
)

model_options = _options(
    click.option("--variant", type=click.Choice([v.value for v in EmbeddingVariant])),
    click.option("--head", type=click.Choice([h.value for h in SemanticHead])),
    click.option("--reduced-dim", type=int),
    click.option("--embed-dim", type=int),
    click.option("--n-nodes", type=int),
    click.option("--top-k", type=int),
)


def _run_config(command: str, config_path: Optional[str], **flags) -> RunConfig:
    return build_run_config(command, flags, config_path)


def _dataset(path: str):
    return load_dataset_dir(path, settings.DATASET_FILES)


def _models(dataset, config: RunConfig):
    return init_models(dataset, config.seed, **config.model)


@click.group()
@click.option("--verbose", is_flag=True, help="Log at DEBUG level.")
def cli(verbose):
    """Two-branch generalized zero-shot learning experiments."""
    configure_logging(verbose)


@cli.command()
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--n-seen", type=int)
@click.option("--n-unseen", type=int)
@click.option("--attr-dim", type=int)
@click.option("--feat-dims", help="W,H,C")
@click.option("--samples-per-class", type=int)
@click.option("--noise-scale", type=float)
@click.option("--val-fraction", type=float)
@click.option("--test-fraction", type=float)
@click.option("--mean-scale", type=float)
@common_options
def synth(out, config_path, **flags):
    """Write a synthetic benchmark."""
    config = _run_config("synth", config_path, **flags)
    directory = write_dataset_dir(synth_gzsl(config.synth), out, settings.DATASET_FILES)
    click.echo(f"dataset written to {directory}")


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@common_options
@train_options
@model_options
def search(data, out, config_path, **flags):
    """Stage 1: alternate weight and architecture updates, then fix the cell."""
    config = _run_config("search", config_path, **flags)
    dataset = _dataset(data)
    models = _models(dataset, config)
    if models.s2v.hand_designed:
        raise ContractError("search needs the searched semantic head")
    log = train_stage1(dataset, models, config.train)
    models, cell = fix_architecture(models)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    save_cell(cell, out / CELL)
    save_checkpoint(models, out / CHECKPOINT)
    write_trainlog(log, out / "search_log.csv")
    click.echo(cell_summary(cell).describe())


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--cell", "cell_path", type=click.Path(exists=True, dir_okay=False), help="Searched cell to train.")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), help="Start from these weights.")
@common_options
@train_options
@model_options
def train(data, out, cell_path, checkpoint, config_path, **flags):
    """Stage 2: fine-tune every weight with the architecture fixed."""
    cell = load_cell(cell_path) if cell_path else None
    if cell is not None and flags.get("n_nodes") is None:
        flags["n_nodes"] = cell.n_nodes
    config = _run_config("train", config_path, **flags)
    dataset = _dataset(data)
    models = load_checkpoint(checkpoint) if checkpoint else _models(dataset, config)
    if models.s2v.hand_designed:
        if cell is not None:
            raise ValidationError("--cell does not apply to a hand-designed semantic head")
        models, _, _, log = run_pipeline(dataset, models, config.train)
    else:
        if cell is not None:
            models = attrs.evolve(models, s2v=models.s2v.with_cell(cell))
        elif models.s2v.searching:
            raise ContractError("train needs --cell or a checkpoint with a fixed cell")
        log = train_stage2(dataset, models, config.train)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(models, out / CHECKPOINT)
    write_trainlog(log, out / "train_log.csv")
    last = log.records[-1] if len(log) else None
    click.echo(f"trained {len(log)} epoch(s)" + (f", l_all={last.l_all:.4f}" if last else ""))


def _parse_grid(text: str) -> List[float]:
    try:
        return [float(v) for v in Csv()(text)]
    except ValueError:
        raise ValidationError(f"--tau-sweep expects comma-separated numbers, got {text!r}")


@cli.command("eval")
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="Metrics CSV.")
@click.option("--tau", type=float, help="Entropy threshold; calibrated on seen validation when absent.")
@click.option("--percentile", type=float, help="Calibration percentile of seen-validation entropies.")
@click.option("--tau-sweep", "grid", help="Comma-separated ascending τ values.")
@click.option("--classifier-only", is_flag=True, help="Ungated seen-class accuracy of the semantic-free branch.")
@click.option("--generalized", is_flag=True, help="Nearest neighbour over all classes, no gate.")
@click.option("--entropy-hist", type=click.Path(dir_okay=False), help="Write the per-domain entropy histogram.")
@common_options
def eval_(data, checkpoint, out, grid, classifier_only, generalized, entropy_hist, config_path, **flags):
    """Score a checkpoint on the test splits."""
    config = _run_config("eval", config_path, **flags)
    dataset = _dataset(data)
    models = load_checkpoint(checkpoint)

    if entropy_hist:
        write_entropy_histogram(entropy_statistics(dataset, models, settings.ENTROPY_HISTOGRAM_BINS), entropy_hist)

    if classifier_only:
        accuracy = classifier_accuracy(dataset, models.amse, "test_seen")
        if out:
            Path(out).parent.mkdir(parents=True, exist_ok=True)
            pd.DataFrame({"mca_s": [accuracy]}).to_csv(out, index=False, float_format="%.6f", lineterminator="\n")
        click.echo(f"mca_s={accuracy:.2f}")
        return

    if generalized:
        report = evaluate_generalized(dataset, models.s2v)
        if out:
            write_report(report, out)
        click.echo(report.describe())
        return

    if grid:
        rows = tau_sweep(dataset, models, _parse_grid(grid))
        if out:
            write_reports(rows, out)
        for tau, report in rows:
            click.echo(f"tau={tau:.4f} {report.describe()}")
        return

    gate = config.gate
    if config.tau is None and dataset.val_seen:
        gate = attrs.evolve(gate, tau=calibrate_from_validation(dataset, models.amse, gate.calibration_percentile))
    report = evaluate(dataset, models, gate)
    if out:
        write_report(report, out, tau=gate.tau)
    click.echo(f"tau={gate.tau:.4f} {report.describe()}")


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--percentile", type=float)
@common_options
def calibrate(data, checkpoint, config_path, **flags):
    """Print τ at a percentile of seen-validation entropies."""
    config = _run_config("calibrate", config_path, **flags)
    dataset = _dataset(data)
    if not dataset.val_seen:
        raise ValidationError("calibrate needs a non-empty val_seen split")
    tau = calibrate_from_validation(dataset, load_checkpoint(checkpoint).amse, config.gate.calibration_percentile)
    click.echo(f"{tau:.6f}")


@cli.command()
@click.option("--seeds", help="Comma-separated seeds.")
@click.option("--step", type=float)
@click.option("--tolerance", type=float)
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
def gradcheck(seeds, step, tolerance, config_path):
    """Finite-difference check of every trainable component."""
    defaults = settings.GRADCHECK
    resolve = Resolver({"seeds": seeds, "step": step, "tolerance": tolerance}, config_path)
    try:
        seeds = resolve("seeds", list(defaults["seeds"]), Csv(int))
    except ValueError:
        raise ValidationError(f"--seeds expects comma-separated integers, got {seeds!r}")
    tolerance = resolve("tolerance", defaults["tolerance"], float)
    results = gradient_suite(seeds, resolve("step", defaults["step"], float))
    for component, error in summarize(results, tolerance).items():
        click.echo(f"{component:<16} {error:.3e} {'ok' if error < tolerance else 'FAILED'}")
    if not all_passed(results, tolerance):
        raise NumericError(f"Gradient check above tolerance {tolerance:g}", component="grad_check")


@cli.command()
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Ablation CSV.")
@click.option("--percentile", type=float)
@common_options
@train_options
def ablation(data, out, config_path, **flags):
    """Train and score every ablation configuration."""
    config = _run_config("ablation", config_path, **flags)
    rows = run_ablation(_dataset(data), config.train, config.gate.calibration_percentile)
    write_ablation(rows, out)
    for row in rows:
        tau = "-" if row.tau is None else f"{row.tau:.4f}"
        click.echo(f"{row.table:<12} {row.name:<16} tau={tau} {row.report.describe()}")


def main(argv: Optional[List[str]] = None) -> int:
    try:
        cli.main(args=argv, prog_name="dvbe", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted.", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except DvbeError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    return 0


