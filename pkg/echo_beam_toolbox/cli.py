"""Command line entry point: echo-beam {simulate, train, enhance, evaluate, baseline, gradcheck}

Every subcommand accepts --config (TOML or JSON), repeated --set section.key=value overrides,
--seed, --threads and -v/-vv. Exit codes: 0 success, 1 failed gradient check, 2 usage,
configuration or domain errors, 3 numerical failure during training.
"""

import logging
import os
import time

import click
import numpy as np
import pandas as pd

from echo_beam_toolbox.all.audio_clip import read_wav, write_wav
from echo_beam_toolbox.all.build_dataset import MANIFEST_NAME, build_dataset
from echo_beam_toolbox.all.checkpoint import load_checkpoint
from echo_beam_toolbox.all.config_loader import load_config
from echo_beam_toolbox.all.evaluate_corpus import (
    NEURAL_SYSTEMS,
    SYSTEMS,
    compare_systems,
    evaluate_corpus,
    run_system,
    write_report,
)
from echo_beam_toolbox.all.gradcheck_suite import COMPONENTS, run_gradcheck_suite
from echo_beam_toolbox.all.jaecbf_model import JaecbfModel, enhance
from echo_beam_toolbox.all.pbfdaf import pbfdaf_cancel_channels
from echo_beam_toolbox.all.training_loop import CHECKPOINT_NAME, train_from_manifest
from echo_beam_toolbox.custom_exceptions import ConfigError, DomainError, NumericalFailureError

logger = logging.getLogger(__name__)

BASELINE_SYSTEMS = ("none", "pbfdaf", "das")


class ExitCodeGroup(click.Group):
    """click group that turns package exceptions into the documented exit codes"""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (ConfigError, DomainError, OSError) as error:
            click.echo(f"error: {error}", err=True)
            ctx.exit(2)
        except NumericalFailureError as error:
            click.echo(f"numerical failure: {error}", err=True)
            ctx.exit(3)


def common_options(func):
    """Adds --config, --set, --seed, --threads and -v to a subcommand"""
    options = [
        click.option("--config", "config_path", default=None, help="TOML or JSON config file"),
        click.option("--set", "overrides", multiple=True, help="Override as section.key=value"),
        click.option("--seed", type=int, default=None, help="Seed for simulation, model and training"),
        click.option("--threads", type=click.IntRange(min=1), default=1, help="Worker threads"),
        click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug output"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def setup(config_path, overrides, seed, verbose):
    """Configures the root logger and loads the experiment config"""
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)
    return load_config(config_path, overrides=overrides, seed=seed)


def load_model(model_path: str, cfg) -> JaecbfModel:
    checkpoint = load_checkpoint(model_path, expected_config=cfg.model)
    return JaecbfModel(checkpoint.model_config, cfg.stft, params=checkpoint.params)


@click.group(cls=ExitCodeGroup)
def cli():
    """Simulate, train, run and evaluate joint echo cancellation and beamforming"""


@cli.command()
@click.option("--out", "out_dir", required=True, help="Output directory for WAVs and manifest.json")
@common_options
def simulate(out_dir, config_path, overrides, seed, threads, verbose):
    """Simulates the train/dev/test scenes of the configured corpus"""
    cfg = setup(config_path, overrides, seed, verbose)
    records = build_dataset(
        cfg.simulation, out_dir, hop=cfg.stft.hop, n_workers=threads, verbose=verbose > 0
    )
    per_split = pd.Series([record["split"] for record in records]).value_counts()
    click.echo(
        f"wrote {len(records):,} scenes "
        f"({', '.join(f'{split}: {per_split.get(split, 0)}' for split in ('train', 'dev', 'test'))}) "
        f"to {os.path.join(out_dir, MANIFEST_NAME)}"
    )


@cli.command()
@click.option("--manifest", "manifest_path", required=True, help="manifest.json or its directory")
@click.option("--out", "out_dir", required=True, help="Directory for model.jbf and loss_log.csv")
@click.option("--resume", default=None, help="Checkpoint to continue from")
@common_options
def train(manifest_path, out_dir, resume, config_path, overrides, seed, threads, verbose):
    """Trains the model on the manifest's train split"""
    cfg = setup(config_path, overrides, seed, verbose)
    start_time = time.time()
    _, history = train_from_manifest(manifest_path, cfg, out_dir, resume=resume, verbose=verbose > 0)
    final_loss = history["loss"].iloc[-1] if len(history) > 0 else float("nan")
    click.echo(
        f"trained to step {int(history['step'].iloc[-1]) if len(history) > 0 else 0:,} "
        f"(final loss {final_loss:.4f}) in {(time.time()-start_time)/60:,.2f} minutes; "
        f"checkpoint {os.path.join(out_dir, CHECKPOINT_NAME)}"
    )


@cli.command(name="enhance")
@click.argument("mixture_path")
@click.argument("far_end_path")
@click.argument("out_path")
@click.option("--model", "model_path", default=None, help="Checkpoint (needed by the neural systems)")
@click.option("--system", type=click.Choice(SYSTEMS[1:]), default="jaecbf_dtd", show_default=True)
@click.option("--no-dtd", is_flag=True, help="Force the double-talk gate to 1")
@click.option("--dump-gate", default=None, help="Write the per-frame gate p(n) to this CSV")
@click.option("--chunk-seconds", type=float, default=None, help="Process long inputs in chunks")
@common_options
def enhance_command(
    mixture_path,
    far_end_path,
    out_path,
    model_path,
    system,
    no_dtd,
    dump_gate,
    chunk_seconds,
    config_path,
    overrides,
    seed,
    threads,
    verbose,
):
    """Writes the enhanced single-channel signal for one recording

    das steers toward broadside (zero delays) since a bare recording carries no geometry.
    """
    cfg = setup(config_path, overrides, seed, verbose)
    mixture, far_end = read_wav(mixture_path), read_wav(far_end_path)
    if system in NEURAL_SYSTEMS:
        if model_path is None:
            raise click.UsageError(f"--system {system} needs --model")
        model = load_model(model_path, cfg)
        if system == "pbfdaf+jaecbf":
            mixture = pbfdaf_cancel_channels(mixture, far_end, cfg.baseline)
        estimate, details = enhance(
            mixture,
            far_end,
            model,
            use_dtd=not (no_dtd or system == "jaecbf"),
            chunk_seconds=chunk_seconds,
            return_details=True,
        )
        if dump_gate is not None:
            gate = details["dtd_probability"]
            pd.DataFrame({"frame": np.arange(len(gate)), "probability": gate}).to_csv(
                dump_gate, index=False, float_format="%.6f"
            )
    else:
        if dump_gate is not None:
            raise click.UsageError(f"--dump-gate needs a neural system, not '{system}'")
        estimate = run_system(system, mixture, far_end, baseline_cfg=cfg.baseline)
    write_wav(out_path, estimate, subtype=cfg.simulation.wav_subtype)
    click.echo(f"wrote {estimate.n_samples:,} samples to {out_path}")


@cli.command()
@click.option("--manifest", "manifest_path", required=True, help="manifest.json or its directory")
@click.option("--model", "model_path", default=None, help="Checkpoint (needed by the neural systems)")
@click.option("--system", type=click.Choice(SYSTEMS), default="jaecbf_dtd", show_default=True)
@click.option("--split", type=click.Choice(["train", "dev", "test"]), default="test", show_default=True)
@click.option("--out", "out_path", required=True, help="Report path (a .csv and a .json are written)")
@common_options
def evaluate(manifest_path, model_path, system, split, out_path, config_path, overrides, seed, threads, verbose):
    """Scores one system on one split with Si-SNR, SDR and ERLE"""
    cfg = setup(config_path, overrides, seed, verbose)
    if system in NEURAL_SYSTEMS and model_path is None:
        raise click.UsageError(f"--system {system} needs --model")
    model = None if model_path is None else load_model(model_path, cfg)
    report = evaluate_corpus(
        manifest_path,
        system,
        model=model,
        split=split,
        baseline_cfg=cfg.baseline,
        n_workers=threads,
    )
    csv_path, json_path = write_report(report, out_path)
    means = ", ".join(
        f"{name} {'n/a' if value is None else f'{value:.2f}'}" for name, value in report.means.items()
    )
    click.echo(f"{system} on {report.counts['scenes']} scenes: {means}\nreport: {csv_path}, {json_path}")


@cli.command()
@click.option("--manifest", "manifest_path", required=True, help="manifest.json or its directory")
@click.option("--split", type=click.Choice(["train", "dev", "test"]), default="test", show_default=True)
@click.option("--out", "out_path", default=None, help="Write the comparison table to this CSV")
@common_options
def baseline(manifest_path, split, out_path, config_path, overrides, seed, threads, verbose):
    """Compares the classical systems (reference mic, PBFDAF, delay-and-sum) on one split"""
    cfg = setup(config_path, overrides, seed, verbose)
    table = compare_systems(
        manifest_path,
        systems=BASELINE_SYSTEMS,
        split=split,
        baseline_cfg=cfg.baseline,
        n_workers=threads,
    )
    if out_path is not None:
        table.to_csv(out_path, float_format="%.6f")
    click.echo(table.to_string(float_format=lambda value: f"{value:.2f}"))


@cli.command()
@click.option(
    "--module",
    "component",
    type=click.Choice(("all",) + COMPONENTS),
    default="all",
    show_default=True,
)
@click.option("--corrupt", is_flag=True, hidden=True, help="Perturb analytic gradients (must fail)")
@click.option("--toy-scale", is_flag=True, help="Also check the full toy-sized model (slow)")
@common_options
@click.pass_context
def gradcheck(ctx, component, corrupt, toy_scale, config_path, overrides, seed, threads, verbose):
    """Checks analytic gradients against finite differences"""
    setup(config_path, overrides, seed, verbose)
    result = run_gradcheck_suite(
        component=component,
        seed=0 if seed is None else seed,
        corrupt_gradient=corrupt,
        toy_scale=toy_scale,
    )
    click.echo(result.to_frame().to_string(index=False, float_format=lambda value: f"{value:.3e}"))
    if result.uncovered_ops:
        click.echo(f"operations without a gradient check: {sorted(result.uncovered_ops)}")
    click.echo("PASSED" if result.passed else "FAILED")
    if not result.passed:
        ctx.exit(1)


def main():
    cli()


if __name__ == "__main__":
    main()
