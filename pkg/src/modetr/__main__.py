"""
Running CLI commands.
"""
from __future__ import annotations

import functools
import json
import logging
import sys

import click

from modetr.exceptions import ModetrBaseException, ModetrConfigError
from modetr.model import Variant

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

VARIANT_NAMES = [variant.value for variant in Variant]


@click.group()
@click.option('-v', '--verbose', is_flag=True, help="Log debug messages to stderr.")
def program(verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def reports_errors(func):
    """
    Turns toolkit errors into a message on stderr and an exit code:
    2 for configuration errors, 1 for any other failure.
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return func(*args, **kwargs)
        except ModetrConfigError as exc:
            where = f" [field: {exc.field}]" if exc.field else ""
            click.echo(f"Error: {exc.message}{where}", err=True)
            ctx.exit(2)
        except (ModetrBaseException, OSError) as exc:
            click.echo(f"Error: {exc}", err=True)
            ctx.exit(1)
    return wrapper


def checkpoint_data_options(func):
    func = click.option(
        '-d', '--data',
        type=click.Path(exists=True, file_okay=False),
        required=True,
        help="Path to dataset directory",
    )(func)
    func = click.option(
        '-c', '--ckpt',
        type=click.Path(exists=True, dir_okay=False),
        required=True,
        help="Path to checkpoint file",
    )(func)
    return func


def _write_json(output_file, data: dict):
    json.dump(data, output_file, indent=2, sort_keys=True)
    output_file.write("\n")


def _sample_at(dataset, index: int):
    if not 0 <= index < len(dataset):
        raise click.BadParameter(
            f"sample index {index} out of range for {len(dataset)} samples",
            param_hint="'--sample'",
        )
    return dataset[index]


@program.command(name='generate')
@click.option('-s', '--spec', 'spec_file',
              type=click.Path(exists=True, dir_okay=False),
              help="Path to scene spec JSON (defaults apply when omitted)")
@click.option('-o', '--out', 'out_dir', type=click.Path(file_okay=False), required=True,
              help="Path to dataset directory to create")
@click.option('-n', '--count', type=click.IntRange(min=0), default=16, show_default=True,
              help="Number of samples")
@click.option('--seed', type=click.IntRange(min=0), default=0, show_default=True,
              help="Seed of the first sample; sample i uses seed + i")
@click.option('--no-flow', is_flag=True, help="Omit optical flow files.")
@reports_errors
def run_generate(spec_file, out_dir, count, seed, no_flow):
    """
    Generates a synthetic two-frame dataset.

    Transform: scene spec -> samples -> dataset directory
    """
    from modetr.runner import load_json_object
    from modetr.synth import SceneSpec, generate_samples, write_dataset

    spec = SceneSpec.from_dict(load_json_object(spec_file)) if spec_file else SceneSpec()
    samples = generate_samples(spec, count, seed=seed, with_flow=not no_flow)
    write_dataset(out_dir, samples, spec=spec, has_flow=not no_flow)


@program.command(name='train')
@click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False), required=True,
              help="Path to run configuration JSON")
@click.option('-d', '--data', type=click.Path(exists=True, file_okay=False),
              help="Path to training dataset (defaults to train_data of the config)")
@click.option('-o', '--out', 'out_file', type=click.Path(dir_okay=False), required=True,
              help="Path to checkpoint file to write")
@click.option('--resume', type=click.Path(exists=True, dir_okay=False),
              help="Path to checkpoint to continue from")
@click.option('--steps', type=click.IntRange(min=0),
              help="Number of steps to run (overrides the config)")
@click.option('--log-file', type=click.File(mode='w'), default='-',
              help="Path to CSV step log ('-' for stdout)")
@reports_errors
def run_train(config_file, data, out_file, resume, steps, log_file):
    """
    Trains a model on a dataset.

    Writes one CSV row per step to LOG_FILE and the checkpoint to OUT,
    also every checkpoint_every steps.
    """
    from modetr.runner import CsvStepLog, RunConfig, check_compatible, load_checkpoint, train
    from modetr.synth import read_dataset

    config = RunConfig.load(config_file)
    data = data or config.train_data
    if not data:
        raise click.BadParameter("no dataset given and the config names no train_data",
                                 param_hint="'--data'")
    previous = load_checkpoint(resume) if resume else None
    if previous is not None and previous.config.model != config.model:
        raise ModetrConfigError("model configuration differs from the resumed checkpoint", field='model')
    dataset = read_dataset(data)
    check_compatible(config.model, dataset)
    train(config, dataset, steps=steps, resume=previous,
          on_step=CsvStepLog(log_file), checkpoint_path=out_file)


@program.command(name='eval')
@checkpoint_data_options
@click.option('-o', '--out', 'output_file', type=click.File(mode='w', atomic=True), default='-',
              help="Path to metric report JSON ('-' for stdout)")
@click.option('-w', '--workers', type=click.IntRange(min=1), default=1, show_default=True,
              help="Threads evaluating samples")
@reports_errors
def run_eval(ckpt, data, output_file, workers):
    """
    Evaluates a checkpoint on a dataset and writes the metric report.
    """
    from modetr.runner import evaluate, load_checkpoint
    from modetr.synth import read_dataset

    checkpoint = load_checkpoint(ckpt)
    dataset = read_dataset(data)
    report = evaluate(checkpoint.config.model, checkpoint.params, dataset, workers=workers)
    _write_json(output_file, report.to_dict())


@program.command(name='predict')
@checkpoint_data_options
@click.option('-i', '--sample', 'index', type=int, required=True, help="Sample index")
@click.option('-o', '--out', 'output_file', type=click.File(mode='w', atomic=True), default='-',
              help="Path to detections JSON ('-' for stdout)")
@click.option('-t', '--threshold', type=click.FloatRange(0.0, 1.0), default=0.0, show_default=True,
              help="Minimum detection score")
@reports_errors
def run_predict(ckpt, data, index, output_file, threshold):
    """
    Writes the detections of a single sample.
    """
    from modetr.runner import check_compatible, load_checkpoint, model_detector
    from modetr.synth import read_dataset

    checkpoint = load_checkpoint(ckpt)
    dataset = read_dataset(data)
    check_compatible(checkpoint.config.model, dataset)
    sample = _sample_at(dataset, index)
    dets = model_detector(checkpoint.config.model, checkpoint.params, threshold)(sample)
    _write_json(output_file, {
        'sample': index,
        'detections': [det.to_record() for det in dets],
    })


@program.command(name='export-attention')
@checkpoint_data_options
@click.option('-i', '--sample', 'index', type=int, required=True, help="Sample index")
@click.option('-o', '--out', 'out_dir', type=click.Path(file_okay=False), required=True,
              help="Path to output directory")
@reports_errors
def run_export_attention(ckpt, data, index, out_dir):
    """
    Writes decoder cross-attention maps (PGM) and the input frames (PPM) of a sample.
    """
    from modetr.runner import check_compatible, export_attention, load_checkpoint
    from modetr.synth import read_dataset

    checkpoint = load_checkpoint(ckpt)
    dataset = read_dataset(data)
    check_compatible(checkpoint.config.model, dataset)
    sample = _sample_at(dataset, index)
    export_attention(checkpoint.config.model, checkpoint.params, sample, out_dir)


@program.command(name='compare')
@click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False), required=True,
              help="Path to run configuration JSON")
@click.option('--train', 'train_dir', type=click.Path(exists=True, file_okay=False),
              help="Path to training dataset (defaults to train_data of the config)")
@click.option('--val', 'val_dir', type=click.Path(exists=True, file_okay=False),
              help="Path to validation dataset (defaults to val_data of the config)")
@click.option('--variant', 'variants', type=click.Choice(VARIANT_NAMES), multiple=True,
              help="Variant to include (repeatable; all when omitted)")
@click.option('--seeds', type=click.IntRange(min=1), default=3, show_default=True,
              help="Seeds per variant")
@click.option('-o', '--out', 'output_file', type=click.File(mode='w', atomic=True), required=True,
              help="Path to comparison JSON")
@reports_errors
def run_compare(config_file, train_dir, val_dir, variants, seeds, output_file):
    """
    Trains and evaluates several variants over several seeds,
    then prints the seed-averaged results table.
    """
    from modetr.runner import RunConfig, compare_variants, format_results_table, results_to_dict
    from modetr.synth import read_dataset

    config = RunConfig.load(config_file)
    train_dir = train_dir or config.train_data
    val_dir = val_dir or config.val_data
    if not train_dir or not val_dir:
        raise click.BadParameter("both training and validation datasets are required",
                                 param_hint="'--train' / '--val'")
    chosen = [Variant(name) for name in variants] or list(Variant)
    results = compare_variants(config, read_dataset(train_dir), read_dataset(val_dir), chosen, seeds)
    _write_json(output_file, results_to_dict(results))
    click.echo(format_results_table(results))


@program.command(name='summary')
@click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False),
              help="Path to run configuration JSON (defaults apply when omitted)")
@click.option('--variant', 'variants', type=click.Choice(VARIANT_NAMES), multiple=True,
              help="Variant to include (repeatable; all when omitted)")
@reports_errors
def run_summary(config_file, variants):
    """
    Prints parameter counts per variant and per parameter group.
    """
    from modetr.runner import RunConfig, format_summary, summarize_variants

    config = RunConfig.load(config_file) if config_file else RunConfig()
    chosen = [Variant(name) for name in variants] or list(Variant)
    click.echo(format_summary(summarize_variants(config, chosen)))


if __name__ == '__main__':
    program()
