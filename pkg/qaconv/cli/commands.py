"""
Pipeline subcommands registered on the Flask CLI

    flask --app manage.py match --query q.qfmp --gallery g.qfmp --head head.qhed --out qg.qsim
"""
import json

import click
from flask import current_app
from flask.cli import with_appcontext
from marshmallow import ValidationError

from qaconv.config.loader import (
    load_config_file, rerank_params, resolve_settings, tlift_params, train_config
)
from qaconv.services.augmentation_service import AugmentationService
from qaconv.services.evaluation_service import EvaluationService
from qaconv.services.pipeline_service import PipelineService
from qaconv.services.rerank_service import RerankService
from qaconv.services.tlift_service import TLiftService
from qaconv.services.training_service import TrainingService
from qaconv.utils import formats
from qaconv.utils.decorators import handle_cli_errors
from qaconv.utils.exceptions import ConfigError, PreconditionError
from qaconv.utils.validators import TLiftGridSchema

config_option = click.option('--config', 'config_path', type=click.Path(dir_okay=False),
                             help='key=value configuration file')
workers_option = click.option('--workers', type=click.IntRange(min=1),
                              help='Worker threads (overrides QACONV_WORKERS and the config file)')


def _settings(config_path, **overrides):
    file_values = load_config_file(config_path) if config_path else None
    return resolve_settings(current_app.config, file_values, overrides)


def parse_grid(values):
    """
    Parse repeated name=v1,v2,... options into a validated grid dict

    Raises:
        ConfigError: malformed option or value out of range
    """
    raw = {}
    for value in values:
        name, sep, items = value.partition('=')
        if not sep or not items:
            raise ConfigError(f"Grid option must look like name=v1,v2, got '{value}'")
        raw.setdefault(name.strip(), []).extend(item.strip() for item in items.split(','))
    try:
        return TLiftGridSchema().load(raw)
    except ValidationError as e:
        raise ConfigError("Invalid sweep grid", details=e.messages)


@click.command('match')
@click.option('--query', 'query_path', required=True, type=click.Path(dir_okay=False))
@click.option('--gallery', 'gallery_path', required=True, type=click.Path(dir_okay=False))
@click.option('--head', 'head_path', required=True, type=click.Path(dir_okay=False))
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False))
@click.option('--kernel-size', type=click.IntRange(min=1))
@workers_option
@config_option
@with_appcontext
@handle_cli_errors
def match_command(query_path, gallery_path, head_path, out_path, kernel_size, workers, config_path):
    """Score every query feature map against every gallery feature map."""
    settings = _settings(config_path, kernel_size=kernel_size, workers=workers)
    queries = formats.load_store(query_path)
    gallery = formats.load_store(gallery_path)
    params = formats.read_head(head_path)
    scores = PipelineService(settings).match(queries, gallery, params)
    formats.write_scores(out_path, scores)
    current_app.logger.info(f"Wrote {scores!r} to {out_path}")


@click.command('train-head')
@click.option('--features', 'features_path', required=True, type=click.Path(dir_okay=False))
@click.option('--labels', 'labels_path', required=True, type=click.Path(dir_okay=False),
              help='Metadata file whose ids are class labels')
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False))
@click.option('--trace', 'trace_path', type=click.Path(dir_okay=False), help='epoch,loss output file')
@click.option('--seed', type=click.IntRange(min=0))
@click.option('--epochs', type=click.IntRange(min=1))
@click.option('--lr', type=float)
@click.option('--batch-size', type=click.IntRange(min=2))
@click.option('--num-classes', type=click.IntRange(min=2))
@workers_option
@config_option
@with_appcontext
@handle_cli_errors
def train_head_command(features_path, labels_path, out_path, trace_path, seed, epochs, lr, batch_size,
                       num_classes, workers, config_path):
    """Train the similarity head against a class memory."""
    settings = _settings(config_path, seed=seed, epochs=epochs, lr=lr, batch_size=batch_size, workers=workers)
    store = formats.load_store(features_path, labels_path)
    service = TrainingService(train_config(settings), workers=settings['workers'])
    result = service.train_head(store, seed=settings['seed'], num_classes=num_classes)
    formats.write_head(out_path, result.params)
    if trace_path:
        formats.write_trace(trace_path, result)
    click.echo(f"final_loss={result.final_loss:.6f}")
    click.echo(f"accuracy={result.accuracy:.6f}")


@click.command('rerank')
@click.option('--qg', 'qg_path', required=True, type=click.Path(dir_okay=False))
@click.option('--qq', 'qq_path', required=True, type=click.Path(dir_okay=False))
@click.option('--gg', 'gg_path', required=True, type=click.Path(dir_okay=False))
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False))
@click.option('--k1', type=click.IntRange(min=1))
@click.option('--k2', type=click.IntRange(min=1))
@click.option('--lambda', 'lambda_value', type=click.FloatRange(0, 1))
@config_option
@with_appcontext
@handle_cli_errors
def rerank_command(qg_path, qq_path, gg_path, out_path, k1, k2, lambda_value, config_path):
    """Re-rank query-gallery scores with k-reciprocal encoding."""
    settings = _settings(config_path, k1=k1, k2=k2, rerank_lambda=lambda_value)
    service = RerankService(rerank_params(settings))
    reranked = service.k_reciprocal_rerank(
        formats.read_scores(qg_path), formats.read_scores(qq_path), formats.read_scores(gg_path)
    )
    formats.write_scores(out_path, reranked)


@click.command('tlift')
@click.option('--scores', 'scores_path', required=True, type=click.Path(dir_okay=False))
@click.option('--query-meta', required=True, type=click.Path(dir_okay=False))
@click.option('--gallery-meta', required=True, type=click.Path(dir_okay=False))
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False))
@click.option('--tau', type=float)
@click.option('--sigma', type=float)
@click.option('--k', type=click.IntRange(min=1))
@click.option('--alpha', type=float)
@click.option('--exclude-same-camera/--include-same-camera', default=None)
@config_option
@with_appcontext
@handle_cli_errors
def tlift_command(scores_path, query_meta, gallery_meta, out_path, tau, sigma, k, alpha, exclude_same_camera,
                  config_path):
    """Fuse appearance scores with the pivot-based temporal probability."""
    settings = _settings(config_path, tau=tau, sigma=sigma, k=k, alpha=alpha,
                         exclude_same_camera=exclude_same_camera)
    fused = TLiftService(tlift_params(settings)).tlift_fuse(
        formats.read_scores(scores_path), formats.read_metadata(query_meta), formats.read_metadata(gallery_meta)
    )
    formats.write_scores(out_path, fused)


@click.command('eval')
@click.option('--scores', 'scores_path', required=True, type=click.Path(dir_okay=False))
@click.option('--query-meta', required=True, type=click.Path(dir_okay=False))
@click.option('--gallery-meta', required=True, type=click.Path(dir_okay=False))
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), help='key=value report file')
@click.option('--r-max', type=click.IntRange(min=1))
@config_option
@with_appcontext
@handle_cli_errors
def eval_command(scores_path, query_meta, gallery_meta, out_path, r_max, config_path):
    """Compute CMC and mAP under the single-query protocol."""
    settings = _settings(config_path, r_max=r_max)
    report = EvaluationService(settings['r_max']).evaluate(
        formats.read_scores(scores_path), formats.read_metadata(query_meta), formats.read_metadata(gallery_meta)
    )
    if out_path:
        formats.write_report(out_path, report)
    click.echo(report.to_lines(), nl=False)


@click.command('pipeline')
@click.option('--query', 'query_path', required=True, type=click.Path(dir_okay=False))
@click.option('--query-meta', required=True, type=click.Path(dir_okay=False))
@click.option('--gallery', 'gallery_path', required=True, type=click.Path(dir_okay=False))
@click.option('--gallery-meta', required=True, type=click.Path(dir_okay=False))
@click.option('--head', 'head_path', required=True, type=click.Path(dir_okay=False))
@click.option('--out-dir', required=True, type=click.Path(file_okay=False))
@click.option('--rerank/--no-rerank', default=False)
@click.option('--tlift/--no-tlift', default=False)
@click.option('--eval/--no-eval', 'evaluate', default=True)
@workers_option
@config_option
@with_appcontext
@handle_cli_errors
def pipeline_command(query_path, query_meta, gallery_path, gallery_meta, head_path, out_dir, rerank, tlift,
                     evaluate, workers, config_path):
    """Run match, then optional rerank and tlift, then eval, persisting every stage."""
    settings = _settings(config_path, workers=workers)
    result = PipelineService(settings).run(
        formats.load_store(query_path, query_meta),
        formats.load_store(gallery_path, gallery_meta),
        formats.read_head(head_path),
        rerank=rerank,
        tlift=tlift,
        evaluate=evaluate,
        out_dir=out_dir
    )
    current_app.logger.info(f"Pipeline stages: {', '.join(result.stages)}")
    if result.report is not None:
        click.echo(result.report.to_lines(), nl=False)


@click.command('interpret')
@click.option('--query', 'query_path', required=True, type=click.Path(dir_okay=False))
@click.option('--gallery', 'gallery_path', required=True, type=click.Path(dir_okay=False))
@click.option('--head', 'head_path', required=True, type=click.Path(dir_okay=False))
@click.option('--query-index', default=0, type=click.IntRange(min=0))
@click.option('--gallery-index', default=0, type=click.IntRange(min=0))
@click.option('--threshold', type=click.FloatRange(0, 1))
@click.option('--all-directions', is_flag=True, help='Keep pairs found from both pooling directions twice')
@click.option('--kernel-size', type=click.IntRange(min=1))
@config_option
@with_appcontext
@handle_cli_errors
def interpret_command(query_path, gallery_path, head_path, query_index, gallery_index, threshold, all_directions,
                      kernel_size, config_path):
    """Print the reliable local correspondences of one pair as JSON."""
    settings = _settings(config_path, threshold=threshold, kernel_size=kernel_size)
    queries = formats.load_store(query_path).normalized()
    gallery = formats.load_store(gallery_path).normalized()
    if query_index >= len(queries) or gallery_index >= len(gallery):
        raise PreconditionError(
            f"Pair ({query_index}, {gallery_index}) is outside the {len(queries)}×{len(gallery)} stores"
        )
    matcher = PipelineService(settings).matcher
    correspondences = matcher.interpret(
        queries[query_index], gallery[gallery_index], formats.read_head(head_path),
        threshold=settings['threshold'], deduplicate=not all_directions
    )
    click.echo(json.dumps(correspondences.to_dict(), indent=2))


@click.command('augment')
@click.option('--image', 'image_path', required=True, type=click.Path(dir_okay=False))
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False))
@click.option('--seed', default=0, type=click.IntRange(min=0))
@click.option('--max-frac', default=0.8, type=click.FloatRange(0, 1, min_open=True))
@click.option('--flip/--no-flip', default=False, help='Also apply a random horizontal flip')
@with_appcontext
@handle_cli_errors
def augment_command(image_path, out_path, seed, max_frac, flip):
    """Apply random occlusion (and optionally flipping) to an image file."""
    service = AugmentationService(max_frac=max_frac)
    img = formats.read_image(image_path)
    if flip:
        img = service.random_hflip(img, seed)
    top, left, side = service.occlusion_box(img, seed)
    formats.write_image(out_path, service.random_occlude(img, seed))
    click.echo(f"top={top} left={left} side={side}")


@click.command('sweep')
@click.option('--scores', 'scores_path', required=True, type=click.Path(dir_okay=False))
@click.option('--query-meta', required=True, type=click.Path(dir_okay=False))
@click.option('--gallery-meta', required=True, type=click.Path(dir_okay=False))
@click.option('--grid', 'grid_values', required=True, multiple=True, help='name=v1,v2,... (repeatable)')
@click.option('--product', is_flag=True, help='Evaluate every combination of the grid values')
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), help='Table output file')
@config_option
@with_appcontext
@handle_cli_errors
def sweep_command(scores_path, query_meta, gallery_meta, grid_values, product, out_path, config_path):
    """Re-run TLift and eval over a parameter grid on a cached score file."""
    settings = _settings(config_path)
    rows = PipelineService(settings).sweep(
        formats.read_scores(scores_path),
        formats.read_metadata(query_meta),
        formats.read_metadata(gallery_meta),
        parse_grid(grid_values),
        product=product
    )
    if out_path:
        formats.write_sweep_table(out_path, rows)
    click.echo(formats.format_sweep_table(rows), nl=False)


COMMANDS = (
    match_command, train_head_command, rerank_command, tlift_command, eval_command,
    pipeline_command, interpret_command, augment_command, sweep_command
)


def register_commands(app):
    """Attach every pipeline subcommand to app.cli"""
    for command in COMMANDS:
        app.cli.add_command(command)
