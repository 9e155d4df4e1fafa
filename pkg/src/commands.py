"""
Command-line entry points for the experiment sweeps

    python -m src.commands roc --config scenario.json --seed 7 --out results/
    flask --app src.main experiment capacity --frames 20000

Errors are printed to stderr as one JSON line and mapped to exit codes:
2 config/domain, 3 numerical, 4 audit failure, 1 anything else.
"""

import os
import sys
import json
import logging
from typing import Optional

import click
from dotenv import load_dotenv

from src.models.experiment import ExperimentConfig, env_overrides
from src.services.errors import CRBeamError
from src.services.experiment_service import ExperimentService, ensure_passed

logger = logging.getLogger(__name__)


def _fail(record: dict, code: int):
    click.echo(json.dumps(record, sort_keys=True), err=True)
    sys.exit(code)


def resolve_config(config_path: Optional[str], seed: Optional[int], frames: Optional[int],
                   out_dir: Optional[str]) -> ExperimentConfig:
    """Flags override the environment, which overrides the file, which overrides the defaults"""
    cfg = ExperimentConfig.load(config_path) if config_path else ExperimentConfig()
    env = env_overrides()
    cfg = cfg.with_overrides(seed=env.get('seed'), frames=env.get('frames'), out_dir=env.get('out_dir'))
    return cfg.with_overrides(seed=seed, frames=frames, out_dir=out_dir)


def _execute(kind: str, config_path, seed, frames, out_dir):
    try:
        cfg = resolve_config(config_path, seed, frames, out_dir)
        service = ExperimentService()
        table = service.run(kind, cfg)
        paths = service.write_table(table, cfg, kind)
        click.echo(json.dumps({'experiment': kind, 'rows': int(len(table)), **paths}, sort_keys=True))
        if kind == 'validate':
            ensure_passed(table)
    except CRBeamError as e:
        logger.error(f"{kind} failed: {str(e)}")
        _fail(e.to_dict(), e.exit_code)
    except Exception as e:
        logger.exception(f"Unexpected error in {kind}")
        _fail({'error': 'internal', 'message': str(e)}, 1)


def experiment_options(func):
    func = click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None,
                        help='Output directory (env CRBEAM_OUT_DIR).')(func)
    func = click.option('--frames', type=int, default=None, help='Monte Carlo frames (env CRBEAM_FRAMES).')(func)
    func = click.option('--seed', type=int, default=None, help='Unsigned 64-bit seed (env CRBEAM_SEED).')(func)
    func = click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                        help='JSON experiment config.')(func)
    return func


@click.group()
def cli():
    """Cognitive-radio beam selection experiments"""
    load_dotenv()
    logging.basicConfig(level=os.getenv('LOG_LEVEL', 'INFO').upper(),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


@cli.command()
@experiment_options
def roc(config_path, seed, frames, out_dir):
    """P_d against P_fa per beamwidth"""
    _execute('roc', config_path, seed, frames, out_dir)


@cli.command()
@experiment_options
def beams(config_path, seed, frames, out_dir):
    """Beam selection probability against beamwidth"""
    _execute('beams', config_path, seed, frames, out_dir)


@cli.command()
@experiment_options
def capacity(config_path, seed, frames, out_dir):
    """Optimized capacity averaged over orientations"""
    _execute('capacity', config_path, seed, frames, out_dir)


@cli.command()
@experiment_options
def reliability(config_path, seed, frames, out_dir):
    """Outage and symbol error probability of the optimized policy"""
    _execute('reliability', config_path, seed, frames, out_dir)


@cli.command()
@experiment_options
def validate(config_path, seed, frames, out_dir):
    """Closed forms against quadrature and simulation; exit 4 on any failure"""
    _execute('validate', config_path, seed, frames, out_dir)


if __name__ == '__main__':
    cli()
