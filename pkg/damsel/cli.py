"""
Command-line interface: ``damsel <command> [options]``.

Commands
--------
gen-data
    Generates a synthetic source/target dataset.
train
    Trains one experiment arm and writes `metrics.csv`, checkpoints and
    `run.json` into the run directory.
eval
    Dense inference and segmentation metrics of a checkpoint.
probe
    Domain-probe accuracy of a checkpoint.

Exit status is 0 on success, 2 for configuration problems (reported before
any computation) and 3 for failures at run time.
"""

# %% IMPORTS
# Built-in imports
import argparse
import logging as log
import os
from os import path
import sys

# DAMSEL imports
from damsel.__version__ import __version__
from damsel.synthdata import SynthConfig, gen_dataset
from damsel.tools import ConfigError, read_json
from damsel.training import (ARMS, Experiment, RunConfig, TrainingDivergedError,
                             load_networks)

# All declaration
__all__ = ['main', 'build_parser', 'cmd_gen_data', 'cmd_train', 'cmd_eval',
           'cmd_probe', 'EXIT_OK', 'EXIT_CONFIG', 'EXIT_RUNTIME']

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


# %% FUNCTION DEFINITIONS
def build_parser():
    """Argument parser of the `damsel` command"""
    parser = argparse.ArgumentParser(
        prog='damsel',
        description='Unsupervised domain adaptation for 3D lesion segmentation')
    parser.add_argument('--version', action='version',
                        version='%(prog)s {}'.format(__version__))
    parser.add_argument('--log-level', default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='verbosity of the log (default: INFO)')
    commands = parser.add_subparsers(dest='command', required=True)

    def add_common(sub):
        sub.add_argument('--config', help='JSON configuration file')
        sub.add_argument('--seed', type=int, help='master seed of every random stream')
        sub.add_argument('--out', help='output (run) directory')

    sub = commands.add_parser('gen-data', help='generate a synthetic dataset')
    add_common(sub)
    sub.set_defaults(func=cmd_gen_data)

    sub = commands.add_parser('train', help='train an experiment arm')
    add_common(sub)
    sub.add_argument('--mode', choices=list(ARMS), help='experiment arm')
    sub.add_argument('--alpha-max', type=float, help='final adversarial weight')
    sub.add_argument('--taps', help='tapped layers, e.g. L10 or L4,6,8,10')
    sub.add_argument('--epochs', type=int, help='total number of epochs')
    sub.add_argument('--resume', action='store_true',
                     help='continue from the trainer state of the run directory')
    sub.set_defaults(func=cmd_train)

    sub = commands.add_parser('eval', help='evaluate a checkpoint')
    add_common(sub)
    sub.add_argument('--checkpoint', help='checkpoint or run directory '
                                          '(default: the run directory)')
    sub.add_argument('--domain', choices=['S', 'T'], default='T')
    sub.add_argument('--split', choices=['heldout', 'train', 'all'], default='heldout')
    sub.set_defaults(func=cmd_eval)

    sub = commands.add_parser('probe', help='domain-probe accuracy of a checkpoint')
    add_common(sub)
    sub.add_argument('--checkpoint', help='checkpoint or run directory '
                                          '(default: the run directory)')
    sub.add_argument('--n-samples', type=int, help='number of probe segments')
    sub.add_argument('--fresh', action='store_true',
                     help='train a new discriminator on the frozen segmenter')
    sub.add_argument('--untrained', action='store_true',
                     help='probe freshly initialized networks instead of a checkpoint')
    sub.set_defaults(func=cmd_probe)
    return parser


def _run_config(args, **overrides):
    return RunConfig.resolve(args.config, seed=args.seed, out_dir=args.out, **overrides)


def cmd_gen_data(args):
    """Writes a synthetic dataset; prints the manifest path"""
    log.debug('@ cli::cmd_gen_data')
    data = {}
    if args.config is not None:
        if not path.isfile(args.config):
            raise ConfigError('configuration file not found: {}'.format(args.config))
        data = read_json(args.config)
    if args.seed is not None:
        data['seed'] = args.seed
    try:
        config = SynthConfig.from_dict(data)
    except (KeyError, TypeError, ValueError) as error:
        raise ConfigError(str(error).strip('"\''))
    problems = config.validate()
    if problems:
        raise ConfigError(problems)
    _, manifest_path = gen_dataset(config, args.out or 'data')
    print(manifest_path)
    return EXIT_OK


def cmd_train(args):
    """Trains the configured arm"""
    log.debug('@ cli::cmd_train')
    config = _run_config(args, mode=args.mode, taps=args.taps,
                         schedule_overrides={'alpha_max': args.alpha_max,
                                             'total_epochs': args.epochs})
    experiment = Experiment(config)
    os.makedirs(config.out_dir, exist_ok=True)
    handler = log.FileHandler(path.join(config.out_dir, 'train.log'))
    handler.setFormatter(log.Formatter(LOG_FORMAT))
    log.getLogger().addHandler(handler)
    try:
        experiment.train(resume=args.resume)
    finally:
        log.getLogger().removeHandler(handler)
        handler.close()
    print(path.join(config.out_dir, 'metrics.csv'))
    return EXIT_OK


def _checkpoint(args, config):
    checkpoint = args.checkpoint or config.out_dir
    if not path.isdir(checkpoint):
        raise FileNotFoundError('checkpoint not found: {}'.format(checkpoint))
    return checkpoint


def cmd_eval(args):
    """Evaluates a checkpoint on a split; writes the per-case CSV"""
    log.debug('@ cli::cmd_eval')
    config = _run_config(args)
    experiment = Experiment(config)
    segmenter, _, _ = load_networks(_checkpoint(args, config))
    table = experiment.evaluate(segmenter, args.domain, args.split)
    print(table.to_csv(index=False), end='')
    return EXIT_OK


def cmd_probe(args):
    """Prints the domain-probe accuracy"""
    log.debug('@ cli::cmd_probe')
    config = _run_config(args, probe_samples=args.n_samples)
    experiment = Experiment(config)
    if args.untrained:
        segmenter, discriminator = experiment.build_networks()
    else:
        segmenter, discriminator, _ = load_networks(_checkpoint(args, config))
    accuracy = experiment.probe(segmenter, discriminator, fresh=args.fresh or None)
    print('{:.4f}'.format(accuracy))
    return EXIT_OK


def main(argv=None):
    """
    Entry point of the `damsel` console script

    Returns
    -------
    int
        Exit status.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    log.basicConfig(level=getattr(log, args.log_level), format=LOG_FORMAT)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as error:
        print('damsel {}: {}'.format(args.command, error), file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as error:
        print('damsel {}: {}'.format(args.command, error), file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as error:
        log.debug('Unhandled failure', exc_info=True)
        print('damsel {}: {}: {}'.format(args.command, type(error).__name__, error),
              file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == '__main__':
    sys.exit(main())
