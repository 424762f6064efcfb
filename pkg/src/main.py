#!/usr/bin/env python3
"""
KG embedding toolkit - Main entry point

    python src/main.py train     --model transe --data fb15k237/ --dim 200 --out runs/transe
    python src/main.py propagate --checkpoint runs/transe/checkpoint-step1000.bin --data fb15k237/ --out runs/rep
    python src/main.py evaluate  --checkpoint runs/rep/propagated-rep-alpha0.98-hops10.bin --data fb15k237/
    python src/main.py sweep     --checkpoint runs/transe/checkpoint-step1000.bin --data fb15k237/ --alpha 0.95,0.99 --hops 1,2,3
    python src/main.py verify    --property sgd-equivalence --beta 0.01
"""
import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

# Add the parent directory to Python path for imports
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import structlog
from dotenv import load_dotenv

from src.errors import KGRepError
from src.harness import cmd_evaluate, cmd_propagate, cmd_sweep, cmd_train, cmd_verify, load_config
from src.harness.verify import PROPERTIES

logger = structlog.get_logger()


def configure_logging() -> None:
    """stdlib logging at LOG_LEVEL with structlog routed through it"""
    level = os.getenv('LOG_LEVEL', 'INFO').upper()
    logging.basicConfig(level=level, format='%(message)s', stream=sys.stderr)
    logging.getLogger('sqlalchemy.engine').setLevel(logging.WARNING)
    structlog.configure(
        processors=[
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt='iso'),
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


def _common_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument('--config', help='key=value config file; flags override it')
    parent.add_argument('--data', help='Directory with train/valid/test triplet files')
    parent.add_argument('--model', choices=['transe', 'distmult', 'rotate', 'ote'])
    parent.add_argument('--dim', type=int, help='Entity dimension n')
    parent.add_argument('--gamma', type=float, help='Margin')
    parent.add_argument('--norm-order', type=int, choices=[1, 2])
    parent.add_argument('--ote-groups', type=int)
    parent.add_argument('--seed', type=int)
    parent.add_argument('--threads', type=int)
    parent.add_argument('--out', help='Output directory (train, propagate) or file')
    parent.add_argument('--no-provenance', action='store_true',
                        help='Do not record the run in the provenance database')
    return parent


def _evaluation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--checkpoint', action='append',
                        help='Checkpoint file (repeatable for sweep)')
    parser.add_argument('--protocol', choices=['filtered', 'unfiltered', 'candidates'])
    parser.add_argument('--candidate-file')
    parser.add_argument('--tie', choices=['average', 'optimistic', 'pessimistic'])
    parser.add_argument('--split', choices=['valid', 'test'])


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments"""
    parser = argparse.ArgumentParser(description='Knowledge graph embedding with relation-based propagation')
    subparsers = parser.add_subparsers(dest='command', required=True)
    common = _common_flags()

    train = subparsers.add_parser('train', parents=[common], help='Train an embedding model')
    train.add_argument('--lr', type=float)
    train.add_argument('--epochs', type=int)
    train.add_argument('--batch-size', type=int)
    train.add_argument('--negatives', type=int)
    train.add_argument('--optimizer', choices=['sgd', 'adagrad'])
    train.add_argument('--checkpoint-fractions', help='e.g. 0.25,0.5,0.75,1.0')
    train.add_argument('--float-width', type=int, choices=[4, 8])

    propagate = subparsers.add_parser('propagate', parents=[common],
                                      help='Propagate a checkpoint (REP or EP)')
    _evaluation_flags(propagate)
    propagate.add_argument('--alpha', type=float)
    propagate.add_argument('--hops', type=int)
    propagate.add_argument('--mode', choices=['rep', 'ep'])
    propagate.add_argument('--normalization', choices=['joint', 'separate'])
    propagate.add_argument('--evaluate-each-hop', action='store_true', default=None)

    evaluate = subparsers.add_parser('evaluate', parents=[common], help='Rank a split')
    _evaluation_flags(evaluate)

    sweep = subparsers.add_parser('sweep', parents=[common],
                                  help='Evaluate a grid of alpha x hops (x mode x checkpoint)')
    _evaluation_flags(sweep)
    sweep.add_argument('--alpha', help='Comma-separated alphas')
    sweep.add_argument('--hops', help='Comma-separated hop counts (0 = no propagation)')
    sweep.add_argument('--mode', help='Comma-separated modes from rep,ep')
    sweep.add_argument('--normalization', choices=['joint', 'separate'])

    verify = subparsers.add_parser('verify', parents=[common], help='Run self-checks')
    verify.add_argument('--property', action='append', choices=sorted(PROPERTIES))
    verify.add_argument('--beta', type=float, default=0.01)
    return parser.parse_args(argv)


def config_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Flag values keyed by ExperimentConfig field; unset flags are None"""
    values = dict(vars(args))
    for key in ('command', 'config', 'property', 'beta', 'no_provenance'):
        values.pop(key, None)
    checkpoints = values.pop('checkpoint', None)
    if checkpoints:
        if args.command == 'sweep':
            values['checkpoints'] = checkpoints
        else:
            values['checkpoint'] = checkpoints[-1]
    if args.command == 'sweep':
        values['sweep_alphas'] = values.pop('alpha', None)
        values['sweep_hops'] = values.pop('hops', None)
        values['sweep_modes'] = values.pop('mode', None)
    if args.no_provenance:
        values['provenance'] = False
    return values


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code"""
    args = parse_args(argv)
    load_dotenv()
    configure_logging()
    try:
        config = load_config(args.config, config_overrides(args))
        if args.command == 'train':
            cmd_train(config)
        elif args.command == 'propagate':
            cmd_propagate(config)
        elif args.command == 'evaluate':
            cmd_evaluate(config)
        elif args.command == 'sweep':
            cmd_sweep(config)
        else:
            report = cmd_verify(config, args.property, args.beta)
            if not report.passed:
                logger.error("Verification failed",
                             failed=[r.name for r in report.properties if not r.passed])
                return 1
    except (KGRepError, OSError) as e:
        logger.error("Command failed", command=args.command, error=str(e))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
