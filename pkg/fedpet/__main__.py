#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# __main__.py

"""
Command-line interface.

    fedpet pretrain   [CONFIG | --preset NAME] [--out DIR]
    fedpet partition  [CONFIG | --preset NAME] [--out DIR]
    fedpet run        [CONFIG | --preset NAME] [--out DIR] [--backbone CKPT]
    fedpet attack     [CONFIG | --preset NAME] [--out DIR]
    fedpet account    [--shape FILE] [--clients K] [--rounds T] [--out FILE]
    fedpet report     DIR

Exit status is 0 on success, 2 on a configuration error, 3 on any other
error and 64 on a usage error.
"""

import argparse
import logging
import os
import sys

from . import __about__, accounting, checkpoint, harness, jsonify, presets, report
from .exceptions import ConfigError, SchemaVersionError
from .models import fmt

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """An ``ArgumentParser`` that raises on bad usage instead of exiting."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_config_source(parser):
    source = parser.add_mutually_exclusive_group()
    source.add_argument("config", nargs="?", help="experiment config JSON")
    source.add_argument("--preset", choices=sorted(presets.presets), help="named preset")
    parser.add_argument("--out", help="output directory (default: the config's)")


def build_parser():
    parser = ArgumentParser(prog="fedpet", description=__about__.__description__)
    parser.add_argument(
        "--version", action="version", version="fedpet " + __about__.__version__
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("pretrain", help="pretrain the backbone and write a checkpoint")
    _add_config_source(p)

    p = sub.add_parser("partition", help="write client plans and JS distance matrices")
    _add_config_source(p)

    p = sub.add_parser("run", help="run federated and centralized tuning")
    _add_config_source(p)
    p.add_argument("--backbone", help="pretrained backbone checkpoint")

    p = sub.add_parser("attack", help="run gradient-inversion attacks")
    _add_config_source(p)

    p = sub.add_parser("account", help="write the communication cost table")
    p.add_argument("--shape", help="architecture shape JSON (default: RoBERTa-base)")
    p.add_argument("--clients", type=int, default=10, help="clients per round")
    p.add_argument("--rounds", type=int, default=30, help="communication rounds")
    p.add_argument("--out", default="account.csv", help="output CSV")

    p = sub.add_parser("report", help="aggregate the outputs of a run")
    p.add_argument("dir", help="output directory of `fedpet run`")
    return parser


def load_config(args):
    """The experiment config named by ``args``, or the ``main`` preset.

    Raises:
        ConfigError: For any invalid or unreadable configuration.
    """
    try:
        if args.config is not None:
            return harness.load_experiment(args.config)
        return presets.preset(args.preset or "main")
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError("Invalid configuration: {}".format(e)) from e


def _load_shape(path):
    if path is None:
        return accounting.ArchShape.roberta_base()
    try:
        with open(path) as f:
            return accounting.ArchShape.from_json(jsonify.load(f))
    except ValueError as e:
        raise ConfigError("Invalid shape file {}: {}".format(path, e)) from e


def cmd_pretrain(args):
    path = harness.pretrain(load_config(args), args.out)
    print(path)


def cmd_partition(args):
    means = harness.write_partitions(load_config(args), args.out)
    for (alpha, seed), mean in sorted(means.items()):
        print("alpha={}\tseed={}\tmean_js={}".format(alpha, seed, fmt.fmt_number(mean)))


def cmd_run(args):
    cfg = load_config(args)
    backbone = None if args.backbone is None else checkpoint.load_store(args.backbone)
    rows = harness.run_experiment(cfg, args.out, backbone=backbone)
    for row in rows:
        print(
            "{setting:12} {method:20} alpha={alpha} E={local_epochs} seed={seed} "
            "test={test}".format(**row)
        )


def cmd_attack(args):
    for rep in harness.run_attacks(load_config(args), args.out):
        print(
            "{method:20} batch={batch_size} seed={seed} f1={f1:.3f}".format(**rep)
        )


def cmd_account(args):
    shape = _load_shape(args.shape)
    reports = accounting.account_rows(
        shape, accounting.default_specs(), args.clients, args.rounds
    )
    accounting.write_account_csv(args.out, reports)
    for r in reports:
        print(r)


def cmd_report(args):
    if not os.path.isdir(args.dir):
        raise ConfigError("No such output directory: {}".format(args.dir))
    for path in report.report(args.dir):
        print(path)


COMMANDS = {
    "pretrain": cmd_pretrain,
    "partition": cmd_partition,
    "run": cmd_run,
    "attack": cmd_attack,
    "account": cmd_account,
    "report": cmd_report,
}


def main(argv=None):
    """Run the command line; return the exit status."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print("fedpet: error: {}".format(e), file=sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except (ConfigError, SchemaVersionError, FileNotFoundError) as e:
        log.error("Configuration error: %s", e)
        print("fedpet: configuration error: {}".format(e), file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # pylint: disable=broad-except
        log.exception("fedpet %s failed", args.command)
        print("fedpet: error: {}".format(e), file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
