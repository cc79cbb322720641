#!/usr/bin/env python
import logging
import sys

import click

from hyperforce import logging as hyperforce_logging
from hyperforce import settings
from hyperforce.base_command import CommandException
from hyperforce.commands import DescribeCommand
from hyperforce.commands import ListScenariosCommand
from hyperforce.commands import RunCommand

hyperforce_logging.init_logging()
logger = logging.getLogger(__name__)


@click.group()
@click.version_option()
def cli():
    """
    hyperforce evaluates equilibrium sum rules of classical Hamiltonian systems by quadrature and
    reports, per check, whether each identity holds within its tolerances.

    hyperforce run SCENARIO [OPTIONS]
    """
    pass


def apply_common_options(options):
    def wrap(func):
        for option in reversed(options):
            func = option(func)
        return func

    return wrap


def execute(command):
    try:
        command.run()
    except CommandException as error:
        logger.error(str(error))
        sys.exit(error.exit_code)


common_options = (
    click.option(
        "--verbose",
        "-v",
        "log_level",
        flag_value="DEBUG",
        help="Outputs debug logs.",
    ),
)


@cli.command(help=RunCommand.__doc__)
@apply_common_options(common_options)
@click.argument("scenario")
@click.option(
    "--out",
    default=settings.DEFAULT_OUTPUT_DIR,
    type=click.Path(file_okay=False),
    help="Directory for report.json and profiles.csv.",
)
@click.option(
    "--seed",
    type=int,
    help="Overrides the Monte Carlo seed of the scenario.",
)
@click.option(
    "--tol-scale",
    type=click.FloatRange(min=0.0, min_open=True),
    help="Multiplies the absolute and relative verdict tolerances.",
)
@click.option(
    "--mc-samples",
    type=click.IntRange(min=1),
    help="Overrides the number of Monte Carlo samples per chain.",
)
@click.option(
    "--quad-order",
    type=click.IntRange(min=1),
    help="Overrides the Gauss-Hermite momentum order.",
)
@click.option(
    "--workers",
    default=settings.DEFAULT_WORKERS,
    type=click.IntRange(min=1),
    help="Number of threads running check tasks.",
)
def run(**kwargs):
    execute(RunCommand(**kwargs))


@cli.command(name='list', help=ListScenariosCommand.__doc__)
@apply_common_options(common_options)
def list_scenarios(**kwargs):
    execute(ListScenariosCommand(**kwargs))


@cli.command(help=DescribeCommand.__doc__)
@apply_common_options(common_options)
@click.argument("check")
def describe(**kwargs):
    execute(DescribeCommand(**kwargs))
