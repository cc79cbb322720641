import logging

import click

from hyperforce import base_command
from hyperforce.checks import CheckDispatcher

logger = logging.getLogger(__name__)


class DescribeCommand(base_command.VerboseCommand):
    """
    Print what a check verifies and how its records are judged.
    """

    def __init__(self, *, check, **kwargs):
        super().__init__(**kwargs)
        self.check = check

    def run(self):
        super().run()
        try:
            description = CheckDispatcher.describe(self.check)
        except ValueError as error:
            raise base_command.CommandException(str(error)) from error
        click.echo(description)
