import click

from hyperforce import base_command
from hyperforce.scenarios import bundled_scenarios


class ListScenariosCommand(base_command.VerboseCommand):
    """
    List the bundled scenarios. Any of them can be passed by name to `hyperforce run`.
    """

    def run(self):
        super().run()
        scenarios = bundled_scenarios()
        width = max((len(name) for name, _ in scenarios), default=0)
        for name, description in scenarios:
            click.echo('{}  {}'.format(name.ljust(width), description.splitlines()[0] if description else ''))
