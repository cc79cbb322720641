from hyperforce.commands.describe import DescribeCommand
from hyperforce.commands.list_scenarios import ListScenariosCommand
from hyperforce.commands.run import RunCommand

__all__ = [
    DescribeCommand,
    ListScenariosCommand,
    RunCommand,
]
