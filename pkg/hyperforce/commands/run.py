import logging
import pathlib

import click

from cached_property import cached_property

from hyperforce import base_command
from hyperforce import settings
from hyperforce.checks import CheckDispatcher
from hyperforce.exceptions import ScenarioParseError
from hyperforce.exceptions import ScenarioValidationError
from hyperforce.report import render_summary
from hyperforce.report import write_json
from hyperforce.report import write_profiles
from hyperforce.scenarios import load_scenario

logger = logging.getLogger(__name__)


class RunCommand(base_command.VerboseCommand):
    """
    Run the checks of a scenario, given as a bundled name or a path to a YAML file.

    Writes report.json and profiles.csv to the output directory and prints one line per record.
    Exits with 1 when a record fails, 2 when the scenario cannot be parsed and 3 when it is
    rejected by validation.
    """

    def __init__(self, *, scenario, out=settings.DEFAULT_OUTPUT_DIR, seed=None, tol_scale=None, mc_samples=None,
                 quad_order=None, workers=settings.DEFAULT_WORKERS, **kwargs):
        super().__init__(**kwargs)
        self.scenario_name = scenario
        self.out = out
        self.seed = seed
        self.tol_scale = tol_scale
        self.mc_samples = mc_samples
        self.quad_order = quad_order
        self.workers = workers

    def run(self):
        super().run()
        report = CheckDispatcher(self.scenario, self.workers).run()
        self.output_dir.mkdir(parents=True, exist_ok=True)
        write_json(report, self.output_dir / settings.DEFAULT_REPORT_FILENAME)
        write_profiles(report, self.output_dir / settings.DEFAULT_PROFILES_FILENAME)
        click.echo(render_summary(report))
        if not report.passed:
            raise base_command.CommandException(
                'Scenario {} has {} failed records.'.format(report.scenario_id, report.counts()['fail']),
                base_command.EXIT_FAILURE,
            )

    @cached_property
    def scenario(self):
        try:
            scenario = load_scenario(self.scenario_name)
        except ScenarioParseError as error:
            raise base_command.CommandException(str(error), base_command.EXIT_PARSE_ERROR) from error
        except ScenarioValidationError as error:
            raise base_command.CommandException(str(error), base_command.EXIT_VALIDATION_ERROR) from error
        logger.info('Running scenario {}...'.format(scenario.identifier))
        return scenario.with_overrides(
            seed=self.seed, tol_scale=self.tol_scale, mc_samples=self.mc_samples, quad_order=self.quad_order,
        )

    @cached_property
    def output_dir(self):
        return pathlib.Path(self.out)
