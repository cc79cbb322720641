import abc
import logging

from hyperforce import settings

logger = logging.getLogger(__name__)

EXIT_FAILURE = 1
EXIT_PARSE_ERROR = 2
EXIT_VALIDATION_ERROR = 3


class CommandException(Exception):
    def __init__(self, message, exit_code=EXIT_FAILURE):
        super().__init__(message)
        self.exit_code = exit_code


class BaseCommand:
    @abc.abstractmethod
    def run(self):
        raise NotImplementedError


class VerboseCommand(BaseCommand):
    def __init__(self, *, log_level=None):
        super().__init__()
        self._log_level = log_level

    def run(self):
        self.set_log_level()

    def set_log_level(self):
        logging.getLogger('hyperforce').setLevel(self.log_level)

    @property
    def log_level(self):
        return self._log_level or settings.DEFAULT_HYPERFORCE_LOG_LEVEL
