class HyperforceException(Exception):
    pass


class DimensionMismatchError(HyperforceException, ValueError):
    pass


class SingularityError(HyperforceException, ArithmeticError):
    pass


class InadmissibleFieldError(HyperforceException, ValueError):
    pass


class InversionError(HyperforceException, ArithmeticError):
    pass


class BoundaryError(HyperforceException, ValueError):
    pass


class IntegrationDomainError(HyperforceException, ValueError):
    pass


class MissingGradientError(HyperforceException):
    pass


class ScenarioParseError(HyperforceException):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = '{} (line {}, column {})'.format(message, line, column)
        super().__init__(message)


class ScenarioValidationError(HyperforceException, ValueError):
    pass
