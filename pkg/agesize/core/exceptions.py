"""Exceptions raised by agesize.

The hierarchy is split in three families which the command line maps onto exit
codes: configuration problems (1), assumption violations (2) and numerical
failures (3).
"""


class AgesizeError(Exception):
    pass


# configuration and model definition

class ConfigError(AgesizeError):
    pass


class KeyExists(ConfigError):
    pass


class NonPositiveG(ConfigError):
    pass


class SeedMismatch(ConfigError):
    pass


class BadAge(ConfigError):
    pass


class NegativeInput(ConfigError):
    pass


class NotHomogeneous(ConfigError):
    pass


# assumptions (A1)-(A6)

class AssumptionViolation(AgesizeError):

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# numerical failures

class NumericalFailure(AgesizeError):
    pass


class DomainExit(NumericalFailure):
    pass


class OutOfWindow(NumericalFailure):
    pass


class SurvivalZero(NumericalFailure):
    pass


class NoConvergence(NumericalFailure):
    pass


class BracketFailure(NumericalFailure):
    pass


class WeightDivergence(NumericalFailure):
    pass


class StepUnderflow(NumericalFailure):
    pass


class ShortTrajectory(NumericalFailure):
    pass


# pipeline control

class AbortFunction(Exception):
    pass


class AbortExecution(Exception):
    pass


class PipelineError(Exception):
    pass
