"""Exception hierarchy shared by the solvers, the analysis tools and the CLI."""


class ShearFlowError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_payload(self):
        payload = {"error": type(self).__name__, "message": str(self)}
        payload.update({k: v for k, v in self.details.items() if v is not None})
        return payload


class ConfigError(ShearFlowError, ValueError):
    exit_code = 2


class NumericalGuardError(ShearFlowError, ValueError):
    """A step-size or rate guard was violated."""

    exit_code = 3


class AnalysisError(ShearFlowError):
    exit_code = 4


class ContractViolation(ShearFlowError, ValueError):
    """A caller broke a documented precondition (e.g. non-unit omega)."""

    exit_code = 3
