"""Exception hierarchy used across the package."""


class FDIAError(Exception):
    """Base class for every error raised by fdiabench."""


class ParseError(FDIAError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ValidationError(FDIAError):
    """A case or configuration violates a structural invariant."""


class TopologyError(FDIAError):
    """The reduced susceptance system cannot be solved."""


class ObservabilityError(FDIAError):
    def __init__(self, message, deficiency):
        self.deficiency = deficiency
        super().__init__(message)


class ConditioningError(FDIAError):
    """A normal matrix is too ill-conditioned to factorize reliably."""


class CalibrationError(FDIAError):
    pass


class ProtocolError(FDIAError):
    """Evaluation protocol misuse (empty slices, misaligned inputs, ...)."""


class ContractError(FDIAError):
    """A documented precondition was violated by the caller."""


class TrainingError(FDIAError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)


class ConfigError(FDIAError):
    pass
