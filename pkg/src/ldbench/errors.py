"""Exception hierarchy.

Two branches matter for the CLI exit codes: ContractError (bad inputs,
misuse, schema mismatches -> exit 2) and NumericalError (runtime numerical
failures -> exit 3).
"""


class LdbenchError(Exception):
    pass


class ContractError(LdbenchError, ValueError):
    """Precondition or interface contract violated by the caller."""


class DimensionMismatchError(ContractError):
    pass


class DomainError(ContractError):
    """Argument outside the mathematical domain of an operation."""


class DegeneratePhaseError(DomainError):
    """Polar phase undefined (zero-power state)."""


class NumericalError(LdbenchError, RuntimeError):
    """A numerical procedure failed at runtime."""


class IntegrationFailureError(NumericalError):
    def __init__(self, message, last_valid_time=None):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class GenerationError(NumericalError):
    """Dataset generation could not satisfy its sampling constraints."""


class TrainingDivergenceError(NumericalError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class RankDeficiencyError(NumericalError):
    pass


class ReservoirDivergenceError(NumericalError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class OptimizationFailureError(NumericalError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class FieldQualityError(NumericalError):
    """Too many grid nodes lost to diverging rollouts."""


class EmptyFieldError(NumericalError):
    pass


class UndefinedNormalizationError(NumericalError):
    """Normalizing by a zero Lagrangian descriptor (fixed point)."""


class ExtractionError(NumericalError):
    """Level-set orbit extraction found no usable structure."""
