"""Exception types shared across the toolkit."""


class KoopctrlError(Exception):
    """Base class for all toolkit-specific errors."""


class NonFiniteError(KoopctrlError, ValueError):
    """An input matrix or vector contains NaN or Inf entries."""


class NotSymmetricError(KoopctrlError, ValueError):
    """A matrix required to be symmetric is not, within tolerance."""


class DimensionMismatchError(KoopctrlError, ValueError):
    """Operand shapes are inconsistent with each other or with a spec."""


class HistoryLengthError(KoopctrlError, ValueError):
    """A delay-lifting history has the wrong number of samples."""


class WrongKindError(KoopctrlError, TypeError):
    """An operation was applied to the wrong lifting kind."""


class InsufficientDataError(KoopctrlError, ValueError):
    """A dataset is too short for the requested lifting or fit."""


class InvalidRegionError(KoopctrlError, ValueError):
    """A quadratic region does not satisfy its definiteness requirements."""


class InfeasibleSynthesisError(KoopctrlError, RuntimeError):
    """The synthesis LMI admits no certificate for the given model/region.

    Carries the solver's phase-I margin so callers can distinguish a
    marginal failure from a structurally infeasible problem.
    """

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class NumericalFailureError(KoopctrlError, RuntimeError):
    """A numerical procedure failed beyond recovery (singular Newton
    system, stalled line search, diverging iterates)."""


class EmptyRunError(KoopctrlError, ValueError):
    """A data-collection run was requested with zero length."""


class ConfigError(KoopctrlError, ValueError):
    """A pipeline configuration is malformed or references missing files."""
