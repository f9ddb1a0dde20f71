"""Exception types shared across the package."""


class AolcorrError(Exception):
    """Base class for all package errors."""


class NonEllipticalOrbitError(AolcorrError):
    """State has non-negative specific energy; no osculating ellipse exists."""


class GeometryError(AolcorrError):
    """Degenerate geometry (e.g. parallel position/velocity vectors)."""


class PropagationDecayError(AolcorrError):
    """Trajectory fell below the decay altitude floor.

    Carries the epoch and state of the last accepted step so callers can
    account for partial results.
    """

    def __init__(self, message, epoch=None, state=None, n_reached=0):
        super().__init__(message)
        self.epoch = epoch
        self.state = state
        self.n_reached = n_reached


class StepSizeUnderflowError(AolcorrError):
    """Adaptive integrator could not meet tolerances above the minimum step."""


class VcmFormatError(AolcorrError):
    """Malformed or inconsistent VCM / catalog input."""


class AolMapError(AolcorrError):
    """Argument-of-latitude mapping outside its domain of validity."""


class CorrectorError(AolcorrError):
    """Numerically unusable correction inputs (e.g. singular innovation)."""


class DatasetError(AolcorrError):
    """Dataset assembly or normalization contract violation."""


class ModelError(AolcorrError):
    """Regression model training/inference failure."""


class EvalError(AolcorrError):
    """Evaluation metric preconditions violated."""


class ConfigError(AolcorrError):
    """Pipeline configuration is invalid or incomplete."""
