class CornerSGDError(Exception):
    """Base class for errors raised by the corner SGD apps."""


class SpectrumError(CornerSGDError, ValueError):
    pass


class ContourError(CornerSGDError, ValueError):
    pass


class PropagatorError(CornerSGDError, ValueError):
    pass


class TheoryError(CornerSGDError, ValueError):
    pass


class TrainingError(CornerSGDError, ValueError):
    pass


class NumericalError(CornerSGDError):
    """A computation failed for numerical reasons (near-singular evaluation, pole on the circle)."""
