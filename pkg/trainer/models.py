from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from contour.models import MemoryAlgorithm
from cornersgd.constants import (
    INDICATOR_TARGET,
    LENGTH_MISMATCH_ERROR,
    NON_POSITIVE_PARAMETER_ERROR,
    SCHEDULE_ERROR,
)
from cornersgd.exceptions import TrainingError
from propagator.models import LossTrajectory
from spectrum.models import SpectralProblem, frozen_array


@dataclass(frozen=True, eq=False)
class TrainConfig:
    """One (S)GD-with-memory run: w_{t+1} = w_t - alpha g_t + b^T u_t, u_{t+1} = c g_t + D u_t.

    eval_steps are the steps at which the population loss is recorded; step 0 is the
    initial point w_0 = 0. deterministic replaces batch gradients by the exact gradient.
    """

    algorithm: MemoryAlgorithm
    steps: int
    eval_steps: np.ndarray
    batch: int = 1
    seed: int = 0
    deterministic: bool = False
    problem: str = ""

    def __post_init__(self):
        for name in ("steps", "batch"):
            if not getattr(self, name) >= 1:
                raise TrainingError(NON_POSITIVE_PARAMETER_ERROR.format(name))
        eval_steps = frozen_array(self.eval_steps, dtype=np.int64)
        if (
            eval_steps.ndim != 1
            or eval_steps.size == 0
            or eval_steps[0] < 0
            or np.any(np.diff(eval_steps) <= 0)
            or eval_steps[-1] > self.steps
        ):
            raise TrainingError(SCHEDULE_ERROR.format(self.steps))
        object.__setattr__(self, "eval_steps", eval_steps)


@dataclass(frozen=True, eq=False)
class IndicatorModel:
    """y_hat(x) = (1/N) sum_n w_n (x - n/N)_+, n = 1..N, fitted to the indicator of INDICATOR_TARGET."""

    n: int
    w: Optional[np.ndarray] = None
    target: tuple = field(default=INDICATOR_TARGET)

    def __post_init__(self):
        if self.n < 1:
            raise TrainingError(NON_POSITIVE_PARAMETER_ERROR.format("n"))
        w = frozen_array(np.zeros(self.n) if self.w is None else self.w)
        if w.shape != (self.n,):
            raise TrainingError(LENGTH_MISMATCH_ERROR)
        object.__setattr__(self, "w", w)

    @property
    def knots(self):
        return np.arange(1, self.n + 1) / self.n


@dataclass(frozen=True, eq=False)
class GaussianSpectralModel:
    """Linear regression with features x = sum_k sqrt(lambda_k) g_k e_k, g_k standard normal.

    delta_w holds the eigen-coordinates of w - w_*; by default w_0 = 0, i.e. delta_w = -sqrt(s).
    The population loss is 1/2 sum_k lambda_k delta_w_k^2.
    """

    problem: SpectralProblem
    delta_w: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.delta_w is None:
            delta_w = -np.sqrt(self.problem.coeffs)
        else:
            delta_w = self.delta_w
        delta_w = frozen_array(delta_w)
        if delta_w.shape != self.problem.eigenvalues.shape:
            raise TrainingError(LENGTH_MISMATCH_ERROR)
        object.__setattr__(self, "delta_w", delta_w)

    @property
    def lambdas(self):
        return self.problem.eigenvalues


@dataclass(frozen=True)
class LossFit:
    exponent: float
    stderr: float
    points: int


@dataclass(frozen=True)
class SeedAverage:
    """Mean trajectory over independent seeds, cut to the shortest run."""

    mean: LossTrajectory
    runs: list
