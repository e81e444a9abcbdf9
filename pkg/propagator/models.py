from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from cornersgd.constants import (
    NEGATIVE_ENTRY_ERROR,
    NON_POSITIVE_PARAMETER_ERROR,
    PROVENANCE_ERROR,
    SERIES_SHAPE_ERROR,
    STEPS_SHAPE_ERROR,
)
from cornersgd.exceptions import PropagatorError
from spectrum.models import frozen_array


@dataclass(frozen=True, eq=False)
class KernelPair:
    """U(t, lambda) and V(t, lambda) for t = 1..T along the last axis.

    leakage is the largest Fourier coefficient at non-positive index relative to the largest
    kept one; zero for kernels computed by matrix powers.
    """

    u: np.ndarray
    v: np.ndarray
    leakage: float = 0.0


@dataclass(frozen=True, eq=False)
class Tau2Kernels:
    g: np.ndarray
    h: np.ndarray


@dataclass(frozen=True, eq=False)
class PropagatorSeries:
    """Aggregated propagators U_t, V_t for t = 1..T with the noise scale tau1 / |B|."""

    u: np.ndarray
    v: np.ndarray
    tau1: float = 1.0
    batch: int = 1

    def __post_init__(self):
        u = frozen_array(self.u)
        v = frozen_array(self.v)
        if u.ndim != 1 or u.shape != v.shape:
            raise PropagatorError(SERIES_SHAPE_ERROR)
        if self.batch < 1:
            raise PropagatorError(NON_POSITIVE_PARAMETER_ERROR.format("batch"))
        if self.tau1 < 0:
            raise PropagatorError(NEGATIVE_ENTRY_ERROR.format("tau1"))
        for name, values in (("U", u), ("V", v)):
            if np.any(values < 0):
                raise PropagatorError(NEGATIVE_ENTRY_ERROR.format(name))
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def length(self):
        return self.u.size

    @property
    def steps(self):
        return np.arange(1, self.length + 1)

    def rebatched(self, batch):
        """The same series at another batch size; U scales as 1 / |B|."""
        if batch < 1:
            raise PropagatorError(NON_POSITIVE_PARAMETER_ERROR.format("batch"))
        return PropagatorSeries(self.u * (self.batch / batch), self.v, tau1=self.tau1, batch=batch)


@dataclass(frozen=True, eq=False)
class LossTrajectory:
    """Mean loss L_t at the recorded steps.

    provenance is "theory" for losses built from propagators and "empirical" for simulated
    runs. diverged_at is the first step at which an empirical run was stopped.
    """

    l: np.ndarray
    provenance: str = "theory"
    fingerprint: str = ""
    steps: Optional[np.ndarray] = None
    diverged_at: Optional[int] = None

    def __post_init__(self):
        l = frozen_array(self.l)
        steps = frozen_array(np.arange(l.size) if self.steps is None else self.steps, dtype=np.int64)
        if steps.shape != l.shape:
            raise PropagatorError(STEPS_SHAPE_ERROR)
        if self.provenance not in ("theory", "empirical"):
            raise PropagatorError(PROVENANCE_ERROR.format(self.provenance))
        if np.any(l[np.isfinite(l)] < 0):
            raise PropagatorError(NEGATIVE_ENTRY_ERROR.format("Loss"))
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "steps", steps)


class Regime(str, Enum):
    IMMEDIATE_DIVERGENCE = "immediate_divergence"
    DIVERGENCE = "divergence"
    SIGNAL_DOMINATED = "signal_dominated"
    NOISE_DOMINATED = "noise_dominated"
    CONVERGING_UNCLASSIFIED = "converging_unclassified"


@dataclass(frozen=True)
class NoiseTotal:
    """U_sigma = sum of U_t with the fitted tail beyond T; infinite when the tail is not integrable."""

    u_sigma: float
    tail: float
    tail_exponent: float
    divergent: bool


@dataclass(frozen=True)
class TailFit:
    """u_t ~ coeff * t^-exponent over the last decade of a series."""

    exponent: float
    log_coeff: float

    @property
    def coeff(self):
        return float(np.exp(self.log_coeff))


@dataclass(frozen=True)
class RegimeReport:
    regime: Regime
    u_sigma: float
    xi_u: float
    xi_v: float
    predicted_coeff: Optional[float] = None
    loss_exponent: Optional[float] = None
    v_sigma: Optional[float] = None


@dataclass(frozen=True)
class Asymptote:
    v_pred: float
    u_pred: float
