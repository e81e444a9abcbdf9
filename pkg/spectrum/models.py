from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from cornersgd.constants import (
    COEFFICIENT_SIGN_ERROR,
    EIGENVALUE_ORDER_ERROR,
    LENGTH_MISMATCH_ERROR,
)
from cornersgd.exceptions import SpectrumError


def frozen_array(values, dtype=float):
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PowerLawMeta:
    """Capacity and source exponents of a spectral problem.

    lambda_k ~ Lambda * k^-nu and sum_{lambda_k <= lambda} lambda_k s_k ~ Qsrc * lambda^zeta.
    """

    nu: float
    zeta: float
    Lambda: float
    Qsrc: float


@dataclass(frozen=True, eq=False)
class SpectralProblem:
    """Eigenvalues lambda_k of the Hessian and squared target coefficients s_k = (e_k^T w_*)^2.

    tail_mass is the source mass sum lambda_k s_k carried by modes below the last retained
    eigenvalue. index_origin is the position of the first eigenvalue on the mode-counting axis
    (1 for k = 1..K, 0.5 for spectra indexed from 0 whose eigenvalues follow (k + 1/2)^-nu).
    """

    eigenvalues: np.ndarray
    coeffs: np.ndarray
    meta: Optional[PowerLawMeta] = None
    tail_mass: float = 0.0
    index_origin: float = 1.0
    name: str = field(default="custom")

    def __post_init__(self):
        eigenvalues = frozen_array(self.eigenvalues)
        coeffs = frozen_array(self.coeffs)

        if eigenvalues.ndim != 1 or coeffs.shape != eigenvalues.shape:
            raise SpectrumError(LENGTH_MISMATCH_ERROR)
        if eigenvalues.size == 0 or not np.all(eigenvalues > 0) or np.any(np.diff(eigenvalues) >= 0):
            raise SpectrumError(EIGENVALUE_ORDER_ERROR)
        if not np.all(coeffs >= 0) or self.tail_mass < 0:
            raise SpectrumError(COEFFICIENT_SIGN_ERROR)

        object.__setattr__(self, "eigenvalues", eigenvalues)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def size(self):
        return self.eigenvalues.size

    @property
    def lambda_max(self):
        return float(self.eigenvalues[0])

    @property
    def source(self):
        """Per-mode source mass lambda_k * s_k."""
        return self.eigenvalues * self.coeffs

    @property
    def mode_index(self):
        return self.index_origin + np.arange(self.size, dtype=float)

    def truncated(self, K):
        """The first K modes; the dropped source mass moves into tail_mass."""
        dropped = float(np.sum(self.source[K:]))
        return SpectralProblem(
            self.eigenvalues[:K],
            self.coeffs[:K],
            meta=self.meta,
            tail_mass=self.tail_mass + dropped,
            index_origin=self.index_origin,
            name=self.name,
        )


@dataclass(frozen=True)
class ExponentFit:
    nu_fit: float
    zeta_fit: float
    nu_drift: float
    power_law: bool
