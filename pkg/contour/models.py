from dataclasses import dataclass
from typing import Optional
import math

import numpy as np
from numpy.polynomial import polynomial as P

from cornersgd.constants import (
    ALGORITHM_SHAPE_ERROR,
    MONIC_ERROR,
    NON_POSITIVE_PARAMETER_ERROR,
    ROOT_AT_ONE_ERROR,
    THETA_RANGE_ERROR,
    ZERO_Q_ERROR,
)
from cornersgd.exceptions import ContourError
from spectrum.models import frozen_array

ROOT_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class PoleForm:
    """(mu - 1) / Psi(mu) = constant + sum_m residues_m / (mu - poles_m).

    Carried by maps built from a diagonal memory; evaluation through it stays accurate when
    the memory roots crowd mu = 1.
    """

    poles: np.ndarray
    residues: np.ndarray
    constant: float

    def __post_init__(self):
        object.__setattr__(self, "poles", frozen_array(np.atleast_1d(self.poles)))
        object.__setattr__(self, "residues", frozen_array(np.atleast_1d(self.residues)))
        object.__setattr__(self, "constant", float(self.constant))

    def __call__(self, mu):
        mu = np.asarray(mu)
        return self.constant + (self.residues / (mu[..., None] - self.poles)).sum(axis=-1)

    def transition_matrices(self, lambdas):
        """Arrowhead matrices whose characteristic polynomials are P - lambda Q."""
        m = self.poles.size
        s = np.zeros((lambdas.size, m + 1, m + 1))
        s[:, 0, 0] = 1.0 + lambdas * self.constant
        s[:, 0, 1:] = 1.0
        s[:, 1:, 0] = lambdas[:, None] * self.residues
        s[:, np.arange(1, m + 1), np.arange(1, m + 1)] = self.poles
        return s


@dataclass(frozen=True, eq=False)
class RationalMap:
    """Psi = P / Q with coefficients ordered low-to-high; P monic of degree M + 1 with P(1) = 0."""

    p: np.ndarray
    q: np.ndarray
    pole_form: Optional[PoleForm] = None

    def __post_init__(self):
        p = frozen_array(self.p)
        q = frozen_array(self.q)
        if p.size < 2 or abs(p[-1] - 1.0) > ROOT_TOLERANCE:
            raise ContourError(MONIC_ERROR)
        at_one = P.polyval(1.0, p)
        if abs(at_one) > ROOT_TOLERANCE:
            raise ContourError(ROOT_AT_ONE_ERROR.format(at_one))
        if q.size == 0 or not np.any(q != 0):
            raise ContourError(ZERO_Q_ERROR)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def memory(self):
        return self.p.size - 2

    def p_at(self, mu):
        return P.polyval(mu, self.p)

    def q_at(self, mu):
        return P.polyval(mu, self.q)

    def deflated_p(self):
        """P(mu) / (mu - 1) as a coefficient array."""
        quotient, _ = P.polydiv(self.p, np.array([-1.0, 1.0]))
        return quotient

    def reciprocal(self, mu):
        """R(mu) = (mu - 1) / Psi(mu); finite at mu = 1."""
        if self.pole_form is not None:
            return self.pole_form(mu)
        return self.q_at(mu) / P.polyval(mu, self.deflated_p())

    def __call__(self, mu):
        return (np.asarray(mu) - 1.0) / self.reciprocal(mu)

    def transition_matrices(self, lambdas):
        """Matrices whose eigenvalues are the roots of P - lambda Q, one per lambda."""
        if self.pole_form is not None:
            return self.pole_form.transition_matrices(lambdas)
        degree = self.p.size - 1
        q = np.zeros(degree + 1)
        q[: self.q.size] = self.q
        coeffs = self.p[None, :] - lambdas[:, None] * q[None, :]
        companion = np.zeros((lambdas.size, degree, degree))
        companion[:, np.arange(1, degree), np.arange(degree - 1)] = 1.0
        companion[:, :, -1] = -coeffs[:, :degree]
        return companion


@dataclass(frozen=True, eq=False)
class MemoryAlgorithm:
    """Parameters of w_{t+1} - w_t = -alpha g_t + b^T u_t, u_{t+1} = c g_t + D u_t."""

    alpha: float
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        b = frozen_array(np.atleast_1d(self.b))
        c = frozen_array(np.atleast_1d(self.c))
        d = frozen_array(np.atleast_2d(self.d)) if np.size(self.d) else frozen_array(np.zeros((0, 0)))
        m = b.size
        if c.shape != (m,) or d.shape != (m, m):
            raise ContourError(ALGORITHM_SHAPE_ERROR.format(m))
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def m(self):
        return self.b.size

    def d_spectral_radius(self):
        if self.m == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.d))))

    def is_d_stable(self):
        return self.d_spectral_radius() < 1.0

    def transition(self, lam):
        """S_lambda = [[1, b^T], [0, D]] + lambda (-alpha; c)(1, 0^T)."""
        size = self.m + 1
        s = np.zeros((size, size))
        s[0, 0] = 1.0 - lam * self.alpha
        s[0, 1:] = self.b
        s[1:, 0] = lam * self.c
        s[1:, 1:] = self.d
        return s

    def noise_column(self):
        return np.concatenate(([-self.alpha], self.c))

    def signal_column(self):
        column = np.zeros(self.m + 1)
        column[0] = 1.0
        return column


@dataclass(frozen=True)
class CornerSpec:
    """Corner template with angle theta*pi, scale A, and its size-M discretization with h = l / sqrt(M)."""

    theta: float
    a: float = 1.0
    m: int = 5
    l: float = 5.0

    def __post_init__(self):
        if not 1.0 < self.theta < 2.0:
            raise ContourError(THETA_RANGE_ERROR)
        for name in ("a", "m", "l"):
            if not getattr(self, name) > 0:
                raise ContourError(NON_POSITIVE_PARAMETER_ERROR.format(name))

    @property
    def h(self):
        return self.l / math.sqrt(self.m)

    def nodes(self):
        return (np.arange(1, self.m + 1) - 0.5) * self.h


@dataclass(frozen=True, eq=False)
class ContourPolyline:
    phi: np.ndarray
    points: np.ndarray


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    worst_modulus: float
    worst_lambda: float
