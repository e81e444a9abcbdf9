from dataclasses import dataclass
from enum import Enum


class Region(str, Enum):
    I_FULL = "I_full"
    II_BALANCED = "II_balanced"
    III_USIGMA_LIMITED = "III_usigma_limited"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class CornerAsymptotics:
    """U_t ~ c_u t^(theta/nu - 2) and V_t ~ c_v t^(-theta zeta) for an ideal corner map."""

    theta: float
    c_psi: float
    nu: float
    zeta: float
    tau1: float
    batch: int
    c_u: float
    c_v: float

    @property
    def exponents(self):
        return self.theta * self.zeta, 2.0 - self.theta / self.nu


@dataclass(frozen=True)
class PhaseCell:
    """Largest corner exponent available at (zeta, 1/nu); theta_max is nan outside the signal phase."""

    zeta: float
    inv_nu: float
    theta_max: float
    subregion: Region

    @property
    def inside(self):
        return self.subregion != Region.OUTSIDE
