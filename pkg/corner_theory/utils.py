import logging
import math

import numpy as np
from scipy.integrate import quad, simpson
from scipy.special import gamma, rgamma

from contour.utils import corner_scale
from cornersgd.constants import (
    COEFFICIENT_NODES,
    COEFFICIENT_NODES_ERROR,
    ML_ARGUMENT_ERROR,
    ML_ASYMPTOTIC_RADIUS,
    ML_METHOD_ERROR,
    ML_SERIES_RADIUS,
    NON_POSITIVE_PARAMETER_ERROR,
    NU_RANGE_ERROR,
    THETA_RANGE_ERROR,
    ZETA_RANGE_ERROR,
)
from cornersgd.exceptions import TheoryError

from .models import CornerAsymptotics, PhaseCell, Region

logger = logging.getLogger("app")

ML_METHODS = ("series", "integral", "asymptotic")
SERIES_TERMS = 160
ASYMPTOTIC_TERMS = 40
# e^-CUT_REACH is below double precision relative to the cut integral
CUT_REACH = 60.0

R_MIN = 1e-6
R_MAX = 1e6
NODES_PER_PERIOD = 32
OSCILLATION_DECAY = 40.0
MAX_UNIFORM_NODES = 200_001


def _check_theta(theta):
    if not 1.0 < theta < 2.0:
        raise TheoryError(THETA_RANGE_ERROR)


def _check_positive(name, value):
    if not value > 0:
        raise TheoryError(NON_POSITIVE_PARAMETER_ERROR.format(name))


def c_psi_template(theta, a):
    """Coefficient c_Psi of the ideal corner map, Psi(mu) = -c_Psi (mu - 1)^theta (1 + o(1))."""
    _check_theta(theta)
    _check_positive("A", a)
    return corner_scale(theta, a)


def _series(x, alpha, beta):
    n = np.arange(SERIES_TERMS)
    terms = (-x[:, None]) ** n * rgamma(alpha * n + beta)
    return terms.sum(axis=1)


def _residues(x, alpha, beta):
    # the two poles of t^(alpha - beta) e^t / (t^alpha + x) off the cut
    pole = x ** (1.0 / alpha) * np.exp(1j * math.pi / alpha)
    return (2.0 / alpha) * np.real(pole ** (1.0 - beta) * np.exp(pole))


def _asymptotic(x, alpha, beta):
    k = np.arange(1, ASYMPTOTIC_TERMS + 1)
    sign = np.where(k % 2 == 1, 1.0, -1.0)
    terms = sign * x[:, None] ** (-k) * rgamma(beta - alpha * k)
    # optimal truncation at the smallest nonzero term
    size = np.abs(terms)
    last = np.argmin(np.where(size == 0.0, np.inf, size), axis=1)
    kept = np.arange(k.size)[None, :] <= last[:, None]
    return (terms * kept).sum(axis=1) + _residues(x, alpha, beta)


def _cut_integral(x, alpha, beta):
    sin_b = math.sin(math.pi * beta)
    sin_ab = math.sin(math.pi * (alpha - beta))
    cos_a = math.cos(math.pi * alpha)

    def integrand(r):
        ra = r**alpha
        numerator = ra * sin_b - x * sin_ab
        return math.exp(-r) * r ** (alpha - beta) * numerator / (ra * ra + 2.0 * x * ra * cos_a + x * x)

    scale = x ** (1.0 / alpha)
    value, _ = quad(integrand, 0.0, scale + CUT_REACH, points=[scale], epsabs=1e-15, epsrel=1e-12, limit=400)
    return value / math.pi


def _integral(x, alpha, beta):
    cut = np.array([_cut_integral(value, alpha, beta) for value in x])
    return cut + _residues(x, alpha, beta)


BRANCHES = {"series": _series, "integral": _integral, "asymptotic": _asymptotic}


def mittag_leffler(x, alpha, beta=1.0, method=None):
    """E_{alpha, beta}(-x) for x >= 0 and 1 < alpha < 2.

    The default picks the power series for x <= ML_SERIES_RADIUS, the inverse-power expansion
    with the two pole contributions for x >= ML_ASYMPTOTIC_RADIUS and the Hankel contour
    collapsed onto the negative axis in between. method forces one branch everywhere.
    """
    _check_theta(alpha)
    if method is not None and method not in ML_METHODS:
        raise TheoryError(ML_METHOD_ERROR.format(method, ", ".join(ML_METHODS)))
    x = np.asarray(x, dtype=float)
    flat = np.atleast_1d(x).ravel()
    if np.any(flat < 0) or np.any(np.isnan(flat)):
        raise TheoryError(ML_ARGUMENT_ERROR)

    if method is None:
        series = flat <= ML_SERIES_RADIUS
        asymptotic = flat >= ML_ASYMPTOTIC_RADIUS
        masks = {"series": series, "asymptotic": asymptotic, "integral": ~(series | asymptotic)}
    else:
        masks = {method: np.ones(flat.shape, dtype=bool)}

    values = np.empty(flat.shape)
    for name, mask in masks.items():
        if np.any(mask):
            values[mask] = BRANCHES[name](flat[mask], alpha, beta)
    if x.ndim == 0:
        return float(values[0])
    return values.reshape(x.shape)


def f_u(r, theta, c_psi):
    """F_U(r) = (r^(theta - 1) / c_Psi) E_{theta, theta}(-r^theta / c_Psi); zero for r <= 0."""
    _check_theta(theta)
    _check_positive("c_psi", c_psi)
    r = np.asarray(r, dtype=float)
    values = np.zeros(r.shape)
    positive = r > 0
    rp = r[positive]
    values[positive] = rp ** (theta - 1.0) / c_psi * mittag_leffler(rp**theta / c_psi, theta, theta)
    return float(values) if r.ndim == 0 else values


def f_v(r, theta, c_psi):
    """F_V(r) = E_theta(-r^theta / c_Psi); zero for r < 0."""
    _check_theta(theta)
    _check_positive("c_psi", c_psi)
    r = np.asarray(r, dtype=float)
    values = np.zeros(r.shape)
    inside = r >= 0
    values[inside] = mittag_leffler(r[inside] ** theta / c_psi, theta, 1.0)
    return float(values) if r.ndim == 0 else values


def _log_piece(integrand, start, stop, log_step):
    count = max(3, math.ceil(math.log(stop / start) / log_step) + 1) | 1
    s = np.linspace(math.log(start), math.log(stop), count)
    r = np.exp(s)
    return simpson(integrand(r) * r, x=s)


def _uniform_piece(integrand, start, stop, spacing):
    count = min(MAX_UNIFORM_NODES, max(3, math.ceil((stop - start) / spacing) + 1) | 1)
    r = np.linspace(start, stop, count)
    return simpson(integrand(r), x=r)


def _integrate(integrand, theta, c_psi, nodes):
    """Integral of integrand over [R_MIN, R_MAX].

    Log-spaced nodes, switching to a uniform grid where the log spacing no longer resolves the
    damped oscillation of E_theta, exp(x^(1/theta) cos(pi / theta)) cos(x^(1/theta) sin(pi / theta)).
    """
    if nodes < 3:
        raise TheoryError(COEFFICIENT_NODES_ERROR.format(nodes))
    log_step = math.log(R_MAX / R_MIN) / (nodes - 1)
    angle = math.pi / theta
    scale = c_psi ** (1.0 / theta)
    spacing = 2.0 * math.pi * scale / (math.sin(angle) * NODES_PER_PERIOD)
    reach = min(R_MAX, OSCILLATION_DECAY * scale / abs(math.cos(angle)))
    switch = max(R_MIN, spacing / math.expm1(log_step))
    if reach <= switch:
        return _log_piece(integrand, R_MIN, R_MAX, log_step)
    total = _uniform_piece(integrand, switch, reach, spacing)
    if switch > R_MIN:
        total += _log_piece(integrand, R_MIN, switch, log_step)
    if reach < R_MAX:
        total += _log_piece(integrand, reach, R_MAX, log_step)
    return total


def c_u_coefficient(theta, nu, Lambda=1.0, tau1=1.0, batch=1, c_psi=None, nodes=None):
    """C_U = (tau1 / |B|) Lambda^(1/nu) (theta / nu) int_0^inf r^(1 - theta/nu) F_U(r)^2 dr.

    The ranges [0, R_MIN] and [R_MAX, inf) are integrated from the small- and large-r forms
    F_U ~ r^(theta - 1) / (c_Psi Gamma(theta)) and F_U ~ -c_Psi r^(-theta - 1) / Gamma(-theta).
    """
    _check_theta(theta)
    if not nu > 1:
        raise TheoryError(NU_RANGE_ERROR)
    _check_positive("Lambda", Lambda)
    _check_positive("batch", batch)
    c_psi = c_psi_template(theta, 1.0) if c_psi is None else c_psi
    _check_positive("c_psi", c_psi)
    nodes = COEFFICIENT_NODES if nodes is None else nodes

    weight = 1.0 - theta / nu

    def integrand(r):
        return r**weight * f_u(r, theta, c_psi) ** 2

    head_power = weight + 2.0 * (theta - 1.0) + 1.0
    head = R_MIN**head_power / (head_power * (c_psi * gamma(theta)) ** 2)
    tail_power = weight - 2.0 * theta - 1.0
    tail = (c_psi / gamma(-theta)) ** 2 * R_MAX**tail_power / -tail_power
    integral = head + _integrate(integrand, theta, c_psi, nodes) + tail
    return tau1 / batch * (Lambda ** (1.0 / nu) * theta / nu * integral)


def c_v_coefficient(theta, zeta, Qsrc=1.0, c_psi=None, nodes=None):
    """C_V = Q theta zeta int_0^inf r^(theta zeta - 1) F_V(r)^2 dr, tails from F_V -> 1 and
    F_V ~ c_Psi r^-theta / Gamma(1 - theta)."""
    _check_theta(theta)
    if not 0 < zeta < 2:
        raise TheoryError(ZETA_RANGE_ERROR)
    _check_positive("Q", Qsrc)
    c_psi = c_psi_template(theta, 1.0) if c_psi is None else c_psi
    _check_positive("c_psi", c_psi)
    nodes = COEFFICIENT_NODES if nodes is None else nodes

    power = theta * zeta

    def integrand(r):
        return r ** (power - 1.0) * f_v(r, theta, c_psi) ** 2

    head = R_MIN**power / power
    tail_power = power - 2.0 * theta
    tail = (c_psi / gamma(1.0 - theta)) ** 2 * R_MAX**tail_power / -tail_power
    integral = head + _integrate(integrand, theta, c_psi, nodes) + tail
    return Qsrc * power * integral


def predicted_exponents(theta, nu, zeta):
    """Decay exponents (theta zeta, 2 - theta / nu) of V_t and U_t."""
    return theta * zeta, 2.0 - theta / nu


def corner_asymptotics(theta, a, nu, zeta, Lambda=1.0, Qsrc=1.0, tau1=1.0, batch=1):
    c_psi = c_psi_template(theta, a)
    c_u = c_u_coefficient(theta, nu, Lambda=Lambda, tau1=tau1, batch=batch, c_psi=c_psi)
    c_v = c_v_coefficient(theta, zeta, Qsrc=Qsrc, c_psi=c_psi)
    logger.info(f"Corner asymptotics theta={theta} nu={nu} zeta={zeta}: C_U={c_u:.6g}, C_V={c_v:.6g}")
    return CornerAsymptotics(
        theta=theta, c_psi=c_psi, nu=nu, zeta=zeta, tau1=tau1, batch=batch, c_u=c_u, c_v=c_v
    )


def phase_cell(zeta, inv_nu, nu=None):
    """theta_max = min(2, nu, 2 / (zeta + 1/nu)) inside the signal phase nu > 1, 0 < zeta < 2 - 1/nu.

    Ties go to region I, then III.
    """
    if not (0 <= inv_nu < 1 and 0 < zeta < 2.0 - inv_nu):
        return PhaseCell(zeta=zeta, inv_nu=inv_nu, theta_max=math.nan, subregion=Region.OUTSIDE)
    if nu is None:
        nu = math.inf if inv_nu == 0 else 1.0 / inv_nu
    balanced = 2.0 / (zeta + inv_nu)
    value = min(2.0, nu, balanced)
    if value == 2.0:
        region = Region.I_FULL
    elif value == nu:
        region = Region.III_USIGMA_LIMITED
    else:
        region = Region.II_BALANCED
    return PhaseCell(zeta=zeta, inv_nu=inv_nu, theta_max=value, subregion=region)


def theta_max(zeta, nu):
    _check_positive("nu", nu)
    return phase_cell(zeta, 1.0 / nu, nu)


def phase_sweep(zeta_grid, inv_nu_grid):
    """Cells over the grid in row-major order, zeta outermost."""
    cells = [phase_cell(float(zeta), float(inv_nu)) for zeta in zeta_grid for inv_nu in inv_nu_grid]
    inside = sum(cell.inside for cell in cells)
    logger.info(f"Phase sweep over {len(cells)} cells, {inside} inside the signal phase")
    return cells
