import logging
from dataclasses import replace
import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import roots_legendre
from scipy.stats import linregress

from cornersgd.constants import (
    CAPACITY_MISMATCH_ERROR,
    DEGENERATE_FIT_ERROR,
    INDICATOR_TARGET,
    INDICATOR_TARGET_MASS,
    INDICATOR_XI_0,
    NON_POSITIVE_PARAMETER_ERROR,
    QUADRATURE_RESOLUTION_ERROR,
    TOO_FEW_EIGENVALUES_ERROR,
)
from cornersgd.exceptions import SpectrumError

from .models import ExponentFit, PowerLawMeta, SpectralProblem

logger = logging.getLogger("app")

MIN_TAIL_POINTS = 16
GAUSS_ORDER = 8
NODES_PER_PERIOD = 20
MIN_NODES_PER_PERIOD = 10
DRIFT_TOLERANCE = 0.05


def _require_positive(**values):
    for name, value in values.items():
        if not value > 0:
            raise SpectrumError(NON_POSITIVE_PARAMETER_ERROR.format(name))


def power_law_problem(nu, zeta, Lambda=1.0, Qsrc=1.0, K=1000):
    """Exact power-law problem lambda_k = Lambda k^-nu, k = 1..K.

    Coefficients telescope the source law: lambda_k s_k = Qsrc (lambda_k^zeta - lambda_{k+1}^zeta)
    with lambda_{K+1} = 0, so the cumulative source mass equals Qsrc lambda^zeta at every eigenvalue.
    """
    _require_positive(nu=nu, zeta=zeta, Lambda=Lambda, Qsrc=Qsrc)
    if K < 2:
        raise SpectrumError(NON_POSITIVE_PARAMETER_ERROR.format("K - 1"))

    k = np.arange(1, K + 1, dtype=float)
    eigenvalues = Lambda * k ** (-nu)
    powered = eigenvalues ** zeta
    increments = Qsrc * (powered - np.append(powered[1:], 0.0))
    coeffs = increments / eigenvalues

    meta = PowerLawMeta(nu=float(nu), zeta=float(zeta), Lambda=float(Lambda), Qsrc=float(Qsrc))
    return SpectralProblem(eigenvalues, coeffs, meta=meta, name="power-law")


def _beam_frequency(xi):
    return math.cos(xi) + 1.0 / math.cosh(xi)


def indicator_roots(K, refine_roots=True):
    """Wavenumbers xi_k of the feature-kernel eigenfunctions, k = 0..K-1.

    The exact values are the roots of 1 + cos(xi) cosh(xi) = 0; xi_k = pi/2 + pi k is their
    closed-form approximant, with xi_0 = 1.8751.
    """
    approximants = math.pi / 2 + math.pi * np.arange(K, dtype=float)
    approximants[0] = INDICATOR_XI_0
    if not refine_roots:
        return approximants
    centers = math.pi / 2 + math.pi * np.arange(K, dtype=float)
    return np.array([brentq(_beam_frequency, c - 0.6, c + 0.6, xtol=1e-15) for c in centers])


def indicator_eigenfunction(xi, x):
    """cosh(xi x) + cos(xi x) - sigma (sinh(xi x) + sin(xi x)), evaluated without overflow.

    sigma = (cosh xi + cos xi) / (sinh xi + sin xi); the hyperbolic part is rewritten in
    terms of exp(-xi x), exp(-xi (1 - x)) and exp(-xi (1 + x)).
    """
    x = np.asarray(x, dtype=float)
    decay = math.exp(-xi)
    den = 1.0 - decay * decay + 2.0 * math.sin(xi) * decay
    sigma = (1.0 + decay * decay + 2.0 * math.cos(xi) * decay) / den

    near = np.exp(-xi * x)
    far_minus = np.exp(-xi * (1.0 - x))
    far_plus = np.exp(-xi * (1.0 + x))
    hyperbolic = (
        near
        - np.exp(-xi * (2.0 - x))
        + math.sin(xi) * (far_minus + far_plus)
        - math.cos(xi) * (far_minus - far_plus)
    ) / den
    return np.cos(xi * x) - sigma * np.sin(xi * x) + hyperbolic


def indicator_source(x):
    """q(x) = integral over the target interval of (y - x)_+ dy."""
    lo, hi = INDICATOR_TARGET
    x = np.asarray(x, dtype=float)
    below = (hi - x) ** 2 / 2 - (lo - x) ** 2 / 2
    inside = (hi - x) ** 2 / 2
    return np.where(x <= lo, below, np.where(x <= hi, inside, 0.0))


def _panel_rule(breakpoints, panels_per_unit):
    nodes, weights = roots_legendre(GAUSS_ORDER)
    xs, ws = [], []
    for a, b in zip(breakpoints[:-1], breakpoints[1:]):
        count = max(1, int(math.ceil((b - a) * panels_per_unit)))
        edges = np.linspace(a, b, count + 1)
        half = np.diff(edges)[:, None] / 2
        mid = (edges[:-1] + edges[1:])[:, None] / 2
        xs.append((mid + half * nodes).ravel())
        ws.append((half * weights).ravel())
    return np.concatenate(xs), np.concatenate(ws)


def indicator_problem(K, quad_nodes=None, refine_roots=True):
    """Spectrum of the 1D ReLU-feature model fitted to the indicator of [1/4, 3/4].

    quad_nodes is the total number of quadrature nodes on [0, 1]; by default enough for
    20 nodes per oscillation period of the last eigenfunction.
    """
    if K < 1:
        raise SpectrumError(NON_POSITIVE_PARAMETER_ERROR.format("K"))

    xi = indicator_roots(K, refine_roots=refine_roots)
    required = int(math.ceil(MIN_NODES_PER_PERIOD * xi[-1] / (2 * math.pi)))
    if quad_nodes is None:
        quad_nodes = max(GAUSS_ORDER * 8, int(math.ceil(NODES_PER_PERIOD * xi[-1] / (2 * math.pi))))
    if quad_nodes < required:
        raise SpectrumError(QUADRATURE_RESOLUTION_ERROR.format(quad_nodes, required))

    lo, hi = INDICATOR_TARGET
    x, w = _panel_rule([0.0, lo, hi, 1.0], quad_nodes / GAUSS_ORDER)
    q = indicator_source(x)

    eigenvalues = xi ** (-4.0)
    projections = np.empty(K)
    norms = np.empty(K)
    for k in range(K):
        values = indicator_eigenfunction(xi[k], x)
        projections[k] = np.dot(w, values * q)
        norms[k] = np.dot(w, values * values)

    coeffs = projections ** 2 / (norms * eigenvalues ** 2)
    retained = float(np.sum(eigenvalues * coeffs))
    tail_mass = max(0.0, INDICATOR_TARGET_MASS - retained)
    logger.info(f"indicator problem K={K}: lambda_0={eigenvalues[0]:.6g}, tail mass {tail_mass:.3e}")

    problem = SpectralProblem(
        eigenvalues, coeffs, tail_mass=tail_mass, index_origin=0.5, name="indicator"
    )
    # Source prefactor from the upper half of the spectrum, at the nominal exponent.
    window = slice(K // 2, K)
    offsets = np.log(cumulative_source(problem)[window]) - 0.25 * np.log(eigenvalues[window])
    meta = PowerLawMeta(nu=4.0, zeta=0.25, Lambda=math.pi ** -4, Qsrc=float(np.exp(offsets.mean())))
    return replace(problem, meta=meta)


def cumulative_source(problem):
    """C_j = tail_mass + sum_{k >= j} lambda_k s_k, the source mass at or below lambda_j."""
    return problem.tail_mass + np.cumsum(problem.source[::-1])[::-1]


def _slope(x, y):
    if np.ptp(y) == 0 or np.ptp(x) == 0:
        raise SpectrumError(DEGENERATE_FIT_ERROR)
    return linregress(x, y).slope


def fit_exponents(problem, tail_fraction=0.5):
    """Least-squares capacity and source exponents over the last tail_fraction of the spectrum.

    nu_fit is minus the log-log slope of lambda_k against the mode index; zeta_fit is the
    log-log slope of the cumulative source mass against lambda. The capacity slope is also
    fitted on the two halves of the window; a relative difference above 5% flags the
    spectrum as not power-law.
    """
    count = int(round(tail_fraction * problem.size))
    if count < MIN_TAIL_POINTS:
        raise SpectrumError(TOO_FEW_EIGENVALUES_ERROR.format(MIN_TAIL_POINTS, count))

    window = slice(problem.size - count, problem.size)
    log_k = np.log(problem.mode_index[window])
    log_lambda = np.log(problem.eigenvalues[window])
    cumulative = cumulative_source(problem)[window]
    if not np.all(cumulative > 0):
        raise SpectrumError(DEGENERATE_FIT_ERROR)

    nu_fit = -_slope(log_k, log_lambda)
    zeta_fit = _slope(log_lambda, np.log(cumulative))

    half = count // 2
    nu_head = -_slope(log_k[:half], log_lambda[:half])
    nu_tail = -_slope(log_k[half:], log_lambda[half:])
    drift = abs(nu_head - nu_tail)
    power_law = drift <= DRIFT_TOLERANCE * abs(nu_fit)
    if not power_law:
        logger.warning(f"{problem.name}: capacity slope drifts from {nu_head:.4g} to {nu_tail:.4g}")
    return ExponentFit(nu_fit=float(nu_fit), zeta_fit=float(zeta_fit), nu_drift=float(drift), power_law=bool(power_law))


def check_capacity(problem, tolerance=0.01, tail_fraction=0.5):
    """Compare the fitted eigenvalue tail slope against the declared nu."""
    if problem.meta is None:
        return None
    fit = fit_exponents(problem, tail_fraction=tail_fraction)
    if abs(fit.nu_fit - problem.meta.nu) > tolerance * problem.meta.nu:
        raise SpectrumError(CAPACITY_MISMATCH_ERROR.format(-fit.nu_fit, problem.meta.nu))
    return fit


def bin_eigenvalues(problem, rel_width=None):
    """Eigenvalues with the propagator weights (lambda^2, lambda s), optionally merged.

    Consecutive eigenvalues within relative width rel_width of the first member of a bin are
    merged into one representative sum(lambda^2)/sum(lambda); the bin weights are the sums of
    lambda^2 and of lambda s so both propagator sums keep their mass.
    """
    lambdas = problem.eigenvalues
    u_weights = lambdas ** 2
    v_weights = problem.source
    if not rel_width:
        return lambdas, u_weights, v_weights

    starts = [0]
    for k in range(1, lambdas.size):
        if lambdas[starts[-1]] > lambdas[k] * (1.0 + rel_width):
            starts.append(k)
    starts = np.array(starts)

    summed_lambda = np.add.reduceat(lambdas, starts)
    binned_u = np.add.reduceat(u_weights, starts)
    binned_v = np.add.reduceat(v_weights, starts)
    logger.info(f"binned {lambdas.size} eigenvalues into {starts.size} bins (width {rel_width})")
    return binned_u / summed_lambda, binned_u, binned_v
