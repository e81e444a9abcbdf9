import logging
import math
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations

import numpy as np
from scipy.special import gamma
from scipy.stats import linregress

from contour.models import MemoryAlgorithm
from contour.utils import circle_samples, effective_learning_rate
from cornersgd.constants import (
    CONTOUR_GRID,
    CONTOUR_LEAKAGE_WARNING,
    CONTOUR_RADIUS_MARGIN,
    GRID_SIZE_ERROR,
    IMMEDIATE_DIVERGENCE_ERROR,
    MISSING_META_ERROR,
    NEAR_SINGULAR_ERROR,
    NON_POSITIVE_PARAMETER_ERROR,
    RADIUS_ERROR,
    SERIES_LENGTH_ERROR,
    THREADS,
    UNCLASSIFIABLE_ERROR,
    UNCLASSIFIABLE_MARGIN,
)
from cornersgd.exceptions import NumericalError, PropagatorError
from spectrum.utils import bin_eigenvalues

from .models import (
    Asymptote,
    KernelPair,
    LossTrajectory,
    NoiseTotal,
    PropagatorSeries,
    Regime,
    RegimeReport,
    Tau2Kernels,
    TailFit,
)

logger = logging.getLogger("app")

KERNEL_CHUNK = 32
NEAR_SINGULAR_TOLERANCE = 1e-12
MIN_CLASSIFY_STEPS = 100
PARSEVAL_NODES = 65536


def _lambdas(lam):
    lambdas = np.atleast_1d(np.asarray(lam, dtype=float))
    if lambdas.ndim != 1 or not np.all(lambdas > 0):
        raise PropagatorError(NON_POSITIVE_PARAMETER_ERROR.format("lambda"))
    return lambdas


def _check_steps(T):
    if T < 1:
        raise PropagatorError(NON_POSITIVE_PARAMETER_ERROR.format("T"))


def _unpack(values, lam):
    return values[0] if np.ndim(lam) == 0 else values


def _transitions(alg, lambdas):
    return np.stack([alg.transition(lam) for lam in lambdas])


def kernels_matrix(alg, lam, T):
    """
    U(t, lambda) = (1 0) S^(t-1) (-alpha; c) and V(t, lambda) = (1 0) S^(t-1) (1; 0)
    by repeated application of S_lambda. Unstable transitions are iterated as they are.
    """
    _check_steps(T)
    lambdas = _lambdas(lam)
    s = _transitions(alg, lambdas)
    state_u = np.tile(alg.noise_column(), (lambdas.size, 1))
    state_v = np.tile(alg.signal_column(), (lambdas.size, 1))

    u = np.empty((lambdas.size, T))
    v = np.empty((lambdas.size, T))
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(T):
            u[:, t] = state_u[:, 0]
            v[:, t] = state_v[:, 0]
            state_u = np.einsum("kij,kj->ki", s, state_u)
            state_v = np.einsum("kij,kj->ki", s, state_v)
    return KernelPair(u=_unpack(u, lam), v=_unpack(v, lam))


def contour_grid(T, grid=None):
    """The FFT size for T kernel steps; by default the configured grid, doubled until it covers 4T."""
    _check_steps(T)
    if grid is None:
        grid = max(CONTOUR_GRID, 1 << int(math.ceil(math.log2(4 * T))))
    if grid < 4 * T or grid & (grid - 1):
        raise PropagatorError(GRID_SIZE_ERROR.format(grid, 4 * T))
    return grid


def contour_samples(source, grid, radius=None):
    """Psi and Psi / (mu - 1) on a circle, by default of radius 1 + margin / grid."""
    if radius is None:
        radius = 1.0 + CONTOUR_RADIUS_MARGIN / grid
    if radius < 1.0:
        raise PropagatorError(RADIUS_ERROR)
    mus = radius * np.exp(2j * np.pi * np.arange(grid) / grid)
    psi, slope = circle_samples(source, mus)
    return radius, psi, slope


def _leakage(coeffs, T):
    kept = np.abs(coeffs[:, 1 : T + 1]).max()
    if kept == 0:
        return 0.0
    outside = max(np.abs(coeffs[:, 0]).max(), np.abs(coeffs[:, coeffs.shape[1] - T :]).max())
    return float(outside / kept)


def _contour_chunk(psi, slope, radius, lambdas, T):
    denominator = psi[None, :] - lambdas[:, None]
    smallest = np.abs(denominator).min(axis=1)
    worst = int(np.argmin(smallest))
    if smallest[worst] < NEAR_SINGULAR_TOLERANCE:
        raise NumericalError(NEAR_SINGULAR_ERROR.format(smallest[worst], lambdas[worst]))

    inverse = 1.0 / denominator
    coeff_u = np.fft.ifft(inverse, axis=1)
    coeff_v = np.fft.ifft(inverse * slope[None, :], axis=1)
    rescale = radius ** np.arange(1, T + 1)
    u = coeff_u[:, 1 : T + 1].real * rescale
    v = coeff_v[:, 1 : T + 1].real * rescale
    return u, v, max(_leakage(coeff_u, T), _leakage(coeff_v, T))


def _warn_leakage(leakage):
    if leakage > CONTOUR_LEAKAGE_WARNING:
        logger.warning(f"Fourier coefficients at non-positive index reach {leakage:.3e} of the kept ones")


def kernels_contour(source, lam, T, grid=None, radius=None):
    """
    Kernels as Laurent coefficients at mu^-t of 1 / (Psi - lambda) and Psi / ((Psi - lambda)(mu - 1)).

    The integrands are sampled on |mu| = 1 + margin / grid and the coefficients rescaled by
    radius^t, which keeps aliased coefficients beyond the grid below exp(-margin). With radius=1
    the grid includes mu = 1, where the V integrand takes its limit Psi'(1) / (-lambda).
    """
    lambdas = _lambdas(lam)
    grid = contour_grid(T, grid)
    radius, psi, slope = contour_samples(source, grid, radius)
    u, v, leakage = _contour_chunk(psi, slope, radius, lambdas, T)
    _warn_leakage(leakage)
    return KernelPair(u=_unpack(u, lam), v=_unpack(v, lam), leakage=leakage)


def aggregate(problem, kernel_source, T, tau1=1.0, batch=1, grid=None, rel_width=None):
    """
    U_t = (tau1 / |B|) sum_k lambda_k^2 U(t, lambda_k)^2 and V_t = sum_k lambda_k s_k V(t, lambda_k)^2.

    kernel_source is a MemoryAlgorithm (matrix powers) or a RationalMap / CornerSpec (contour
    FFT). Eigenvalue chunks are evaluated in a thread pool and reduced in eigenvalue order.
    """
    _check_steps(T)
    if batch < 1:
        raise PropagatorError(NON_POSITIVE_PARAMETER_ERROR.format("batch"))
    lambdas, u_weights, v_weights = bin_eigenvalues(problem, rel_width)

    if isinstance(kernel_source, MemoryAlgorithm):

        def kernels(chunk):
            pair = kernels_matrix(kernel_source, chunk, T)
            return pair.u, pair.v, pair.leakage

    else:
        grid = contour_grid(T, grid)
        radius, psi, slope = contour_samples(kernel_source, grid)

        def kernels(chunk):
            return _contour_chunk(psi, slope, radius, chunk, T)

    def partial_sums(start):
        index = slice(start, start + KERNEL_CHUNK)
        u, v, leakage = kernels(lambdas[index])
        with np.errstate(over="ignore", invalid="ignore"):
            u_sum = (u_weights[index, None] * u ** 2).sum(axis=0)
            v_sum = (v_weights[index, None] * v ** 2).sum(axis=0)
        return u_sum, v_sum, leakage

    with ThreadPoolExecutor(max_workers=THREADS) as executor:
        partials = list(executor.map(partial_sums, range(0, lambdas.size, KERNEL_CHUNK)))

    u_total = np.zeros(T)
    v_total = np.zeros(T)
    leakage = 0.0
    for u, v, chunk_leakage in partials:
        u_total += u
        v_total += v
        leakage = max(leakage, chunk_leakage)
    _warn_leakage(leakage)

    logger.info(f"aggregated {lambdas.size} eigenvalues over {T} steps (tau1={tau1}, batch={batch})")
    return PropagatorSeries(u_total * (tau1 / batch), v_total, tau1=tau1, batch=batch)


def fit_tail(values):
    """Least-squares power law over the last decade t in [T/10, T], using the positive entries."""
    values = np.asarray(values, dtype=float)
    t = np.arange(1, values.size + 1)
    window = (t >= max(1, values.size // 10)) & (values > 0) & np.isfinite(values)
    if np.count_nonzero(window) < 2:
        return None
    fit = linregress(np.log(t[window]), np.log(values[window]))
    return TailFit(exponent=float(-fit.slope), log_coeff=float(fit.intercept))


def _series_total(values):
    head = float(np.sum(values))
    fit = fit_tail(values)
    if fit is None:
        return NoiseTotal(u_sigma=head, tail=0.0, tail_exponent=math.inf, divergent=False)
    if fit.exponent <= 1.0:
        return NoiseTotal(u_sigma=math.inf, tail=math.inf, tail_exponent=fit.exponent, divergent=True)
    # integral of coeff * t^-exponent from T + 1/2
    tail = math.exp(fit.log_coeff + (1.0 - fit.exponent) * math.log(values.size + 0.5)) / (fit.exponent - 1.0)
    return NoiseTotal(u_sigma=head + tail, tail=tail, tail_exponent=fit.exponent, divergent=False)


def total_noise(series):
    """U_sigma: the sum of U_t over the series plus the integrated power-law tail fitted beyond T."""
    total = _series_total(series.u)
    if total.divergent:
        logger.warning(f"U_t decays as t^-{total.tail_exponent:.4g}: U_sigma diverges")
    return total


def total_noise_parseval(problem, source, tau1=1.0, batch=1, n=PARSEVAL_NODES):
    """U_sigma in the frequency domain: (tau1 / 2 pi |B|) sum_k lambda_k^2 int |Psi(e^i phi) - lambda_k|^-2 d phi."""
    if batch < 1:
        raise PropagatorError(NON_POSITIVE_PARAMETER_ERROR.format("batch"))
    psi, _ = circle_samples(source, np.exp(2j * np.pi * np.arange(n) / n))
    lambdas = problem.eigenvalues
    total = 0.0
    for start in range(0, lambdas.size, KERNEL_CHUNK):
        chunk = lambdas[start : start + KERNEL_CHUNK]
        means = (1.0 / np.abs(psi[None, :] - chunk[:, None]) ** 2).mean(axis=1)
        total += float(np.sum(chunk ** 2 * means))
    return total * tau1 / batch


def loss_from_propagators(series, T):
    """
    L_t for t = 0..T-1 from the convolution recursion W_n = V_n + sum_{s<n} U_(n-s) W_s,
    L_t = W_(t+1) / 2.
    """
    _check_steps(T)
    if series.length < T:
        raise PropagatorError(SERIES_LENGTH_ERROR.format(T, series.length))
    u, v = series.u, series.v
    w = np.empty(T)
    for n in range(T):
        w[n] = v[n] + np.dot(u[:n][::-1], w[:n])
    return LossTrajectory(l=w / 2.0, provenance="theory")


def brute_force_loss(series, T):
    """L_t by explicit enumeration of the chains 0 < t_1 < ... < t_m < t + 1; exponential in T."""
    u, v = series.u, series.v
    losses = []
    for t in range(T):
        end = t + 1
        total = v[end - 1]
        for m in range(1, end):
            for chain in combinations(range(1, end), m):
                term = v[chain[0] - 1] * u[end - chain[-1] - 1]
                for first, second in zip(chain, chain[1:]):
                    term *= u[second - first - 1]
                total += term
        losses.append(total / 2.0)
    return np.array(losses)


def classify_regime(series, problem=None):
    """
    Convergence regime of a propagator series: immediate divergence when the problem's
    spectrum has nu <= 1/2 (sum lambda_k^2 infinite), divergence when U_sigma > 1 or the
    series overflowed. Otherwise signal-dominated (L_t ~ C_V t^-xi_V / (2 (1 - U_sigma))) when
    xi_U > max(xi_V, 1) and noise-dominated (L_t ~ V_sigma C_U t^-xi_U / (2 (1 - U_sigma)^2))
    when 1 < xi_U < xi_V.
    """
    if series.length < MIN_CLASSIFY_STEPS:
        raise PropagatorError(SERIES_LENGTH_ERROR.format(MIN_CLASSIFY_STEPS, series.length))
    if problem is not None and problem.meta is not None and problem.meta.nu <= 0.5:
        return RegimeReport(regime=Regime.IMMEDIATE_DIVERGENCE, u_sigma=math.inf, xi_u=math.nan, xi_v=math.nan)
    if not (np.all(np.isfinite(series.u)) and np.all(np.isfinite(series.v))):
        return RegimeReport(regime=Regime.DIVERGENCE, u_sigma=math.inf, xi_u=math.nan, xi_v=math.nan)

    noise = total_noise(series)
    u_fit = fit_tail(series.u)
    v_fit = fit_tail(series.v)
    xi_u = u_fit.exponent if u_fit else math.inf
    xi_v = v_fit.exponent if v_fit else math.inf
    u_sigma = noise.u_sigma

    if noise.divergent or u_sigma > 1.0 + UNCLASSIFIABLE_MARGIN:
        return RegimeReport(regime=Regime.DIVERGENCE, u_sigma=u_sigma, xi_u=xi_u, xi_v=xi_v)
    if abs(u_sigma - 1.0) <= UNCLASSIFIABLE_MARGIN:
        raise NumericalError(UNCLASSIFIABLE_ERROR.format(u_sigma, UNCLASSIFIABLE_MARGIN))

    report = dict(u_sigma=u_sigma, xi_u=xi_u, xi_v=xi_v)
    if v_fit is not None and xi_u > max(xi_v, 1.0):
        return RegimeReport(
            regime=Regime.SIGNAL_DOMINATED,
            predicted_coeff=v_fit.coeff / (2.0 * (1.0 - u_sigma)),
            loss_exponent=xi_v,
            **report,
        )
    if u_fit is not None and 1.0 < xi_u < xi_v:
        v_sigma = _series_total(series.v).u_sigma
        return RegimeReport(
            regime=Regime.NOISE_DOMINATED,
            predicted_coeff=v_sigma * u_fit.coeff / (2.0 * (1.0 - u_sigma) ** 2),
            loss_exponent=xi_u,
            v_sigma=v_sigma,
            **report,
        )
    return RegimeReport(regime=Regime.CONVERGING_UNCLASSIFIED, **report)


def finite_memory_asymptote(rational_map, problem, tau1, batch, t):
    """
    Large-t propagators of a stable finite-memory map on a power-law problem:
    V_t ~ Q Gamma(zeta + 1) (2 alpha_eff t)^-zeta and
    U_t ~ (alpha_eff Lambda)^(1/nu) tau1 Gamma(2 - 1/nu) / (|B| nu) (2t)^(1/nu - 2).
    """
    meta = problem.meta
    if meta is None:
        raise PropagatorError(MISSING_META_ERROR)
    if meta.nu <= 0.5:
        raise PropagatorError(IMMEDIATE_DIVERGENCE_ERROR.format(meta.nu))
    alpha_eff = effective_learning_rate(rational_map)
    if alpha_eff <= 0:
        raise PropagatorError(NON_POSITIVE_PARAMETER_ERROR.format("alpha_eff"))

    v_pred = meta.Qsrc * gamma(meta.zeta + 1.0) * (2.0 * alpha_eff * t) ** -meta.zeta
    u_pred = (
        (alpha_eff * meta.Lambda) ** (1.0 / meta.nu)
        * tau1
        * gamma(2.0 - 1.0 / meta.nu)
        / (batch * meta.nu)
        * (2.0 * t) ** (1.0 / meta.nu - 2.0)
    )
    return Asymptote(v_pred=float(v_pred), u_pred=float(u_pred))


def kernels_tau2(alg, lam, T, tau2, batch=1):
    """
    G(t, lambda) and H(t, lambda) for the tau2 extension, iterating
    A Z = S Z S^T - (tau2 / |B|) lambda^2 Z_00 (-alpha; c)(-alpha; c)^T from (-alpha; c)(-alpha; c)^T
    and from (1; 0)(1; 0)^T and reading off Z_00.
    """
    _check_steps(T)
    lambdas = _lambdas(lam)
    s = _transitions(alg, lambdas)
    s_t = s.transpose(0, 2, 1)
    noise = np.outer(alg.noise_column(), alg.noise_column())
    scale = (tau2 / batch) * lambdas ** 2

    def iterate(initial):
        z = np.tile(initial, (lambdas.size, 1, 1))
        values = np.empty((lambdas.size, T))
        with np.errstate(over="ignore", invalid="ignore"):
            for t in range(T):
                values[:, t] = z[:, 0, 0]
                z = s @ z @ s_t - (scale * z[:, 0, 0])[:, None, None] * noise
        return values

    signal = np.outer(alg.signal_column(), alg.signal_column())
    return Tau2Kernels(g=_unpack(iterate(noise), lam), h=_unpack(iterate(signal), lam))
