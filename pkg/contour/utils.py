import logging
import math

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import quad
from scipy.special import roots_legendre

from cornersgd.constants import (
    BETA_RANGE_ERROR,
    CUT_POINT_ERROR,
    DEGENERATE_MAP_ERROR,
    NON_POSITIVE_PARAMETER_ERROR,
    POLE_ON_CIRCLE_ERROR,
    THETA_RANGE_ERROR,
    TOO_FEW_POINTS_ERROR,
    ZERO_Q1_ERROR,
)
from cornersgd.exceptions import ContourError, NumericalError

from .models import (
    ContourPolyline,
    CornerSpec,
    MemoryAlgorithm,
    PoleForm,
    RationalMap,
    StabilityReport,
)

logger = logging.getLogger("app")

# exp(-40) bounds the dropped tail of the s-form integral.
CORNER_TRUNCATION = 40.0
CORNER_PANEL_WIDTH = 0.5
CORNER_GAUSS_ORDER = 8
CORNER_CHUNK = 512
MIN_CONTOUR_POINTS = 8
POLE_TOLERANCE = 1e-12

_UNIT_ROOT = np.array([-1.0, 1.0])


def _check_corner(theta, a):
    if not 1.0 < theta < 2.0:
        raise ContourError(THETA_RANGE_ERROR)
    if not a > 0:
        raise ContourError(NON_POSITIVE_PARAMETER_ERROR.format("a"))


def _on_cut(mu):
    return mu.imag == 0 and 0.0 <= mu.real <= 1.0


def _corner_integrand(theta, eps):
    rate = 2.0 - theta

    def integrand(s):
        return rate * math.exp(-rate * s) / (eps + math.exp(-s))

    return integrand


def corner_map_eval(theta, a, mu):
    """
    Ideal corner map Psi(mu) = -A (mu - 1) / (mu I(mu)),
    I(mu) = (2 - theta) int_0^inf exp(-(2 - theta) s) / (mu - 1 + exp(-s)) ds,
    by adaptive quadrature on [0, 40 / (2 - theta)].
    """
    _check_corner(theta, a)
    mu = complex(mu)
    if _on_cut(mu):
        raise ContourError(CUT_POINT_ERROR)

    eps = mu - 1.0
    upper = CORNER_TRUNCATION / (2.0 - theta)
    integrand = _corner_integrand(theta, eps)
    breaks = None
    if abs(eps) < 1.0 and -math.log(abs(eps)) < upper:
        breaks = [-math.log(abs(eps))]
    tolerance = 1e-14 / max(1.0, abs(eps))

    def part(component):
        value, _ = quad(
            lambda s: component(integrand(s)),
            0.0,
            upper,
            points=breaks,
            epsabs=tolerance,
            epsrel=1e-12,
            limit=500,
        )
        return value

    integral = complex(part(lambda z: z.real), part(lambda z: z.imag) if eps.imag else 0.0)
    return -a * eps / (mu * integral)


def _corner_panels(theta):
    upper = CORNER_TRUNCATION / (2.0 - theta)
    count = int(math.ceil(upper / CORNER_PANEL_WIDTH))
    nodes, weights = roots_legendre(CORNER_GAUSS_ORDER)
    edges = np.linspace(0.0, upper, count + 1)
    half = np.diff(edges)[:, None] / 2
    mid = (edges[:-1] + edges[1:])[:, None] / 2
    s = (mid + half * nodes).ravel()
    w = (half * weights).ravel() * (2.0 - theta) * np.exp(-(2.0 - theta) * s)
    return np.exp(-s), w


def corner_map_values(theta, a, mus):
    """Vectorized ideal corner map on fixed Gauss-Legendre panels; Psi(1) = 0."""
    _check_corner(theta, a)
    mus = np.asarray(mus, dtype=complex)
    flat = mus.ravel()
    on_cut = (flat.imag == 0) & (flat.real >= 0) & (flat.real < 1)
    if np.any(on_cut):
        raise ContourError(CUT_POINT_ERROR)

    decay, weights = _corner_panels(theta)
    values = np.zeros(flat.shape, dtype=complex)
    regular = np.flatnonzero(flat != 1.0)
    for start in range(0, regular.size, CORNER_CHUNK):
        index = regular[start : start + CORNER_CHUNK]
        eps = flat[index] - 1.0
        integral = (weights / (eps[:, None] + decay)).sum(axis=1)
        values[index] = -a * eps / (flat[index] * integral)
    return values.reshape(mus.shape)


def corner_scale(theta, a=1.0):
    """c_Psi with Psi(mu) ~ -c_Psi (mu - 1)^theta at mu = 1.

    I(mu) ~ (mu - 1)^(1 - theta) (2 - theta) pi / sin((2 - theta) pi), so
    c_Psi = A sin((2 - theta) pi) / ((2 - theta) pi).
    """
    _check_corner(theta, a)
    angle = (2.0 - theta) * math.pi
    return a * math.sin(angle) / angle


def discretize_corner(spec):
    """Size-M rational approximation of the ideal corner map on the midpoint grid s_m = (m - 1/2) h."""
    s = spec.nodes()
    roots = 1.0 - np.exp(-s)
    weights = np.exp(-(2.0 - spec.theta) * s)

    p = P.polyfromroots(np.concatenate(([1.0], roots)))
    total = np.zeros(spec.m)
    for m in range(spec.m):
        total += weights[m] * P.polyfromroots(np.delete(roots, m))
    scale = (2.0 - spec.theta) * spec.h / spec.a
    q = -scale * P.polymulx(total)
    pole_form = PoleForm(poles=roots, residues=-scale * weights * roots, constant=-scale * weights.sum())
    return RationalMap(p, q, pole_form=pole_form)


def algorithm_from_corner(spec):
    s = spec.nodes()
    decay = np.exp(-s)
    rate = 2.0 - spec.theta
    c = rate * spec.h * np.exp(-rate * s) * (decay - 1.0) / spec.a
    alpha = (
        rate
        * spec.h
        * (1.0 - math.exp(-rate * spec.m * spec.h))
        / (1.0 - math.exp(-rate * spec.h))
        * math.exp(-rate * spec.h / 2)
        / spec.a
    )
    return MemoryAlgorithm(alpha=alpha, b=np.ones(spec.m), c=c, d=np.diag(1.0 - decay))


def _adjugate_expansion(d):
    """Characteristic polynomial det(mu - D) (low-to-high) and the matrices M_k with
    adj(mu - D) = sum_k M_k mu^(n-k), by Faddeev-LeVerrier."""
    n = d.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    matrices = []
    current = np.zeros_like(d)
    identity = np.eye(n)
    for k in range(1, n + 1):
        current = d @ current + coeffs[n - k + 1] * identity
        matrices.append(current)
        coeffs[n - k] = -np.trace(d @ current) / k
    return coeffs, matrices


def rational_from_algorithm(alg):
    """P = (mu - 1) det(mu - D), Q = det(mu - D) (b^T (mu - D)^-1 c - alpha)."""
    m = alg.m
    if m == 0:
        return RationalMap(_UNIT_ROOT, np.array([-alg.alpha]), pole_form=PoleForm([], [], -alg.alpha))

    d = alg.d
    pole_form = None
    if np.count_nonzero(d - np.diag(np.diagonal(d))) == 0:
        roots = np.diagonal(d)
        det = P.polyfromroots(roots)
        resolvent = np.zeros(m)
        for k in range(m):
            resolvent += alg.b[k] * alg.c[k] * P.polyfromroots(np.delete(roots, k))
        pole_form = PoleForm(poles=roots, residues=alg.b * alg.c, constant=-alg.alpha)
    else:
        det, matrices = _adjugate_expansion(d)
        resolvent = np.zeros(m)
        for k, matrix in enumerate(matrices, start=1):
            resolvent[m - k] = alg.b @ matrix @ alg.c

    p = P.polymul(_UNIT_ROOT, det)
    q = P.polysub(resolvent, alg.alpha * det)
    return RationalMap(p, q, pole_form=pole_form)


def plain_gd_algorithm(alpha):
    if not alpha > 0:
        raise ContourError(NON_POSITIVE_PARAMETER_ERROR.format("alpha"))
    return MemoryAlgorithm(alpha=alpha, b=np.zeros(0), c=np.zeros(0), d=np.zeros((0, 0)))


def plain_gd_map(alpha):
    return rational_from_algorithm(plain_gd_algorithm(alpha))


def _check_beta(beta):
    if not -1.0 < beta < 1.0:
        raise ContourError(BETA_RANGE_ERROR)


def heavy_ball_algorithm(alpha, beta):
    """u_t = beta (w_t - w_{t-1}) carried as a size-1 memory."""
    if not alpha > 0:
        raise ContourError(NON_POSITIVE_PARAMETER_ERROR.format("alpha"))
    _check_beta(beta)
    return MemoryAlgorithm(alpha=alpha, b=[1.0], c=[-alpha * beta], d=[[beta]])


def heavy_ball_map(alpha, beta):
    if not alpha > 0:
        raise ContourError(NON_POSITIVE_PARAMETER_ERROR.format("alpha"))
    _check_beta(beta)
    return RationalMap(
        P.polyfromroots([1.0, beta]),
        np.array([0.0, -alpha]),
        pole_form=PoleForm(poles=[beta], residues=[-alpha * beta], constant=-alpha),
    )


def memory1_map(beta, q0, q1):
    """General memory-1 map Psi = (mu - 1)(mu - beta) / (q0 + q1 mu)."""
    _check_beta(beta)
    if q1 == 0:
        raise ContourError(ZERO_Q1_ERROR)
    return RationalMap(
        P.polyfromroots([1.0, beta]),
        np.array([q0, q1]),
        pole_form=PoleForm(poles=[beta], residues=[q0 + q1 * beta], constant=q1),
    )


def memory1_zhukovsky(beta, q0, q1, mu):
    """The memory-1 map written through J(z) = z + 1/z; its contour is a Zhukovsky airfoil."""
    _check_beta(beta)
    if q1 == 0:
        raise ContourError(ZERO_Q1_ERROR)
    rho = q0 / q1
    r = (rho + 1.0) * (rho + beta)
    shift = (2.0 * rho + 1.0 + beta) / q1
    mu = np.asarray(mu, dtype=complex)
    if r == 0:
        return (mu + rho) / q1 - shift
    root = np.sqrt(complex(r))
    z = (mu + rho) / root
    return root / q1 * (z + 1.0 / z) - shift


def memory1_injectivity(beta, q0, q1):
    """Psi is injective on |mu| > 1 iff -1 < q0/q1 <= (1 - beta)/(3 + beta)."""
    if q1 == 0:
        raise ContourError(ZERO_Q1_ERROR)
    ratio = q0 / q1
    return bool(-1.0 < ratio <= (1.0 - beta) / (3.0 + beta))


def memory1_quartic_residual(beta, q0, q1, w):
    """|LHS - RHS| of the quartic satisfied by every point w = x + iy of the memory-1 contour."""
    x, y = w.real, w.imag
    lhs = (1.0 - (beta - q0 * x) ** 2 - q0 ** 2 * y ** 2) ** 2
    real = beta ** 2 - 1.0 + ((q1 - q0) * beta - q1 - q0) * x - q0 * q1 * (x ** 2 + y ** 2)
    rhs = real ** 2 + (beta + 1.0) ** 2 * (q0 + q1) ** 2 * y ** 2
    return np.abs(lhs - rhs)


def heavy_ball_residual(alpha, beta, w):
    """Residual of the Heavy Ball ellipse (alpha x - 1 - beta)^2/(1 + beta)^2 + (alpha y)^2/(1 - beta)^2 = 1."""
    x, y = w.real, w.imag
    return np.abs((alpha * x - 1.0 - beta) ** 2 / (1.0 + beta) ** 2 + (alpha * y) ** 2 / (1.0 - beta) ** 2 - 1.0)


def memory1_stability(beta, q0, q1, lambda_max):
    """Strict stability of the memory-1 map for every lambda in (0, lambda_max]."""
    if not lambda_max > 0:
        raise ContourError(NON_POSITIVE_PARAMETER_ERROR.format("lambda_max"))
    return bool(
        -1.0 < beta < 1.0
        and q0 > -(1.0 - beta) / lambda_max
        and q0 - (2.0 + 2.0 * beta) / lambda_max < q1 < -q0
    )


def effective_learning_rate(rational_map):
    """alpha_eff = -Q(1) / P'(1) = -1 / Psi'(1) = -R(1)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        value = -rational_map.reciprocal(1.0)
    if not np.isfinite(value) or value == 0:
        raise ContourError(DEGENERATE_MAP_ERROR)
    return float(np.real(value))


def char_roots(rational_map, lambdas):
    """Roots of P - lambda Q for each lambda, as rows of a (len(lambdas), M + 1) array."""
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    return np.linalg.eigvals(rational_map.transition_matrices(lambdas))


def stability_check(rational_map, lambdas):
    """All roots of P - lambda Q strictly inside the unit disk for every lambda."""
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if not np.all(lambdas > 0):
        raise ContourError(NON_POSITIVE_PARAMETER_ERROR.format("lambda"))
    moduli = np.abs(char_roots(rational_map, lambdas)).max(axis=1)
    worst = int(np.argmax(moduli))
    report = StabilityReport(
        stable=bool(moduli[worst] < 1.0),
        worst_modulus=float(moduli[worst]),
        worst_lambda=float(lambdas[worst]),
    )
    if not report.stable:
        logger.warning(f"unstable at lambda={report.worst_lambda:.6g}: root modulus {report.worst_modulus:.6g}")
    return report


def circle_samples(source, mus):
    """Psi and the slope Psi / (mu - 1) on an array of points.

    The slope of a rational map is 1 / R and equals Psi'(1) at mu = 1; the slope of an ideal
    corner vanishes there.
    """
    mus = np.asarray(mus, dtype=complex)
    if isinstance(source, CornerSpec):
        psi = corner_map_values(source.theta, source.a, mus)
        at_one = mus == 1.0
        slope = psi / np.where(at_one, 1.0, mus - 1.0)
        slope[at_one] = 0.0
        return psi, slope

    reciprocal = source.reciprocal(mus)
    if source.pole_form is not None:
        form = source.pole_form
        scale = max(1.0, abs(form.constant), float(np.abs(form.residues).sum()))
    else:
        scale = max(1.0, float(np.abs(source.q).max()))
    small = ~(np.abs(reciprocal) >= POLE_TOLERANCE * scale)
    if np.any(small):
        raise NumericalError(POLE_ON_CIRCLE_ERROR.format(np.angle(mus[small][0])))
    slope = 1.0 / reciprocal
    return (mus - 1.0) * slope, slope


def circle_values(source, mus):
    """Psi on an array of points for a rational map or an ideal corner spec."""
    return circle_samples(source, mus)[0]


def contour_points(source, n):
    """Psi(exp(2 pi i j / n)) for j = 0..n-1."""
    if n < MIN_CONTOUR_POINTS:
        raise ContourError(TOO_FEW_POINTS_ERROR.format(MIN_CONTOUR_POINTS))
    phi = 2.0 * math.pi * np.arange(n) / n
    mus = np.exp(1j * phi)
    mus[0] = 1.0
    return ContourPolyline(phi=phi, points=circle_values(source, mus))


def external_angle(polyline):
    """Exterior angle of the contour at Psi(1), from the two grid neighbours of phi = 0."""
    apex = polyline.points[0]
    ahead = polyline.points[1] - apex
    behind = polyline.points[-1] - apex
    return 2.0 * math.pi - abs(np.angle(ahead / behind))
