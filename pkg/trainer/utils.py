import logging
import math
from concurrent.futures import ProcessPoolExecutor
from functools import singledispatch

import numpy as np
from scipy.linalg import eigh
from scipy.stats import linregress

from cornersgd.constants import (
    DETERMINISTIC_INDICATOR_ERROR,
    DIVERGENCE_FACTOR,
    EMPTY_BATCH_ERROR,
    EVAL_POINTS_PER_DECADE,
    FIT_WINDOW_ERROR,
    INDICATOR_TARGET,
    NO_GRADIENT_ERROR,
    NON_POSITIVE_PARAMETER_ERROR,
    SMOOTHING_WIDTH,
    THREADS,
)
from cornersgd.exceptions import TrainingError
from cornersgd.utils.io_utils import fingerprint
from propagator.models import LossTrajectory
from spectrum.utils import indicator_source

from .models import GaussianSpectralModel, IndicatorModel, LossFit, SeedAverage

logger = logging.getLogger("app")

MIN_FIT_POINTS = 20
DENSE_FEATURE_LIMIT = 5000
# A = lambda_max / LEARNING_RATE_MARGIN keeps lambda_max < 2A
LEARNING_RATE_MARGIN = 1.9


def eval_schedule(steps, per_decade=None):
    """Log-spaced evaluation steps 0, 1, ..., steps with per_decade points per decade."""
    if steps < 1:
        raise TrainingError(NON_POSITIVE_PARAMETER_ERROR.format("steps"))
    per_decade = EVAL_POINTS_PER_DECADE if per_decade is None else per_decade
    count = int(math.ceil(per_decade * math.log10(steps))) + 1
    grid = np.round(np.logspace(0.0, math.log10(steps), count)).astype(np.int64)
    return np.unique(np.concatenate(([0], grid, [steps])))


def learning_rate_scale(lambda_max):
    return lambda_max / LEARNING_RATE_MARGIN


def scaled_algorithm(params, lambda_max):
    """Named-algorithm parameters whose stability edge Psi(-1) = 2A sits at 2 lambda_max / 1.9."""
    scale = learning_rate_scale(lambda_max)
    params = dict(params)
    name = params.get("name")
    if name == "gd":
        params["alpha"] = 1.0 / scale
    elif name == "heavy-ball":
        params["alpha"] = (1.0 + params.get("beta", 0.0)) / scale
    elif name in ("corner", "ideal-corner"):
        params["a"] = scale
    return params


def config_document(config):
    alg = config.algorithm
    return {
        "algorithm": {"alpha": alg.alpha, "b": alg.b, "c": alg.c, "d": alg.d},
        "steps": config.steps,
        "eval_steps": config.eval_steps,
        "batch": config.batch,
        "seed": config.seed,
        "deterministic": config.deterministic,
        "problem": config.problem,
    }


# Indicator model


def _segment_index(n, xs):
    """Number of knots n/N strictly below each x."""
    return np.clip(np.ceil(xs * n).astype(np.int64) - 1, 0, n)


def _prefix_sums(n, w):
    knots = np.arange(1, n + 1) / n
    return np.concatenate(([0.0], np.cumsum(w))), np.concatenate(([0.0], np.cumsum(w * knots)))


def indicator_target(xs, target=INDICATOR_TARGET):
    lo, hi = target
    xs = np.asarray(xs, dtype=float)
    return ((xs >= lo) & (xs <= hi)).astype(float)


def indicator_predictions(model, xs, w=None):
    w = model.w if w is None else w
    xs = np.asarray(xs, dtype=float)
    slopes, offsets = _prefix_sums(model.n, w)
    j = _segment_index(model.n, xs)
    return (xs * slopes[j] - offsets[j]) / model.n


def _indicator_gradient(model, w, xs):
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise TrainingError(EMPTY_BATCH_ERROR)
    n = model.n
    residual = indicator_predictions(model, xs, w) - indicator_target(xs, model.target)
    j = _segment_index(n, xs)
    # knot m sees the samples with j >= m
    r0 = np.cumsum(np.bincount(j, weights=residual, minlength=n + 1)[::-1])[::-1]
    r1 = np.cumsum(np.bincount(j, weights=residual * xs, minlength=n + 1)[::-1])[::-1]
    return (r1[1:] - model.knots * r0[1:]) / (n * xs.size)


def indicator_batch_gradient(model, xs):
    """(1/|B|) sum_x (y_hat(x) - y(x)) phi(x) with phi_n(x) = (x - n/N)_+ / N, in O(N + |B|)."""
    return _indicator_gradient(model, model.w, xs)


def _indicator_loss(model, w):
    lo, hi = model.target
    points = np.unique(np.concatenate(([0.0], model.knots, [lo, hi])))
    left, right = points[:-1], points[1:]
    middle = (left + right) / 2
    slopes, offsets = _prefix_sums(model.n, w)
    j = _segment_index(model.n, middle)
    slope = slopes[j] / model.n
    offset = -offsets[j] / model.n - indicator_target(middle, model.target)
    # Simpson is exact on each segment, where the error is linear
    squares = [(offset + slope * x) ** 2 for x in (left, middle, right)]
    return float(np.sum((right - left) / 6 * (squares[0] + 4 * squares[1] + squares[2])) / 2)


def indicator_population_loss(model):
    """Exact E_x 1/2 (y_hat(x) - y(x))^2 for x uniform on [0, 1], segment by segment."""
    return _indicator_loss(model, model.w)


def _check_dense(n):
    if n > DENSE_FEATURE_LIMIT:
        raise TrainingError(DETERMINISTIC_INDICATOR_ERROR.format(DENSE_FEATURE_LIMIT))


def indicator_hessian(n):
    """H_nm = E[phi_n phi_m] = (1/N^2) int_c^1 (x - c_n)(x - c_m) dx, c = max(c_n, c_m)."""
    _check_dense(n)
    knots = np.arange(1, n + 1) / n
    upper = np.maximum.outer(knots, knots)
    gap = upper - np.minimum.outer(knots, knots)
    length = 1.0 - upper
    return (length**3 / 3 + gap * length**2 / 2) / n**2


def indicator_linear_term(n):
    """E[y phi_n] = q(n/N) / N with q the integrated target."""
    return indicator_source(np.arange(1, n + 1) / n) / n


def indicator_model_lambda_max(n):
    hessian = indicator_hessian(n)
    return float(eigh(hessian, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0])


# Gaussian spectral model


def gaussian_features(model, count, rng):
    """count feature vectors in eigen-coordinates, x_k = sqrt(lambda_k) g_k."""
    if count < 1:
        raise TrainingError(EMPTY_BATCH_ERROR)
    return rng.standard_normal((count, model.lambdas.size)) * np.sqrt(model.lambdas)


def _gaussian_gradient(model, delta_w, count, rng):
    features = gaussian_features(model, count, rng)
    return features.T @ (features @ delta_w) / count


def gaussian_sample_gradient(model, count, rng):
    """(1/|B|) sum_x (x^T delta_w) x for |B| = count fresh Gaussian samples."""
    return _gaussian_gradient(model, model.delta_w, count, rng)


# Model dispatch


@singledispatch
def initial_params(model):
    raise TrainingError(NO_GRADIENT_ERROR.format(type(model).__name__))


@initial_params.register
def _(model: IndicatorModel):
    return np.array(model.w)


@initial_params.register
def _(model: GaussianSpectralModel):
    return np.array(model.delta_w)


@singledispatch
def population_loss(model, params):
    raise TrainingError(NO_GRADIENT_ERROR.format(type(model).__name__))


@population_loss.register
def _(model: IndicatorModel, params):
    return _indicator_loss(model, params)


@population_loss.register
def _(model: GaussianSpectralModel, params):
    return float(np.dot(model.lambdas, params**2) / 2)


@singledispatch
def gradient_oracle(model, batch, deterministic):
    """A function (params, rng) -> gradient for the model."""
    raise TrainingError(NO_GRADIENT_ERROR.format(type(model).__name__))


@gradient_oracle.register
def _(model: IndicatorModel, batch, deterministic):
    if deterministic:
        hessian = indicator_hessian(model.n)
        linear = indicator_linear_term(model.n)
        return lambda params, rng: hessian @ params - linear
    return lambda params, rng: _indicator_gradient(model, params, rng.random(batch))


@gradient_oracle.register
def _(model: GaussianSpectralModel, batch, deterministic):
    if deterministic:
        return lambda params, rng: model.lambdas * params
    return lambda params, rng: _gaussian_gradient(model, params, batch, rng)


@singledispatch
def model_lambda_max(model):
    raise TrainingError(NO_GRADIENT_ERROR.format(type(model).__name__))


@model_lambda_max.register
def _(model: IndicatorModel):
    return indicator_model_lambda_max(model.n)


@model_lambda_max.register
def _(model: GaussianSpectralModel):
    return model.problem.lambda_max


# Runs


def memory_iterates(config, model, rng=None):
    """Yield (step, params) for step = 0..steps, starting from w_0 = 0 and u_0 = 0."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    alg = config.algorithm
    gradient = gradient_oracle(model, config.batch, config.deterministic)
    params = initial_params(model)
    memory = np.zeros((alg.m, params.size))
    for step in range(config.steps + 1):
        yield step, params
        if step == config.steps:
            return
        g = gradient(params, rng)
        with np.errstate(over="ignore", invalid="ignore"):
            params, memory = params - alg.alpha * g + alg.b @ memory, np.outer(alg.c, g) + alg.d @ memory


def sgd_run(config, model, rng=None):
    """
    Population loss at config.eval_steps. A run whose loss leaves the finite range or exceeds
    DIVERGENCE_FACTOR times the initial loss stops there, with diverged_at set.
    """
    schedule = config.eval_steps
    steps, losses = [], []
    diverged_at = None
    limit = math.inf
    position = 0
    for step, params in memory_iterates(config, model, rng):
        due = step == schedule[position]
        if not due and step > 0:
            continue
        loss = population_loss(model, params)
        if step == 0:
            limit = DIVERGENCE_FACTOR * loss
        if not due:
            continue
        steps.append(step)
        losses.append(loss)
        if not math.isfinite(loss) or loss > limit:
            diverged_at = step
            logger.warning(f"Run diverged at step {step}: loss {loss:.3e} exceeds {limit:.3e}")
            break
        position += 1
        if position == schedule.size:
            break
    return LossTrajectory(
        l=losses,
        provenance="empirical",
        fingerprint=fingerprint(config_document(config)),
        steps=steps,
        diverged_at=diverged_at,
    )


def _seed_run(config, model_factory, stream):
    return sgd_run(config, model_factory(), rng=np.random.default_rng(stream))


def run_seeds(config, model_factory, seeds, workers=None):
    """
    Runs with independent streams spawned from config.seed, averaged step by step.
    model_factory builds a fresh model per run and must be picklable when workers > 1.
    """
    if seeds < 1:
        raise TrainingError(NON_POSITIVE_PARAMETER_ERROR.format("seeds"))
    streams = np.random.SeedSequence(config.seed).spawn(seeds)
    workers = min(THREADS, seeds) if workers is None else workers
    if workers <= 1:
        runs = [_seed_run(config, model_factory, stream) for stream in streams]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_seed_run, [config] * seeds, [model_factory] * seeds, streams))

    length = min(run.l.size for run in runs)
    diverged = [run.diverged_at for run in runs if run.diverged_at is not None]
    mean = LossTrajectory(
        l=np.mean([run.l[:length] for run in runs], axis=0),
        provenance="empirical",
        fingerprint=runs[0].fingerprint,
        steps=runs[0].steps[:length],
        diverged_at=min(diverged) if diverged else None,
    )
    logger.info(f"Averaged {seeds} runs over {length} evaluation points")
    return SeedAverage(mean=mean, runs=runs)


def _window_sums(values, lo, hi):
    sums = np.concatenate(([0.0], np.cumsum(values)))
    return sums[hi] - sums[lo]


def fit_loss_exponent(trajectory, t_min, t_max, width=None):
    """
    Exponent xi of L_t ~ t^-xi over [t_min, t_max]: every point is replaced by the mean of
    (log t, log L) over the geometric window [t / width, t * width], then fitted by least squares.
    """
    width = SMOOTHING_WIDTH if width is None else width
    steps = trajectory.steps.astype(float)
    losses = trajectory.l
    with np.errstate(invalid="ignore"):
        keep = (steps >= max(t_min, 1)) & (steps <= t_max) & np.isfinite(losses) & (losses > 0)
    count = int(keep.sum())
    if count < MIN_FIT_POINTS:
        raise TrainingError(FIT_WINDOW_ERROR.format(t_min, t_max, count, MIN_FIT_POINTS))

    log_t = np.log(steps[keep])
    log_l = np.log(losses[keep])
    # steps increase, so each window is a contiguous slice
    lo = np.searchsorted(log_t, log_t - math.log(width), side="left")
    hi = np.searchsorted(log_t, log_t + math.log(width), side="right")
    sizes = hi - lo
    fit = linregress(_window_sums(log_t, lo, hi) / sizes, _window_sums(log_l, lo, hi) / sizes)
    return LossFit(exponent=-fit.slope, stderr=fit.stderr, points=count)
