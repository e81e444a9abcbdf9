from django.conf import settings

APP_NAME = settings.APPLICATION_NAME

THREADS = max(1, settings.CORNER_SGD_THREADS)
OUTPUT_DIR = settings.CORNER_SGD_OUTPUT_DIR

CONTOUR_GRID = settings.CONTOUR_GRID
CONTOUR_RADIUS_MARGIN = settings.CONTOUR_RADIUS_MARGIN
CONTOUR_LEAKAGE_WARNING = settings.CONTOUR_LEAKAGE_WARNING

ML_SERIES_RADIUS = settings.ML_SERIES_RADIUS
ML_ASYMPTOTIC_RADIUS = settings.ML_ASYMPTOTIC_RADIUS
COEFFICIENT_NODES = settings.COEFFICIENT_NODES

EVAL_POINTS_PER_DECADE = settings.EVAL_POINTS_PER_DECADE
DIVERGENCE_FACTOR = settings.DIVERGENCE_FACTOR
SMOOTHING_WIDTH = settings.SMOOTHING_WIDTH
UNCLASSIFIABLE_MARGIN = settings.UNCLASSIFIABLE_MARGIN

# Leading root of 1 + cos(x) cosh(x) = 0.
INDICATOR_XI_0 = 1.8751
INDICATOR_TARGET = (0.25, 0.75)
INDICATOR_TARGET_MASS = 0.5

# Modes of a built-in problem when the config gives no K.
DEFAULT_PROBLEM_SIZE = 1000

PROPAGATORS_CSV = {
    "filename": "propagators.csv",
    "columns": ["t", "U", "V"],
}

LOSS_CSV = {
    "filename": "loss.csv",
    "columns": ["t", "L"],
}

TRAJECTORY_CSV = {
    "filename": "trajectory.csv",
    "columns": ["step", "loss"],
}

CONTOUR_CSV = {
    "filename": "contour.csv",
    "columns": ["phi", "re", "im"],
}

PHASE_CSV = {
    "filename": "phase.csv",
    "columns": ["zeta", "inv_nu", "theta_max", "region"],
}

REGIME_JSON = "regime.json"
FIT_JSON = "fit.json"
METADATA_JSON = "metadata.json"

NON_POSITIVE_PARAMETER_ERROR = "{} must be strictly positive."
EIGENVALUE_ORDER_ERROR = "Eigenvalues must be strictly positive and strictly decreasing."
COEFFICIENT_SIGN_ERROR = "Coefficients must be nonnegative."
LENGTH_MISMATCH_ERROR = "Eigenvalues and coefficients must have the same length."
TOO_FEW_EIGENVALUES_ERROR = "At least {} eigenvalues are required in the tail window, got {}."
DEGENERATE_FIT_ERROR = "Cannot fit a slope to constant data."
QUADRATURE_RESOLUTION_ERROR = "quad_nodes={} gives fewer than 10 nodes per oscillation period (need at least {})."
CAPACITY_MISMATCH_ERROR = "Eigenvalue tail slope {:.6g} does not match -nu={:.6g}."

THETA_RANGE_ERROR = "theta must lie strictly between 1 and 2."
CUT_POINT_ERROR = "The corner map is not defined on the cut [0, 1]."
MONIC_ERROR = "P must be monic."
ROOT_AT_ONE_ERROR = "P(1) must vanish, got {:.3e}."
ZERO_Q_ERROR = "Q must not vanish identically."
ALGORITHM_SHAPE_ERROR = "Memory algorithm dimensions are inconsistent with m={}."
DEGENERATE_MAP_ERROR = "P'(1) = 0: the map is degenerate at mu = 1."
POLE_ON_CIRCLE_ERROR = "Q has a zero on the unit circle near phi={:.6g}."
ZERO_Q1_ERROR = "q1 must be nonzero."
BETA_RANGE_ERROR = "beta must lie in (-1, 1)."
TOO_FEW_POINTS_ERROR = "At least {} contour points are required."

GRID_SIZE_ERROR = "grid={} must be a power of two and at least 4*T={}."
RADIUS_ERROR = "The sampling radius must be at least 1."
NEAR_SINGULAR_ERROR = "|Psi - lambda| = {:.3e} at a grid node: the map is not stable at lambda={:.6g}."
SERIES_LENGTH_ERROR = "The series must cover at least {} steps, got {}."
UNCLASSIFIABLE_ERROR = "U_sigma={:.6f} lies within {} of 1; the regime cannot be classified."
IMMEDIATE_DIVERGENCE_ERROR = "nu={} <= 1/2: the loss diverges immediately."
MISSING_META_ERROR = "The problem carries no power-law metadata."
SERIES_SHAPE_ERROR = "U and V must be one-dimensional and of equal length."
NEGATIVE_ENTRY_ERROR = "{} entries must be nonnegative."
STEPS_SHAPE_ERROR = "Loss values and steps must have equal length."
PROVENANCE_ERROR = "Unknown provenance '{}'."

ZETA_RANGE_ERROR = "zeta must lie in (0, 2)."
NU_RANGE_ERROR = "nu must be greater than 1."
ML_METHOD_ERROR = "Unknown Mittag-Leffler method '{}'; expected one of {}."
ML_ARGUMENT_ERROR = "The Mittag-Leffler argument -x needs x >= 0."
COEFFICIENT_NODES_ERROR = "Coefficient quadrature needs at least 3 nodes, got {}."

SCHEDULE_ERROR = "The evaluation schedule must be strictly increasing and end at or before step {}."
FIT_WINDOW_ERROR = "The fit window [{}, {}] holds {} evaluation points; at least {} are required."
EMPTY_BATCH_ERROR = "The batch must not be empty."
DETERMINISTIC_INDICATOR_ERROR = "Exact gradients need the dense Hessian; use at most {} features."
NO_GRADIENT_ERROR = "No gradient oracle for model type {}."

UNKNOWN_PROBLEM_ERROR = "Unknown problem '{}'; expected one of {} or a path to a JSON file."
NO_MEMORY_REALIZATION_ERROR = "Algorithm '{}' has no finite memory realization; use one of {}."
CONFIG_READ_ERROR = "Cannot read config file {}: {}"
CSV_COLUMNS_ERROR = "CSV {} must contain columns (step, loss) or (t, L)."
