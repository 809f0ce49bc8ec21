"""Shared constants and defaults for CBF minimum-phase simulations."""

from enum import Enum

# Simulation defaults
DEFAULT_DT_S = 1e-3
DEFAULT_HORIZON_S = 20.0
DEFAULT_BLOWUP = 1e4
DEFAULT_SAFETY_TOL = 1e-6
DEFAULT_SETTLE_TOL = 1e-3
DEFAULT_DRIFT_THRESHOLD = 10.0
SETTLE_WINDOW_S = 1.0

# Numerical tolerances
PIVOT_TOL = 1e-12
NONNEG_TOL = 1e-9
DEGENERATE_TOL = 1e-9
INTERVENTION_TOL = 1e-9
SATURATION_MU_TOL = 1e-6
RANK_TOL = 1e-9
FD_REL_STEP = 1e-5
QP_FEAS_TOL = 1e-9
QP_ZERO_ROW_TOL = 1e-12

# Kleinman-Newton iteration
LQR_TOL = 1e-9
LQR_MAX_ITER = 100

CSV_SIGNIFICANT_DIGITS = 17
CARTPOLE_GUARD_DEG = 85.0

SWEEP_INDEX_FILE = "sweep_index.json"
TRAJECTORY_FILE = "trajectory.csv"
SUMMARY_JSON_FILE = "summary.json"
SUMMARY_TEXT_FILE = "summary.txt"


class Classification(str, Enum):
    BOUNDED = "Bounded"
    DIVERGED = "Diverged"
    UNSAFE = "Unsafe"
    INCOMPLETE = "Incomplete"


class FilterWiring(str, Enum):
    MIN_NORM = "min_norm"
    KAPPA_PS = "kappa_ps"
    BASELINE = "baseline"
    EQUALITY_QP = "equality_qp"
    CLF_CBF_QP = "clf_cbf_qp"
    UNFILTERED = "unfiltered"


class MinPhaseVerdict(str, Enum):
    MINIMUM_PHASE = "MinimumPhase"
    NON_MINIMUM_PHASE = "NonMinimumPhase"


class SufficiencyVerdict(str, Enum):
    PASS = "Pass"
    FAIL_ALPHA = "FailAlpha"
    UNKNOWN = "Unknown"
