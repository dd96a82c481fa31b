"""Configuration for backflow-lab
Contains tolerances, defaults, preset names and environment-driven settings.
"""
import os
from dotenv import load_dotenv

# Load environment variables from .env
load_dotenv()


def _env_int(name, default):
    """Read a positive integer from the environment, falling back to default."""
    raw = os.getenv(name, "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        return default
    return value if value > 0 else default


def _env_flag(name):
    return os.getenv(name, "").strip().lower() in ("1", "true", "yes", "on")


# Worker cap for per-restart / per-time-point parallelism
THREADS = _env_int("BACKFLOW_LAB_THREADS", os.cpu_count() or 1)

# Per-solve diagnostic lines on stderr
VERBOSE = _env_flag("BACKFLOW_LAB_VERBOSE")

# cvxpy solver used for the interior-point steps
SDP_SOLVER = os.getenv("BACKFLOW_LAB_SDP_SOLVER", "CLARABEL").strip().upper() or "CLARABEL"
SDP_FALLBACK_SOLVER = "SCS"
SDP_SOLVER_OPTIONS = {
    "CLARABEL": {"tol_gap_abs": 1e-11, "tol_gap_rel": 1e-11, "tol_feas": 1e-11, "max_iter": 400},
    "SCS": {"eps_abs": 1e-10, "eps_rel": 1e-10, "max_iters": 200000},
}

# Numerical tolerances
HERM_TOL = 1e-12        # Hermiticity check (relative to the largest entry)
PSD_TOL = 1e-9          # smallest eigenvalue accepted for "positive semidefinite"
TRACE_TOL = 1e-10       # unit trace, identity sums of POVMs use POVM_SUM_TOL
POVM_SUM_TOL = 1e-9
PROB_SUM_TOL = 1e-12    # probability vectors
ZERO_PROB = 1e-12       # outcomes below this weight are flagged as null
TP_TOL = 1e-9           # trace preservation of channels
CPTP_TOL = 1e-9         # Choi positivity of trajectory channels
CP_TOL = 1e-7           # CP-divisibility verdict on intermediate maps
COND_LIMIT = 1e8        # largest condition number accepted when inverting Λ(t)
GAP_TOL = 1e-7          # target duality gap of every certified optimization
PPOVM_TOL = 1e-8        # probability-constraint defect of a P-POVM
BACKFLOW_THRESHOLD = 3e-7
GRID_TOL = 1e-12        # matching times against a trajectory grid

# Discrimination solver
PG_MAX_SIZE = 512       # guard on n_outcomes * dim
PG_FIXED_POINT_ITERS = 500
PG_CHECK_EVERY = 10
PG_POLISH_ITERS = 200

# Seesaw
SEESAW_MIN_GAIN = 1e-9
SEESAW_MAX_ROUNDS = 200
DEFAULT_RESTARTS = 4
DEFAULT_SEED = 0

# Probe / scan defaults
DEFAULT_LAMBDAS = [0.5, 0.9, 0.99, 0.999]
DEFAULT_GRID_POINTS = 50
DEFAULT_N_BAR = 2
P_DIVISIBILITY_SAMPLES = 200
SEARCH_TRIALS = 64
SEARCH_REFINE_ROUNDS = 40


class DynamicsKind:
    """Dynamics families understood by the trajectory builder."""
    DEPHASING = "dephasing"
    AMPLITUDE_DAMPING = "amplitude_damping"
    RANDOM_UNITARY_QUBIT = "random_unitary_qubit"
    DEPOLARIZING = "depolarizing"

    ALL = [DEPHASING, AMPLITUDE_DAMPING, RANDOM_UNITARY_QUBIT, DEPOLARIZING]


# Named presets for `backflow-lab presets` and config shortcuts
PRESETS = {
    "dephasing": {
        "kind": DynamicsKind.DEPHASING,
        "params": {"gamma_const": 1.0},
        "description": "Pure dephasing with constant rate (Markovian).",
    },
    "amplitude_damping": {
        "kind": DynamicsKind.AMPLITUDE_DAMPING,
        "params": {"g_decay": 1.0, "g_freq": 3.0},
        "description": "Amplitude damping with G(t) = exp(-g_decay t) cos(g_freq t) (oscillatory, non-Markovian).",
    },
    "random_unitary_qubit": {
        "kind": DynamicsKind.RANDOM_UNITARY_QUBIT,
        "params": {"preset": "eternal"},
        "description": "Pauli channel with rates (1, 1, -tanh t): eternally non-Markovian, P-divisible.",
    },
    "depolarizing": {
        "kind": DynamicsKind.DEPOLARIZING,
        "params": {"rate": 1.0, "dim": 2},
        "description": "Depolarizing semigroup exp(-rate t) (Markovian).",
    },
}

# Base ensemble sources accepted by the experiment config
ENSEMBLE_SOURCES = ["preset:computational", "preset:hadamard", "search"]

# CSV layout (one row per grid time per lambda)
CSV_COLUMNS = [
    "time",
    "lambda",
    "c_value",
    "c_projective",
    "pg_ensemble",
    "pg_perp",
    "pg_par",
    "min_choi_eig_step",
    "cp_flag",
    "backflow_flag",
    "gap",
    "restarts_used",
]
CSV_CONVERGED_COLUMN = "converged"
SIGNIFICANT_DIGITS = 12

# Matplotlib settings for deterministic SVG output
SVG_HASH_SALT = "backflow-lab"
SVG_FIGSIZE = (7.0, 4.5)


class ExitCode:
    """Process exit codes of the command-line front end."""
    OK = 0
    CONFIG_ERROR = 2
    SOLVER_ERROR = 3
    IO_ERROR = 4


# ANSI Color Codes for pretty terminal output
class Colors:
    """ANSI color codes for terminal styling"""
    LIGHT_BLUE = "\033[94m"      # Main text
    PINK = "\033[95m"            # Numbers
    GREEN = "\033[92m"           # Success messages
    CYAN = "\033[96m"            # Diagnostic info
    RED = "\033[91m"             # Errors/warnings
    WHITE = "\033[97m"           # Important info

    BOLD = "\033[1m"
    RESET = "\033[0m"

    @staticmethod
    def number(value):
        """Format numbers in pink"""
        return f"{Colors.PINK}{value}{Colors.RESET}"

    @staticmethod
    def success(text):
        """Format success messages in green"""
        return f"{Colors.GREEN}✓ {text}{Colors.RESET}"

    @staticmethod
    def error(text):
        """Format error messages in red"""
        return f"{Colors.RED}✗ {text}{Colors.RESET}"

    @staticmethod
    def diagnostic(text):
        """Format diagnostic info in cyan"""
        return f"{Colors.CYAN}{text}{Colors.RESET}"

    @staticmethod
    def highlight(text):
        """Format highlighted text in bold white"""
        return f"{Colors.BOLD}{Colors.WHITE}{text}{Colors.RESET}"
