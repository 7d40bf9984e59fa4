from pathlib import Path

APP_NAME = "CalAMP"
APP_ORG = "calamp"
APP_VERSION = "0.2.0"
DEFAULT_OUTPUT_DIR = Path.cwd() / "results"

THREADS_ENV = "CALAMP_THREADS"
SLOW_TESTS_ENV = "CALAMP_SLOW_TESTS"
CONFIG_SCHEMA_VERSION = 1
ALPHA_CS_CACHE_VERSION = 1
INSTANCE_MAGIC = b"CALAMPI\x00"
INSTANCE_FORMAT_VERSION = 1

VARIANCE_FLOOR = 1e-12
NOISE_FLOOR = 1e-15
PRIOR_INFLATION = 1.1
GAIN_CLOSED_FORM_MAX_SPREAD = 1e4
GAIN_FALLBACK_CHUNK = 4096
QUADRATURE_WIDTH = 10.0

DEFAULT_BETA_GAIN = 0.8
DEFAULT_BETA = 1.0
DEFAULT_T_MAX = 300
DEFAULT_TOL = 1e-12
RUNAWAY_FACTOR = 100.0

SUCCESS_LOG10_GAP = -5.0
LOG10_GAP_FLOOR = 1e-300

DEFAULT_RHO_GRID = tuple(round(0.1 * k, 10) for k in range(1, 10))
DEFAULT_ALPHA_GRID = tuple(round(0.1 + 0.05 * k, 10) for k in range(19))
DEFAULT_N_REAL = 1000
DEFAULT_N_COMPLEX = 500
DEFAULT_SEEDS_PER_CELL = 3

CSV_HEADER = ("rho", "alpha", "P", "seed", "mu", "log10_gap", "success", "iters", "converged", "wall_ms")

MAX_BP_EDGES = 200_000
BP_ORACLE_RMS_TOL = 1e-2

DEFAULT_EPSILON = 0.2
DEFAULT_W_D = 1.0
DEFAULT_DELTA = 1e-15
DEFAULT_COMPLEX_GAIN_VARIANCE = 10.0

ALPHA_CS_FILENAME = "alpha_cs.json"
ALPHA_CS_BISECTION_STEPS = 6
ALPHA_CS_SUCCESS_FRACTION = 0.5
