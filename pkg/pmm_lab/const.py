"""Constants for the PMM laboratory."""
from __future__ import annotations

DOMAIN = "pmm_lab"
VERSION = "0.3.0"

# Environment
ENV_SEED = "PMM_LAB_SEED"

# Configuration keys - family documents
CONF_RADIUS = "radius"
CONF_RATES = "rates"
CONF_WINDOW = "window"
CONF_VALUE = "value"
CONF_NAME = "name"

# Configuration keys - run parameters (shared by CLI flags and manifests)
CONF_SUBCOMMAND = "subcommand"
CONF_PARAMETERS = "parameters"
CONF_SEED = "seed"
CONF_FAMILY = "family"
CONF_FINGERPRINT = "family_fingerprint"
CONF_VERSION = "version"
CONF_OUTPUTS = "outputs"
CONF_CREATED = "created"

# Boundary names as written in files
BOUNDARY_EMPTY = "empty"
BOUNDARY_PERIODIC = "periodic"

# Built-in constraint families
FAMILY_PMM = "pmm"
FAMILY_FACILITATED = "facilitated"
FAMILY_PMM_R2 = "pmm_r2"

# Default values - Core
DEFAULT_FAMILY = FAMILY_PMM
DEFAULT_SEED = 20240101
DEFAULT_JOBS = 1
DEFAULT_MAX_PACKED_SITES = 28  # Packed windows must cover exhaustive enumeration

# Default values - Tolerances
DEFAULT_TOL = 1e-12  # Residuals of exact identities
DEFAULT_RHO_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_SOLVE_TOL = 1e-10  # Least-squares stationary solves
DEFAULT_ZERO_ATOL = 1e-14  # "Exactly zero" for weights

# Default values - Enumeration budgets
DEFAULT_BFS_BUDGET = 24  # Window length, i.e. 2^24 states
DEFAULT_MODEL_BUDGET = 24
DEFAULT_DENSE_SOLVE_LIMIT = 2000  # Class size above which lsqr replaces lstsq

# Default values - Kinetic Monte Carlo
DEFAULT_REBUILD_EVERY = 1_000_000  # Events between full rate-tree rebuilds
DEFAULT_UNIFORM_CHUNK = 4096  # Uniforms drawn per refill of the event buffer
DEFAULT_SAMPLES = 1
DEFAULT_BATCHES = 20  # Batch-means blocks for standard errors
DEFAULT_SE_FACTOR = 3.0
DEFAULT_FREQUENCY_AGREEMENT = 0.95  # Share of states within the SE band

# Default values - Hydrodynamics
DEFAULT_BLOCKS = 64
DEFAULT_PDE_CELLS = 512
DEFAULT_STABILITY_SAFETY = 0.9
DEFAULT_PROFILE = "step"
DEFAULT_PROFILE_LOW = 0.2
DEFAULT_PROFILE_HIGH = 0.8
DEFAULT_PROFILE_WIDTH = 0.05
DEFAULT_TMACRO = 0.05
DEFAULT_HYDRO_L = 512
DEFAULT_HYDRO_REPLICAS = 200
DEFAULT_L2_THRESHOLD = 0.05  # Engineering choice, not a claimed rate

PROFILES = ("step", "bump", "flat")

# Exit codes
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
