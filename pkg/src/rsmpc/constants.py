"""constants for rsmpc"""

import os

# VALID ITEMS

VALID_SOLVER = ["clarabel", "scs", "auto"]

VALID_BLOCK_KIND = ["equality", "nonneg", "second_order", "psd"]

VALID_MAXDET_OBJECTIVE = ["logdet", "trace"]

VALID_RPRS_SHAPE = ["ellipsoid", "halfspaces", "polytope"]

VALID_NOISE_FAMILY = ["moment_only", "gaussian"]

VALID_COVARIANCE_KIND = ["iid", "full"]

VALID_GAIN_METHOD = ["given", "lqr", "lmi"]

VALID_ESTIMATOR = ["constant", "rls"]

VALID_TERMINAL_WINDOW = ["table", "horizon"]

# SOLVER STATUS

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical_failure"

# NUMERICAL TOLERANCES

FACET_TOL = 1e-8
PSD_EPS = 1e-8
RESIDUAL_TOL = 1e-7
LOEWNER_TOL = 1e-7
GAIN_EIG_TOL = 1e-9
CORRELATION_FALLBACK_SHIFT = 1e-6

# desk-scale limit for double description
MAX_VERTEX_DIM = 6

# terminal set backward iteration
TERMINAL_MAX_ITER = 50
TERMINAL_BOX = 1e3

# CLI EXIT CODES

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_SOLVER_FAILURE = 3
EXIT_CONFIG_ERROR = 4

# PATHS

LIBRARY_PATH = os.path.dirname(os.path.realpath(__file__))

CONFIGS_PATH = LIBRARY_PATH + "/configs"

DEFAULT_CACHE_DIR = ".rsmpc_cache"

ARTIFACT_FORMAT_VERSION = 1

# environment overrides
ENV_CACHE_DIR = "RSMPC_CACHE_DIR"
ENV_SOLVER = "RSMPC_SOLVER"
ENV_LOG_LEVEL = "RSMPC_LOG_LEVEL"
